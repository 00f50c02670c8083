#include "doctest.h"

#include <cmath>

#include "cslc/wavelet.hpp"
#include "oracles.hpp"

using namespace cslc;

namespace {

constexpr double kPi = 3.14159265358979323846;

double max_abs_diff(const Field2D& a, const Field2D& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double sup_norm(const Field2D& a) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i]));
    return m;
}

// dense matrix of the periodic circular-convolution operator x -> h * x on Z_n
std::vector<std::vector<double>> conv_operator(const Filter1D& h, int n) {
    return oracle::dense_operator(n, n, [&](const std::vector<double>& x) {
        std::vector<double> y(static_cast<size_t>(n), 0.0);
        for (int p = 0; p < n; ++p)
            for (int t = h.lo(); t < h.hi(); ++t) y[static_cast<size_t>(p)] += h.tap(t) * x[static_cast<size_t>(wrap_index(p - t, n))];
        return y;
    });
}

} // namespace

TEST_CASE("daubechies4 satisfies the CMF conditions") {
    ConjugatePair pair = make_daubechies4();
    double sum = 0;
    for (double t : pair.low.taps) sum += t;
    CHECK(std::abs(sum - std::sqrt(2.0)) < 1e-12);

    for (double w : {0.0, kPi / 3.0, kPi / 2.0})
        CHECK(std::abs(filter_power(pair.low, w) + filter_power(pair.low, w + kPi) - 2.0) < 1e-10);
    for (int i = 0; i < 1024; ++i) {
        double w = 2.0 * kPi * i / 1024.0;
        CHECK(std::abs(filter_power(pair.low, w) + filter_power(pair.low, w + kPi) - 2.0) < 1e-10);
    }

    // standard published coefficients, verified above against the CMF conditions
    const double s3 = std::sqrt(3.0), s2 = std::sqrt(2.0);
    std::vector<double> expect{(1 + s3) / (4 * s2), (3 + s3) / (4 * s2), (3 - s3) / (4 * s2), (1 - s3) / (4 * s2)};
    REQUIRE(pair.low.taps.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(pair.low.taps[static_cast<size_t>(i)] == doctest::Approx(expect[static_cast<size_t>(i)]).epsilon(1e-14));
    // frozen decimals of the published closed forms, checked numerically above
    std::vector<double> frozen{0.4829629131445341, 0.8365163037378077, 0.2241438680420134, -0.12940952255126034};
    for (int i = 0; i < 4; ++i) CHECK(std::abs(pair.low.taps[static_cast<size_t>(i)] - frozen[static_cast<size_t>(i)]) < 1e-15);
}

TEST_CASE("mirror_highpass: Haar, orthogonality, involution") {
    ConjugatePair haar = make_haar();
    // gbar = +-(sqrt2/2) [1, -1] on n in {0,1} up to the index convention
    REQUIRE(haar.high.taps.size() == 2);
    double h0 = haar.high.tap(0), h1 = haar.high.tap(1);
    bool plus = std::abs(h0 - std::sqrt(2.0) / 2) < 1e-15 && std::abs(h1 + std::sqrt(2.0) / 2) < 1e-15;
    bool minus = std::abs(h0 + std::sqrt(2.0) / 2) < 1e-15 && std::abs(h1 - std::sqrt(2.0) / 2) < 1e-15;
    CHECK((plus || minus));

    CHECK_THROWS_AS(mirror_highpass(Filter1D{}), std::invalid_argument);

    // operator-level orthogonality of the subsampled filter pairs on Z_16:
    // rows of the analysis operators G, Gbar are orthonormal and mutually orthogonal
    ConjugatePair db4 = make_daubechies4();
    const int n = 16;
    auto gm = conv_operator(db4.low, n);
    auto hm = conv_operator(db4.high, n);
    for (int p = 0; p < n / 2; ++p) {
        for (int q = 0; q < n / 2; ++q) {
            double dot_gh = 0, dot_gg = 0, dot_hh = 0;
            for (int t = 0; t < n; ++t) {
                dot_gh += gm[static_cast<size_t>(2 * p)][static_cast<size_t>(t)] * hm[static_cast<size_t>(2 * q)][static_cast<size_t>(t)];
                dot_gg += gm[static_cast<size_t>(2 * p)][static_cast<size_t>(t)] * gm[static_cast<size_t>(2 * q)][static_cast<size_t>(t)];
                dot_hh += hm[static_cast<size_t>(2 * p)][static_cast<size_t>(t)] * hm[static_cast<size_t>(2 * q)][static_cast<size_t>(t)];
            }
            CHECK(std::abs(dot_gh) < 1e-10);
            CHECK(std::abs(dot_gg - (p == q ? 1.0 : 0.0)) < 1e-10);
            CHECK(std::abs(dot_hh - (p == q ? 1.0 : 0.0)) < 1e-10);
        }
    }

    // mirror applied twice flips the sign: as operators on Z_16, M(M(g)) = -g
    Filter1D twice = mirror_highpass(mirror_highpass(db4.low));
    auto tm = conv_operator(twice, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) CHECK(std::abs(tm[static_cast<size_t>(r)][static_cast<size_t>(c)] + gm[static_cast<size_t>(r)][static_cast<size_t>(c)]) < 1e-12);
}

TEST_CASE("analyze_step_2d: DC, energy, delta vs naive convolution") {
    ConjugatePair db4 = make_daubechies4();

    Field2D constant(8, 3.25);
    QuadSplit qs = analyze_step_2d(constant, db4);
    for (size_t i = 0; i < qs.low.size(); ++i) CHECK(std::abs(qs.low[i] - 2.0 * 3.25) < 1e-12);
    for (const auto& h : qs.high) CHECK(sup_norm(h) < 1e-12);

    Rng rng(7);
    Field2D noise = oracle::random_field(16, rng);
    QuadSplit qn = analyze_step_2d(noise, db4);
    double in_e = noise.squared_norm();
    double out_e = qn.low.squared_norm();
    for (const auto& h : qn.high) out_e += h.squared_norm();
    CHECK(std::abs(in_e - out_e) < 1e-10 * in_e);

    Field2D delta(8);
    delta(0, 0) = 1.0;
    QuadSplit qd = analyze_step_2d(delta, db4);
    CHECK(max_abs_diff(qd.low, oracle::naive_analyze_channel(delta, db4.low, db4.low)) < 1e-12);
    CHECK(max_abs_diff(qd.high[0], oracle::naive_analyze_channel(delta, db4.low, db4.high)) < 1e-12);
    CHECK(max_abs_diff(qd.high[1], oracle::naive_analyze_channel(delta, db4.high, db4.low)) < 1e-12);
    CHECK(max_abs_diff(qd.high[2], oracle::naive_analyze_channel(delta, db4.high, db4.high)) < 1e-12);

    Field2D odd(6);
    CHECK_THROWS(analyze_step_2d(Field2D(7), db4));
    (void)odd;
}

TEST_CASE("synthesize_step_2d: reconstruction, linearity, orthonormal columns") {
    ConjugatePair db4 = make_daubechies4();
    Rng rng(11);
    Field2D x = oracle::random_field(32, rng);
    QuadSplit qs = analyze_step_2d(x, db4);
    Field2D back = synthesize_step_2d(qs.low, qs.high, db4);
    CHECK(max_abs_diff(back, x) < 1e-10 * sup_norm(x));

    Field2D zlow(4);
    std::array<Field2D, 3> zhigh{Field2D(4), Field2D(4), Field2D(4)};
    CHECK(sup_norm(synthesize_step_2d(zlow, zhigh, db4)) == 0.0);

    // columns of the synthesis operator form an orthonormal basis of R^64
    const int half = 4, d = 64;
    auto synth = [&](const std::vector<double>& coef) {
        Field2D low(half);
        std::array<Field2D, 3> high{Field2D(half), Field2D(half), Field2D(half)};
        for (int i = 0; i < half * half; ++i) {
            low[static_cast<size_t>(i)] = coef[static_cast<size_t>(i)];
            for (int c = 0; c < 3; ++c) high[static_cast<size_t>(c)][static_cast<size_t>(i)] = coef[static_cast<size_t>((c + 1) * half * half + i)];
        }
        Field2D out = synthesize_step_2d(low, high, db4);
        return std::vector<double>(out.data(), out.data() + out.size());
    };
    auto mat = oracle::dense_operator(d, d, synth);
    for (int a = 0; a < d; ++a) {
        for (int b = 0; b <= a; ++b) {
            double dot = 0;
            for (int r = 0; r < d; ++r) dot += mat[static_cast<size_t>(r)][static_cast<size_t>(a)] * mat[static_cast<size_t>(r)][static_cast<size_t>(b)];
            CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-10);
        }
    }

    CHECK_THROWS(synthesize_step_2d(Field2D(4), {Field2D(4), Field2D(2), Field2D(4)}, db4));
}

TEST_CASE("decompose: standard wavelet shapes and Parseval") {
    PacketPlan plan(8, 2, 1);
    REQUIRE(plan.n_bands() == 2);
    CHECK(plan.band(1).leaves.size() == 3);
    CHECK(plan.band(1).leaf_side == 4);
    CHECK(plan.band(2).leaves.size() == 3);
    CHECK(plan.band(2).leaf_side == 2);
    CHECK(plan.coarse_side() == 2);

    Rng rng(3);
    Field2D x = oracle::random_field(8, rng);
    Decomposition dec = decompose(x, plan);
    CHECK(dec.coarse.side() == 2);
    double total = dec.coarse.squared_norm();
    for (const auto& b : dec.bands) total += b.squared_norm();
    CHECK(std::abs(total - x.squared_norm()) < 1e-10 * x.squared_norm());

    CHECK_THROWS_AS(decompose(Field2D(16), plan), DataError);
}

TEST_CASE("decompose concentrates a pure sinusoid in its band") {
    PacketPlan plan(32, 2, 2);
    // scan the per-mode band responses for the most concentrated (band, mode)
    const int side = plan.side();
    std::vector<std::vector<double>> resp;
    for (int j = 1; j <= plan.n_bands(); ++j) resp.push_back(plan.band_response(j));
    std::vector<double> coarse = plan.coarse_response();

    int best_j = -1, best_f1 = 0, best_f2 = 0;
    double best_frac = 0;
    for (int j = 1; j <= plan.n_bands(); ++j) {
        for (int f1 = 0; f1 < side; ++f1) {
            for (int f2 = 0; f2 < side; ++f2) {
                size_t q = static_cast<size_t>(f1) * side + f2;
                double tot = coarse[q];
                for (const auto& r : resp) tot += r[q];
                CHECK(std::abs(tot - 1.0) < 1e-9); // responses tile the Fourier plane
                double frac = resp[static_cast<size_t>(j - 1)][q] / tot;
                if (frac > best_frac) {
                    best_frac = frac;
                    best_j = j;
                    best_f1 = f1;
                    best_f2 = f2;
                }
            }
        }
    }
    REQUIRE(best_frac > 0.9);

    Field2D sinus(side);
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c)
            sinus(r, c) = std::cos(2.0 * kPi * (best_f1 * r + best_f2 * c) / side + 0.3);
    Decomposition dec = decompose(sinus, plan);
    double band_e = dec.bands[static_cast<size_t>(best_j - 1)].squared_norm();
    double total = dec.coarse.squared_norm();
    for (const auto& b : dec.bands) total += b.squared_norm();
    CHECK(band_e / total >= 0.9);
}

TEST_CASE("reconstruct is the exact inverse across plans") {
    Rng rng(5);
    for (auto [j_oct, m] : {std::pair{2, 1}, std::pair{2, 2}, std::pair{3, 2}}) {
        PacketPlan plan(32, j_oct, m);
        Field2D x = oracle::random_field(32, rng);
        Field2D back = reconstruct(decompose(x, plan), plan);
        CHECK(max_abs_diff(back, x) < 1e-10 * sup_norm(x));

        // dimensions close up
        long total = plan.coarse_dim();
        for (int j = 1; j <= plan.n_bands(); ++j) total += plan.band(j).dim();
        CHECK(total == 32 * 32);
    }
}

TEST_CASE("band-only reconstruction is orthogonal to the rest") {
    PacketPlan plan(32, 2, 2);
    Rng rng(17);
    Field2D x = oracle::random_field(32, rng);
    Decomposition dec = decompose(x, plan);

    Decomposition only1 = dec;
    Decomposition rest = dec;
    only1.coarse = Field2D(plan.coarse_side());
    for (int j = 2; j <= plan.n_bands(); ++j)
        for (auto& s : only1.bands[static_cast<size_t>(j - 1)].sub) s = Field2D(s.side());
    for (auto& s : rest.bands[0].sub) s = Field2D(s.side());

    Field2D a = reconstruct(only1, plan), b = reconstruct(rest, plan);
    double dot = 0;
    for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    CHECK(std::abs(dot) < 1e-8 * std::sqrt(a.squared_norm() * b.squared_norm()));

    Field2D sum = a;
    sum += b;
    CHECK(max_abs_diff(sum, x) < 1e-10 * sup_norm(x));
}

TEST_CASE("split identity G^T G + Gbar^T Gbar = Id on every scale") {
    PacketPlan plan(32, 3, 2);
    Rng rng(23);
    for (int j = 1; j <= plan.n_bands(); ++j) {
        // random valid x_{j-1}: bands >= j plus coarse
        Field2D x = oracle::random_field(32, rng);
        Decomposition dec = decompose(x, plan);
        for (int jj = 1; jj < j; ++jj)
            for (auto& s : dec.bands[static_cast<size_t>(jj - 1)].sub) s = Field2D(s.side());
        Field2D xjm1 = reconstruct_from(dec, plan, j, plan.band(j).grid_side);

        auto [xrep, xbar] = split_band(xjm1, plan, j);
        Field2D back = embed_low(xrep, plan, j);
        back += apply_bar_adjoint(xbar, plan, j);
        CHECK(max_abs_diff(back, xjm1) < 1e-10 * sup_norm(xjm1));

        // Gbar Gbar^T = Id on coefficients; adjoint is an isometry
        Band coeffs = apply_bar(xjm1, plan, j);
        Field2D lifted = apply_bar_adjoint(coeffs, plan, j);
        Band round = apply_bar(lifted, plan, j);
        for (size_t k = 0; k < coeffs.sub.size(); ++k)
            CHECK(max_abs_diff(round.sub[k], coeffs.sub[k]) < 1e-10);
        CHECK(std::abs(lifted.squared_norm() - coeffs.squared_norm()) < 1e-10 * (1 + coeffs.squared_norm()));

        // G_j G_j^T = Id on valid representations
        Field2D re_rep = embed_low_adjoint(embed_low(xrep, plan, j), plan, j);
        if (plan.band(j).rep_side == plan.band(j).grid_side) {
            // same-grid: embed is the injection; apply the forward split instead
            auto [rep2, bar2] = split_band(embed_low(xrep, plan, j), plan, j);
            CHECK(max_abs_diff(rep2, xrep) < 1e-10 * (1 + sup_norm(xrep)));
            CHECK(bar2.squared_norm() < 1e-18 * (1 + xrep.squared_norm()));
        } else {
            CHECK(max_abs_diff(re_rep, xrep) < 1e-10 * (1 + sup_norm(xrep)));
        }
    }
}

TEST_CASE("partial reconstruction assembles x_{j-1} exactly") {
    PacketPlan plan(32, 3, 2);
    Rng rng(29);
    Field2D x = oracle::random_field(32, rng);
    Decomposition dec = decompose(x, plan);
    for (int j = 1; j <= plan.n_bands(); ++j) {
        Field2D low = partial_reconstruct_low(dec, plan, j);
        Field2D detail = apply_bar_adjoint(dec.bands[static_cast<size_t>(j - 1)], plan, j);
        Field2D sum = low;
        sum += detail;
        Field2D expect = reconstruct_from(dec, plan, j, plan.band(j).grid_side);
        CHECK(max_abs_diff(sum, expect) < 1e-10 * (1 + sup_norm(expect)));

        CHECK(std::abs(detail.squared_norm() - dec.bands[static_cast<size_t>(j - 1)].squared_norm()) <
              1e-10 * (1 + detail.squared_norm()));
    }
    CHECK_THROWS(partial_reconstruct_low(dec, plan, 0));
    CHECK_THROWS(partial_reconstruct_low(dec, plan, plan.n_bands() + 1));

    // j=1 with x-bar_1 = 0 gives the low-pass-only field; adding the true band recovers x
    Field2D low1 = partial_reconstruct_low(dec, plan, 1);
    Field2D add = apply_bar_adjoint(dec.bands[0], plan, 1);
    Field2D full = low1;
    full += add;
    CHECK(max_abs_diff(full, x) < 1e-10 * sup_norm(x));
}

TEST_CASE("dense projector algebra on 8x8") {
    PacketPlan plan(8, 2, 1);
    const int j = 1;
    const int d = 64;
    auto bar = [&](const std::vector<double>& v) {
        Field2D f(8);
        std::copy(v.begin(), v.end(), f.data());
        Band b = apply_bar(f, plan, j);
        std::vector<double> out;
        out.reserve(static_cast<size_t>(b.dim()));
        for (const auto& s : b.sub) out.insert(out.end(), s.data(), s.data() + s.size());
        return out;
    };
    auto low = [&](const std::vector<double>& v) {
        Field2D f(8);
        std::copy(v.begin(), v.end(), f.data());
        auto [rep, b] = split_band(f, plan, j);
        return std::vector<double>(rep.data(), rep.data() + rep.size());
    };
    const int dbar = plan.band(j).dim(), dlow = plan.band(j).rep_side * plan.band(j).rep_side;
    auto bm = oracle::dense_operator(d, dbar, bar);
    auto lm = oracle::dense_operator(d, dlow, low);

    // Gbar Gbar^T = Id
    for (int a = 0; a < dbar; ++a)
        for (int b = 0; b <= a; ++b) {
            double dot = 0;
            for (int t = 0; t < d; ++t) dot += bm[static_cast<size_t>(a)][static_cast<size_t>(t)] * bm[static_cast<size_t>(b)][static_cast<size_t>(t)];
            CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-10);
        }
    // G G^T = Id
    for (int a = 0; a < dlow; ++a)
        for (int b = 0; b <= a; ++b) {
            double dot = 0;
            for (int t = 0; t < d; ++t) dot += lm[static_cast<size_t>(a)][static_cast<size_t>(t)] * lm[static_cast<size_t>(b)][static_cast<size_t>(t)];
            CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-10);
        }
    // G Gbar^T = 0
    for (int a = 0; a < dlow; ++a)
        for (int b = 0; b < dbar; ++b) {
            double dot = 0;
            for (int t = 0; t < d; ++t) dot += lm[static_cast<size_t>(a)][static_cast<size_t>(t)] * bm[static_cast<size_t>(b)][static_cast<size_t>(t)];
            CHECK(std::abs(dot) < 1e-10);
        }
    // G^T G + Gbar^T Gbar = Id on the full space (j = 1)
    for (int a = 0; a < d; ++a)
        for (int b = 0; b <= a; ++b) {
            double dot = 0;
            for (int t = 0; t < dlow; ++t) dot += lm[static_cast<size_t>(t)][static_cast<size_t>(a)] * lm[static_cast<size_t>(t)][static_cast<size_t>(b)];
            for (int t = 0; t < dbar; ++t) dot += bm[static_cast<size_t>(t)][static_cast<size_t>(a)] * bm[static_cast<size_t>(t)][static_cast<size_t>(b)];
            CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-10);
        }
}

TEST_CASE("band centroids decrease with j and grids align within octaves") {
    for (auto [side, j_oct, m] : {std::tuple{32, 2, 2}, std::tuple{32, 3, 1}, std::tuple{64, 3, 2}}) {
        PacketPlan plan(side, j_oct, m);
        for (int j = 1; j < plan.n_bands(); ++j) {
            CHECK(plan.band(j).centroid > plan.band(j + 1).centroid);
            bool same_octave = plan.band(j).octave == plan.band(j + 1).octave;
            CHECK(plan.same_grid(j, j + 1) == same_octave);
            if (same_octave) CHECK(plan.band(j).leaf_side == plan.band(j + 1).leaf_side);
        }
        // representation grids chain consistently
        for (int j = 1; j < plan.n_bands(); ++j) CHECK(plan.band(j).rep_side == plan.band(j + 1).grid_side);
        CHECK(plan.band(plan.n_bands()).rep_side == plan.coarse_side());
    }
    CHECK_THROWS(PacketPlan(33, 2, 1));
    CHECK_THROWS(PacketPlan(8, 3, 2));
    CHECK_THROWS(PacketPlan(16, 0, 1));
}

TEST_CASE("row weights match the projector diagonal") {
    PacketPlan plan(16, 2, 2);
    for (int j = 1; j <= plan.n_bands(); ++j) {
        const auto& w = plan.bar_row_weights(j);
        double total = 0;
        for (double v : w) total += v;
        CHECK(std::abs(total - plan.band(j).dim()) < 1e-8);
        // spot-check one diagonal entry densely
        Field2D delta(plan.band(j).grid_side);
        delta(1, 2) = 1.0;
        Band b = apply_bar(delta, plan, j);
        CHECK(std::abs(b.squared_norm() - w[static_cast<size_t>(1) * plan.band(j).grid_side + 2]) < 1e-12);
    }
}
