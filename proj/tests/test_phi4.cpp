#include "doctest.h"

#include <cmath>

#include "cslc/phi4.hpp"
#include "oracles.hpp"

using namespace cslc;

TEST_CASE("phi4 energy: zero field, constant field, brute-force oracle") {
    Phi4Params p{0.68, 8, false};

    CHECK(phi4_energy(Field2D(8), p) == 0.0);

    // constant field: kinetic term vanishes, E = d v(t); minimized at t* = sqrt((1+2b)/2)
    double tstar = std::sqrt((1.0 + 2.0 * p.beta) / 2.0);
    for (double t : {0.3, tstar, -tstar, 1.7}) {
        Field2D c(8, t);
        CHECK(phi4_energy(c, p) == doctest::Approx(64.0 * phi4_v(t, p)).epsilon(1e-12));
    }
    Field2D cm(8, tstar - 1e-4), cp(8, tstar + 1e-4), c0(8, tstar);
    CHECK(phi4_energy(c0, p) < phi4_energy(cm, p));
    CHECK(phi4_energy(c0, p) < phi4_energy(cp, p));

    Rng rng(51);
    Phi4Params p4{0.5, 4, false};
    Field2D x = oracle::random_field(4, rng);
    CHECK(phi4_energy(x, p4) == doctest::Approx(oracle::naive_phi4_energy(x, p4.beta)).epsilon(1e-10));

    // symmetries: shift and sign
    Field2D xs(4);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) xs(r, c) = x.wrapped(r + 2, c - 1);
    CHECK(phi4_energy(xs, p4) == doctest::Approx(phi4_energy(x, p4)).epsilon(1e-12));
    Field2D xn = x;
    for (size_t i = 0; i < xn.size(); ++i) xn[i] = -xn[i];
    CHECK(phi4_energy(xn, p4) == phi4_energy(x, p4));
}

TEST_CASE("phi4 gradient: stationary points and finite differences") {
    Phi4Params p{0.68, 8, false};
    Field2D zero_grad = phi4_grad(Field2D(8), p);
    for (size_t i = 0; i < zero_grad.size(); ++i) CHECK(zero_grad[i] == 0.0);

    double tstar = std::sqrt((1.0 + 2.0 * p.beta) / 2.0);
    Field2D c(8, tstar);
    Field2D g = phi4_grad(c, p);
    for (size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g[i]) < 1e-10);

    Rng rng(52);
    Field2D x = oracle::random_field(8, rng);
    auto efun = [&](const std::vector<double>& v) {
        Field2D f(8);
        std::copy(v.begin(), v.end(), f.data());
        return phi4_energy(f, p);
    };
    std::vector<double> xv(x.data(), x.data() + x.size());
    std::vector<double> fd = oracle::fd_gradient(efun, xv, 1e-5);
    Field2D ga = phi4_grad(x, p);
    double num = 0, den = 0;
    for (size_t i = 0; i < fd.size(); ++i) {
        num += (fd[i] - ga[i]) * (fd[i] - ga[i]);
        den += fd[i] * fd[i];
    }
    CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("v_second_bounds") {
    CHECK(v_second_bounds(Phi4Params{0.68, 32, false}).gamma == doctest::Approx(4.72).epsilon(1e-12));
    CHECK(v_second_bounds(Phi4Params{0.5, 32, false}).gamma == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(v_second_bounds(Phi4Params{0.68, 32, false}).delta_unbounded);
    // bound attained at t = 0
    CHECK(phi4_v_second(0.0, Phi4Params{0.68, 32, false}) == doctest::Approx(-4.72).epsilon(1e-12));
    // the Prop-3 feasible region is non-empty exactly when beta >= 1/2
    CHECK(v_second_bounds(Phi4Params{0.5, 32, false}).range_nonempty);
    CHECK(v_second_bounds(Phi4Params{0.68, 32, false}).range_nonempty);
    CHECK_FALSE(v_second_bounds(Phi4Params{0.4, 32, false}).range_nonempty);
    // lattice symbol peaks at 8 in the corner
    CHECK(laplacian_symbol(3.14159265358979323846, 3.14159265358979323846) == doctest::Approx(8.0));
}

TEST_CASE("sample_phi4: moments vs single-site Metropolis oracle at desk scale") {
    Phi4Params p{0.3, 4, false};
    MalaConfig cfg;
    cfg.step_size = 0.1;
    Phi4Dataset ds = sample_phi4(p, 3000, cfg, 77, 2);
    REQUIRE(ds.fields.count() == 3000);
    CHECK(ds.acceptance > 0.3);
    CHECK(ds.acceptance < 0.9);

    double m2 = 0, m01 = 0;
    for (int i = 0; i < ds.fields.count(); ++i) {
        auto s = ds.fields.sample(i);
        m2 += s[0] * s[0];
        m01 += s[0] * s[1];
    }
    m2 /= ds.fields.count();
    m01 /= ds.fields.count();

    // long independent single-site run
    oracle::SingleSiteMetropolis ss(p.beta, 991);
    Field2D x(4);
    for (int w = 0; w < 2000; ++w) ss.sweep(x);
    double o2 = 0, o01 = 0;
    const int n_oracle = 40000;
    for (int t = 0; t < n_oracle; ++t) {
        for (int s = 0; s < 5; ++s) ss.sweep(x);
        o2 += x(0, 0) * x(0, 0);
        o01 += x(0, 0) * x(0, 1);
    }
    o2 /= n_oracle;
    o01 /= n_oracle;

    // 3 standard errors, with both samplers' Monte Carlo noise folded in
    double se2 = 3.0 * (o2 / std::sqrt(3000.0) + o2 / std::sqrt(static_cast<double>(n_oracle) / 5));
    double se01 = 3.0 * (o2 / std::sqrt(3000.0) + o2 / std::sqrt(static_cast<double>(n_oracle) / 5));
    CHECK(std::abs(m2 - o2) < se2);
    CHECK(std::abs(m01 - o01) < se01);
}

TEST_CASE("sample_phi4: symmetry break keeps positive means") {
    Phi4Params p{0.76, 8, true};
    MalaConfig cfg;
    cfg.step_size = 0.05;
    Phi4Dataset ds = sample_phi4(p, 50, cfg, 13, 2);
    for (int i = 0; i < ds.fields.count(); ++i) {
        double mean = 0;
        for (double v : ds.fields.sample(i)) mean += v;
        CHECK(mean > 0.0);
    }
    CHECK_THROWS_AS(sample_phi4(p, 0, cfg, 1, 1), DataError);
    CHECK_THROWS_AS(sample_phi4(Phi4Params{0.5, 33, false}, 10, cfg, 1, 1), DataError);
}

TEST_CASE("sample_phi4: marginal bimodality between regimes" * doctest::skip(false)) {
    // beta = 0.68 on 8x8 against an independent single-site Metropolis histogram
    Phi4Params p{0.68, 8, false};
    MalaConfig cfg;
    cfg.step_size = 0.05;
    Phi4Dataset ds = sample_phi4(p, 4000, cfg, 5, 2);

    oracle::SingleSiteMetropolis ss(p.beta, 313);
    Field2D x(8);
    for (int w = 0; w < 3000; ++w) ss.sweep(x);
    std::vector<double> oracle_pix;
    for (int t = 0; t < 30000; ++t) {
        for (int s = 0; s < 3; ++s) ss.sweep(x);
        for (size_t i = 0; i < x.size(); ++i) oracle_pix.push_back(x[i]);
    }

    // E(-x) = E(x) exactly, and the global sign is by far the slowest mode of
    // both chains at the critical point; fold it out so the comparison tests
    // the distribution shape rather than the sign-occupancy noise
    const int bins = 40;
    double lo = -3, hi = 3;
    std::vector<double> h1(bins, 0.0), h2(bins, 0.0);
    long n1 = 0, n2 = 0;
    auto deposit = [&](std::vector<double>& h, long& n, double v) {
        for (double t : {v, -v}) {
            int b = std::clamp(static_cast<int>((t - lo) / (hi - lo) * bins), 0, bins - 1);
            h[static_cast<size_t>(b)] += 1;
            ++n;
        }
    };
    for (int i = 0; i < ds.fields.count(); ++i)
        for (double v : ds.fields.sample(i)) deposit(h1, n1, v);
    for (double v : oracle_pix) deposit(h2, n2, v);
    double l1 = 0;
    for (int b = 0; b < bins; ++b) l1 += std::abs(h1[static_cast<size_t>(b)] / n1 - h2[static_cast<size_t>(b)] / n2);
    CHECK(l1 < 0.05);

    // bimodality: density around +-1 clearly exceeds the density at 0
    auto at_value = [&](double v) { return h1[static_cast<size_t>(std::clamp(static_cast<int>((v - lo) / (hi - lo) * bins), 0, bins - 1))]; };
    CHECK(at_value(1.0) > 1.3 * at_value(0.0));
    CHECK(at_value(-1.0) > 1.3 * at_value(0.0));
}
