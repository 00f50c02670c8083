#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "cslc/free_energy.hpp"
#include "cslc/phi4.hpp"
#include "oracles.hpp"

using namespace cslc;

namespace {

// Gaussian toy: plan (1,2) on 8x8 so bands 1 and 2 share the full grid.
// Conditional energy E(x, xbar) = a/2 |xbar|^2 + c <xbar, Gbar_2 x>; the
// closed-form log partition gives E[grad_x E | x] = -(c^2/a) P_2 x.
struct GaussianToy {
    PacketPlan plan{8, 1, 2};
    double a = 25.0, c = 5.0;
    ConditionalEnergyParams cond;

    GaussianToy() {
        cond.j = 1;
        cond.idx = CouplingIndexSet::build(plan, 1, 0, 0); // diagonals + (0,0) cross couplings only
        cond.theta.assign(static_cast<size_t>(cond.idx.m()), 0.0);
        for (size_t q = 0; q < cond.idx.entries.size(); ++q) {
            const auto& e = cond.idx.entries[q];
            if (e.diagonal()) cond.theta[q] = a;
            if (e.l == 1 && e.dk == 0 && e.di0 == 0 && e.di1 == 0) cond.theta[q] = c;
        }
    }

    // exact conditional draw xbar | x ~ N(-(c/a) Gbar_2 embed(x), 1/a)
    Decomposition make_sample(const Field2D& x, Rng& rng) const {
        Decomposition dec = decompose(x, plan);
        Band mean = dec.bands[1]; // Gbar_2 of the x_1 content; x has band-1 content too, remove below
        Band noise = make_zero_band(plan, 1);
        for (size_t k = 0; k < noise.sub.size(); ++k)
            for (size_t i = 0; i < noise.sub[k].size(); ++i)
                noise.sub[k][i] = -(c / a) * mean.sub[k][i] + rng.normal() / std::sqrt(a);
        dec.bands[0] = noise;
        return dec;
    }
};

// dense matrix of the band-2 projector P2 = Gbar_2^T Gbar_2 on the 8x8 grid
Eigen::MatrixXd dense_p2(const PacketPlan& plan) {
    const int d = 64;
    Eigen::MatrixXd p(d, d);
    for (int cidx = 0; cidx < d; ++cidx) {
        Field2D e(8);
        e[static_cast<size_t>(cidx)] = 1.0;
        Band b = apply_bar(e, plan, 2);
        Field2D back = apply_bar_adjoint(b, plan, 2);
        for (int r = 0; r < d; ++r) p(r, cidx) = back[static_cast<size_t>(r)];
    }
    return p;
}

} // namespace

TEST_CASE("learn_free_energy: zero conditional gives zero free energy") {
    PacketPlan plan(16, 2, 1);
    Rng rng(71);
    std::vector<Decomposition> decs;
    for (int i = 0; i < 64; ++i) decs.push_back(decompose(oracle::random_field(16, rng), plan));

    ConditionalEnergyParams cond;
    cond.j = 1;
    cond.idx = CouplingIndexSet::build(plan, 1, 1, 0);
    cond.theta.assign(static_cast<size_t>(cond.idx.m()), 0.0);

    FreeEnergyConfig cfg;
    cfg.n_bumps = 4;
    FreeEnergyParams fe = learn_free_energy(cond, decs, plan, cfg);
    for (double t : fe.theta) CHECK(std::abs(t) < 1e-12);
}

TEST_CASE("learn_free_energy recovers the analytic Gaussian free energy") {
    GaussianToy toy;
    const int n = 4000;
    Rng rng(72);

    // data x with a known stationary Gaussian law
    auto power = [](double w1, double w2) {
        double s1 = std::sin(0.5 * w1), s2 = std::sin(0.5 * w2);
        return 1.0 / (4.0 * s1 * s1 + 4.0 * s2 * s2 + 0.5);
    };
    std::vector<Decomposition> decs;
    decs.reserve(n);
    for (int i = 0; i < n; ++i)
        decs.push_back(toy.make_sample(oracle::gaussian_field_spectral(8, power, rng), rng));

    FreeEnergyConfig cfg;
    cfg.n_bumps = 0;
    cfg.shift_range = 2;
    FreeEnergyParams fe = learn_free_energy(toy.cond, decs, toy.plan, cfg);

    // oracle: theta* = A*^-1 b* from exact Gaussian moments, with the target
    // mean gradient -(c^2/a) P2 x from the closed-form log partition
    const int d = 64;
    Eigen::MatrixXd sigma(d, d);
    {
        // circulant covariance: Sigma[r,c] = (1/d) sum_k P(k) e^{i k (r - c)}
        std::vector<double> kernel(static_cast<size_t>(d), 0.0);
        for (int a1 = 0; a1 < 8; ++a1)
            for (int a2 = 0; a2 < 8; ++a2) {
                double acc = 0;
                for (int f1 = 0; f1 < 8; ++f1)
                    for (int f2 = 0; f2 < 8; ++f2) {
                        double w1 = 2 * 3.14159265358979323846 * f1 / 8.0;
                        double w2 = 2 * 3.14159265358979323846 * f2 / 8.0;
                        acc += power(w1, w2) * std::cos(w1 * a1 + w2 * a2);
                    }
                kernel[static_cast<size_t>(a1) * 8 + a2] = acc / 64.0;
            }
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) {
                int dr = wrap_index(r / 8 - c / 8, 8), dc = wrap_index(r % 8 - c % 8, 8);
                sigma(r, c) = kernel[static_cast<size_t>(dr) * 8 + dc];
            }
    }
    // the regression sees x_1 = (I - P1) x, so moments use the projected law
    Eigen::MatrixXd p2 = dense_p2(toy.plan);
    {
        Eigen::MatrixXd p1(64, 64);
        for (int cidx = 0; cidx < 64; ++cidx) {
            Field2D e(8);
            e[static_cast<size_t>(cidx)] = 1.0;
            Band b = apply_bar(e, toy.plan, 1);
            Field2D back = apply_bar_adjoint(b, toy.plan, 1);
            for (int r = 0; r < 64; ++r) p1(r, cidx) = back[static_cast<size_t>(r)];
        }
        Eigen::MatrixXd q = Eigen::MatrixXd::Identity(64, 64) - p1;
        sigma = (q * sigma * q).eval();
    }
    const int m = static_cast<int>(fe.idx.offsets.size());
    std::vector<Eigen::MatrixXd> lmats;
    for (auto [o0, o1] : fe.idx.offsets) {
        Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) {
                int i = r * 8 + c;
                if (o0 == 0 && o1 == 0) {
                    l(i, i) = 1.0;
                } else {
                    l(i, wrap_index(r + o0, 8) * 8 + wrap_index(c + o1, 8)) += 1.0;
                    l(i, wrap_index(r - o0, 8) * 8 + wrap_index(c - o1, 8)) += 1.0;
                }
            }
        lmats.push_back(l);
    }
    Eigen::MatrixXd astar(m, m);
    Eigen::VectorXd bstar(m);
    Eigen::MatrixXd target = -(toy.c * toy.c / toy.a) * p2;
    for (int p = 0; p < m; ++p) {
        for (int q = 0; q < m; ++q) astar(p, q) = (lmats[static_cast<size_t>(q)].transpose() * lmats[static_cast<size_t>(p)] * sigma).trace();
        bstar(p) = (target.transpose() * lmats[static_cast<size_t>(p)] * sigma).trace();
    }
    Eigen::VectorXd theta_star = astar.ldlt().solve(bstar);

    double num = 0, den = 0;
    for (int q = 0; q < m; ++q) {
        num += (fe.theta[static_cast<size_t>(q)] - theta_star(q)) * (fe.theta[static_cast<size_t>(q)] - theta_star(q));
        den += theta_star(q) * theta_star(q);
    }
    CHECK(std::sqrt(num / den) < 2.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("conditional mean gradient from MALA matches the analytic free-energy gradient") {
    GaussianToy toy;
    Rng rng(73);
    Field2D x = oracle::random_field(8, rng);
    Decomposition dec = decompose(x, toy.plan);
    for (auto& s : dec.bands[0].sub) s = Field2D(s.side()); // strip band-1 content: x_1 only

    Field2D low = partial_reconstruct_low(dec, toy.plan, 1);
    ConditioningView view{&low, &dec.bands[1]};

    // long conditional MALA run; average grad_x E over the chain
    MalaConfig cfg;
    cfg.steps = 60000;
    cfg.step_size = 0.05;
    cfg.seed = 74;

    Band xb = make_zero_band(toy.plan, 1);
    std::vector<double> state(static_cast<size_t>(xb.dim()), 0.0);
    MalaTarget target;
    target.energy = [&](const std::vector<double>& v) {
        Band b = make_zero_band(toy.plan, 1);
        vector_to_band(v, b);
        return energy(toy.cond, view, b, toy.plan);
    };
    target.grad = [&](const std::vector<double>& v, std::vector<double>& out) {
        Band b = make_zero_band(toy.plan, 1);
        vector_to_band(v, b);
        Band g = grad_bar(toy.cond, view, b, toy.plan);
        band_to_vector(g, out);
    };
    MalaChain chain(target, state, cfg.step_size, Rng(cfg.seed));
    Field2D mean_grad(8);
    std::vector<Field2D> samples;
    const int warm = 2000, keep = 40000;
    for (int t = 0; t < warm; ++t) chain.step();
    Decomposition work = dec;
    for (int t = 0; t < keep; ++t) {
        chain.step();
        vector_to_band(chain.state(), work.bands[0]);
        Field2D g = conditional_grad_low(toy.cond, work, toy.plan);
        mean_grad += g;
        if (t % 400 == 0) samples.push_back(g);
    }
    for (size_t i = 0; i < mean_grad.size(); ++i) mean_grad[i] /= keep;

    Eigen::MatrixXd p2 = dense_p2(toy.plan);
    Field2D x1(8);
    {
        Field2D det = apply_bar_adjoint(decompose(x, toy.plan).bands[0], toy.plan, 1);
        for (size_t i = 0; i < x1.size(); ++i) x1[i] = x[i] - det[i];
    }
    Eigen::Map<Eigen::VectorXd> x1v(x1.data(), 64);
    Eigen::VectorXd analytic = -(toy.c * toy.c / toy.a) * (p2 * x1v);

    // crude per-coordinate MC error from decimated draws
    for (int probe = 0; probe < 5; ++probe) {
        size_t idx = static_cast<size_t>(probe) * 13 % 64;
        double sd = 0;
        for (const auto& s : samples) sd += (s[idx] - mean_grad[idx]) * (s[idx] - mean_grad[idx]);
        sd = std::sqrt(sd / static_cast<double>(samples.size()) / static_cast<double>(samples.size()));
        CHECK(std::abs(mean_grad[idx] - analytic(static_cast<long>(idx))) < std::max(3.0 * sd, 5e-3));
    }
}

TEST_CASE("held-out regression residual decreases with n on phi4 data") {
    Phi4Params p{0.68, 16, false};
    MalaConfig mcfg;
    mcfg.step_size = 0.05;
    Phi4Dataset ds = sample_phi4(p, 4600, mcfg, 99, 2);
    PacketPlan plan(16, 2, 2);

    std::vector<Decomposition> all(static_cast<size_t>(ds.fields.count()));
    for (int i = 0; i < ds.fields.count(); ++i) all[static_cast<size_t>(i)] = decompose(ds.fields.field(i), plan);

    LearnConfig lcfg;
    lcfg.n_bumps = 8;
    LearnedModel model = learn_all(ds.fields, plan, lcfg);

    std::span<const Decomposition> heldout(all.data() + 4000, 600);
    auto heldout_loss = [&](const FreeEnergyParams& fe) {
        double acc = 0;
        for (const auto& dec : heldout) {
            Field2D xj = low_representation(dec, plan, 1);
            Field2D fg = free_energy_grad(fe, xj);
            Field2D tg = conditional_grad_low(model.cond[0], dec, plan);
            for (size_t i = 0; i < fg.size(); ++i) acc += (fg[i] - tg[i]) * (fg[i] - tg[i]);
        }
        return acc / static_cast<double>(heldout.size());
    };

    FreeEnergyConfig fcfg;
    fcfg.n_bumps = 8;
    FreeEnergyParams fe_small =
        learn_free_energy(model.cond[0], std::span<const Decomposition>(all.data(), 500), plan, fcfg);
    FreeEnergyParams fe_big =
        learn_free_energy(model.cond[0], std::span<const Decomposition>(all.data(), 4000), plan, fcfg);
    CHECK(heldout_loss(fe_big) <= heldout_loss(fe_small) * (1.0 + 1e-9));
}

TEST_CASE("assemble_global_energy: zero scalars give zero potentials; telescoping identity") {
    Rng rng(75);
    FieldStack data(48, 16);
    for (int i = 0; i < data.count(); ++i) data.set_field(i, oracle::random_field(16, rng));
    PacketPlan plan(16, 2, 1);
    LearnConfig cfg;
    cfg.n_bumps = 4;
    LearnedModel model = learn_all(data, plan, cfg);

    std::vector<Decomposition> decs;
    for (int i = 0; i < data.count(); ++i) decs.push_back(decompose(data.field(i), plan));
    FreeEnergyConfig fcfg;
    fcfg.n_bumps = 4;
    std::vector<FreeEnergyParams> fes;
    for (int j = 1; j <= plan.n_bands(); ++j)
        fes.push_back(learn_free_energy(model.cond[static_cast<size_t>(j - 1)], decs, plan, fcfg));

    // zero all scalar coefficients -> every V_j table is identically zero
    {
        LearnedModel zeroed = model;
        std::vector<FreeEnergyParams> zfes = fes;
        for (auto& c : zeroed.cond)
            for (size_t q = c.idx.entries.size(); q < c.theta.size(); ++q) c.theta[q] = 0.0;
        for (size_t q = zeroed.coarse.idx.offsets.size(); q < zeroed.coarse.theta.size(); ++q)
            zeroed.coarse.theta[q] = 0.0;
        for (auto& fe : zfes)
            for (size_t q = fe.idx.offsets.size(); q < fe.theta.size(); ++q) fe.theta[q] = 0.0;
        GlobalEnergy ge = assemble_global_energy(zeroed, zfes);
        for (const auto& tab : ge.potentials)
            for (double v : tab.values) CHECK(std::abs(v) < 1e-12);
    }

    GlobalEnergy ge = assemble_global_energy(model, fes);
    CHECK_THROWS_AS(assemble_global_energy(model, std::vector<FreeEnergyParams>{}), DataError);

    // telescoping: energy differences match independently recomputed
    // per-scale conditional-plus-free-energy sums
    for (int trial = 0; trial < 4; ++trial) {
        Field2D x1 = oracle::random_field(16, rng), x2 = oracle::random_field(16, rng);
        double lhs = ge.evaluate(x1) - ge.evaluate(x2);
        double rhs = 0;
        for (const Field2D* xp : {&x1, &x2}) {
            double sign = xp == &x1 ? 1.0 : -1.0;
            Decomposition dec = decompose(*xp, plan);
            double total = coarsest_energy(model.coarse, dec.coarse);
            for (int j = 1; j <= plan.n_bands(); ++j) {
                Field2D low = partial_reconstruct_low(dec, plan, j);
                ConditioningView view{&low, plan.same_grid(j, j + 1) ? &dec.bands[static_cast<size_t>(j)] : nullptr};
                total += energy(model.cond[static_cast<size_t>(j - 1)], view, dec.bands[static_cast<size_t>(j - 1)], plan);
                total -= free_energy_value(fes[static_cast<size_t>(j - 1)], low_representation(dec, plan, j));
            }
            rhs += sign * total;
        }
        CHECK(std::abs(lhs - rhs) < 1e-6 * (1 + std::abs(lhs)));
    }

    // fitted coefficients minimize the regression objective among perturbations
    {
        const FreeEnergyParams& fe = fes[0];
        auto objective = [&](const FreeEnergyParams& f) {
            double acc = 0;
            for (const auto& dec : decs) {
                Field2D xj = low_representation(dec, plan, 1);
                Field2D fg = free_energy_grad(f, xj);
                Field2D tg = conditional_grad_low(model.cond[0], dec, plan);
                for (size_t i = 0; i < fg.size(); ++i) acc += (fg[i] - tg[i]) * (fg[i] - tg[i]);
            }
            return acc;
        };
        double base = objective(fe);
        Rng prng(76);
        for (int t = 0; t < 20; ++t) {
            FreeEnergyParams pert = fe;
            for (auto& v : pert.theta) v += 0.01 * prng.normal();
            CHECK(objective(pert) >= base - 1e-9 * (1 + base));
        }
    }
}
