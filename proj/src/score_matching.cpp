#include "cslc/score_matching.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "cslc/threading.hpp"

namespace cslc {

void SMSystem::add_gradients(std::span<const double> grads, int d, std::span<const double> laps) {
    const int mm = m();
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> u(grads.data(), mm, d);
    h.selfadjointView<Eigen::Lower>().rankUpdate(u, 1.0);
    for (int q = 0; q < mm; ++q) g(q) += laps[static_cast<size_t>(q)];
    ++n;
}

void SMSystem::merge(const SMSystem& other) {
    h += other.h;
    g += other.g;
    n += other.n;
}

void accumulate(SMSystem& sys, const ConditionalEnergyParams& shape, const ConditioningView& view, const Band& xbar,
                const PacketPlan& plan) {
    std::vector<double> grads;
    feature_gradients(shape, view, xbar, plan, grads);
    std::vector<double> laps = feature_laplacians(shape, view, xbar, plan);
    sys.add_gradients(grads, xbar.dim(), laps);
}

void accumulate_coarsest(SMSystem& sys, const CoarsestEnergyParams& shape, const Field2D& x) {
    std::vector<double> grads;
    coarsest_feature_gradients(shape, x, grads);
    std::vector<double> laps = coarsest_feature_laplacians(shape, x);
    sys.add_gradients(grads, static_cast<int>(x.size()), laps);
}

SolveOutput solve(const SMSystem& sys, double ridge) {
    if (sys.n < 1) throw DataError("solve: empty system");
    const int m = sys.m();
    Eigen::MatrixXd hm = sys.h.selfadjointView<Eigen::Lower>();
    hm /= static_cast<double>(sys.n);
    hm = 0.5 * (hm + hm.transpose()).eval();
    Eigen::VectorXd gm = sys.g / static_cast<double>(sys.n);

    SolveOutput out;
    out.report.m = m;
    out.report.n = sys.n;

    // exclude features whose gradients vanish on the data
    double max_diag = 0.0;
    for (int q = 0; q < m; ++q) max_diag = std::max(max_diag, hm(q, q));
    if (max_diag <= 0.0) throw NumericalError("solve: all feature gradients vanish");
    std::vector<int> kept;
    for (int q = 0; q < m; ++q) {
        if (hm(q, q) > 1e-14 * max_diag)
            kept.push_back(q);
        else
            out.report.dropped.push_back(q);
    }
    const int mk = static_cast<int>(kept.size());

    Eigen::MatrixXd hk(mk, mk);
    Eigen::VectorXd gk(mk), dk(mk);
    for (int a = 0; a < mk; ++a) {
        gk(a) = gm(kept[static_cast<size_t>(a)]);
        dk(a) = std::sqrt(hm(kept[static_cast<size_t>(a)], kept[static_cast<size_t>(a)]));
        for (int b = 0; b < mk; ++b) hk(a, b) = hm(kept[static_cast<size_t>(a)], kept[static_cast<size_t>(b)]);
    }

    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hk, Eigen::EigenvaluesOnly);
        double lmin = es.eigenvalues().minCoeff(), lmax = es.eigenvalues().maxCoeff();
        out.report.kappa_before = lmin > 0 ? lmax / lmin : std::numeric_limits<double>::infinity();
    }

    Eigen::MatrixXd a = dk.cwiseInverse().asDiagonal() * hk * dk.cwiseInverse().asDiagonal();
    a = 0.5 * (a + a.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const Eigen::VectorXd& lam = es.eigenvalues();
    double lmin = lam.minCoeff(), lmax = lam.maxCoeff();
    out.report.kappa_after = lmin > 0 ? lmax / lmin : std::numeric_limits<double>::infinity();

    double ridge_used = ridge;
    if (ridge_used == 0.0 && (lmin <= 0.0 || out.report.kappa_after > 1e8))
        ridge_used = 1e-8 * a.trace() / static_cast<double>(mk);
    if (lmin + ridge_used <= 0.0) {
        // name the features aligned with the near-null direction
        Eigen::VectorXd v = es.eigenvectors().col(0).cwiseAbs();
        std::vector<int> order(static_cast<size_t>(mk));
        for (int q = 0; q < mk; ++q) order[static_cast<size_t>(q)] = q;
        std::sort(order.begin(), order.end(), [&](int p, int q) { return v(p) > v(q); });
        std::ostringstream msg;
        msg << "solve: singular score-matching system (lambda_min=" << lmin << "); near-null features:";
        for (int t = 0; t < std::min(5, mk); ++t) msg << " " << kept[static_cast<size_t>(order[static_cast<size_t>(t)])];
        throw NumericalError(msg.str());
    }
    out.report.ridge = ridge_used;

    Eigen::VectorXd rhs = es.eigenvectors().transpose() * gk.cwiseQuotient(dk);
    for (int q = 0; q < mk; ++q) rhs(q) /= (lam(q) + ridge_used);
    Eigen::VectorXd theta_k = (es.eigenvectors() * rhs).cwiseQuotient(dk);

    out.theta.assign(static_cast<size_t>(m), 0.0);
    for (int q = 0; q < mk; ++q) out.theta[static_cast<size_t>(kept[static_cast<size_t>(q)])] = theta_k(q);
    out.report.residual = (hk * theta_k - gk).norm();
    out.report.warned_m_ge_n = (m >= sys.n);
    return out;
}

double sm_loss(const SMSystem& sys, std::span<const double> theta) {
    if (sys.n < 1) throw DataError("sm_loss: empty system");
    Eigen::Map<const Eigen::VectorXd> t(theta.data(), static_cast<long>(theta.size()));
    Eigen::MatrixXd hm = sys.h.selfadjointView<Eigen::Lower>();
    return 0.5 * t.dot(hm * t) / static_cast<double>(sys.n) - t.dot(sys.g) / static_cast<double>(sys.n);
}

namespace {

std::vector<double> percentile_grid(std::vector<double>& pool) {
    std::sort(pool.begin(), pool.end());
    std::vector<double> p(101);
    for (int i = 0; i <= 100; ++i) {
        double pos = static_cast<double>(i) / 100.0 * static_cast<double>(pool.size() - 1);
        size_t lo = static_cast<size_t>(pos);
        double frac = pos - static_cast<double>(lo);
        p[static_cast<size_t>(i)] = lo + 1 < pool.size() ? pool[lo] * (1 - frac) + pool[lo + 1] * frac : pool.back();
    }
    return p;
}

} // namespace

LearnedModel learn_all(const FieldStack& data, const PacketPlan& plan, const LearnConfig& cfg) {
    const int n = data.count();
    if (n == 0) throw DataError("learn_all: empty dataset");
    if (data.side() != plan.side()) throw DataError("learn_all: dataset side does not match plan");
    const int threads = cfg.threads > 0 ? cfg.threads : default_thread_count();
    const int J = plan.n_bands();

    std::vector<Decomposition> decs(static_cast<size_t>(n));
    parallel_for(static_cast<size_t>(n), [&](size_t i) { decs[i] = decompose(data.field(static_cast<int>(i)), plan); },
                 threads);

    LearnedModel model{plan, {}, {}, 0.0, 1.0, {}, {}};
    model.cond.reserve(static_cast<size_t>(J));
    model.report.scales.resize(static_cast<size_t>(J));

    for (int j = 1; j <= J; ++j) {
        const BandSpec& spec = plan.band(j);
        const size_t gpix = static_cast<size_t>(spec.grid_side) * spec.grid_side;

        // pass A: empirical marginals of x_{j-1}
        std::vector<double> pool(static_cast<size_t>(n) * gpix);
        parallel_for(static_cast<size_t>(n),
                     [&](size_t i) {
                         Field2D xjm1 = reconstruct_from(decs[i], plan, j, spec.grid_side);
                         std::copy(xjm1.data(), xjm1.data() + gpix, pool.begin() + static_cast<long>(i * gpix));
                     },
                     threads);
        BumpBasis bumps = build_bump_basis(pool, cfg.n_bumps, cfg.bump_scale);
        std::vector<double> percentiles = percentile_grid(pool);
        pool.clear();
        pool.shrink_to_fit();

        ConditionalEnergyParams shape;
        shape.j = j;
        shape.idx = CouplingIndexSet::build(plan, j, cfg.shift_range, cfg.n_bumps);
        shape.bumps = bumps;
        shape.marginal_percentiles = percentiles;
        shape.theta.assign(static_cast<size_t>(shape.idx.m()), 0.0);

        // pass B: accumulate H, g
        const int m = shape.idx.m();
        std::vector<SMSystem> partials;
        partials.reserve(static_cast<size_t>(threads));
        for (int t = 0; t < threads; ++t) partials.emplace_back(m, j);
        const int dim = spec.dim();
        parallel_for_blocks(
            static_cast<size_t>(n),
            [&](size_t blk, size_t lo, size_t hi) {
                SMSystem& sys = partials[blk];
                std::vector<double> grads;
                const size_t bs = static_cast<size_t>(std::max(1, cfg.block_samples));
                const size_t row_stride = bs * static_cast<size_t>(dim);
                std::vector<double> block(static_cast<size_t>(m) * row_stride, 0.0);
                size_t in_block = 0;
                auto flush = [&]() {
                    if (in_block == 0) return;
                    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
                               Eigen::OuterStride<>>
                        u(block.data(), m, static_cast<long>(in_block) * dim,
                          Eigen::OuterStride<>(static_cast<long>(row_stride)));
                    sys.h.selfadjointView<Eigen::Lower>().rankUpdate(u, 1.0);
                    in_block = 0;
                };
                for (size_t i = lo; i < hi; ++i) {
                    Field2D low = partial_reconstruct_low(decs[i], plan, j);
                    ConditioningView view{&low, plan.same_grid(j, j + 1) ? &decs[i].bands[static_cast<size_t>(j)] : nullptr};
                    feature_gradients(shape, view, decs[i].bands[static_cast<size_t>(j - 1)], plan, grads);
                    std::vector<double> laps = feature_laplacians(shape, view, decs[i].bands[static_cast<size_t>(j - 1)], plan);
                    for (int q = 0; q < m; ++q)
                        std::copy(grads.begin() + static_cast<long>(q) * dim, grads.begin() + static_cast<long>(q + 1) * dim,
                                  block.begin() + static_cast<long>(static_cast<size_t>(q) * row_stride + in_block * static_cast<size_t>(dim)));
                    for (int q = 0; q < m; ++q) sys.g(q) += laps[static_cast<size_t>(q)];
                    ++sys.n;
                    ++in_block;
                    if (in_block == bs) flush();
                }
                flush();
            },
            threads);
        SMSystem sys = std::move(partials.front());
        for (size_t t = 1; t < partials.size(); ++t) sys.merge(partials[t]);

        SolveOutput sol = solve(sys, cfg.ridge);
        if (sol.report.warned_m_ge_n)
            std::cerr << "learn_all: warning: scale " << j << " has m=" << m << " >= n=" << sys.n << "\n";
        shape.theta = sol.theta;
        model.cond.push_back(std::move(shape));
        model.report.scales[static_cast<size_t>(j - 1)] = sol.report;
        if (cfg.verbose)
            std::cerr << "scale " << j << ": m=" << m << " kappa=" << sol.report.kappa_after
                      << " residual=" << sol.report.residual << "\n";
    }

    // coarsest scale with the same machinery
    {
        const size_t cpix = static_cast<size_t>(plan.coarse_side()) * plan.coarse_side();
        std::vector<double> pool(static_cast<size_t>(n) * cpix);
        for (int i = 0; i < n; ++i)
            std::copy(decs[static_cast<size_t>(i)].coarse.data(), decs[static_cast<size_t>(i)].coarse.data() + cpix,
                      pool.begin() + static_cast<long>(i) * static_cast<long>(cpix));
        double mean = 0;
        for (double v : pool) mean += v;
        mean /= static_cast<double>(pool.size());
        double var = 0;
        for (double v : pool) var += (v - mean) * (v - mean);
        model.coarse_mean = mean;
        model.coarse_std = std::sqrt(var / static_cast<double>(pool.size()));

        CoarsestEnergyParams shape;
        shape.idx = CoarseOffsets::build(plan.coarse_side(), cfg.coarse_shift_range, cfg.n_bumps);
        shape.bumps = build_bump_basis(pool, cfg.n_bumps, cfg.bump_scale);
        shape.marginal_percentiles = percentile_grid(pool);
        shape.theta.assign(static_cast<size_t>(shape.idx.m()), 0.0);

        std::vector<SMSystem> partials;
        const int threads2 = threads;
        for (int t = 0; t < threads2; ++t) partials.emplace_back(shape.idx.m(), 0);
        parallel_for_blocks(
            static_cast<size_t>(n),
            [&](size_t blk, size_t lo, size_t hi) {
                for (size_t i = lo; i < hi; ++i) accumulate_coarsest(partials[blk], shape, decs[i].coarse);
            },
            threads2);
        SMSystem sys = std::move(partials.front());
        for (size_t t = 1; t < partials.size(); ++t) sys.merge(partials[t]);
        SolveOutput sol = solve(sys, cfg.ridge);
        if (sol.report.warned_m_ge_n)
            std::cerr << "learn_all: warning: coarsest scale has m >= n\n";
        shape.theta = sol.theta;
        model.coarse = std::move(shape);
        model.report.coarse = sol.report;
    }
    return model;
}

} // namespace cslc
