#include "cslc/free_energy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

#include "cslc/threading.hpp"

namespace cslc {

Field2D conditional_grad_low(const ConditionalEnergyParams& cond, const Decomposition& dec, const PacketPlan& plan) {
    const int j = cond.j;
    const BandSpec& spec = plan.band(j);
    const Band& xbar = dec.bands[static_cast<size_t>(j - 1)];

    // scalar part: G_j applied to v'(x_{j-1})
    Field2D out(spec.rep_side);
    if (cond.idx.n_scalar > 0) {
        Field2D xjm1 = reconstruct_from(dec, plan, j, spec.grid_side);
        Field2D w(spec.grid_side);
        auto alpha = cond.scalar_theta();
        for (size_t i = 0; i < w.size(); ++i) w[i] = cond.bumps.v_prime(alpha, xjm1[i]);
        out = embed_low_adjoint(w, plan, j);
    }

    // next-band couplings: Gbar_{j+1}^T applied to the bilinear pattern
    bool any_next = false;
    for (const auto& e : cond.idx.entries) any_next |= (e.l == 1);
    if (any_next) {
        Band pattern = make_zero_band(plan, j + 1);
        auto ctheta = cond.coupling_theta();
        const int ls = spec.leaf_side;
        for (size_t q = 0; q < cond.idx.entries.size(); ++q) {
            const auto& e = cond.idx.entries[q];
            if (e.l != 1 || ctheta[q] == 0.0) continue;
            const Field2D& src = xbar.sub[static_cast<size_t>(e.k)];
            Field2D& dst = pattern.sub[static_cast<size_t>(e.k + e.dk)];
            for (int r = 0; r < ls; ++r)
                for (int c = 0; c < ls; ++c)
                    dst(r, c) += ctheta[q] * src.wrapped(r - e.di0, c - e.di1);
        }
        Field2D t2 = apply_bar_adjoint(pattern, plan, j + 1);
        if (t2.side() != out.side()) throw std::logic_error("conditional_grad_low: grid mismatch");
        out += t2;
    }
    return out;
}

namespace {

std::vector<double> percentile_grid_sorted(std::vector<double>& pool) {
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

CoarsestEnergyParams as_coarse(const FreeEnergyParams& fe) {
    CoarsestEnergyParams c;
    c.idx = fe.idx;
    c.bumps = fe.bumps;
    c.theta = fe.theta;
    return c;
}

} // namespace

FreeEnergyParams learn_free_energy(const ConditionalEnergyParams& cond, std::span<const Decomposition> data,
                                   const PacketPlan& plan, const FreeEnergyConfig& cfg) {
    if (data.empty()) throw DataError("learn_free_energy: empty dataset");
    const int j = cond.j;
    const BandSpec& spec = plan.band(j);
    const int rep = spec.rep_side;
    const size_t rpix = static_cast<size_t>(rep) * rep;
    const int threads = cfg.threads > 0 ? cfg.threads : default_thread_count();

    std::vector<double> pool(data.size() * rpix);
    parallel_for(data.size(), [&](size_t i) {
        Field2D xj = low_representation(data[i], plan, j);
        std::copy(xj.data(), xj.data() + rpix, pool.begin() + static_cast<long>(i * rpix));
    }, threads);

    FreeEnergyParams fe;
    fe.j = j;
    fe.idx = CoarseOffsets::build(rep, cfg.shift_range, cfg.n_bumps);
    if (cfg.n_bumps > 0) fe.bumps = build_bump_basis(pool, cfg.n_bumps, cfg.bump_scale);
    fe.marginal_percentiles = percentile_grid_sorted(pool);
    pool.clear();
    pool.shrink_to_fit();

    const int m = fe.idx.m();
    CoarsestEnergyParams shape = as_coarse(fe);
    shape.theta.assign(static_cast<size_t>(m), 0.0);

    // regression H = E[grad Phi grad Phi^T], b = E[grad Phi . grad_x E]
    std::vector<Eigen::MatrixXd> hs(static_cast<size_t>(threads), Eigen::MatrixXd::Zero(m, m));
    std::vector<Eigen::VectorXd> bs(static_cast<size_t>(threads), Eigen::VectorXd::Zero(m));
    parallel_for_blocks(
        data.size(),
        [&](size_t blk, size_t lo, size_t hi) {
            std::vector<double> grads;
            for (size_t i = lo; i < hi; ++i) {
                Field2D xj = low_representation(data[i], plan, j);
                coarsest_feature_gradients(shape, xj, grads);
                Field2D target = conditional_grad_low(cond, data[i], plan);
                Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> u(
                    grads.data(), m, static_cast<long>(rpix));
                Eigen::Map<const Eigen::VectorXd> t(target.data(), static_cast<long>(rpix));
                hs[blk].selfadjointView<Eigen::Lower>().rankUpdate(u, 1.0);
                bs[blk] += u * t;
            }
        },
        threads);
    SMSystem sys(m, j);
    for (int t = 0; t < threads; ++t) {
        sys.h += hs[static_cast<size_t>(t)];
        sys.g += bs[static_cast<size_t>(t)];
    }
    sys.n = static_cast<long>(data.size());

    SolveOutput sol = solve(sys, cfg.ridge);
    fe.theta = sol.theta;
    fe.report = sol.report;
    return fe;
}

double free_energy_value(const FreeEnergyParams& fe, const Field2D& x_rep) {
    return coarsest_energy(as_coarse(fe), x_rep);
}

Field2D free_energy_grad(const FreeEnergyParams& fe, const Field2D& x_rep) {
    return coarsest_grad(as_coarse(fe), x_rep);
}

double PotentialTable::eval(double t) const {
    const int n = static_cast<int>(values.size());
    if (n == 0) return 0.0;
    if (n == 1) return values[0];
    double u = (t - lo) / (hi - lo) * (n - 1);
    if (u <= 0) return values.front();
    if (u >= n - 1) return values.back();
    int i = static_cast<int>(u);
    double f = u - i;
    auto at = [&](int q) { return values[static_cast<size_t>(std::clamp(q, 0, n - 1))]; };
    // Catmull-Rom
    double p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
    return p1 + 0.5 * f * (p2 - p0 + f * (2 * p0 - 5 * p1 + 4 * p2 - p3 + f * (3 * (p1 - p2) + p3 - p0)));
}

double PotentialTable::max_abs_on(double a, double b, int samples) const {
    double m = 0;
    for (int i = 0; i < samples; ++i) {
        double t = a + (b - a) * i / (samples - 1);
        m = std::max(m, std::abs(eval(t)));
    }
    return m;
}

double GlobalEnergy::evaluate(const Field2D& x) const {
    const PacketPlan& plan = model.plan;
    Decomposition dec = decompose(x, plan);
    double total = coarsest_energy(model.coarse, dec.coarse);
    for (int j = 1; j <= plan.n_bands(); ++j) {
        Field2D low = partial_reconstruct_low(dec, plan, j);
        ConditioningView view{&low, plan.same_grid(j, j + 1) ? &dec.bands[static_cast<size_t>(j)] : nullptr};
        total += energy(model.cond[static_cast<size_t>(j - 1)], view, dec.bands[static_cast<size_t>(j - 1)], plan);
        Field2D xj = low_representation(dec, plan, j);
        total -= free_energy_value(free_params[static_cast<size_t>(j - 1)], xj);
    }
    return total;
}

namespace {

// least-squares quadratic fit of y(t) over [a, b]
std::array<double, 3> quad_fit(const std::function<double(double)>& y, double a, double b, int samples = 512) {
    double s[5] = {0, 0, 0, 0, 0};
    double m[3] = {0, 0, 0};
    for (int i = 0; i < samples; ++i) {
        double t = a + (b - a) * i / (samples - 1);
        double yt = y(t);
        double tp = 1;
        for (int k = 0; k < 5; ++k) {
            s[k] += tp;
            if (k < 3) m[k] += yt * tp;
            tp *= t;
        }
    }
    Eigen::Matrix3d A;
    A << s[0], s[1], s[2], s[1], s[2], s[3], s[2], s[3], s[4];
    Eigen::Vector3d rhs(m[0], m[1], m[2]);
    Eigen::Vector3d c = A.ldlt().solve(rhs);
    return {c(0), c(1), c(2)};
}

} // namespace

GlobalEnergy assemble_global_energy(const LearnedModel& model, std::vector<FreeEnergyParams> free_params) {
    const int J = model.plan.n_bands();
    if (static_cast<int>(free_params.size()) != J)
        throw DataError("assemble_global_energy: need free-energy parameters for every scale");
    for (int j = 1; j <= J; ++j)
        if (free_params[static_cast<size_t>(j - 1)].j != j)
            throw DataError("assemble_global_energy: free-energy scale mismatch");

    GlobalEnergy ge{model, std::move(free_params), {}, {}};
    ge.potentials.resize(static_cast<size_t>(J + 1));
    ge.central80.resize(static_cast<size_t>(J + 1));

    auto percentile = [](const std::vector<double>& p, double q) {
        double pos = q * 100.0;
        int i = std::clamp(static_cast<int>(pos), 0, 99);
        double f = pos - i;
        return p[static_cast<size_t>(i)] * (1 - f) + p[static_cast<size_t>(i + 1)] * f;
    };

    const int nodes = 512;
    for (int lvl = 0; lvl <= J; ++lvl) {
        // v-bar_{lvl+1} lives on x_lvl pixels; percentiles of that pool were
        // recorded while learning scale lvl+1 (or the coarsest model at lvl = J)
        const std::vector<double>& pct = lvl < J ? ge.model.cond[static_cast<size_t>(lvl)].marginal_percentiles
                                                 : ge.model.coarse.marginal_percentiles;
        double lo_v = pct.front(), hi_v = pct.back();
        double pad = 0.1 * (hi_v - lo_v);
        PotentialTable table;
        table.lo = lo_v - pad;
        table.hi = hi_v + pad;
        table.values.resize(static_cast<size_t>(nodes));

        auto vbar_next = [&](double t) {
            if (lvl < J) {
                const auto& c = ge.model.cond[static_cast<size_t>(lvl)];
                return c.bumps.v(c.scalar_theta(), t);
            }
            return ge.model.coarse.bumps.v(ge.model.coarse.scalar_theta(), t);
        };

        if (lvl == 0) {
            for (int i = 0; i < nodes; ++i) {
                double t = table.lo + (table.hi - table.lo) * i / (nodes - 1);
                table.values[static_cast<size_t>(i)] = vbar_next(t); // V_0 = v-bar_1
            }
        } else {
            const auto& fe = ge.free_params[static_cast<size_t>(lvl - 1)];
            auto vtilde = [&](double t) { return fe.bumps.v(std::span<const double>(fe.theta).subspan(fe.idx.offsets.size()), t); };
            auto h = [&](double t) { return vbar_next(t) - vtilde(t); }; // V_lvl before detrending
            double a95 = percentile(pct, 0.025), b95 = percentile(pct, 0.975);
            auto fit = quad_fit(h, a95, b95);
            for (int i = 0; i < nodes; ++i) {
                double t = table.lo + (table.hi - table.lo) * i / (nodes - 1);
                table.values[static_cast<size_t>(i)] = h(t) - (fit[0] + fit[1] * t + fit[2] * t * t);
            }
        }
        ge.potentials[static_cast<size_t>(lvl)] = std::move(table);
        ge.central80[static_cast<size_t>(lvl)] = {percentile(pct, 0.10), percentile(pct, 0.90)};
    }
    return ge;
}

} // namespace cslc
