#include "cslc/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include "cslc/acf.hpp"
#include "cslc/fft.hpp"
#include "cslc/score_matching.hpp"
#include "cslc/threading.hpp"

namespace cslc {

double adapt_step(double delta, double observed, double target, double gain) {
    if (observed < 0.0 || observed > 1.0) throw std::invalid_argument("adapt_step: observed acceptance out of [0,1]");
    return delta * std::exp(gain * (observed - target));
}

MalaChain::MalaChain(MalaTarget target, std::vector<double> init, double step, Rng rng)
    : target_(std::move(target)), x_(std::move(init)), step_(step), rng_(rng) {
    if (step <= 0) throw std::invalid_argument("MalaChain: step size must be positive");
    gx_.resize(x_.size());
    y_.resize(x_.size());
    gy_.resize(x_.size());
    ex_ = target_.energy(x_);
    target_.grad(x_, gx_);
}

namespace {

// Shared ratio math: exact MH ratio for y ~ N(x - delta grad E(x), 2 delta Id)
// against e^-E, plus the printed Algorithm-2 components (a, b, c) for audit.
MalaStepLog mh_ratio(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& gx,
                     const std::vector<double>& gy, double ex, double ey, double step) {
    MalaStepLog log;
    double gx2 = 0, gy2 = 0, dot_sum = 0, dot_diff = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double du = y[i] - x[i];
        gx2 += gx[i] * gx[i];
        gy2 += gy[i] * gy[i];
        dot_sum += du * (gx[i] + gy[i]);
        dot_diff += du * (gy[i] - gx[i]);
    }
    log.a = gy2 + gx2;
    log.b = dot_diff;
    log.c = ey - ex;
    log.log_ratio = -log.c + 0.5 * dot_sum + 0.25 * step * (gx2 - gy2);
    return log;
}

} // namespace

double mala_log_ratio(const MalaTarget& target, const std::vector<double>& x, const std::vector<double>& y,
                      double step) {
    std::vector<double> gx(x.size()), gy(y.size());
    target.grad(x, gx);
    target.grad(y, gy);
    return mh_ratio(x, y, gx, gy, target.energy(x), target.energy(y), step).log_ratio;
}

MalaStepLog MalaChain::step() {
    const size_t d = x_.size();
    const double sqrt2d = std::sqrt(2.0 * step_);
    for (size_t i = 0; i < d; ++i) y_[i] = x_[i] - step_ * gx_[i] + sqrt2d * rng_.normal();
    const double u = rng_.uniform();

    double ey = target_.energy(y_);
    bool finite = std::isfinite(ey);
    if (finite) {
        target_.grad(y_, gy_);
        for (size_t i = 0; i < d && finite; ++i) finite = std::isfinite(gy_[i]);
    }
    if (!finite) {
        MalaStepLog log;
        log.nonfinite = true;
        log.accepted = false;
        log.log_ratio = -std::numeric_limits<double>::infinity();
        return log;
    }

    MalaStepLog log = mh_ratio(x_, y_, gx_, gy_, ex_, ey, step_);

    if (log.log_ratio >= 0.0) {
        ++clamped_;
        log.accepted = true;
    } else {
        log.accepted = std::log(u) < log.log_ratio;
    }
    if (log.accepted) {
        x_.swap(y_);
        gx_.swap(gy_);
        ex_ = ey;
    }
    return log;
}

MalaStepLog mala_step(const MalaTarget& target, std::vector<double>& state, double step, Rng& rng) {
    MalaChain chain(target, state, step, rng);
    MalaStepLog log = chain.step();
    state = chain.state();
    rng = chain.rng();
    return log;
}

ChainStats run_adapted_chain(const MalaTarget& target, std::vector<double>& state, const MalaConfig& cfg) {
    ChainStats stats;
    if (cfg.steps <= 0) {
        stats.converged = false;
        stats.final_step = cfg.step_size;
        return stats;
    }
    MalaChain chain(target, state, cfg.step_size, Rng(cfg.seed));
    const int warmup = static_cast<int>(std::floor(cfg.warmup_fraction * cfg.steps));
    stats.energy_trace.reserve(static_cast<size_t>(cfg.steps));

    // coordinate subset for post-warm-up traces
    const int d = static_cast<int>(state.size());
    if (cfg.trace_coords > 0) {
        int nc = std::min(cfg.trace_coords, d);
        stats.trace_indices.resize(static_cast<size_t>(nc));
        for (int c = 0; c < nc; ++c) stats.trace_indices[static_cast<size_t>(c)] = static_cast<int>((static_cast<long>(c) * d) / nc);
        stats.coord_traces.assign(static_cast<size_t>(nc), {});
    }

    // optional calibration prefix, not part of the recorded chain
    for (int w = 0; w < cfg.pre_adapt_windows; ++w) {
        int accepts = 0;
        for (int t = 0; t < cfg.adapt_window; ++t) accepts += chain.step().accepted ? 1 : 0;
        double gain = cfg.adapt_gain / std::sqrt(1.0 + w);
        chain.set_step_size(
            adapt_step(chain.step_size(), static_cast<double>(accepts) / cfg.adapt_window, cfg.target_acceptance, gain));
    }

    int window_accepts = 0, window_steps = 0, window_index = 0;
    long post_accepts = 0, post_steps = 0;
    for (int t = 0; t < cfg.steps; ++t) {
        MalaStepLog log = chain.step();
        stats.energy_trace.push_back(chain.energy_value());
        if (t < warmup) {
            ++window_steps;
            window_accepts += log.accepted ? 1 : 0;
            if (window_steps == cfg.adapt_window) {
                double obs = static_cast<double>(window_accepts) / window_steps;
                // Robbins-Monro decay so the step size settles before the freeze
                double gain = cfg.adapt_gain / std::sqrt(1.0 + window_index);
                chain.set_step_size(adapt_step(chain.step_size(), obs, cfg.target_acceptance, gain));
                window_accepts = window_steps = 0;
                ++window_index;
            }
        } else {
            ++post_steps;
            post_accepts += log.accepted ? 1 : 0;
            for (size_t c = 0; c < stats.trace_indices.size(); ++c)
                stats.coord_traces[c].push_back(chain.state()[static_cast<size_t>(stats.trace_indices[c])]);
        }
    }
    stats.acceptance = post_steps > 0 ? static_cast<double>(post_accepts) / static_cast<double>(post_steps) : 0.0;
    stats.final_step = chain.step_size();
    stats.clamped = chain.clamped();
    state = chain.state();

    if (post_steps >= 50) {
        auto acf = normalized_autocorrelation(
            std::span<const double>(stats.energy_trace.data() + warmup, static_cast<size_t>(post_steps)),
            static_cast<int>(post_steps / 2));
        stats.tau_energy = fit_acf_tau(acf).tau;
    }
    if (post_steps >= 100 && stats.acceptance < 0.01) {
        std::ostringstream msg;
        msg << "MALA acceptance collapsed to " << stats.acceptance << " after adaptation (step size "
            << stats.final_step << ")";
        throw NumericalError(msg.str());
    }
    return stats;
}

namespace {

// The learned coarse energy is only specified on the data range: beyond the
// bump supports the quadratic part alone remains and need not be positive,
// so the bare density can be improper. Sampling therefore runs on a bounded
// domain (range +- 3 mean widths, as in the 1D inverse-CDF path) enforced by
// a smooth quadratic wall that is zero on the whole data range.
struct CoarseWall {
    double lo = 0.0, hi = 0.0, stiffness = 0.0;

    static CoarseWall make(const CoarsestEnergyParams& params, int side) {
        CoarseWall w;
        double blo = params.bumps.support_lo(), bhi = params.bumps.support_hi();
        double mean_width = 0;
        for (double v : params.bumps.widths) mean_width += v;
        mean_width = params.bumps.count() > 0 ? mean_width / params.bumps.count() : 1.0;
        w.lo = blo - 3.0 * mean_width;
        w.hi = bhi + 3.0 * mean_width;

        // stiffness must dominate any negative curvature of the quadratic part
        const int d = side * side;
        Eigen::MatrixXd k = Eigen::MatrixXd::Zero(d, d);
        CoarsestEnergyParams quad = params;
        for (size_t q = quad.idx.offsets.size(); q < quad.theta.size(); ++q) quad.theta[q] = 0.0;
        Field2D e(side);
        for (int c = 0; c < d; ++c) {
            e[static_cast<size_t>(c)] = 1.0;
            Field2D col = coarsest_grad(quad, e);
            e[static_cast<size_t>(c)] = 0.0;
            for (int r = 0; r < d; ++r) k(r, c) = col[static_cast<size_t>(r)];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (k + k.transpose()), Eigen::EigenvaluesOnly);
        double lmin = es.eigenvalues().minCoeff();
        w.stiffness = 4.0 * std::max(1.0, -lmin);
        return w;
    }

    double energy(double t) const {
        double d = t < lo ? lo - t : (t > hi ? t - hi : 0.0);
        return 0.5 * stiffness * d * d;
    }
    double grad(double t) const {
        if (t < lo) return -stiffness * (lo - t);
        if (t > hi) return stiffness * (t - hi);
        return 0.0;
    }
};

// Flattened-band adapter around the conditional energy, reusing buffers.
struct ConditionalTarget {
    const ConditionalEnergyParams* params;
    const ConditioningView* view;
    const PacketPlan* plan;
    mutable Band xb, gb;

    MalaTarget make() {
        xb = make_zero_band(*plan, params->j);
        gb = make_zero_band(*plan, params->j);
        MalaTarget t;
        t.energy = [this](const std::vector<double>& v) {
            vector_to_band(v, xb);
            return energy(*params, *view, xb, *plan);
        };
        t.grad = [this](const std::vector<double>& v, std::vector<double>& out) {
            vector_to_band(v, xb);
            gb = grad_bar(*params, *view, xb, *plan);
            band_to_vector(gb, out);
        };
        return t;
    }
};

} // namespace

std::pair<Band, ChainStats> sample_conditional(const ConditionalEnergyParams& params, const ConditioningView& view,
                                               const PacketPlan& plan, const MalaConfig& cfg) {
    Band out = make_zero_band(plan, params.j);
    if (cfg.steps <= 0) {
        ChainStats stats;
        stats.converged = false;
        stats.final_step = cfg.step_size;
        return {std::move(out), stats};
    }
    ConditionalTarget ctx{&params, &view, &plan, {}, {}};
    MalaTarget target = ctx.make();
    std::vector<double> state(static_cast<size_t>(out.dim()), 0.0); // Algorithm-2 zero initialization
    ChainStats stats = run_adapted_chain(target, state, cfg);
    vector_to_band(state, out);
    return {std::move(out), stats};
}

double sample_coarse_1d(const CoarsestEnergyParams& params, double lo, double hi, Rng& rng, int nodes) {
    // tabulated density e^{-E(t)} on a 1D grid, sampled by inverse CDF
    Field2D cell(1);
    std::vector<double> ts(static_cast<size_t>(nodes)), en(static_cast<size_t>(nodes));
    double emin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < nodes; ++i) {
        double t = lo + (hi - lo) * i / (nodes - 1);
        cell(0, 0) = t;
        ts[static_cast<size_t>(i)] = t;
        en[static_cast<size_t>(i)] = coarsest_energy(params, cell);
        emin = std::min(emin, en[static_cast<size_t>(i)]);
    }
    std::vector<double> cdf(static_cast<size_t>(nodes), 0.0);
    for (int i = 1; i < nodes; ++i) {
        double f0 = std::exp(-(en[static_cast<size_t>(i - 1)] - emin));
        double f1 = std::exp(-(en[static_cast<size_t>(i)] - emin));
        cdf[static_cast<size_t>(i)] = cdf[static_cast<size_t>(i - 1)] + 0.5 * (f0 + f1);
    }
    double total = cdf.back();
    if (!(total > 0)) throw NumericalError("sample_coarse_1d: degenerate density");
    double u = rng.uniform() * total;
    auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    size_t i1 = std::min<size_t>(static_cast<size_t>(it - cdf.begin()), static_cast<size_t>(nodes - 1));
    if (i1 == 0) return ts[0];
    double c0 = cdf[i1 - 1], c1 = cdf[i1];
    double frac = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
    return ts[i1 - 1] + frac * (ts[i1] - ts[i1 - 1]);
}

CascadeResult sample_cascade(const LearnedModel& model, int n, const MalaConfig& cfg, uint64_t seed, int threads) {
    const PacketPlan& plan = model.plan;
    const int J = plan.n_bands();
    CascadeResult result;
    result.fields = FieldStack(n, plan.side());
    result.per_scale.resize(static_cast<size_t>(J + 1));
    for (int j = 0; j <= J; ++j) result.per_scale[static_cast<size_t>(j)].j = j;
    if (n == 0) return result;

    std::mutex stats_mutex;
    const int coarse_steps = cfg.coarse_steps > 0 ? cfg.coarse_steps : 4 * cfg.steps;

    // step sizes calibrated on the first sample, then shared as starting
    // points so parallel chains stay deterministic
    std::vector<double> step_start(static_cast<size_t>(J + 1), cfg.step_size);
    const CoarseWall wall = plan.coarse_dim() > 1 ? CoarseWall::make(model.coarse, plan.coarse_side()) : CoarseWall{};

    auto generate_one = [&](size_t i, std::vector<ScaleSamplingStats>& local) {
        local.assign(static_cast<size_t>(J + 1), ScaleSamplingStats{});
        Field2D coarse(plan.coarse_side());
        if (plan.coarse_dim() == 1) {
            Rng rng(derive_seed(seed, 0, i));
            double lo = model.coarse.bumps.support_lo();
            double hi = model.coarse.bumps.support_hi();
            double w = (hi - lo) / std::max(1, model.coarse.bumps.count());
            coarse(0, 0) = sample_coarse_1d(model.coarse, lo - 3 * w, hi + 3 * w, rng);
            local[0] = {0, 1.0, 0.0, 0, 1};
        } else {
            Rng init_rng(derive_seed(seed, 0, i));
            std::vector<double> state(static_cast<size_t>(plan.coarse_dim()));
            for (auto& v : state) v = model.coarse_mean + model.coarse_std * init_rng.normal();
            MalaTarget target;
            Field2D xbuf(plan.coarse_side());
            target.energy = [&](const std::vector<double>& v) {
                std::copy(v.begin(), v.end(), xbuf.data());
                double e = coarsest_energy(model.coarse, xbuf);
                for (double t : v) e += wall.energy(t);
                return e;
            };
            target.grad = [&](const std::vector<double>& v, std::vector<double>& out) {
                std::copy(v.begin(), v.end(), xbuf.data());
                Field2D g = coarsest_grad(model.coarse, xbuf);
                out.assign(g.data(), g.data() + g.size());
                for (size_t q = 0; q < v.size(); ++q) out[q] += wall.grad(v[q]);
            };
            MalaConfig ccfg = cfg;
            ccfg.steps = coarse_steps;
            ccfg.step_size = step_start[0];
            ccfg.pre_adapt_windows = i == 0 ? 40 : 0; // pilot chain calibrates for the rest
            ccfg.seed = derive_seed(seed, 1, i);
            ccfg.trace_coords = 0;
            ChainStats st = run_adapted_chain(target, state, ccfg);
            std::copy(state.begin(), state.end(), coarse.data());
            local[0] = {0, st.acceptance, st.final_step, st.clamped, 1};
        }

        // conditional cascade, low to high frequency
        std::vector<Band> sampled(static_cast<size_t>(J + 1));
        Field2D cur = coarse;
        for (int j = J; j >= 1; --j) {
            Field2D low = embed_low(cur, plan, j);
            ConditioningView view{&low, plan.same_grid(j, j + 1) ? &sampled[static_cast<size_t>(j)] : nullptr};
            MalaConfig jcfg = cfg;
            jcfg.step_size = step_start[static_cast<size_t>(j)];
            jcfg.pre_adapt_windows = i == 0 ? 40 : 0;
            jcfg.seed = derive_seed(seed, static_cast<uint64_t>(j) + 2, i);
            jcfg.trace_coords = 0;
            auto [band, st] = sample_conditional(model.cond[static_cast<size_t>(j - 1)], view, plan, jcfg);
            local[static_cast<size_t>(j)] = {j, st.acceptance, st.final_step, st.clamped, 1};
            cur = assemble_low_field(view, band, plan, j);
            sampled[static_cast<size_t>(j - 1)] = std::move(band);
        }
        result.fields.set_field(static_cast<int>(i), cur);
    };

    {
        std::vector<ScaleSamplingStats> local;
        generate_one(0, local);
        for (int j = 0; j <= J; ++j) {
            const auto& lc = local[static_cast<size_t>(j)];
            if (lc.mean_step > 0) step_start[static_cast<size_t>(j)] = lc.mean_step;
            auto& agg = result.per_scale[static_cast<size_t>(j)];
            agg.mean_acceptance += lc.mean_acceptance;
            agg.mean_step += lc.mean_step;
            agg.clamped += lc.clamped;
            agg.chains += lc.chains;
        }
    }
    if (n > 1) {
        parallel_for(
            static_cast<size_t>(n - 1),
            [&](size_t idx) {
                size_t i = idx + 1;
                std::vector<ScaleSamplingStats> local;
                generate_one(i, local);
                std::lock_guard<std::mutex> lock(stats_mutex);
                for (int j = 0; j <= J; ++j) {
                    auto& agg = result.per_scale[static_cast<size_t>(j)];
                    const auto& lc = local[static_cast<size_t>(j)];
                    agg.mean_acceptance += lc.mean_acceptance;
                    agg.mean_step += lc.mean_step;
                    agg.clamped += lc.clamped;
                    agg.chains += lc.chains;
                }
            },
            threads);
    }

    for (auto& s : result.per_scale) {
        if (s.chains > 0) {
            s.mean_acceptance /= static_cast<double>(s.chains);
            s.mean_step /= static_cast<double>(s.chains);
        }
    }
    return result;
}

} // namespace cslc
