#pragma once

#include <functional>
#include <vector>

#include "cslc/energy.hpp"
#include "cslc/rng.hpp"

namespace cslc {

struct MalaConfig {
    double step_size = 0.1;
    int steps = 300;
    int coarse_steps = 0; // 0 -> 4x steps
    double target_acceptance = 0.57;
    int adapt_window = 25;
    double adapt_gain = 1.0; // decayed as 1/sqrt(window) during warm-up
    double warmup_fraction = 0.25;
    int pre_adapt_windows = 0; // extra adaptation-only windows before the recorded chain
    uint64_t seed = 0;
    int trace_coords = 0; // record this many coordinate traces post warm-up
};

// delta' = delta * exp(gain * (observed - target)); fixed point at observed == target
double adapt_step(double delta, double observed, double target, double gain);

struct MalaTarget {
    std::function<double(const std::vector<double>&)> energy;
    std::function<void(const std::vector<double>&, std::vector<double>&)> grad;
};

struct MalaStepLog {
    bool accepted = false;
    bool nonfinite = false;
    double log_ratio = 0.0;
    // Components of the printed acceptance formula, kept for audit:
    // a = |grad(y)|^2 + |grad(x)|^2, b = <y-x, grad(y)-grad(x)>, c = E(y)-E(x)
    double a = 0.0, b = 0.0, c = 0.0;
};

// One MALA transition with proposal y ~ N(x - delta grad E(x), 2 delta Id)
// and the exact Metropolis-Hastings ratio for that proposal.
class MalaChain {
public:
    MalaChain(MalaTarget target, std::vector<double> init, double step, Rng rng);

    MalaStepLog step();
    const std::vector<double>& state() const { return x_; }
    double energy_value() const { return ex_; }
    double step_size() const { return step_; }
    void set_step_size(double s) { step_ = s; }
    long clamped() const { return clamped_; }
    const Rng& rng() const { return rng_; }

private:
    MalaTarget target_;
    std::vector<double> x_, gx_, y_, gy_;
    double ex_;
    double step_;
    Rng rng_;
    long clamped_ = 0;
};

// Single-call variant of the kernel (alias for one chain step).
MalaStepLog mala_step(const MalaTarget& target, std::vector<double>& state, double step, Rng& rng);

// Implemented log MH ratio for the move x -> y under the MALA proposal,
// exposed for detailed-balance audits: log r(x->y) + log r(y->x) = 0.
double mala_log_ratio(const MalaTarget& target, const std::vector<double>& x, const std::vector<double>& y,
                      double step);

struct ChainStats {
    double acceptance = 0.0; // post warm-up
    double final_step = 0.0;
    std::vector<double> energy_trace;
    double tau_energy = 0.0;
    long clamped = 0;
    bool converged = true;
    std::vector<std::vector<double>> coord_traces; // [coord][t], post warm-up
    std::vector<int> trace_indices;
};

// Runs an adapted MALA chain on a generic target from `init`; adaptation is
// frozen after the warm-up window so the recorded chain is a valid MH chain.
ChainStats run_adapted_chain(const MalaTarget& target, std::vector<double>& state, const MalaConfig& cfg);

// Algorithm-2 conditional step: T adapted MALA steps on E(x_j, .) from
// x-bar = 0.
std::pair<Band, ChainStats> sample_conditional(const ConditionalEnergyParams& params, const ConditioningView& view,
                                               const PacketPlan& plan, const MalaConfig& cfg);

struct ScaleSamplingStats {
    int j = 0; // 0 denotes the coarsest scale
    double mean_acceptance = 0.0;
    double mean_step = 0.0;
    long clamped = 0;
    long chains = 0;
};

struct LearnedModel; // score_matching.hpp

struct CascadeResult {
    FieldStack fields;
    std::vector<ScaleSamplingStats> per_scale;
};

// Full sampling cascade: coarsest first (inverse-CDF when dim == 1, MALA
// otherwise), then conditional bands from low to high frequency.
CascadeResult sample_cascade(const LearnedModel& model, int n, const MalaConfig& cfg, uint64_t seed, int threads = 0);

// Exact inverse-CDF sampler for a one-dimensional coarsest energy.
double sample_coarse_1d(const CoarsestEnergyParams& params, double lo, double hi, Rng& rng, int nodes = 10000);

} // namespace cslc
