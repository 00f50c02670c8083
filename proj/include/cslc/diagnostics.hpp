#pragma once

#include "cslc/acf.hpp"
#include "cslc/energy.hpp"
#include "cslc/free_energy.hpp"
#include "cslc/phi4.hpp"

namespace cslc {

struct RadialSpectrum {
    std::vector<double> edges; // bin k covers [edges[k], edges[k+1])
    std::vector<double> power; // mean |X|^2/d per mode, averaged within the bin
    std::vector<long> count;   // modes per bin
    double mean_energy = 0.0;  // mean ||x||^2 over samples (Parseval check)

    double parseval_sum() const {
        double s = 0;
        for (size_t i = 0; i < power.size(); ++i) s += power[i] * static_cast<double>(count[i]);
        return s;
    }
};

RadialSpectrum radial_power_spectrum(const FieldStack& fields, int threads = 0);

struct Histogram {
    double lo = 0.0, hi = 0.0;
    std::vector<double> density; // normalized: sum(density) * bin_width = 1
    long n_values = 0;

    double bin_width() const { return (hi - lo) / static_cast<double>(density.size()); }
};

Histogram marginal_histogram(const FieldStack& fields, int bins, double lo, double hi);
Histogram marginal_histogram(const FieldStack& fields, int bins); // range from data
double l1_distance(const Histogram& a, const Histogram& b);

struct ExtremalEigs {
    std::vector<double> lambda_min; // per conditioning sample
    std::vector<double> lambda_max;
    bool converged = true;
    double residual = 0.0;
    std::vector<double> pooled_eigenvalues; // dense spectra when dim <= dense_limit
};

// Matrix-free extremal eigenvalues of the conditional Hessian at x-bar = 0
// for each conditioning sample (power iteration, then shifted power
// iteration for the smallest eigenvalue).
ExtremalEigs conditional_hessian_extremes(const ConditionalEnergyParams& params, const PacketPlan& plan,
                                          std::span<const Decomposition> conditioning, int k_iters = 2000,
                                          double tol = 1e-6, int dense_limit = 1024, int dense_samples = 4,
                                          int threads = 0);

struct EquivalentPotential {
    PotentialTable table;     // v0(t) = v(t) + Tr(K)/(2 d) t^2
    double trace_term = 0.0;  // Tr(K)/(2 d)
    double min_second = 0.0;  // min of v0'' over the central 95% range
    bool convex_central = false;
};

EquivalentPotential equivalent_scalar_potential(const ConditionalEnergyParams& params, const PacketPlan& plan);
EquivalentPotential equivalent_scalar_potential_coarse(const CoarsestEnergyParams& params, int side);
EquivalentPotential equivalent_scalar_potential_phi4(const Phi4Params& params, double lo, double hi);

// One recorded chain: coordinate traces from a single conditioning sample.
struct ChainTrace {
    std::vector<std::vector<double>> coords; // [coord][t]
};

struct ScaleMixing {
    int j = 0;
    long dim = 0;
    double tau = 0.0;
    double r2 = 0.0;
    bool decaying = true;
};

struct MixingReport {
    std::vector<ScaleMixing> scales;   // conditional scales j = 1..J then coarsest (j = 0)
    double tau_aggregate = 0.0;        // sum_j (d_j/d) tau_j + tau_J d_J / d
    long total_dim = 0;
};

// A_j(t) pooled over chains and coordinates with per-chain mean subtraction,
// fitted on the window A > 0.1.
ScaleMixing mixing_scale(int j, long dim, std::span<const ChainTrace> chains, double threshold = 0.1);
MixingReport aggregate_mixing(std::vector<ScaleMixing> scales, long total_dim);

struct ScalingFit {
    double exponent = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;
};

// Least-squares slope of log tau against log d with a residual bootstrap CI.
ScalingFit scaling_exponent(std::span<const double> dims, std::span<const double> taus, int bootstrap = 1000,
                            uint64_t seed = 12345);

struct BandCutoff {
    int j = 0;
    double min_symbol = 0.0; // min of the lattice symbol over the band's 99% support
    bool predicted_logconcave = false;
};

struct CutoffReport {
    double gamma = 0.0;
    double cutoff_symbol = 0.0;
    bool range_nonempty = false;
    std::vector<BandCutoff> bands;
};

// Prop.-3 check: compares beta * (band's minimum lattice-symbol value) with
// gamma; bands below the cutoff get no prediction.
CutoffReport cslc_cutoff_check(const Phi4Params& params, const PacketPlan& plan, double support_energy = 0.99);

} // namespace cslc
