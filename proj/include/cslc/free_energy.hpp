#pragma once

#include "cslc/score_matching.hpp"

namespace cslc {

// F_j(x_j) = 1/2 x^T K x + sum_i v(x[i]) approximating -log Z-bar_j(x_j),
// with the same stationary offset family as the coarsest model.
struct FreeEnergyParams {
    int j = 0;
    CoarseOffsets idx;
    BumpBasis bumps;
    std::vector<double> theta;
    std::vector<double> marginal_percentiles; // of the x_j pixel pool
    SolveReport report;
};

struct FreeEnergyConfig {
    int n_bumps = 16;
    double bump_scale = 1.0;
    int shift_range = 4;
    double ridge = 0.0;
    int threads = 0;
};

// Gradient of the conditional energy with respect to the conditioning x_j
// (on its representation grid), chain-ruled through
// x_{j-1} = G_j^T x_j + Gbar_j^T x-bar_j.
Field2D conditional_grad_low(const ConditionalEnergyParams& cond, const Decomposition& dec, const PacketPlan& plan);

// Closed-form regression theta = E[grad Phi grad Phi^T]^-1 E[grad Phi grad E].
FreeEnergyParams learn_free_energy(const ConditionalEnergyParams& cond, std::span<const Decomposition> data,
                                   const PacketPlan& plan, const FreeEnergyConfig& cfg);

double free_energy_value(const FreeEnergyParams& fe, const Field2D& x_rep);
Field2D free_energy_grad(const FreeEnergyParams& fe, const Field2D& x_rep);

// Tabulated scalar function with cubic (Catmull-Rom) interpolation.
struct PotentialTable {
    double lo = 0.0, hi = 0.0;
    std::vector<double> values;

    double eval(double t) const;
    double max_abs_on(double a, double b, int samples = 512) const;
};

// Explicit global energy -log p_theta(x) + const, evaluated through the
// per-scale decomposition, plus the multiscale scalar potentials V_j
// extracted after quadratic detrending.
struct GlobalEnergy {
    LearnedModel model;
    std::vector<FreeEnergyParams> free_params; // index j-1
    std::vector<PotentialTable> potentials;    // V_0..V_J on the x_j value ranges
    std::vector<std::pair<double, double>> central80; // per level

    double evaluate(const Field2D& x) const;
};

GlobalEnergy assemble_global_energy(const LearnedModel& model, std::vector<FreeEnergyParams> free_params);

} // namespace cslc
