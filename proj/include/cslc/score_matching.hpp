#pragma once

#include <Eigen/Dense>
#include <optional>

#include "cslc/energy.hpp"

namespace cslc {

// Accumulated empirical score-matching quadratic form for one scale:
// h/n ~ E[grad Phi grad Phi^T], g/n ~ E[lap Phi].
struct SMSystem {
    int scale = 0; // band index j, or 0 for the coarsest
    Eigen::MatrixXd h; // m x m, sum over samples
    Eigen::VectorXd g; // m, sum over samples
    long n = 0;

    SMSystem(int m, int scale_tag) : scale(scale_tag), h(Eigen::MatrixXd::Zero(m, m)), g(Eigen::VectorXd::Zero(m)) {}

    int m() const { return static_cast<int>(g.size()); }
    void add_gradients(std::span<const double> grads /* m x d row-major */, int d, std::span<const double> laps);
    void merge(const SMSystem& other);
};

void accumulate(SMSystem& sys, const ConditionalEnergyParams& shape, const ConditioningView& view, const Band& xbar,
                const PacketPlan& plan);
void accumulate_coarsest(SMSystem& sys, const CoarsestEnergyParams& shape, const Field2D& x);

struct SolveReport {
    int m = 0;
    long n = 0;
    double kappa_before = 0.0; // condition number of mean H
    double kappa_after = 0.0;  // after diagonal preconditioning
    double ridge = 0.0;        // ridge actually applied (on the preconditioned system)
    double residual = 0.0;     // ||H theta - g|| on the mean system
    std::vector<int> dropped;  // features excluded for vanishing diagonal
    bool warned_m_ge_n = false;
};

struct SolveOutput {
    std::vector<double> theta;
    SolveReport report;
};

// theta = D^-1 (D^-1 H D^-1 + ridge I)^-1 D^-1 g with D = sqrt(diag H).
// ridge = 0 requests the ridgeless solve; if the preconditioned system has
// kappa > 1e8 a ridge of 1e-8 * trace/m is applied automatically and
// recorded.
SolveOutput solve(const SMSystem& sys, double ridge);

// Empirical loss 1/2 theta^T H theta - theta^T g (data constant dropped).
double sm_loss(const SMSystem& sys, std::span<const double> theta);

struct LearnConfig {
    int n_bumps = 16;
    double bump_scale = 1.0;
    int shift_range = 4;
    int coarse_shift_range = 4;
    double ridge = 0.0;
    int threads = 0;
    int block_samples = 8; // samples per accumulation block; 1 = streaming
    bool verbose = false;
};

struct LearnReport {
    std::vector<SolveReport> scales; // index j-1
    SolveReport coarse;
};

struct PreprocessInfo {
    std::string type = "none"; // "none" | "sqrt-shift"
    double offset = 0.0;
};

struct LearnedModel {
    PacketPlan plan;
    std::vector<ConditionalEnergyParams> cond; // index j-1
    CoarsestEnergyParams coarse;
    double coarse_mean = 0.0;
    double coarse_std = 1.0;
    LearnReport report;
    PreprocessInfo preprocess;
};

// Algorithm-1 driver: decompose every sample once, build per-scale bump
// bases from empirical marginals, accumulate and solve per scale, and fit
// the coarsest scale with the same machinery.
LearnedModel learn_all(const FieldStack& data, const PacketPlan& plan, const LearnConfig& cfg);

} // namespace cslc
