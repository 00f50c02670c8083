#pragma once

#include <span>
#include <utility>
#include <vector>

#include "cslc/wavelet.hpp"

namespace cslc {

// Compactly supported bump family on empirical quantile cells.
// rho_k(t) = widths[k] * sqrt(N) * amp * cos^2(pi u), u = (t - centers[k]) / widths[k],
// zero for |u| >= 1/2. amp is fixed by the ||rho'||_2^2 normalization.
struct BumpBasis {
    std::vector<double> centers;
    std::vector<double> widths;
    double amp = 0.0;

    int count() const { return static_cast<int>(centers.size()); }
    double support_lo() const { return centers.empty() ? 0.0 : centers.front() - widths.front() / 2; }
    double support_hi() const { return centers.empty() ? 0.0 : centers.back() + widths.back() / 2; }

    double value(int k, double t) const;
    double deriv(int k, double t) const;
    double second(int k, double t) const;

    // weighted sums v(t) = sum_k alpha[k] rho_k(t) and derivatives
    double v(std::span<const double> alpha, double t) const;
    double v_prime(std::span<const double> alpha, double t) const;
    double v_second(std::span<const double> alpha, double t) const;
};

// Builds the basis from empirical marginal samples: N quantile cells give
// centers and widths; detail_norm_scale is the target ||rho'||_2^2 of the
// base profile (the paper's balance condition, taken with ||Gbar||_2 = 1).
BumpBasis build_bump_basis(std::vector<double> samples, int n_bumps, double detail_norm_scale = 1.0);

// One quadratic interaction: couples x-bar_j^k[i] with x-bar_{j+l}^{k+dk}[i+di].
struct CouplingEntry {
    int k = 0;
    int l = 0;
    int dk = 0;
    int di0 = 0, di1 = 0;
    bool diagonal() const { return l == 0 && dk == 0 && di0 == 0 && di1 == 0; }
};

// Deduplicated local interaction offsets for one band. Spatial offsets are
// canonicalized modulo the leaf grid (and up to sign for self couplings) so
// no two entries produce collinear features on small grids.
struct CouplingIndexSet {
    std::vector<CouplingEntry> entries;
    int n_scalar = 0;

    int m() const { return static_cast<int>(entries.size()) + n_scalar; }

    static CouplingIndexSet build(const PacketPlan& plan, int j, int shift_range, int n_scalar);
};

struct ConditionalEnergyParams {
    int j = 0;
    CouplingIndexSet idx;
    BumpBasis bumps;
    std::vector<double> theta;                 // couplings then scalar coefficients
    std::vector<double> marginal_percentiles;  // percentiles 0..100 of the x_{j-1} pixel pool

    std::span<const double> coupling_theta() const { return {theta.data(), entries_count()}; }
    std::span<const double> scalar_theta() const { return {theta.data() + entries_count(), static_cast<size_t>(idx.n_scalar)}; }
    size_t entries_count() const { return idx.entries.size(); }
};

// Conditioning data for one scale: the embedded low field G_j^T x_j on the
// grid of x_{j-1}, plus x-bar_{j+1} when the grids match.
struct ConditioningView {
    const Field2D* low_embed = nullptr;
    const Band* next_band = nullptr;
};

Band make_zero_band(const PacketPlan& plan, int j);

// x_{j-1} = G_j^T x_j + Gbar_j^T x-bar_j
Field2D assemble_low_field(const ConditioningView& view, const Band& xbar, const PacketPlan& plan, int j);

std::vector<double> features(const ConditionalEnergyParams& shape, const ConditioningView& view, const Band& xbar,
                             const PacketPlan& plan);
double energy(const ConditionalEnergyParams& params, const ConditioningView& view, const Band& xbar,
              const PacketPlan& plan);
Band grad_bar(const ConditionalEnergyParams& params, const ConditioningView& view, const Band& xbar,
              const PacketPlan& plan);
double laplacian_bar(const ConditionalEnergyParams& params, const ConditioningView& view, const Band& xbar,
                     const PacketPlan& plan);
Band hessian_vec(const ConditionalEnergyParams& params, const ConditioningView& view, const Band& xbar, const Band& v,
                 const PacketPlan& plan);

// Per-feature gradients (m x dim row-major) and Laplacians, for score matching.
void feature_gradients(const ConditionalEnergyParams& shape, const ConditioningView& view, const Band& xbar,
                       const PacketPlan& plan, std::vector<double>& out);
std::vector<double> feature_laplacians(const ConditionalEnergyParams& shape, const ConditioningView& view,
                                       const Band& xbar, const PacketPlan& plan);

// Coarsest-scale energy E_J(x_J) = 1/2 x^T K x + sum_i v(x[i]) with
// stationary axis-aligned offsets.
struct CoarseOffsets {
    std::vector<std::pair<int, int>> offsets; // index 0 is the (0,0) half-square diagonal
    int n_scalar = 0;

    int m() const { return static_cast<int>(offsets.size()) + n_scalar; }

    static CoarseOffsets build(int side, int shift_range, int n_scalar);
};

struct CoarsestEnergyParams {
    CoarseOffsets idx;
    BumpBasis bumps;
    std::vector<double> theta;
    std::vector<double> marginal_percentiles;

    std::span<const double> coupling_theta() const { return {theta.data(), idx.offsets.size()}; }
    std::span<const double> scalar_theta() const { return {theta.data() + idx.offsets.size(), static_cast<size_t>(idx.n_scalar)}; }
};

std::vector<double> coarsest_features(const CoarsestEnergyParams& shape, const Field2D& x);
double coarsest_energy(const CoarsestEnergyParams& params, const Field2D& x);
Field2D coarsest_grad(const CoarsestEnergyParams& params, const Field2D& x);
double coarsest_laplacian(const CoarsestEnergyParams& params, const Field2D& x);
void coarsest_feature_gradients(const CoarsestEnergyParams& shape, const Field2D& x, std::vector<double>& out);
std::vector<double> coarsest_feature_laplacians(const CoarsestEnergyParams& shape, const Field2D& x);

// Flatten/unflatten band coefficients (sub-band major, row-major pixels).
void band_to_vector(const Band& b, std::vector<double>& out);
void vector_to_band(std::span<const double> v, Band& b);

} // namespace cslc
