#pragma once

#include <array>
#include <string>
#include <vector>

#include "cslc/field.hpp"

namespace cslc {

// Discrete 1D filter with explicit origin: tap n lives at taps[n + origin].
struct Filter1D {
    std::vector<double> taps;
    int origin = 0;

    int lo() const { return -origin; }
    int hi() const { return static_cast<int>(taps.size()) - origin; } // one past last tap index
    double tap(int n) const { return taps[static_cast<size_t>(n + origin)]; }
};

struct ConjugatePair {
    Filter1D low;  // g
    Filter1D high; // g-bar
};

Filter1D mirror_highpass(const Filter1D& low);
ConjugatePair make_daubechies4();
ConjugatePair make_haar();
ConjugatePair make_filter_pair(const std::string& name); // "db4" | "haar"

// |h^(omega)|^2 for a filter at angular frequency omega.
double filter_power(const Filter1D& f, double omega);

// One separable 2D CMF analysis step with periodic boundaries.
// Channel order: low=(g,g), high[0]=(g rows, gbar cols), high[1]=(gbar, g),
// high[2]=(gbar, gbar).
struct QuadSplit {
    Field2D low;
    std::array<Field2D, 3> high;
};
QuadSplit analyze_step_2d(const Field2D& x, const ConjugatePair& pair);
Field2D synthesize_step_2d(const Field2D& low, const std::array<Field2D, 3>& high, const ConjugatePair& pair);

// A packet-tree leaf below one octave's detail channels.
struct LeafSpec {
    int octave = 0;            // 1..J_oct
    int channel = 0;           // 1..3: which octave detail channel
    std::vector<int> quads;    // M-1 quad-child indices in 0..3 below the channel
    int side = 0;              // leaf grid side
    double centroid = 0.0;     // measured radial spectral centroid of the equivalent filter
};

// One frequency band x-bar_j: an ordered set of leaves on a common grid.
struct BandSpec {
    int octave = 0;
    std::vector<LeafSpec> leaves; // sub-band index k follows this order (centroid high -> low)
    int leaf_side = 0;
    int grid_side = 0;           // grid of x_{j-1}, the field this band is split from
    int rep_side = 0;            // representation grid of x_j after removing this band
    double centroid = 0.0;
    double centroid_lo = 0.0, centroid_hi = 0.0;
    int dim() const { return static_cast<int>(leaves.size()) * leaf_side * leaf_side; }
};

// Frequency-split schedule: J_oct octave levels refined to 2^{-M+1}-octave
// bands, leaves sorted by measured spectral centroid.
class PacketPlan {
public:
    PacketPlan(int side, int j_oct, int m_ref, const std::string& filter = "db4");

    int side() const { return side_; }
    int octaves() const { return j_oct_; }
    int refinement() const { return m_ref_; }
    int n_bands() const { return static_cast<int>(bands_.size()); }
    int coarse_side() const { return coarse_side_; }
    int coarse_dim() const { return coarse_side_ * coarse_side_; }
    const std::string& filter_name() const { return filter_name_; }
    const ConjugatePair& filters() const { return pair_; }

    const BandSpec& band(int j) const { return bands_.at(static_cast<size_t>(j - 1)); } // 1-based
    bool same_grid(int j, int j_next) const;
    int total_dim() const { return side_ * side_; }

    // diag(Gbar_j^T Gbar_j) on the grid of x_{j-1}; rows sum to dim(band j)
    const std::vector<double>& bar_row_weights(int j) const { return row_weights_.at(static_cast<size_t>(j - 1)); }

    // Per-mode energy capture f_j(omega) of band j on the input lattice
    // (side x side, row-major over integer frequencies). Sums to 1 with the
    // coarse response at every mode.
    std::vector<double> band_response(int j) const;
    std::vector<double> coarse_response() const;

private:
    int side_, j_oct_, m_ref_, coarse_side_;
    std::string filter_name_;
    ConjugatePair pair_;
    std::vector<BandSpec> bands_;
    std::vector<std::vector<double>> row_weights_;

    std::vector<double> leaf_response(const LeafSpec& leaf) const;
};

// Coefficients of one band: one Field2D per sub-band (leaf), in plan order.
struct Band {
    std::vector<Field2D> sub;

    int leaf_side() const { return sub.empty() ? 0 : sub.front().side(); }
    int dim() const { return static_cast<int>(sub.size()) * leaf_side() * leaf_side(); }
    double squared_norm() const {
        double s = 0;
        for (const auto& f : sub) s += f.squared_norm();
        return s;
    }
};

struct Decomposition {
    Field2D coarse;
    std::vector<Band> bands; // bands[j-1] = x-bar_j
};

Decomposition decompose(const Field2D& x, const PacketPlan& plan);
Field2D reconstruct(const Decomposition& dec, const PacketPlan& plan);

// Reconstruct coarse plus all bands with index >= first_band, stopping at
// grid target_side.
Field2D reconstruct_from(const Decomposition& dec, const PacketPlan& plan, int first_band, int target_side);

// G_j^T x_j on the grid of x_{j-1} (bands > j plus coarse).
Field2D partial_reconstruct_low(const Decomposition& dec, const PacketPlan& plan, int j);

// Gbar_j^T: band coefficients -> field on the grid of x_{j-1}.
Field2D apply_bar_adjoint(const Band& xbar, const PacketPlan& plan, int j);

// Gbar_j: field on the grid of x_{j-1} -> band-j coefficients.
Band apply_bar(const Field2D& field, const PacketPlan& plan, int j);

// x_j on its representation grid rep_side(j) (= coarse field for j = J... via
// reconstruct_from). j = 0 returns the full reconstruction.
Field2D low_representation(const Decomposition& dec, const PacketPlan& plan, int j);

// G_j^T as a map from the representation grid of x_j to the grid of x_{j-1}.
Field2D embed_low(const Field2D& x_rep, const PacketPlan& plan, int j);

// Adjoint of embed_low: grid of x_{j-1} -> representation grid of x_j.
Field2D embed_low_adjoint(const Field2D& field, const PacketPlan& plan, int j);

// Forward split at band j applied to a field in span(bands >= j):
// returns (x_j representation, x-bar_j).
std::pair<Field2D, Band> split_band(const Field2D& field, const PacketPlan& plan, int j);

} // namespace cslc
