#include "cslc/wavelet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cslc {

namespace {

constexpr double kPi = 3.14159265358979323846;

// rectangular buffer helpers for the separable passes
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> v;
    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

// out(r, p) = sum_t h(t) x(r, (t + 2p) mod cols): filter + downsample along columns
Mat filter_cols_down(const Mat& x, const Filter1D& h) {
    Mat out(x.rows, x.cols / 2);
    const int n = x.cols;
    for (int r = 0; r < x.rows; ++r) {
        for (int p = 0; p < out.cols; ++p) {
            double acc = 0;
            for (int t = h.lo(); t < h.hi(); ++t) acc += h.tap(t) * x.at(r, wrap_index(t + 2 * p, n));
            out.at(r, p) = acc;
        }
    }
    return out;
}

Mat filter_rows_down(const Mat& x, const Filter1D& h) {
    Mat out(x.rows / 2, x.cols);
    const int n = x.rows;
    for (int p = 0; p < out.rows; ++p) {
        for (int c = 0; c < x.cols; ++c) {
            double acc = 0;
            for (int t = h.lo(); t < h.hi(); ++t) acc += h.tap(t) * x.at(wrap_index(t + 2 * p, n), c);
            out.at(p, c) = acc;
        }
    }
    return out;
}

// adjoints: upsample + filter
void add_upsampled_cols(Mat& out, const Mat& x, const Filter1D& h) {
    const int n = out.cols;
    for (int r = 0; r < x.rows; ++r) {
        for (int p = 0; p < x.cols; ++p) {
            const double v = x.at(r, p);
            if (v == 0.0) continue;
            for (int t = h.lo(); t < h.hi(); ++t) out.at(r, wrap_index(t + 2 * p, n)) += h.tap(t) * v;
        }
    }
}

void add_upsampled_rows(Mat& out, const Mat& x, const Filter1D& h) {
    const int n = out.rows;
    for (int p = 0; p < x.rows; ++p) {
        for (int c = 0; c < x.cols; ++c) {
            const double v = x.at(p, c);
            if (v == 0.0) continue;
            for (int t = h.lo(); t < h.hi(); ++t) out.at(wrap_index(t + 2 * p, n), c) += h.tap(t) * v;
        }
    }
}

Mat to_mat(const Field2D& f) {
    Mat m(f.side(), f.side());
    std::copy(f.data(), f.data() + f.size(), m.v.begin());
    return m;
}

Field2D to_field(const Mat& m) {
    Field2D f(m.rows);
    std::copy(m.v.begin(), m.v.end(), f.data());
    return f;
}

// full quad split of a field, `levels` times; leaves in path order
// (digit 0=low, 1..3 = high channels, first level = most significant)
std::vector<Field2D> split_full(const Field2D& x, int levels, const ConjugatePair& pair) {
    std::vector<Field2D> nodes{x};
    for (int l = 0; l < levels; ++l) {
        std::vector<Field2D> next;
        next.reserve(nodes.size() * 4);
        for (const auto& nd : nodes) {
            QuadSplit qs = analyze_step_2d(nd, pair);
            next.push_back(std::move(qs.low));
            for (auto& h : qs.high) next.push_back(std::move(h));
        }
        nodes = std::move(next);
    }
    return nodes;
}

Field2D merge_full(std::vector<Field2D> leaves, int levels, const ConjugatePair& pair) {
    for (int l = 0; l < levels; ++l) {
        std::vector<Field2D> up;
        up.reserve(leaves.size() / 4);
        for (size_t i = 0; i < leaves.size(); i += 4) {
            std::array<Field2D, 3> high{leaves[i + 1], leaves[i + 2], leaves[i + 3]};
            up.push_back(synthesize_step_2d(leaves[i], high, pair));
        }
        leaves = std::move(up);
    }
    return leaves.front();
}

int path_index(const std::vector<int>& quads) {
    int idx = 0;
    for (int d : quads) idx = idx * 4 + d;
    return idx;
}

} // namespace

Filter1D mirror_highpass(const Filter1D& low) {
    if (low.taps.empty()) throw std::invalid_argument("mirror_highpass: empty filter");
    // gbar(n) = (-1)^{1-n} g(1-n), supported on n in [2-hi, 1-lo]
    const int n_min = 2 - low.hi();
    const int n_max = 1 - low.lo();
    Filter1D out;
    out.taps.resize(static_cast<size_t>(n_max - n_min + 1));
    out.origin = -n_min;
    for (int n = n_min; n <= n_max; ++n) {
        double sign = ((1 - n) % 2 == 0) ? 1.0 : -1.0;
        out.taps[static_cast<size_t>(n - n_min)] = sign * low.tap(1 - n);
    }
    return out;
}

ConjugatePair make_daubechies4() {
    const double s3 = std::sqrt(3.0);
    const double s2 = std::sqrt(2.0);
    Filter1D low;
    low.taps = {(1.0 + s3) / (4.0 * s2), (3.0 + s3) / (4.0 * s2), (3.0 - s3) / (4.0 * s2), (1.0 - s3) / (4.0 * s2)};
    low.origin = 0;
    return {low, mirror_highpass(low)};
}

ConjugatePair make_haar() {
    const double s2 = std::sqrt(2.0);
    Filter1D low;
    low.taps = {s2 / 2.0, s2 / 2.0};
    low.origin = 0;
    return {low, mirror_highpass(low)};
}

ConjugatePair make_filter_pair(const std::string& name) {
    if (name == "db4") return make_daubechies4();
    if (name == "haar") return make_haar();
    throw std::invalid_argument("unknown filter: " + name);
}

double filter_power(const Filter1D& f, double omega) {
    double re = 0, im = 0;
    for (int n = f.lo(); n < f.hi(); ++n) {
        re += f.tap(n) * std::cos(omega * n);
        im -= f.tap(n) * std::sin(omega * n);
    }
    return re * re + im * im;
}

QuadSplit analyze_step_2d(const Field2D& x, const ConjugatePair& pair) {
    if (x.side() % 2 != 0) throw std::invalid_argument("analyze_step_2d: odd side length");
    Mat m = to_mat(x);
    Mat cl = filter_cols_down(m, pair.low);
    Mat ch = filter_cols_down(m, pair.high);
    QuadSplit out;
    out.low = to_field(filter_rows_down(cl, pair.low));
    out.high[0] = to_field(filter_rows_down(ch, pair.low));  // (g rows, gbar cols)
    out.high[1] = to_field(filter_rows_down(cl, pair.high)); // (gbar rows, g cols)
    out.high[2] = to_field(filter_rows_down(ch, pair.high));
    return out;
}

Field2D synthesize_step_2d(const Field2D& low, const std::array<Field2D, 3>& high, const ConjugatePair& pair) {
    const int half = low.side();
    for (const auto& h : high)
        if (h.side() != half) throw std::invalid_argument("synthesize_step_2d: shape mismatch");
    const int n = 2 * half;
    Mat tmp_l(n, half), tmp_h(n, half);
    add_upsampled_rows(tmp_l, to_mat(low), pair.low);
    add_upsampled_rows(tmp_l, to_mat(high[1]), pair.high);
    add_upsampled_rows(tmp_h, to_mat(high[0]), pair.low);
    add_upsampled_rows(tmp_h, to_mat(high[2]), pair.high);
    Mat out(n, n);
    add_upsampled_cols(out, tmp_l, pair.low);
    add_upsampled_cols(out, tmp_h, pair.high);
    return to_field(out);
}

PacketPlan::PacketPlan(int side, int j_oct, int m_ref, const std::string& filter)
    : side_(side), j_oct_(j_oct), m_ref_(m_ref), filter_name_(filter), pair_(make_filter_pair(filter)) {
    if (j_oct < 1) throw std::invalid_argument("PacketPlan: J_oct must be >= 1");
    if (m_ref < 1) throw std::invalid_argument("PacketPlan: M must be >= 1");
    if (!is_power_of_two(side)) throw DataError("PacketPlan: side must be a power of two");
    if (side < (1 << (j_oct + m_ref - 1)))
        throw DataError("PacketPlan: side must be >= 2^(J_oct + M - 1)");
    coarse_side_ = side >> j_oct;

    const int bands_per_octave = 1 << (m_ref - 1);
    const int leaves_per_band = 3 * bands_per_octave;

    for (int o = 1; o <= j_oct_; ++o) {
        std::vector<LeafSpec> leaves;
        const int leaf_side = side_ >> (o + m_ref_ - 1);
        const int n_paths = 1 << (2 * (m_ref_ - 1));
        for (int c = 1; c <= 3; ++c) {
            for (int pi = 0; pi < n_paths; ++pi) {
                LeafSpec lf;
                lf.octave = o;
                lf.channel = c;
                lf.quads.resize(static_cast<size_t>(m_ref_ - 1));
                int rem = pi;
                for (int t = m_ref_ - 2; t >= 0; --t) {
                    lf.quads[static_cast<size_t>(t)] = rem & 3;
                    rem >>= 2;
                }
                lf.side = leaf_side;
                leaves.push_back(std::move(lf));
            }
        }
        // measured radial centroid of each leaf's equivalent filter
        for (auto& lf : leaves) {
            std::vector<double> resp = leaf_response(lf);
            double num = 0, den = 0;
            for (int f1 = 0; f1 < side_; ++f1) {
                double w1 = 2.0 * kPi * (f1 <= side_ / 2 ? f1 : f1 - side_) / side_;
                for (int f2 = 0; f2 < side_; ++f2) {
                    double w2 = 2.0 * kPi * (f2 <= side_ / 2 ? f2 : f2 - side_) / side_;
                    double r = resp[static_cast<size_t>(f1) * side_ + f2];
                    num += r * std::hypot(w1, w2);
                    den += r;
                }
            }
            lf.centroid = den > 0 ? num / den : 0.0;
        }
        std::stable_sort(leaves.begin(), leaves.end(), [](const LeafSpec& a, const LeafSpec& b) {
            if (a.centroid != b.centroid) return a.centroid > b.centroid;
            if (a.channel != b.channel) return a.channel < b.channel;
            return a.quads < b.quads;
        });
        for (int g = 0; g < bands_per_octave; ++g) {
            BandSpec band;
            band.octave = o;
            band.leaf_side = leaf_side;
            band.grid_side = side_ >> (o - 1);
            band.rep_side = (g == bands_per_octave - 1) ? band.grid_side / 2 : band.grid_side;
            band.leaves.assign(leaves.begin() + static_cast<long>(g) * leaves_per_band,
                               leaves.begin() + static_cast<long>(g + 1) * leaves_per_band);
            double num = 0, den = 0;
            band.centroid_hi = band.leaves.front().centroid;
            band.centroid_lo = band.leaves.back().centroid;
            for (const auto& lf : band.leaves) {
                num += lf.centroid;
                den += 1;
            }
            band.centroid = num / den;
            bands_.push_back(std::move(band));
        }
    }

    // dimension bookkeeping must close up exactly
    long total = coarse_dim();
    for (const auto& b : bands_) total += b.dim();
    if (total != static_cast<long>(side_) * side_) throw std::logic_error("PacketPlan: dimension mismatch");

    // diag(Gbar^T Gbar), periodic with the leaf subsampling cell
    row_weights_.resize(bands_.size());
    for (int j = 1; j <= n_bands(); ++j) {
        const BandSpec& b = band(j);
        const int cell = 1 << m_ref_;
        const int g = b.grid_side;
        std::vector<double> w(static_cast<size_t>(g) * g, 0.0);
        for (int r0 = 0; r0 < cell; ++r0) {
            for (int c0 = 0; c0 < cell; ++c0) {
                Field2D delta(g);
                delta(r0, c0) = 1.0;
                Band coeffs = apply_bar(delta, *this, j);
                double ww = coeffs.squared_norm();
                for (int r = r0; r < g; r += cell)
                    for (int c = c0; c < g; c += cell) w[static_cast<size_t>(r) * g + c] = ww;
            }
        }
        row_weights_[static_cast<size_t>(j - 1)] = std::move(w);
    }
}

bool PacketPlan::same_grid(int j, int j_next) const {
    if (j_next < 1 || j_next > n_bands()) return false;
    return band(j).octave == band(j_next).octave;
}

std::vector<double> PacketPlan::leaf_response(const LeafSpec& leaf) const {
    // 1D filter words along rows/cols; level l acts at dilation 2^l
    const int depth = leaf.octave + m_ref_ - 1;
    std::vector<const Filter1D*> row_word, col_word;
    for (int l = 0; l < leaf.octave - 1; ++l) {
        row_word.push_back(&pair_.low);
        col_word.push_back(&pair_.low);
    }
    row_word.push_back((leaf.channel & 2) ? &pair_.high : &pair_.low);
    col_word.push_back((leaf.channel & 1) ? &pair_.high : &pair_.low);
    for (int d : leaf.quads) {
        row_word.push_back((d & 2) ? &pair_.high : &pair_.low);
        col_word.push_back((d & 1) ? &pair_.high : &pair_.low);
    }

    auto axis_power = [&](const std::vector<const Filter1D*>& word) {
        std::vector<double> p(static_cast<size_t>(side_), 1.0);
        for (int f = 0; f < side_; ++f) {
            double omega = 2.0 * kPi * f / side_;
            for (int l = 0; l < depth; ++l)
                p[static_cast<size_t>(f)] *= filter_power(*word[static_cast<size_t>(l)], std::ldexp(omega, l));
        }
        return p;
    };
    std::vector<double> pr = axis_power(row_word), pc = axis_power(col_word);
    const double norm = std::ldexp(1.0, -2 * depth); // 4^{-depth}
    std::vector<double> out(static_cast<size_t>(side_) * side_);
    for (int f1 = 0; f1 < side_; ++f1)
        for (int f2 = 0; f2 < side_; ++f2)
            out[static_cast<size_t>(f1) * side_ + f2] = pr[static_cast<size_t>(f1)] * pc[static_cast<size_t>(f2)] * norm;
    return out;
}

std::vector<double> PacketPlan::band_response(int j) const {
    std::vector<double> out(static_cast<size_t>(side_) * side_, 0.0);
    for (const auto& lf : band(j).leaves) {
        std::vector<double> r = leaf_response(lf);
        for (size_t i = 0; i < out.size(); ++i) out[i] += r[i];
    }
    return out;
}

std::vector<double> PacketPlan::coarse_response() const {
    std::vector<double> out(static_cast<size_t>(side_) * side_, 1.0);
    // product of |g|^2 at dilations 0..J_oct-1 along both axes, normalized by 4^{J_oct}
    for (int f1 = 0; f1 < side_; ++f1) {
        double p1 = 1.0;
        for (int l = 0; l < j_oct_; ++l) p1 *= filter_power(pair_.low, std::ldexp(2.0 * kPi * f1 / side_, l));
        for (int f2 = 0; f2 < side_; ++f2) {
            double p2 = 1.0;
            for (int l = 0; l < j_oct_; ++l) p2 *= filter_power(pair_.low, std::ldexp(2.0 * kPi * f2 / side_, l));
            out[static_cast<size_t>(f1) * side_ + f2] = p1 * p2 * std::ldexp(1.0, -2 * j_oct_);
        }
    }
    return out;
}

Decomposition decompose(const Field2D& x, const PacketPlan& plan) {
    if (x.side() != plan.side()) throw DataError("decompose: field size does not match plan");
    Decomposition dec;
    dec.bands.resize(static_cast<size_t>(plan.n_bands()));
    Field2D cur = x;
    int j = 1;
    const int bands_per_octave = 1 << (plan.refinement() - 1);
    for (int o = 1; o <= plan.octaves(); ++o) {
        QuadSplit qs = analyze_step_2d(cur, plan.filters());
        std::array<std::vector<Field2D>, 3> leaves;
        for (int c = 0; c < 3; ++c) leaves[static_cast<size_t>(c)] = split_full(qs.high[static_cast<size_t>(c)], plan.refinement() - 1, plan.filters());
        for (int g = 0; g < bands_per_octave; ++g, ++j) {
            const BandSpec& spec = plan.band(j);
            Band band;
            band.sub.reserve(spec.leaves.size());
            for (const auto& lf : spec.leaves)
                band.sub.push_back(leaves[static_cast<size_t>(lf.channel - 1)][static_cast<size_t>(path_index(lf.quads))]);
            dec.bands[static_cast<size_t>(j - 1)] = std::move(band);
        }
        cur = std::move(qs.low);
    }
    dec.coarse = std::move(cur);
    return dec;
}

Field2D reconstruct_from(const Decomposition& dec, const PacketPlan& plan, int first_band, int target_side) {
    Field2D cur = dec.coarse;
    const int bands_per_octave = 1 << (plan.refinement() - 1);
    for (int o = plan.octaves(); o >= 1; --o) {
        const int out_side = plan.side() >> (o - 1);
        if (out_side > target_side) break;
        const int leaf_side = plan.side() >> (o + plan.refinement() - 1);
        const int n_paths = 1 << (2 * (plan.refinement() - 1));
        std::array<std::vector<Field2D>, 3> leaves;
        for (auto& v : leaves) v.assign(static_cast<size_t>(n_paths), Field2D(leaf_side));
        for (int g = 0; g < bands_per_octave; ++g) {
            const int j = (o - 1) * bands_per_octave + g + 1;
            if (j < first_band) continue;
            const BandSpec& spec = plan.band(j);
            const Band& band = dec.bands[static_cast<size_t>(j - 1)];
            for (size_t k = 0; k < spec.leaves.size(); ++k) {
                const LeafSpec& lf = spec.leaves[k];
                leaves[static_cast<size_t>(lf.channel - 1)][static_cast<size_t>(path_index(lf.quads))] = band.sub[k];
            }
        }
        std::array<Field2D, 3> channels;
        for (int c = 0; c < 3; ++c)
            channels[static_cast<size_t>(c)] = merge_full(std::move(leaves[static_cast<size_t>(c)]), plan.refinement() - 1, plan.filters());
        cur = synthesize_step_2d(cur, channels, plan.filters());
    }
    if (cur.side() != target_side) throw std::invalid_argument("reconstruct_from: invalid target grid");
    return cur;
}

Field2D reconstruct(const Decomposition& dec, const PacketPlan& plan) {
    return reconstruct_from(dec, plan, 1, plan.side());
}

Field2D partial_reconstruct_low(const Decomposition& dec, const PacketPlan& plan, int j) {
    if (j < 1 || j > plan.n_bands()) throw std::invalid_argument("partial_reconstruct_low: invalid band index");
    return reconstruct_from(dec, plan, j + 1, plan.band(j).grid_side);
}

Field2D low_representation(const Decomposition& dec, const PacketPlan& plan, int j) {
    if (j == 0) return reconstruct(dec, plan);
    if (j < 0 || j > plan.n_bands()) throw std::invalid_argument("low_representation: invalid band index");
    return reconstruct_from(dec, plan, j + 1, plan.band(j).rep_side);
}

Field2D apply_bar_adjoint(const Band& xbar, const PacketPlan& plan, int j) {
    if (j < 1 || j > plan.n_bands()) throw std::invalid_argument("apply_bar_adjoint: invalid band index");
    const BandSpec& spec = plan.band(j);
    if (xbar.sub.size() != spec.leaves.size() || xbar.leaf_side() != spec.leaf_side)
        throw std::invalid_argument("apply_bar_adjoint: band shape mismatch");
    const int n_paths = 1 << (2 * (plan.refinement() - 1));
    std::array<std::vector<Field2D>, 3> leaves;
    for (auto& v : leaves) v.assign(static_cast<size_t>(n_paths), Field2D(spec.leaf_side));
    for (size_t k = 0; k < spec.leaves.size(); ++k) {
        const LeafSpec& lf = spec.leaves[k];
        leaves[static_cast<size_t>(lf.channel - 1)][static_cast<size_t>(path_index(lf.quads))] = xbar.sub[k];
    }
    std::array<Field2D, 3> channels;
    for (int c = 0; c < 3; ++c)
        channels[static_cast<size_t>(c)] = merge_full(std::move(leaves[static_cast<size_t>(c)]), plan.refinement() - 1, plan.filters());
    Field2D zero_low(spec.grid_side / 2);
    return synthesize_step_2d(zero_low, channels, plan.filters());
}

Band apply_bar(const Field2D& field, const PacketPlan& plan, int j) {
    if (j < 1 || j > plan.n_bands()) throw std::invalid_argument("apply_bar: invalid band index");
    const BandSpec& spec = plan.band(j);
    if (field.side() != spec.grid_side) throw std::invalid_argument("apply_bar: field grid mismatch");
    QuadSplit qs = analyze_step_2d(field, plan.filters());
    std::array<std::vector<Field2D>, 3> leaves;
    for (int c = 0; c < 3; ++c)
        leaves[static_cast<size_t>(c)] = split_full(qs.high[static_cast<size_t>(c)], plan.refinement() - 1, plan.filters());
    Band out;
    out.sub.reserve(spec.leaves.size());
    for (const auto& lf : spec.leaves)
        out.sub.push_back(std::move(leaves[static_cast<size_t>(lf.channel - 1)][static_cast<size_t>(path_index(lf.quads))]));
    return out;
}

Field2D embed_low(const Field2D& x_rep, const PacketPlan& plan, int j) {
    const BandSpec& spec = plan.band(j);
    if (x_rep.side() != spec.rep_side) throw std::invalid_argument("embed_low: representation grid mismatch");
    if (spec.rep_side == spec.grid_side) return x_rep;
    std::array<Field2D, 3> zeros{Field2D(spec.rep_side), Field2D(spec.rep_side), Field2D(spec.rep_side)};
    return synthesize_step_2d(x_rep, zeros, plan.filters());
}

Field2D embed_low_adjoint(const Field2D& field, const PacketPlan& plan, int j) {
    const BandSpec& spec = plan.band(j);
    if (field.side() != spec.grid_side) throw std::invalid_argument("embed_low_adjoint: field grid mismatch");
    if (spec.rep_side == spec.grid_side) return field;
    return analyze_step_2d(field, plan.filters()).low;
}

std::pair<Field2D, Band> split_band(const Field2D& field, const PacketPlan& plan, int j) {
    const BandSpec& spec = plan.band(j);
    Band xbar = apply_bar(field, plan, j);
    if (spec.rep_side == spec.grid_side) {
        Field2D rep = field;
        Field2D back = apply_bar_adjoint(xbar, plan, j);
        for (size_t i = 0; i < rep.size(); ++i) rep[i] -= back[i];
        return {std::move(rep), std::move(xbar)};
    }
    return {analyze_step_2d(field, plan.filters()).low, std::move(xbar)};
}

} // namespace cslc
