#include "cslc/energy.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace cslc {

namespace {

constexpr double kPi = 3.14159265358979323846;

double quantile_sorted(const std::vector<double>& s, double p) {
    if (s.empty()) return 0.0;
    double pos = p * static_cast<double>(s.size() - 1);
    size_t i = static_cast<size_t>(pos);
    if (i + 1 >= s.size()) return s.back();
    double frac = pos - static_cast<double>(i);
    return s[i] * (1.0 - frac) + s[i + 1] * frac;
}

// canonical representative of a self-coupling offset on an n-periodic grid:
// offsets delta and -delta generate identical features
std::pair<int, int> canon_self(int a, int b, int n) {
    a = wrap_index(a, n);
    b = wrap_index(b, n);
    std::pair<int, int> d{a, b};
    std::pair<int, int> neg{wrap_index(-a, n), wrap_index(-b, n)};
    return std::min(d, neg);
}

std::pair<int, int> canon_cross(int a, int b, int n) { return {wrap_index(a, n), wrap_index(b, n)}; }

} // namespace

namespace {
// support test on t itself so rho(a_k +- l_k/2) is an exact zero
inline bool outside_cell(double t, double center, double width) {
    return t <= center - 0.5 * width || t >= center + 0.5 * width;
}
} // namespace

double BumpBasis::value(int k, double t) const {
    const double c0 = centers[static_cast<size_t>(k)], w0 = widths[static_cast<size_t>(k)];
    if (outside_cell(t, c0, w0)) return 0.0;
    double u = (t - c0) / w0;
    double c = std::cos(kPi * u);
    double n = std::sqrt(static_cast<double>(count()));
    return w0 * n * amp * c * c;
}

double BumpBasis::deriv(int k, double t) const {
    const double c0 = centers[static_cast<size_t>(k)], w0 = widths[static_cast<size_t>(k)];
    if (outside_cell(t, c0, w0)) return 0.0;
    double u = (t - c0) / w0;
    double n = std::sqrt(static_cast<double>(count()));
    return -n * amp * kPi * std::sin(2.0 * kPi * u);
}

double BumpBasis::second(int k, double t) const {
    const double c0 = centers[static_cast<size_t>(k)], w0 = widths[static_cast<size_t>(k)];
    if (outside_cell(t, c0, w0)) return 0.0;
    double u = (t - c0) / w0;
    double n = std::sqrt(static_cast<double>(count()));
    return -2.0 * n * amp * kPi * kPi * std::cos(2.0 * kPi * u) / w0;
}

double BumpBasis::v(std::span<const double> alpha, double t) const {
    double s = 0;
    for (int k = 0; k < count(); ++k)
        if (alpha[static_cast<size_t>(k)] != 0.0) s += alpha[static_cast<size_t>(k)] * value(k, t);
    return s;
}

double BumpBasis::v_prime(std::span<const double> alpha, double t) const {
    double s = 0;
    for (int k = 0; k < count(); ++k)
        if (alpha[static_cast<size_t>(k)] != 0.0) s += alpha[static_cast<size_t>(k)] * deriv(k, t);
    return s;
}

double BumpBasis::v_second(std::span<const double> alpha, double t) const {
    double s = 0;
    for (int k = 0; k < count(); ++k)
        if (alpha[static_cast<size_t>(k)] != 0.0) s += alpha[static_cast<size_t>(k)] * second(k, t);
    return s;
}

BumpBasis build_bump_basis(std::vector<double> samples, int n_bumps, double detail_norm_scale) {
    if (n_bumps < 2) throw std::invalid_argument("build_bump_basis: need at least 2 bumps");
    if (static_cast<long>(samples.size()) < 10L * n_bumps)
        throw DataError("build_bump_basis: need at least 10*N samples");
    if (detail_norm_scale <= 0) throw std::invalid_argument("build_bump_basis: scale must be positive");
    std::sort(samples.begin(), samples.end());
    double range = samples.back() - samples.front();
    if (!(range > 0)) throw DataError("build_bump_basis: degenerate (constant) samples");

    BumpBasis basis;
    basis.centers.resize(static_cast<size_t>(n_bumps));
    basis.widths.resize(static_cast<size_t>(n_bumps));
    for (int k = 0; k < n_bumps; ++k) {
        double lo = quantile_sorted(samples, static_cast<double>(k) / n_bumps);
        double hi = quantile_sorted(samples, static_cast<double>(k + 1) / n_bumps);
        if (!(hi - lo > 1e-12 * range)) throw DataError("build_bump_basis: degenerate quantile cell");
        basis.centers[static_cast<size_t>(k)] = 0.5 * (lo + hi);
        basis.widths[static_cast<size_t>(k)] = hi - lo;
    }
    // ||d/du (amp cos^2(pi u))||_2^2 over [-1/2,1/2] = amp^2 pi^2 / 2
    basis.amp = std::sqrt(2.0 * detail_norm_scale) / kPi;
    return basis;
}

CouplingIndexSet CouplingIndexSet::build(const PacketPlan& plan, int j, int shift_range, int n_scalar) {
    const BandSpec& spec = plan.band(j);
    const int nsub = static_cast<int>(spec.leaves.size());
    const int s = spec.leaf_side;
    const bool coupled_next = plan.same_grid(j, j + 1);
    const int nsub_next = coupled_next ? static_cast<int>(plan.band(j + 1).leaves.size()) : 0;

    CouplingIndexSet out;
    out.n_scalar = n_scalar;
    for (int k = 0; k < nsub; ++k) {
        out.entries.push_back({k, 0, 0, 0, 0}); // half-square diagonal
        std::set<std::pair<int, int>> seen_self, seen_cross, seen_next0, seen_next1;
        seen_self.insert({0, 0});
        for (int a = 0; a <= shift_range; ++a) {
            for (int b = 0; b <= shift_range; ++b) {
                auto cs = canon_self(a, b, s);
                if (seen_self.insert(cs).second) out.entries.push_back({k, 0, 0, cs.first, cs.second});
                auto cc = canon_cross(a, b, s);
                if (k + 1 < nsub && seen_cross.insert(cc).second)
                    out.entries.push_back({k, 0, 1, cc.first, cc.second});
                if (coupled_next) {
                    if (k < nsub_next && seen_next0.insert(cc).second)
                        out.entries.push_back({k, 1, 0, cc.first, cc.second});
                    if (k + 1 < nsub_next && seen_next1.insert(cc).second)
                        out.entries.push_back({k, 1, 1, cc.first, cc.second});
                }
            }
        }
    }
    return out;
}

CoarseOffsets CoarseOffsets::build(int side, int shift_range, int n_scalar) {
    CoarseOffsets out;
    out.n_scalar = n_scalar;
    out.offsets.emplace_back(0, 0);
    std::set<std::pair<int, int>> seen;
    seen.insert({0, 0});
    for (int a = 1; a <= shift_range; ++a) {
        auto c1 = canon_self(a, 0, side);
        if (c1 != std::make_pair(0, 0) && seen.insert(c1).second) out.offsets.push_back(c1);
        auto c2 = canon_self(0, a, side);
        if (c2 != std::make_pair(0, 0) && seen.insert(c2).second) out.offsets.push_back(c2);
    }
    return out;
}

Band make_zero_band(const PacketPlan& plan, int j) {
    const BandSpec& spec = plan.band(j);
    Band b;
    b.sub.assign(spec.leaves.size(), Field2D(spec.leaf_side));
    return b;
}

Field2D assemble_low_field(const ConditioningView& view, const Band& xbar, const PacketPlan& plan, int j) {
    Field2D s = apply_bar_adjoint(xbar, plan, j);
    if (view.low_embed) {
        if (view.low_embed->side() != s.side()) throw std::invalid_argument("assemble_low_field: grid mismatch");
        s += *view.low_embed;
    }
    return s;
}

namespace {

// sum_i x[i] * y[i + d], periodic
double shifted_product_sum(const Field2D& x, const Field2D& y, int d0, int d1) {
    const int n = x.side();
    double acc = 0;
    for (int r = 0; r < n; ++r) {
        const int rr = wrap_index(r + d0, n);
        for (int c = 0; c < n; ++c) acc += x(r, c) * y(rr, wrap_index(c + d1, n));
    }
    return acc;
}

// out[p] += w * y[p + d]
void add_shifted(Field2D& out, const Field2D& y, int d0, int d1, double w) {
    const int n = out.side();
    for (int r = 0; r < n; ++r) {
        const int rr = wrap_index(r + d0, n);
        for (int c = 0; c < n; ++c) out(r, c) += w * y(rr, wrap_index(c + d1, n));
    }
}

const Field2D& coupling_target(const CouplingEntry& e, const Band& xbar, const ConditioningView& view) {
    if (e.l == 0) return xbar.sub[static_cast<size_t>(e.k + e.dk)];
    return view.next_band->sub[static_cast<size_t>(e.k + e.dk)];
}

void check_shapes(const ConditionalEnergyParams& p, const ConditioningView& view, const Band& xbar,
                  const PacketPlan& plan) {
    const BandSpec& spec = plan.band(p.j);
    if (xbar.sub.size() != spec.leaves.size() || xbar.leaf_side() != spec.leaf_side)
        throw std::invalid_argument("energy_model: band shape mismatch");
    bool needs_next = false;
    for (const auto& e : p.idx.entries) needs_next |= (e.l == 1);
    if (needs_next && !view.next_band) throw std::invalid_argument("energy_model: missing next-band conditioning");
    if (p.idx.n_scalar > 0 && !view.low_embed) throw std::invalid_argument("energy_model: missing low conditioning field");
}

} // namespace

std::vector<double> features(const ConditionalEnergyParams& shape, const ConditioningView& view, const Band& xbar,
                             const PacketPlan& plan) {
    check_shapes(shape, view, xbar, plan);
    std::vector<double> out;
    out.reserve(static_cast<size_t>(shape.idx.m()));
    for (const auto& e : shape.idx.entries) {
        const Field2D& src = xbar.sub[static_cast<size_t>(e.k)];
        if (e.diagonal()) {
            out.push_back(0.5 * src.squared_norm());
        } else {
            out.push_back(shifted_product_sum(src, coupling_target(e, xbar, view), e.di0, e.di1));
        }
    }
    if (shape.idx.n_scalar > 0) {
        Field2D s = assemble_low_field(view, xbar, plan, shape.j);
        for (int k = 0; k < shape.idx.n_scalar; ++k) {
            double acc = 0;
            for (size_t i = 0; i < s.size(); ++i) acc += shape.bumps.value(k, s[i]);
            out.push_back(acc);
        }
    }
    return out;
}

double energy(const ConditionalEnergyParams& params, const ConditioningView& view, const Band& xbar,
              const PacketPlan& plan) {
    check_shapes(params, view, xbar, plan);
    double acc = 0;
    auto ctheta = params.coupling_theta();
    for (size_t q = 0; q < params.idx.entries.size(); ++q) {
        const double w = ctheta[q];
        if (w == 0.0) continue;
        const auto& e = params.idx.entries[q];
        const Field2D& src = xbar.sub[static_cast<size_t>(e.k)];
        if (e.diagonal())
            acc += w * 0.5 * src.squared_norm();
        else
            acc += w * shifted_product_sum(src, coupling_target(e, xbar, view), e.di0, e.di1);
    }
    if (params.idx.n_scalar > 0) {
        auto alpha = params.scalar_theta();
        Field2D s = assemble_low_field(view, xbar, plan, params.j);
        for (size_t i = 0; i < s.size(); ++i) acc += params.bumps.v(alpha, s[i]);
    }
    return acc;
}

Band grad_bar(const ConditionalEnergyParams& params, const ConditioningView& view, const Band& xbar,
              const PacketPlan& plan) {
    check_shapes(params, view, xbar, plan);
    Band g = make_zero_band(plan, params.j);
    auto ctheta = params.coupling_theta();
    for (size_t q = 0; q < params.idx.entries.size(); ++q) {
        const double w = ctheta[q];
        if (w == 0.0) continue;
        const auto& e = params.idx.entries[q];
        Field2D& gk = g.sub[static_cast<size_t>(e.k)];
        const Field2D& src = xbar.sub[static_cast<size_t>(e.k)];
        if (e.diagonal()) {
            for (size_t i = 0; i < gk.size(); ++i) gk[i] += w * src[i];
        } else if (e.l == 0) {
            const Field2D& tgt = xbar.sub[static_cast<size_t>(e.k + e.dk)];
            add_shifted(gk, tgt, e.di0, e.di1, w);
            Field2D& gt = g.sub[static_cast<size_t>(e.k + e.dk)];
            add_shifted(gt, src, -e.di0, -e.di1, w);
        } else {
            add_shifted(gk, coupling_target(e, xbar, view), e.di0, e.di1, w);
        }
    }
    if (params.idx.n_scalar > 0) {
        auto alpha = params.scalar_theta();
        Field2D s = assemble_low_field(view, xbar, plan, params.j);
        Field2D w(s.side());
        for (size_t i = 0; i < s.size(); ++i) w[i] = params.bumps.v_prime(alpha, s[i]);
        Band proj = apply_bar(w, plan, params.j);
        for (size_t k = 0; k < g.sub.size(); ++k) g.sub[k] += proj.sub[k];
    }
    return g;
}

double laplacian_bar(const ConditionalEnergyParams& params, const ConditioningView& view, const Band& xbar,
                     const PacketPlan& plan) {
    check_shapes(params, view, xbar, plan);
    const BandSpec& spec = plan.band(params.j);
    const double leaf_pix = static_cast<double>(spec.leaf_side) * spec.leaf_side;
    double acc = 0;
    auto ctheta = params.coupling_theta();
    for (size_t q = 0; q < params.idx.entries.size(); ++q)
        if (params.idx.entries[q].diagonal()) acc += ctheta[q] * leaf_pix;
    if (params.idx.n_scalar > 0) {
        auto alpha = params.scalar_theta();
        Field2D s = assemble_low_field(view, xbar, plan, params.j);
        const auto& r = plan.bar_row_weights(params.j);
        for (size_t i = 0; i < s.size(); ++i) acc += params.bumps.v_second(alpha, s[i]) * r[i];
    }
    return acc;
}

Band hessian_vec(const ConditionalEnergyParams& params, const ConditioningView& view, const Band& xbar, const Band& v,
                 const PacketPlan& plan) {
    check_shapes(params, view, xbar, plan);
    if (v.sub.size() != xbar.sub.size() || v.leaf_side() != xbar.leaf_side())
        throw std::invalid_argument("hessian_vec: probe shape mismatch");
    Band h = make_zero_band(plan, params.j);
    auto ctheta = params.coupling_theta();
    for (size_t q = 0; q < params.idx.entries.size(); ++q) {
        const double w = ctheta[q];
        if (w == 0.0) continue;
        const auto& e = params.idx.entries[q];
        if (e.l != 0) continue; // next-band couplings are linear in x-bar_j
        Field2D& hk = h.sub[static_cast<size_t>(e.k)];
        if (e.diagonal()) {
            const Field2D& vk = v.sub[static_cast<size_t>(e.k)];
            for (size_t i = 0; i < hk.size(); ++i) hk[i] += w * vk[i];
        } else {
            const Field2D& vt = v.sub[static_cast<size_t>(e.k + e.dk)];
            add_shifted(hk, vt, e.di0, e.di1, w);
            Field2D& ht = h.sub[static_cast<size_t>(e.k + e.dk)];
            add_shifted(ht, v.sub[static_cast<size_t>(e.k)], -e.di0, -e.di1, w);
        }
    }
    if (params.idx.n_scalar > 0) {
        auto alpha = params.scalar_theta();
        Field2D s = assemble_low_field(view, xbar, plan, params.j);
        Field2D u = apply_bar_adjoint(v, plan, params.j);
        Field2D w(s.side());
        for (size_t i = 0; i < s.size(); ++i) w[i] = params.bumps.v_second(alpha, s[i]) * u[i];
        Band proj = apply_bar(w, plan, params.j);
        for (size_t k = 0; k < h.sub.size(); ++k) h.sub[k] += proj.sub[k];
    }
    return h;
}

void feature_gradients(const ConditionalEnergyParams& shape, const ConditioningView& view, const Band& xbar,
                       const PacketPlan& plan, std::vector<double>& out) {
    check_shapes(shape, view, xbar, plan);
    const int dim = xbar.dim();
    const int ls = xbar.leaf_side();
    const size_t leaf_pix = static_cast<size_t>(ls) * ls;
    const size_t m = static_cast<size_t>(shape.idx.m());
    out.assign(m * static_cast<size_t>(dim), 0.0);

    auto slab = [&](size_t row, int k) { return out.data() + row * static_cast<size_t>(dim) + static_cast<size_t>(k) * leaf_pix; };
    auto add_shifted_raw = [&](double* dst, const Field2D& y, int d0, int d1) {
        for (int r = 0; r < ls; ++r) {
            const int rr = wrap_index(r + d0, ls);
            for (int c = 0; c < ls; ++c) dst[static_cast<size_t>(r) * ls + c] += y(rr, wrap_index(c + d1, ls));
        }
    };

    for (size_t q = 0; q < shape.idx.entries.size(); ++q) {
        const auto& e = shape.idx.entries[q];
        const Field2D& src = xbar.sub[static_cast<size_t>(e.k)];
        if (e.diagonal()) {
            double* dst = slab(q, e.k);
            for (size_t i = 0; i < leaf_pix; ++i) dst[i] += src[i];
        } else if (e.l == 0) {
            add_shifted_raw(slab(q, e.k), xbar.sub[static_cast<size_t>(e.k + e.dk)], e.di0, e.di1);
            add_shifted_raw(slab(q, e.k + e.dk), src, -e.di0, -e.di1);
        } else {
            add_shifted_raw(slab(q, e.k), coupling_target(e, xbar, view), e.di0, e.di1);
        }
    }
    if (shape.idx.n_scalar > 0) {
        Field2D s = assemble_low_field(view, xbar, plan, shape.j);
        Field2D w(s.side());
        std::vector<double> flat;
        for (int k = 0; k < shape.idx.n_scalar; ++k) {
            for (size_t i = 0; i < s.size(); ++i) w[i] = shape.bumps.deriv(k, s[i]);
            Band proj = apply_bar(w, plan, shape.j);
            band_to_vector(proj, flat);
            double* dst = out.data() + (shape.idx.entries.size() + static_cast<size_t>(k)) * static_cast<size_t>(dim);
            std::copy(flat.begin(), flat.end(), dst);
        }
    }
}

std::vector<double> feature_laplacians(const ConditionalEnergyParams& shape, const ConditioningView& view,
                                       const Band& xbar, const PacketPlan& plan) {
    check_shapes(shape, view, xbar, plan);
    const BandSpec& spec = plan.band(shape.j);
    const double leaf_pix = static_cast<double>(spec.leaf_side) * spec.leaf_side;
    std::vector<double> out(static_cast<size_t>(shape.idx.m()), 0.0);
    for (size_t q = 0; q < shape.idx.entries.size(); ++q)
        if (shape.idx.entries[q].diagonal()) out[q] = leaf_pix;
    if (shape.idx.n_scalar > 0) {
        Field2D s = assemble_low_field(view, xbar, plan, shape.j);
        const auto& r = plan.bar_row_weights(shape.j);
        for (int k = 0; k < shape.idx.n_scalar; ++k) {
            double acc = 0;
            for (size_t i = 0; i < s.size(); ++i) acc += shape.bumps.second(k, s[i]) * r[i];
            out[shape.idx.entries.size() + static_cast<size_t>(k)] = acc;
        }
    }
    return out;
}

std::vector<double> coarsest_features(const CoarsestEnergyParams& shape, const Field2D& x) {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(shape.idx.m()));
    for (const auto& [a, b] : shape.idx.offsets) {
        if (a == 0 && b == 0)
            out.push_back(0.5 * x.squared_norm());
        else
            out.push_back(shifted_product_sum(x, x, a, b));
    }
    for (int k = 0; k < shape.idx.n_scalar; ++k) {
        double acc = 0;
        for (size_t i = 0; i < x.size(); ++i) acc += shape.bumps.value(k, x[i]);
        out.push_back(acc);
    }
    return out;
}

double coarsest_energy(const CoarsestEnergyParams& params, const Field2D& x) {
    double acc = 0;
    auto ctheta = params.coupling_theta();
    for (size_t q = 0; q < params.idx.offsets.size(); ++q) {
        const double w = ctheta[q];
        if (w == 0.0) continue;
        auto [a, b] = params.idx.offsets[q];
        if (a == 0 && b == 0)
            acc += w * 0.5 * x.squared_norm();
        else
            acc += w * shifted_product_sum(x, x, a, b);
    }
    if (params.idx.n_scalar > 0) {
        auto alpha = params.scalar_theta();
        for (size_t i = 0; i < x.size(); ++i) acc += params.bumps.v(alpha, x[i]);
    }
    return acc;
}

Field2D coarsest_grad(const CoarsestEnergyParams& params, const Field2D& x) {
    Field2D g(x.side());
    auto ctheta = params.coupling_theta();
    for (size_t q = 0; q < params.idx.offsets.size(); ++q) {
        const double w = ctheta[q];
        if (w == 0.0) continue;
        auto [a, b] = params.idx.offsets[q];
        if (a == 0 && b == 0) {
            for (size_t i = 0; i < g.size(); ++i) g[i] += w * x[i];
        } else {
            add_shifted(g, x, a, b, w);
            add_shifted(g, x, -a, -b, w);
        }
    }
    if (params.idx.n_scalar > 0) {
        auto alpha = params.scalar_theta();
        for (size_t i = 0; i < x.size(); ++i) g[i] += params.bumps.v_prime(alpha, x[i]);
    }
    return g;
}

double coarsest_laplacian(const CoarsestEnergyParams& params, const Field2D& x) {
    double acc = 0;
    auto ctheta = params.coupling_theta();
    const double d = static_cast<double>(x.size());
    for (size_t q = 0; q < params.idx.offsets.size(); ++q) {
        auto [a, b] = params.idx.offsets[q];
        if (a == 0 && b == 0) acc += ctheta[q] * d;
    }
    if (params.idx.n_scalar > 0) {
        auto alpha = params.scalar_theta();
        for (size_t i = 0; i < x.size(); ++i) acc += params.bumps.v_second(alpha, x[i]);
    }
    return acc;
}

void coarsest_feature_gradients(const CoarsestEnergyParams& shape, const Field2D& x, std::vector<double>& out) {
    const size_t dim = x.size();
    const size_t m = static_cast<size_t>(shape.idx.m());
    out.assign(m * dim, 0.0);
    const int n = x.side();
    for (size_t q = 0; q < shape.idx.offsets.size(); ++q) {
        auto [a, b] = shape.idx.offsets[q];
        double* dst = out.data() + q * dim;
        if (a == 0 && b == 0) {
            for (size_t i = 0; i < dim; ++i) dst[i] = x[i];
        } else {
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c)
                    dst[static_cast<size_t>(r) * n + c] =
                        x.wrapped(r + a, c + b) + x.wrapped(r - a, c - b);
        }
    }
    for (int k = 0; k < shape.idx.n_scalar; ++k) {
        double* dst = out.data() + (shape.idx.offsets.size() + static_cast<size_t>(k)) * dim;
        for (size_t i = 0; i < dim; ++i) dst[i] = shape.bumps.deriv(k, x[i]);
    }
}

std::vector<double> coarsest_feature_laplacians(const CoarsestEnergyParams& shape, const Field2D& x) {
    std::vector<double> out(static_cast<size_t>(shape.idx.m()), 0.0);
    const double d = static_cast<double>(x.size());
    for (size_t q = 0; q < shape.idx.offsets.size(); ++q) {
        auto [a, b] = shape.idx.offsets[q];
        if (a == 0 && b == 0) out[q] = d;
    }
    for (int k = 0; k < shape.idx.n_scalar; ++k) {
        double acc = 0;
        for (size_t i = 0; i < x.size(); ++i) acc += shape.bumps.second(k, x[i]);
        out[shape.idx.offsets.size() + static_cast<size_t>(k)] = acc;
    }
    return out;
}

void band_to_vector(const Band& b, std::vector<double>& out) {
    out.resize(static_cast<size_t>(b.dim()));
    size_t pos = 0;
    for (const auto& f : b.sub) {
        std::copy(f.data(), f.data() + f.size(), out.begin() + static_cast<long>(pos));
        pos += f.size();
    }
}

void vector_to_band(std::span<const double> v, Band& b) {
    size_t pos = 0;
    for (auto& f : b.sub) {
        std::copy(v.begin() + static_cast<long>(pos), v.begin() + static_cast<long>(pos + f.size()), f.data());
        pos += f.size();
    }
}

} // namespace cslc
