#include "cslc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>

#include "cslc/fft.hpp"
#include "cslc/rng.hpp"
#include "cslc/threading.hpp"

namespace cslc {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

RadialSpectrum radial_power_spectrum(const FieldStack& fields, int threads) {
    const int n = fields.count();
    if (n == 0) throw DataError("radial_power_spectrum: empty input");
    const int side = fields.side();
    const double d = static_cast<double>(side) * side;
    const int nbins = static_cast<int>(std::floor(std::hypot(side / 2.0, side / 2.0))) + 1;

    if (threads <= 0) threads = default_thread_count();
    std::vector<std::vector<double>> partial(static_cast<size_t>(threads),
                                             std::vector<double>(static_cast<size_t>(nbins), 0.0));
    std::vector<double> energy_partial(static_cast<size_t>(threads), 0.0);

    parallel_for_blocks(
        static_cast<size_t>(n),
        [&](size_t blk, size_t lo, size_t hi) {
            Fft2D fft(side);
            std::vector<std::complex<double>> spec;
            for (size_t i = lo; i < hi; ++i) {
                Field2D f = fields.field(static_cast<int>(i));
                energy_partial[blk] += f.squared_norm();
                fft.forward(f, spec);
                for (int f1 = 0; f1 < side; ++f1) {
                    double k1 = f1 <= side / 2 ? f1 : f1 - side;
                    for (int f2 = 0; f2 < side; ++f2) {
                        double k2 = f2 <= side / 2 ? f2 : f2 - side;
                        int bin = static_cast<int>(std::floor(std::hypot(k1, k2)));
                        partial[blk][static_cast<size_t>(bin)] += std::norm(spec[static_cast<size_t>(f1) * side + f2]) / d;
                    }
                }
            }
        },
        threads);

    RadialSpectrum out;
    out.edges.resize(static_cast<size_t>(nbins) + 1);
    const double dw = 2.0 * kPi / side;
    for (int b = 0; b <= nbins; ++b) out.edges[static_cast<size_t>(b)] = b * dw;
    out.power.assign(static_cast<size_t>(nbins), 0.0);
    out.count.assign(static_cast<size_t>(nbins), 0);
    for (int f1 = 0; f1 < side; ++f1) {
        double k1 = f1 <= side / 2 ? f1 : f1 - side;
        for (int f2 = 0; f2 < side; ++f2) {
            double k2 = f2 <= side / 2 ? f2 : f2 - side;
            ++out.count[static_cast<size_t>(static_cast<int>(std::floor(std::hypot(k1, k2))))];
        }
    }
    for (int t = 0; t < threads; ++t) {
        for (int b = 0; b < nbins; ++b) out.power[static_cast<size_t>(b)] += partial[static_cast<size_t>(t)][static_cast<size_t>(b)];
        out.mean_energy += energy_partial[static_cast<size_t>(t)];
    }
    out.mean_energy /= static_cast<double>(n);
    for (int b = 0; b < nbins; ++b)
        if (out.count[static_cast<size_t>(b)] > 0)
            out.power[static_cast<size_t>(b)] /= static_cast<double>(n) * static_cast<double>(out.count[static_cast<size_t>(b)]);
    return out;
}

Histogram marginal_histogram(const FieldStack& fields, int bins, double lo, double hi) {
    if (bins < 2) throw std::invalid_argument("marginal_histogram: need at least 2 bins");
    if (fields.count() == 0) throw DataError("marginal_histogram: empty input");
    if (!(hi > lo)) throw std::invalid_argument("marginal_histogram: bad range");
    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.density.assign(static_cast<size_t>(bins), 0.0);
    const auto& raw = fields.raw();
    for (double v : raw) {
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        b = std::clamp(b, 0, bins - 1);
        ++h.density[static_cast<size_t>(b)];
    }
    h.n_values = static_cast<long>(raw.size());
    const double width = h.bin_width();
    for (auto& v : h.density) v /= static_cast<double>(h.n_values) * width;
    return h;
}

Histogram marginal_histogram(const FieldStack& fields, int bins) {
    if (fields.count() == 0) throw DataError("marginal_histogram: empty input");
    const auto& raw = fields.raw();
    auto [mn, mx] = std::minmax_element(raw.begin(), raw.end());
    double lo = *mn, hi = *mx;
    if (!(hi > lo)) hi = lo + 1.0;
    return marginal_histogram(fields, bins, lo, hi);
}

double l1_distance(const Histogram& a, const Histogram& b) {
    if (a.density.size() != b.density.size() || a.lo != b.lo || a.hi != b.hi)
        throw std::invalid_argument("l1_distance: histograms must share binning");
    double s = 0;
    for (size_t i = 0; i < a.density.size(); ++i) s += std::abs(a.density[i] - b.density[i]);
    return s * a.bin_width();
}

namespace {

// power iteration on a matrix-free symmetric operator
std::pair<double, bool> power_iteration(const std::function<void(const std::vector<double>&, std::vector<double>&)>& op,
                                        int dim, int iters, double tol, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(dim)), w(static_cast<size_t>(dim));
    for (auto& x : v) x = rng.normal();
    double nrm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (auto& x : v) x /= nrm;
    double lam = 0, prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < iters; ++it) {
        op(v, w);
        lam = std::inner_product(v.begin(), v.end(), w.begin(), 0.0);
        nrm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
        if (nrm == 0) return {0.0, true};
        for (size_t q = 0; q < v.size(); ++q) v[q] = w[q] / nrm;
        if (std::abs(lam - prev) <= tol * std::max(1.0, std::abs(lam))) return {lam, true};
        prev = lam;
    }
    return {lam, false};
}

} // namespace

ExtremalEigs conditional_hessian_extremes(const ConditionalEnergyParams& params, const PacketPlan& plan,
                                          std::span<const Decomposition> conditioning, int k_iters, double tol,
                                          int dense_limit, int dense_samples, int threads) {
    if (conditioning.empty()) throw DataError("conditional_hessian_extremes: need conditioning samples");
    const int j = params.j;
    const int dim = plan.band(j).dim();
    ExtremalEigs out;
    out.lambda_min.assign(conditioning.size(), 0.0);
    out.lambda_max.assign(conditioning.size(), 0.0);
    std::vector<char> ok(conditioning.size(), 1);
    std::mutex pooled_mutex;

    parallel_for(
        conditioning.size(),
        [&](size_t i) {
            const Decomposition& dec = conditioning[i];
            Field2D low = partial_reconstruct_low(dec, plan, j);
            ConditioningView view{&low, plan.same_grid(j, j + 1) ? &dec.bands[static_cast<size_t>(j)] : nullptr};
            Band zero = make_zero_band(plan, j);
            Band vb = make_zero_band(plan, j);
            Band hb = make_zero_band(plan, j);
            auto op = [&](const std::vector<double>& v, std::vector<double>& w) {
                vector_to_band(v, vb);
                hb = hessian_vec(params, view, zero, vb, plan);
                band_to_vector(hb, w);
            };
            Rng rng(derive_seed(9001, static_cast<uint64_t>(j), i));
            // dominant-magnitude eigenvalue fixes the shift; shifted power
            // iterations on s*I +/- H then give both extremes
            auto [lam0, ok0] = power_iteration(op, dim, k_iters, tol, rng);
            const double shift = std::abs(lam0) * 1.01 + 1e-12;
            auto op_plus = [&](const std::vector<double>& v, std::vector<double>& w) {
                op(v, w);
                for (size_t q = 0; q < w.size(); ++q) w[q] += shift * v[q];
            };
            auto op_minus = [&](const std::vector<double>& v, std::vector<double>& w) {
                op(v, w);
                for (size_t q = 0; q < w.size(); ++q) w[q] = shift * v[q] - w[q];
            };
            auto [mp, ok1] = power_iteration(op_plus, dim, k_iters, tol, rng);
            auto [mm, ok2] = power_iteration(op_minus, dim, k_iters, tol, rng);
            out.lambda_max[i] = mp - shift;
            out.lambda_min[i] = shift - mm;
            ok[i] = (ok0 && ok1 && ok2) ? 1 : 0;

            if (dim <= dense_limit && static_cast<int>(i) < dense_samples) {
                Eigen::MatrixXd hd(dim, dim);
                std::vector<double> e(static_cast<size_t>(dim), 0.0), col(static_cast<size_t>(dim));
                for (int c = 0; c < dim; ++c) {
                    e[static_cast<size_t>(c)] = 1.0;
                    op(e, col);
                    e[static_cast<size_t>(c)] = 0.0;
                    for (int r = 0; r < dim; ++r) hd(r, c) = col[static_cast<size_t>(r)];
                }
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (hd + hd.transpose()),
                                                                  Eigen::EigenvaluesOnly);
                std::lock_guard<std::mutex> lock(pooled_mutex);
                for (int q = 0; q < dim; ++q) out.pooled_eigenvalues.push_back(es.eigenvalues()(q));
            }
        },
        threads);
    for (char c : ok) out.converged &= (c != 0);
    return out;
}

namespace {

EquivalentPotential tabulate_equivalent(const BumpBasis& bumps, std::span<const double> alpha, double trace_term,
                                        double lo, double hi, double central_lo, double central_hi) {
    EquivalentPotential out;
    out.trace_term = trace_term;
    const int nodes = 512;
    out.table.lo = lo;
    out.table.hi = hi;
    out.table.values.resize(static_cast<size_t>(nodes));
    for (int i = 0; i < nodes; ++i) {
        double t = lo + (hi - lo) * i / (nodes - 1);
        out.table.values[static_cast<size_t>(i)] = bumps.v(alpha, t) + trace_term * t * t;
    }
    double mn = std::numeric_limits<double>::infinity();
    for (int i = 0; i < nodes; ++i) {
        double t = central_lo + (central_hi - central_lo) * i / (nodes - 1);
        mn = std::min(mn, bumps.v_second(alpha, t) + 2.0 * trace_term);
    }
    out.min_second = mn;
    out.convex_central = mn >= 0.0;
    return out;
}

double percentile_of(const std::vector<double>& pct, double q) {
    if (pct.size() != 101) return 0.0;
    double pos = q * 100.0;
    int i = std::clamp(static_cast<int>(pos), 0, 99);
    double f = pos - i;
    return pct[static_cast<size_t>(i)] * (1 - f) + pct[static_cast<size_t>(i + 1)] * f;
}

} // namespace

EquivalentPotential equivalent_scalar_potential(const ConditionalEnergyParams& params, const PacketPlan& plan) {
    const BandSpec& spec = plan.band(params.j);
    const double dbar = static_cast<double>(spec.dim());
    const double leaf_pix = static_cast<double>(spec.leaf_side) * spec.leaf_side;
    double trace = 0;
    auto ctheta = params.coupling_theta();
    for (size_t q = 0; q < params.idx.entries.size(); ++q)
        if (params.idx.entries[q].diagonal()) trace += ctheta[q] * leaf_pix;
    double lo, hi, clo, chi;
    if (params.marginal_percentiles.size() == 101) {
        lo = params.marginal_percentiles.front();
        hi = params.marginal_percentiles.back();
        clo = percentile_of(params.marginal_percentiles, 0.025);
        chi = percentile_of(params.marginal_percentiles, 0.975);
    } else {
        lo = params.bumps.support_lo();
        hi = params.bumps.support_hi();
        double w = 0.05 * (hi - lo);
        clo = lo + w;
        chi = hi - w;
    }
    return tabulate_equivalent(params.bumps, params.scalar_theta(), trace / (2.0 * dbar), lo, hi, clo, chi);
}

EquivalentPotential equivalent_scalar_potential_coarse(const CoarsestEnergyParams& params, int side) {
    const double d = static_cast<double>(side) * side;
    double trace = 0;
    auto ctheta = params.coupling_theta();
    for (size_t q = 0; q < params.idx.offsets.size(); ++q)
        if (params.idx.offsets[q] == std::make_pair(0, 0)) trace += ctheta[q] * d;
    double lo, hi, clo, chi;
    if (params.marginal_percentiles.size() == 101) {
        lo = params.marginal_percentiles.front();
        hi = params.marginal_percentiles.back();
        clo = percentile_of(params.marginal_percentiles, 0.025);
        chi = percentile_of(params.marginal_percentiles, 0.975);
    } else {
        lo = params.bumps.support_lo();
        hi = params.bumps.support_hi();
        double w = 0.05 * (hi - lo);
        clo = lo + w;
        chi = hi - w;
    }
    return tabulate_equivalent(params.bumps, params.scalar_theta(), trace / (2.0 * d), lo, hi, clo, chi);
}

EquivalentPotential equivalent_scalar_potential_phi4(const Phi4Params& params, double lo, double hi) {
    // Tr(-beta Lap) = 4 beta d, so the trace term is 2 beta t^2
    EquivalentPotential out;
    out.trace_term = 2.0 * params.beta;
    const int nodes = 512;
    out.table.lo = lo;
    out.table.hi = hi;
    out.table.values.resize(static_cast<size_t>(nodes));
    double mn = std::numeric_limits<double>::infinity();
    for (int i = 0; i < nodes; ++i) {
        double t = lo + (hi - lo) * i / (nodes - 1);
        out.table.values[static_cast<size_t>(i)] = phi4_v(t, params) + out.trace_term * t * t;
        double central_lo = lo + 0.025 * (hi - lo), central_hi = hi - 0.025 * (hi - lo);
        if (t >= central_lo && t <= central_hi) mn = std::min(mn, phi4_v_second(t, params) + 2.0 * out.trace_term);
    }
    out.min_second = mn;
    out.convex_central = mn >= 0.0;
    return out;
}

ScaleMixing mixing_scale(int j, long dim, std::span<const ChainTrace> chains, double threshold) {
    if (chains.empty()) throw DataError("mixing_scale: no chains");
    size_t max_lag = 0;
    for (const auto& ch : chains)
        for (const auto& series : ch.coords) max_lag = std::max(max_lag, series.size() / 2);

    // pooled covariance: per-chain, per-coordinate ACF of (x - chain mean)
    std::vector<double> cov(max_lag + 1, 0.0);
    std::vector<double> wsum(max_lag + 1, 0.0);
    for (const auto& ch : chains) {
        for (const auto& series : ch.coords) {
            if (series.size() < 4) continue;
            double mean = 0;
            for (double v : series) mean += v;
            mean /= static_cast<double>(series.size());
            double var = 0;
            for (double v : series) var += (v - mean) * (v - mean);
            var /= static_cast<double>(series.size());
            auto acf = normalized_autocorrelation(series, static_cast<int>(series.size() / 2));
            for (size_t t = 0; t < acf.size() && t <= max_lag; ++t) {
                cov[t] += var * acf[t];
                wsum[t] += var;
            }
        }
    }
    std::vector<double> pooled(max_lag + 1, 0.0);
    for (size_t t = 0; t <= max_lag; ++t) pooled[t] = wsum[t] > 0 ? cov[t] / wsum[0] : 0.0;
    if (pooled[0] > 0)
        for (auto& v : pooled) v /= pooled[0];

    AcfFit fit = fit_acf_tau(pooled, threshold);
    if (!fit.decaying) throw NumericalError("mixing_scale: non-decaying autocorrelation (chain unconverged)");
    ScaleMixing out;
    out.j = j;
    out.dim = dim;
    out.tau = fit.tau;
    out.r2 = fit.r2;
    out.decaying = fit.decaying;
    return out;
}

MixingReport aggregate_mixing(std::vector<ScaleMixing> scales, long total_dim) {
    MixingReport rep;
    rep.scales = std::move(scales);
    rep.total_dim = total_dim;
    double agg = 0;
    for (const auto& s : rep.scales) agg += s.tau * static_cast<double>(s.dim) / static_cast<double>(total_dim);
    rep.tau_aggregate = agg;
    return rep;
}

ScalingFit scaling_exponent(std::span<const double> dims, std::span<const double> taus, int bootstrap, uint64_t seed) {
    if (dims.size() < 3 || dims.size() != taus.size())
        throw std::invalid_argument("scaling_exponent: need at least 3 (d, tau) points");
    const size_t n = dims.size();
    std::vector<double> lx(n), ly(n);
    for (size_t i = 0; i < n; ++i) {
        lx[i] = std::log(dims[i]);
        ly[i] = std::log(taus[i]);
    }
    auto fit_slope = [&](const std::vector<double>& y) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (size_t i = 0; i < n; ++i) {
            sx += lx[i];
            sy += y[i];
            sxx += lx[i] * lx[i];
            sxy += lx[i] * y[i];
        }
        double nn = static_cast<double>(n);
        double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
        double intercept = (sy - slope * sx) / nn;
        return std::pair<double, double>{slope, intercept};
    };
    auto [slope, intercept] = fit_slope(ly);
    ScalingFit out;
    out.exponent = slope;

    std::vector<double> resid(n);
    for (size_t i = 0; i < n; ++i) resid[i] = ly[i] - (intercept + slope * lx[i]);
    Rng rng(seed);
    std::vector<double> slopes;
    slopes.reserve(static_cast<size_t>(bootstrap));
    std::vector<double> yb(n);
    for (int b = 0; b < bootstrap; ++b) {
        for (size_t i = 0; i < n; ++i)
            yb[i] = intercept + slope * lx[i] + resid[static_cast<size_t>(rng.integer() % n)];
        slopes.push_back(fit_slope(yb).first);
    }
    std::sort(slopes.begin(), slopes.end());
    out.ci_lo = slopes[static_cast<size_t>(0.025 * (bootstrap - 1))];
    out.ci_hi = slopes[static_cast<size_t>(0.975 * (bootstrap - 1))];
    return out;
}

CutoffReport cslc_cutoff_check(const Phi4Params& params, const PacketPlan& plan, double support_energy) {
    VSecondBounds b = v_second_bounds(params);
    CutoffReport rep;
    rep.gamma = b.gamma;
    rep.cutoff_symbol = b.cutoff_symbol;
    rep.range_nonempty = b.range_nonempty;
    const int side = plan.side();
    for (int j = 1; j <= plan.n_bands(); ++j) {
        std::vector<double> resp = plan.band_response(j);
        std::vector<size_t> order(resp.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](size_t a, size_t c) { return resp[a] > resp[c]; });
        double total = std::accumulate(resp.begin(), resp.end(), 0.0);
        double acc = 0, min_symbol = std::numeric_limits<double>::infinity();
        for (size_t q : order) {
            if (acc >= support_energy * total) break;
            acc += resp[q];
            int f1 = static_cast<int>(q) / side, f2 = static_cast<int>(q) % side;
            double w1 = 2.0 * kPi * (f1 <= side / 2 ? f1 : f1 - side) / side;
            double w2 = 2.0 * kPi * (f2 <= side / 2 ? f2 : f2 - side) / side;
            min_symbol = std::min(min_symbol, laplacian_symbol(w1, w2));
        }
        BandCutoff bc;
        bc.j = j;
        bc.min_symbol = min_symbol;
        bc.predicted_logconcave = params.beta * min_symbol > b.gamma;
        rep.bands.push_back(bc);
    }
    return rep;
}

} // namespace cslc
