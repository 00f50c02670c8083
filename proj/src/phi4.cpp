#include "cslc/phi4.hpp"

#include <algorithm>
#include <cmath>

#include "cslc/acf.hpp"
#include "cslc/fft.hpp"
#include "cslc/threading.hpp"

namespace cslc {

double phi4_energy(const Field2D& x, const Phi4Params& p) {
    const int n = x.side();
    double kin = 0, pot = 0;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const double t = x(r, c);
            const double lap = 4.0 * t - x.wrapped(r + 1, c) - x.wrapped(r - 1, c) - x.wrapped(r, c + 1) -
                               x.wrapped(r, c - 1);
            kin += t * lap;
            pot += phi4_v(t, p);
        }
    }
    return 0.5 * p.beta * kin + pot;
}

Field2D phi4_grad(const Field2D& x, const Phi4Params& p) {
    const int n = x.side();
    Field2D g(n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const double t = x(r, c);
            const double lap = 4.0 * t - x.wrapped(r + 1, c) - x.wrapped(r - 1, c) - x.wrapped(r, c + 1) -
                               x.wrapped(r, c - 1);
            g(r, c) = p.beta * lap + phi4_v_prime(t, p);
        }
    }
    return g;
}

VSecondBounds v_second_bounds(const Phi4Params& p) {
    VSecondBounds b;
    b.gamma = 2.0 * (1.0 + 2.0 * p.beta);
    b.delta_unbounded = true;
    b.cutoff_symbol = b.gamma / p.beta;
    b.range_nonempty = b.cutoff_symbol <= 8.0;
    return b;
}

namespace {

struct Phi4Chain {
    const Phi4Params* p;
    Field2D xbuf;

    MalaTarget make() {
        xbuf = Field2D(p->side);
        MalaTarget t;
        t.energy = [this](const std::vector<double>& v) {
            std::copy(v.begin(), v.end(), xbuf.data());
            return phi4_energy(xbuf, *p);
        };
        t.grad = [this](const std::vector<double>& v, std::vector<double>& out) {
            std::copy(v.begin(), v.end(), xbuf.data());
            Field2D g = phi4_grad(xbuf, *p);
            out.assign(g.data(), g.data() + g.size());
        };
        return t;
    }
};

} // namespace

Phi4Dataset sample_phi4(const Phi4Params& p, int n, const MalaConfig& mcmc, uint64_t seed, int threads) {
    p.validate();
    if (n <= 0) throw DataError("sample_phi4: sample count must be positive");
    if (threads <= 0) threads = default_thread_count();
    const int chains = std::max(1, std::min(threads, (n + 63) / 64));
    const size_t d = static_cast<size_t>(p.side) * p.side;

    Phi4Dataset out;
    out.fields = FieldStack(n, p.side);
    out.seed = seed;
    out.chains = chains;

    std::vector<double> acc(static_cast<size_t>(chains), 0.0);
    std::vector<double> taus(static_cast<size_t>(chains), 0.0);
    std::vector<double> steps(static_cast<size_t>(chains), 0.0);
    std::vector<long> burns(static_cast<size_t>(chains), 0);
    std::vector<long> thins(static_cast<size_t>(chains), 1);

    parallel_for(
        static_cast<size_t>(chains),
        [&](size_t ci) {
            const int lo = static_cast<int>((static_cast<long>(n) * static_cast<long>(ci)) / chains);
            const int hi = static_cast<int>((static_cast<long>(n) * (static_cast<long>(ci) + 1)) / chains);
            const int n_local = hi - lo;
            if (n_local <= 0) return;

            Phi4Chain ctx{&p, Field2D(p.side)};
            MalaTarget target = ctx.make();
            Rng init_rng(derive_seed(seed, 100, ci));
            std::vector<double> state(d);
            for (auto& v : state) v = init_rng.normal();
            MalaChain chain(target, std::move(state), mcmc.step_size, Rng(derive_seed(seed, 101, ci)));

            // adapt the step size toward the target acceptance
            const int adapt_rounds = 40;
            for (int w = 0; w < adapt_rounds; ++w) {
                int accepts = 0;
                for (int t = 0; t < mcmc.adapt_window; ++t) accepts += chain.step().accepted ? 1 : 0;
                double gain = mcmc.adapt_gain / std::sqrt(1.0 + w);
                chain.set_step_size(adapt_step(chain.step_size(), static_cast<double>(accepts) / mcmc.adapt_window,
                                               mcmc.target_acceptance, gain));
            }

            // pilot run: measure the autocorrelation time of the field mean
            double tau = 1.0;
            long pilot = 4000;
            const long pilot_cap = 400000;
            std::vector<double> trace;
            for (;;) {
                trace.reserve(static_cast<size_t>(pilot));
                while (static_cast<long>(trace.size()) < pilot) {
                    chain.step();
                    double mean = 0;
                    for (double v : chain.state()) mean += v;
                    trace.push_back(mean / static_cast<double>(d));
                }
                auto acf = normalized_autocorrelation(trace, static_cast<int>(trace.size() / 4));
                AcfFit fit = fit_acf_tau(acf);
                tau = fit.decaying ? std::max(1.0, fit.tau) : static_cast<double>(pilot);
                if (static_cast<double>(pilot) >= 10.0 * tau || pilot >= pilot_cap) break;
                pilot *= 2;
            }

            long accepts = 0, total = 0;
            const long thinning = std::max<long>(1, std::lround(tau));
            const long burn = 10 * thinning;
            for (long t = 0; t < burn; ++t) {
                accepts += chain.step().accepted ? 1 : 0;
                ++total;
            }
            Field2D sample(p.side);
            for (int i = lo; i < hi; ++i) {
                for (long t = 0; t < thinning; ++t) {
                    accepts += chain.step().accepted ? 1 : 0;
                    ++total;
                }
                std::copy(chain.state().begin(), chain.state().end(), sample.data());
                if (p.symmetry_break && sample.mean() < 0.0)
                    for (size_t q = 0; q < sample.size(); ++q) sample[q] = -sample[q];
                out.fields.set_field(i, sample);
            }
            double acc_rate = total > 0 ? static_cast<double>(accepts) / static_cast<double>(total) : 0.0;
            if (acc_rate < 0.01)
                throw NumericalError("sample_phi4: acceptance below 1%; decrease the initial step size");
            acc[ci] = acc_rate;
            taus[ci] = tau;
            steps[ci] = chain.step_size();
            burns[ci] = burn;
            thins[ci] = thinning;
        },
        chains);

    for (int c = 0; c < chains; ++c) {
        out.acceptance += acc[static_cast<size_t>(c)] / chains;
        out.tau += taus[static_cast<size_t>(c)] / chains;
        out.step_size += steps[static_cast<size_t>(c)] / chains;
        out.burn_in = std::max(out.burn_in, burns[static_cast<size_t>(c)]);
        out.thinning = std::max(out.thinning, thins[static_cast<size_t>(c)]);
    }
    return out;
}

} // namespace cslc
