#pragma once

#include <cstdint>

#include "cslc/field.hpp"
#include "cslc/sampler.hpp"

namespace cslc {

// phi^4 lattice energy E(x) = 1/2 x^T (-beta Lap) x + sum_i v(x[i]) with
// v(t) = t^4 - (1+2 beta) t^2 on a periodic square lattice.
struct Phi4Params {
    double beta = 0.68;
    int side = 32;
    bool symmetry_break = false;

    void validate() const {
        if (!(beta > 0)) throw DataError("phi4: beta must be positive");
        if (side < 4 || !is_power_of_two(side)) throw DataError("phi4: side must be a power of two >= 4");
    }
};

double phi4_energy(const Field2D& x, const Phi4Params& p);
Field2D phi4_grad(const Field2D& x, const Phi4Params& p);

inline double phi4_v(double t, const Phi4Params& p) { return t * t * t * t - (1.0 + 2.0 * p.beta) * t * t; }
inline double phi4_v_prime(double t, const Phi4Params& p) { return 4.0 * t * t * t - 2.0 * (1.0 + 2.0 * p.beta) * t; }
inline double phi4_v_second(double t, const Phi4Params& p) { return 12.0 * t * t - 2.0 * (1.0 + 2.0 * p.beta); }

// Fourier symbol of the 5-point discrete -Laplacian.
inline double laplacian_symbol(double w1, double w2) {
    double s1 = std::sin(0.5 * w1), s2 = std::sin(0.5 * w2);
    return 4.0 * s1 * s1 + 4.0 * s2 * s2;
}

// Bounds on v'': v'' >= -gamma with gamma = 2(1+2 beta); the upper bound is
// unbounded. cutoff_symbol = gamma / beta is the Prop.-3 threshold on the
// lattice symbol of K.
struct VSecondBounds {
    double gamma = 0.0;
    bool delta_unbounded = true;
    double cutoff_symbol = 0.0;
    bool range_nonempty = false; // cutoff_symbol <= max lattice symbol (= 8)
};
VSecondBounds v_second_bounds(const Phi4Params& p);

struct Phi4Dataset {
    FieldStack fields;
    double acceptance = 0.0;
    double tau = 0.0;
    long burn_in = 0;
    long thinning = 1;
    double step_size = 0.0;
    uint64_t seed = 0;
    int chains = 0;
};

// Draws n approximately independent samples from Z^-1 e^-E by MALA with
// adapted step size, burn-in of 10x the measured autocorrelation time and
// thinning at that time. With symmetry_break, samples are reflected to
// positive mean (a symmetry of the energy).
Phi4Dataset sample_phi4(const Phi4Params& p, int n, const MalaConfig& mcmc, uint64_t seed, int threads = 0);

} // namespace cslc
