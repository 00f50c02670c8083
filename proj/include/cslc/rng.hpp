#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cslc {

inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based stream derivation: one master seed fans out into
// independent streams identified by (purpose, index). Recorded in manifests.
inline uint64_t derive_seed(uint64_t master, uint64_t purpose, uint64_t index) {
    uint64_t s = master;
    (void)splitmix64(s);
    s ^= 0x632be59bd9b4e019ULL * (purpose + 1);
    (void)splitmix64(s);
    s ^= 0x9e3779b97f4a7c15ULL * (index + 1);
    return splitmix64(s);
}

// mt19937_64 with explicit uniform/normal conversions so chains are
// bit-reproducible for a given build.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t integer() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // standard normal via Box-Muller, one spare cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace cslc
