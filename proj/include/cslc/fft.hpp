#pragma once

#include <complex>
#include <vector>

#include "cslc/field.hpp"

namespace cslc {

// Thin wrapper over FFTW for 2D complex transforms of real fields.
// Construct one instance per thread; plan creation is serialized internally.
class Fft2D {
public:
    explicit Fft2D(int side);
    ~Fft2D();
    Fft2D(const Fft2D&) = delete;
    Fft2D& operator=(const Fft2D&) = delete;

    int side() const { return side_; }

    // Unnormalized forward DFT: out[k] = sum_x f[x] e^{-2 pi i k.x / n}
    void forward(const Field2D& f, std::vector<std::complex<double>>& out);

private:
    int side_;
    void* plan_ = nullptr;
    void* in_ = nullptr;
    void* out_ = nullptr;
};

// 1D real autocorrelation by FFT, normalized so that out[0] = 1.
// The series mean is subtracted first. Returns at most max_lag+1 entries.
std::vector<double> normalized_autocorrelation(std::span<const double> series, int max_lag);

} // namespace cslc
