#include "cslc/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <mutex>

namespace cslc {

namespace {
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace

Fft2D::Fft2D(int side) : side_(side) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    in_ = fftw_alloc_complex(static_cast<size_t>(side) * side);
    out_ = fftw_alloc_complex(static_cast<size_t>(side) * side);
    plan_ = fftw_plan_dft_2d(side, side, static_cast<fftw_complex*>(in_), static_cast<fftw_complex*>(out_),
                             FFTW_FORWARD, FFTW_ESTIMATE);
}

Fft2D::~Fft2D() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (plan_) fftw_destroy_plan(static_cast<fftw_plan>(plan_));
    if (in_) fftw_free(in_);
    if (out_) fftw_free(out_);
}

void Fft2D::forward(const Field2D& f, std::vector<std::complex<double>>& out) {
    if (f.side() != side_) throw std::invalid_argument("Fft2D: side mismatch");
    size_t d = static_cast<size_t>(side_) * side_;
    auto* in = static_cast<fftw_complex*>(in_);
    for (size_t i = 0; i < d; ++i) {
        in[i][0] = f[i];
        in[i][1] = 0.0;
    }
    fftw_execute(static_cast<fftw_plan>(plan_));
    out.resize(d);
    std::memcpy(out.data(), out_, d * sizeof(fftw_complex));
}

std::vector<double> normalized_autocorrelation(std::span<const double> series, int max_lag) {
    const size_t n = series.size();
    if (n < 2) return {1.0};
    size_t padded = 1;
    while (padded < 2 * n) padded <<= 1;

    double mean = 0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(n);

    std::vector<double> buf(padded, 0.0);
    for (size_t i = 0; i < n; ++i) buf[i] = series[i] - mean;

    fftw_complex* spec = nullptr;
    fftw_plan fwd, inv;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        spec = fftw_alloc_complex(padded / 2 + 1);
        fwd = fftw_plan_dft_r2c_1d(static_cast<int>(padded), buf.data(), spec, FFTW_ESTIMATE);
        inv = fftw_plan_dft_c2r_1d(static_cast<int>(padded), spec, buf.data(), FFTW_ESTIMATE);
    }
    fftw_execute(fwd);
    for (size_t i = 0; i < padded / 2 + 1; ++i) {
        double re = spec[i][0], im = spec[i][1];
        spec[i][0] = re * re + im * im;
        spec[i][1] = 0.0;
    }
    fftw_execute(inv);

    size_t lags = std::min<size_t>(static_cast<size_t>(max_lag) + 1, n);
    std::vector<double> acf(lags);
    double c0 = buf[0];
    if (c0 <= 0) {
        std::fill(acf.begin(), acf.end(), 0.0);
        acf[0] = 1.0;
    } else {
        for (size_t t = 0; t < lags; ++t) acf[t] = buf[t] / c0;
    }
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(inv);
        fftw_free(spec);
    }
    return acf;
}

} // namespace cslc
