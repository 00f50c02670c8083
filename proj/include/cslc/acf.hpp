#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace cslc {

struct AcfFit {
    double tau = 0.0; // exponential decay constant in steps
    double r2 = 0.0;  // fit quality of the log-linear regression
    bool decaying = true;
    int window = 0; // number of lags used
};

// Fits log A(t) = log A(0) - t/tau over the window of consecutive lags
// t >= 1 with A(t) > threshold. An empty window falls back to
// tau = -1/log(A(1)) clipped to [0, 1].
inline AcfFit fit_acf_tau(std::span<const double> acf, double threshold = 0.1) {
    AcfFit fit;
    int w = 0;
    while (w + 1 < static_cast<int>(acf.size()) && acf[static_cast<size_t>(w + 1)] > threshold) ++w;
    fit.window = w;
    if (w < 2) {
        double a1 = acf.size() > 1 ? acf[1] : 0.0;
        if (a1 <= 0.0) {
            fit.tau = 0.0;
        } else {
            fit.tau = std::min(1.0, -1.0 / std::log(a1));
        }
        fit.r2 = 1.0;
        fit.decaying = true;
        return fit;
    }
    // least squares of log A(t) against t over t = 1..w
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (int t = 1; t <= w; ++t) {
        double x = static_cast<double>(t);
        double y = std::log(acf[static_cast<size_t>(t)]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    double nn = static_cast<double>(w);
    double denom = nn * sxx - sx * sx;
    double slope = (nn * sxy - sx * sy) / denom;
    if (slope >= 0.0) {
        fit.decaying = false;
        fit.tau = std::numeric_limits<double>::infinity();
        fit.r2 = 0.0;
        return fit;
    }
    fit.tau = -1.0 / slope;
    double ss_tot = syy - sy * sy / nn;
    double intercept = (sy - slope * sx) / nn;
    double ss_res = 0;
    for (int t = 1; t <= w; ++t) {
        double y = std::log(acf[static_cast<size_t>(t)]);
        double e = y - (intercept + slope * t);
        ss_res += e * e;
    }
    fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

} // namespace cslc
