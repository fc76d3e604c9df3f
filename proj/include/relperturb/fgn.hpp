#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "relperturb/errors.hpp"
#include "relperturb/rng.hpp"

namespace relperturb {

/// Autocovariance of fractional Gaussian noise at lag k:
///   gamma(k) = (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2.
inline double fgn_autocovariance(int k, double hurst) {
    const double h2 = 2.0 * hurst;
    const double kk = static_cast<double>(std::abs(k));
    return 0.5 * (std::pow(kk + 1.0, h2) - 2.0 * std::pow(kk, h2) +
                  std::pow(std::abs(kk - 1.0), h2));
}

/// Stationary Gaussian vector of length n with the fractional-noise
/// autocovariance, generated by circulant embedding. The embedding of the
/// true autocovariance is exact in distribution; its circulant spectrum is
/// nonnegative for all Hurst indices in (0, 1), so the EmbeddingError
/// branch guards against numerical degeneration only.
inline Eigen::VectorXd sample_fgn(int n, double hurst, RngStream& rng) {
    if (n < 2) throw EmbeddingError("fgn needs n >= 2");
    if (!(hurst > 0.0 && hurst < 1.0)) throw EmbeddingError("hurst must lie in (0, 1)");

    std::size_t big = 2;
    while (big < 2 * static_cast<std::size_t>(n - 1)) big *= 2;
    const std::size_t half = big / 2;

    std::vector<std::complex<double>> circulant(big);
    for (std::size_t j = 0; j <= half; ++j)
        circulant[j] = fgn_autocovariance(static_cast<int>(j), hurst);
    for (std::size_t j = half + 1; j < big; ++j) circulant[j] = circulant[big - j];

    thread_local Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spectrum(big);
    fft.fwd(spectrum, circulant);

    double max_w = 0.0;
    for (const auto& w : spectrum) max_w = std::max(max_w, w.real());
    std::vector<double> weights(big);
    for (std::size_t k = 0; k < big; ++k) {
        double w = spectrum[k].real();
        if (w < -1e-10 * max_w) throw EmbeddingError("circulant spectrum not nonnegative");
        weights[k] = std::max(w, 0.0);
    }

    // Hermitian complex amplitudes with E |a_k|^2 = w_k and E a_k a_l = 0.
    std::vector<std::complex<double>> amp(big);
    amp[0] = std::sqrt(weights[0]) * rng.gaussian();
    amp[half] = std::sqrt(weights[half]) * rng.gaussian();
    for (std::size_t k = 1; k < half; ++k) {
        const double g = rng.gaussian();
        const double h = rng.gaussian();
        amp[k] = std::sqrt(weights[k] / 2.0) * std::complex<double>(g, h);
        amp[big - k] = std::conj(amp[k]);
    }

    std::vector<std::complex<double>> path(big);
    fft.inv(path, amp);
    const double scale = std::sqrt(static_cast<double>(big));
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) out[i] = path[static_cast<std::size_t>(i)].real() * scale;
    return out;
}

}  // namespace relperturb
