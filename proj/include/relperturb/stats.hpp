#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

#include "relperturb/errors.hpp"

namespace relperturb {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct WilsonInterval {
    double lo = 0.0;
    double hi = 1.0;
};

/// Wilson score interval for a binomial proportion.
inline WilsonInterval wilson_interval(std::int64_t successes, std::int64_t trials, double z = 1.96) {
    if (trials <= 0) return {0.0, 1.0};
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = (z / denom) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// q-th quantile (linear interpolation) of an unsorted sample.
inline double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) throw Error("quantile of empty sample");
    std::sort(xs.begin(), xs.end());
    if (q <= 0.0) return xs.front();
    if (q >= 1.0) return xs.back();
    const double pos = q * static_cast<double>(xs.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= xs.size()) return xs.back();
    return xs[lo] * (1.0 - frac) + xs[lo + 1] * frac;
}

inline double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

inline double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw Error("mean of empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double sample_sd(const std::vector<double>& xs) {
    if (xs.size() < 2) throw Error("sd needs at least two points");
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LineFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw Error("linear_fit: need >= 2 paired points");
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw Error("linear_fit: degenerate abscissae");
    LineFit f;
    f.slope = (n * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / n;
    return f;
}

/// Least-squares slope of log(y) against log(x).
inline LineFit loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    std::vector<double> lx, ly;
    lx.reserve(xs.size());
    ly.reserve(ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw Error("loglog_slope: inputs must be positive");
        lx.push_back(std::log(xs[i]));
        ly.push_back(std::log(ys[i]));
    }
    return linear_fit(lx, ly);
}

/// One-sample Kolmogorov-Smirnov distance against N(mu, sd^2).
inline double ks_vs_normal(std::vector<double> xs, double mu = 0.0, double sd = 1.0) {
    if (xs.empty()) throw Error("ks_vs_normal: empty sample");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = normal_cdf((xs[i] - mu) / sd);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

/// Two-sample Kolmogorov-Smirnov distance.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw Error("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

/// Kolmogorov survival function Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
    if (lambda <= 0.0) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        if (term < 1e-16) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Asymptotic p-value for the two-sample KS distance d.
inline double ks_two_sample_pvalue(double d, std::size_t na, std::size_t nb) {
    const double ne = static_cast<double>(na) * static_cast<double>(nb) /
                      static_cast<double>(na + nb);
    const double sq = std::sqrt(ne);
    // Stephens' small-sample correction.
    return kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
}

/// FNV-1a 64-bit hash; stable across runs, used for config provenance.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace relperturb
