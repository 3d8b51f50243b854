#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace rdmix {

/// Quantile of an ascending-sorted sample, linear interpolation between
/// order statistics (h = (n-1) p).
inline double quantile_sorted(std::span<const double> sorted, double prob) {
    if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
    if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("quantile probability outside [0,1]");
    const double h = static_cast<double>(sorted.size() - 1) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(lo);
    if (frac == 0.0) return sorted[lo];
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double prob) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, prob);
}

inline double mean(std::span<const double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

/// Sample variance with the n-1 denominator; NaN when n < 2.
inline double sample_variance(std::span<const double> v) {
    if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
}

} // namespace rdmix
