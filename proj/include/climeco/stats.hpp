#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace climeco {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

template <typename Scalar>
inline bool is_missing(Scalar v) {
    return std::isnan(v);
}

/// Standard normal CDF.
template <typename Scalar>
inline Scalar normal_cdf(Scalar x) {
    return Scalar(0.5) * std::erfc(-x / std::sqrt(Scalar(2)));
}

/// Inverse standard normal CDF (Wichura's AS 241, double precision).
double normal_quantile(double p);

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// CDF of Student's t with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

/// Two-sided p-value for a t statistic.
double student_t_two_sided_p(double t, double dof);

/// Two-sided p-value for a standard-normal statistic.
inline double normal_two_sided_p(double z) {
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

/// Linear-interpolation quantile (R type 7) of an ascending-sorted range.
template <typename Scalar>
Scalar quantile_sorted(std::span<const Scalar> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty range");
    if (p <= 0.0) return sorted.front();
    if (p >= 1.0) return sorted.back();
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return static_cast<Scalar>((1.0 - frac) * sorted[lo] + frac * sorted[lo + 1]);
}

template <typename Scalar>
Scalar quantile(std::vector<Scalar> values, double p) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(std::span<const Scalar>(values), p);
}

/// Weighted median: smallest value whose cumulative weight reaches half the
/// total. Weights must be nonnegative with a positive sum.
double weighted_median(std::span<const double> values, std::span<const double> weights);

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64_file(const std::string& path);

/// Pearson correlation of two equal-length series.
double pearson(std::span<const double> a, std::span<const double> b);

/// Midrank vector (average ranks for ties), 1-based.
std::vector<double> midranks(std::span<const double> v);

} // namespace climeco
