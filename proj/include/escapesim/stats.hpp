#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace escapesim {

/**
 * Survival function Q(x) = P(K > x) of the Kolmogorov distribution,
 * Q(x) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 x^2).
 *
 * For small x the alternating series converges slowly, so the
 * theta-function dual Q(x) = 1 - sqrt(2 pi)/x sum_{k>=1}
 * exp(-(2k-1)^2 pi^2 / (8 x^2)) is used below the standard crossover 1.18.
 */
inline double kolmogorov_q(double x) {
    if (!(x > 0.0)) return 1.0;
    if (x < 1.18) {
        const double t = std::exp(-std::numbers::pi * std::numbers::pi / (8.0 * x * x));
        // t^((2k-1)^2) for k = 1..4; the next term is below 1e-30 at x < 1.18
        const double t8 = std::pow(t, 8.0);
        const double t16 = t8 * t8;
        const double t24 = t16 * t8;
        const double sum = t * (1.0 + t8 * (1.0 + t16 * (1.0 + t24)));
        return std::max(0.0, 1.0 - std::sqrt(2.0 * std::numbers::pi) / x * sum);
    }
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 16; ++k) {
        const double term = std::exp(-2.0 * static_cast<double>(k) * k * x * x);
        sum += sign * term;
        if (term < 1e-18) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
    double distance = 0.0;
    double p_value = 1.0;
    std::uint64_t n1 = 0;
    std::uint64_t n2 = 0;
};

namespace detail {

/** Asymptotic p-value with the finite-sample effective-size correction. */
inline double ks_p_value(double distance, double effective_n) {
    const double root = std::sqrt(effective_n);
    return kolmogorov_q((root + 0.12 + 0.11 / root) * distance);
}

}  // namespace detail

/**
 * Two-sample Kolmogorov-Smirnov test for samples on a shared discrete
 * support: the statistic is the maximum gap between the two empirical CDFs
 * evaluated at the pooled support points (the standard treatment of ties;
 * treating integer-valued data as continuous would be anticonservative).
 * The p-value is asymptotic with effective size n1 n2 / (n1 + n2).
 */
inline KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("ks_two_sample requires non-empty samples");
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < x.size() || j < y.size()) {
        const double v = (j >= y.size() || (i < x.size() && x[i] <= y[j])) ? x[i] : y[j];
        while (i < x.size() && x[i] <= v) ++i;
        while (j < y.size() && y[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
    }
    const double ne = nx * ny / (nx + ny);
    return {d, detail::ks_p_value(d, ne), x.size(), y.size()};
}

/**
 * One-sample Kolmogorov-Smirnov test against a continuous CDF; the statistic
 * takes the supremum on both sides of each empirical step.
 */
inline KsResult ks_one_sample(std::span<const double> sample,
                              const std::function<double(double)>& cdf) {
    if (sample.empty())
        throw std::invalid_argument("ks_one_sample requires a non-empty sample");
    std::vector<double> x(sample.begin(), sample.end());
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    }
    return {d, detail::ks_p_value(d, n), x.size(), 0};
}

/** Median of a sample (average of central pair for even sizes). */
inline double sample_median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of an empty sample");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid) - 1,
                     v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (v[mid - 1] + hi);
}

}  // namespace escapesim
