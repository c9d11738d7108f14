#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace shelltopics {

inline double log_sum_exp(std::span<const double> x) {
    if (x.empty()) return -std::numeric_limits<double>::infinity();
    double m = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double v : x) acc += std::exp(v - m);
    return m + std::log(acc);
}

inline double log_sum_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// log B(x) = sum_i lgamma(x_i) - lgamma(sum_i x_i), the multivariate beta.
inline double log_multivariate_beta(std::span<const double> x) {
    double sum = 0.0, acc = 0.0;
    for (double v : x) {
        acc += std::lgamma(v);
        sum += v;
    }
    return acc - std::lgamma(sum);
}

inline double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// log prod_{q=0}^{m-1} (a + q) = lgamma-free rising factorial, exact for small m.
inline double log_rising(double a, std::int64_t m) {
    double acc = 0.0;
    for (std::int64_t q = 0; q < m; ++q) acc += std::log(a + static_cast<double>(q));
    return acc;
}

// Normalizes log weights in place into probabilities; returns log normalizer.
inline double normalize_log_weights(std::vector<double>& w) {
    double lz = log_sum_exp(w);
    for (double& v : w) v = std::exp(v - lz);
    return lz;
}

inline double shannon_entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

} // namespace shelltopics
