#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>

namespace tagsync {

inline constexpr double kFwhmPerSigma = 2.354820045030949; // 2*sqrt(2*ln 2)

/// P(X >= k) for X ~ Poisson(mean).
double poisson_upper_tail(std::int64_t k, double mean);

/// Standard normal upper tail Q(x) = P(Z > x).
inline double normal_upper_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

template <typename Derived>
typename Derived::Scalar sample_mean(const Eigen::DenseBase<Derived>& x) {
    return x.mean();
}

/// Unbiased sample standard deviation; zero for fewer than two samples.
template <typename Derived>
typename Derived::Scalar sample_sd(const Eigen::DenseBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = x.size();
    if (n < 2) return Scalar(0);
    const Scalar mu = x.mean();
    return std::sqrt((x.derived().array() - mu).square().sum() / Scalar(n - 1));
}

} // namespace tagsync
