#include "tagsync/stats.hpp"

#include <algorithm>

namespace tagsync {

double poisson_upper_tail(std::int64_t k, double mean) {
    if (k <= 0) return 1.0;
    if (mean <= 0.0) return 0.0;
    const double log_mean = std::log(mean);
    auto log_term = [&](double j) { return j * log_mean - mean - std::lgamma(j + 1.0); };

    if (static_cast<double>(k) > mean) {
        // Terms decrease from k upward; sum until they stop mattering.
        const double first = log_term(static_cast<double>(k));
        double sum = 0.0;
        double ratio_term = 1.0;
        for (std::int64_t j = k;; ++j) {
            sum += ratio_term;
            ratio_term *= mean / static_cast<double>(j + 1);
            if (ratio_term < 1e-17 * sum) break;
        }
        return std::min(1.0, std::exp(first) * sum);
    }
    double below = 0.0;
    for (std::int64_t j = 0; j < k; ++j) below += std::exp(log_term(static_cast<double>(j)));
    return std::clamp(1.0 - below, 0.0, 1.0);
}

} // namespace tagsync
