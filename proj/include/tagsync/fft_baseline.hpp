#pragma once

#include "tagsync/error.hpp"
#include "tagsync/timetag.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tagsync {

inline constexpr std::size_t kMaxFftBins = std::size_t{1} << 27;

struct BaselineParams {
    std::size_t n_bins = std::size_t{1} << 20;
    std::int64_t bin_width_ps = 9;
    std::size_t peak_exclusion_bins = 5;
    double false_alarm_alpha = 0.01;
    /// Extra refinement rounds, each halving the bin width, while the peak
    /// stays identified. 0 disables the iterative mode.
    int max_halvings = 0;
};

/// Throws ValidationError unless n_bins is a power of two in [2, 2^27] and
/// the widths and alpha are in range. Significance needs at least 16 bins.
void validate(const BaselineParams& params);

struct BinnedStream {
    std::vector<std::int64_t> bins;
    /// True when some tag landed beyond n_bins * bin_width and wrapped.
    bool folded = false;
};

/// Bin j counts tags with floor((t + shift) / bin_width) mod n_bins = j.
BinnedStream bin_stream(const TagStream& stream, const BaselineParams& params, std::int64_t shift_ps = 0);

/// Circular c[k] = sum_j a[j] * b[(j + k) mod N] through forward transforms,
/// a conjugate product and the inverse transform. Lengths must match and be
/// powers of two (ShapeError).
std::vector<double> cross_correlate(std::span<const std::int64_t> a, std::span<const std::int64_t> b);

/// O(N^2) reference for cross_correlate.
std::vector<double> cross_correlate_direct(std::span<const std::int64_t> a, std::span<const std::int64_t> b);

struct BaselineResult {
    std::vector<double> s_trace;
    double s_max = 0.0;
    std::int64_t k_max = 0;
    std::int64_t offset_ps = 0; // signal minus idler, signed range
    double s_p = 0.0;
    bool identified = false;
    bool folded = false;
    std::int64_t bin_width_ps = 0;
    std::size_t n_bins = 0;
    double baseline_mean = 0.0;
    double baseline_sd = 0.0;
};

/// S[k] = (c[k] - mean) / sd with mean and sd taken outside
/// +-peak_exclusion_bins (circularly) of the argmax. Needs at least 16
/// entries; a constant baseline raises DegenerateStatisticsError.
BaselineResult significance(std::span<const double> corr, std::size_t peak_exclusion_bins);

/// Solves n_bins * Q(S_p) = alpha by bisection to 1e-7.
double threshold_sp(std::size_t n_bins, double false_alarm_alpha);

/// Bins both streams, correlates idler against signal and applies the
/// S_max > S_p rule. Not identifying a peak is a normal result.
BaselineResult ho_identify(const TagStream& s, const TagStream& i, const BaselineParams& params);

/// Every stage of the iterative mode; the first entry is the plain
/// ho_identify result. Stage r shifts the idler by the running estimate and
/// uses bin width ceil(w_{r-1} / 2). Stops after the first stage that fails.
std::vector<BaselineResult> ho_identify_iterative(const TagStream& s, const TagStream& i,
                                                  const BaselineParams& params);

/// Rows `k,S` under `# key=value` header lines.
std::string trace_csv(const BaselineResult& result);
void save_trace_csv(const BaselineResult& result, const std::filesystem::path& path);

} // namespace tagsync
