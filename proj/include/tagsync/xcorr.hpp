#pragma once

#include "tagsync/error.hpp"
#include "tagsync/timetag.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tagsync {

// Offsets throughout are signal-minus-idler: a pair (a, b) matches the
// candidate t0 when a - b - t0 falls inside the coincidence window.

/// Number of pairs (a, b) with |a - b - t0| <= floor(tau_bw / 2), counted with
/// multiplicity. Sorted two-pointer sweep: O(n + m + matches).
std::int64_t count_coincidences(const TagStream& s, const TagStream& i, std::int64_t t0_ps, std::int64_t tau_bw_ps);

/// Number of pairs with lo <= a - b <= hi (ps, inclusive).
std::int64_t count_in_range(const TagStream& s, const TagStream& i, std::int64_t lo_ps, std::int64_t hi_ps);

/// Exhaustive double loop with the same contract as count_coincidences.
/// Refuses n * m above 1e7.
std::int64_t brute_force_count(const TagStream& s, const TagStream& i, std::int64_t t0_ps, std::int64_t tau_bw_ps);

struct CoarseParams {
    std::size_t segment_len_M = 5000;
    std::int64_t tau_bw_c_ps = 500;
    /// Half-range of candidate offsets; by default the segment span.
    std::optional<std::int64_t> search_span_ps;
    /// Grid anchor; by default t_{1,1} - t_{2,1}.
    std::optional<std::int64_t> search_center_ps;
    double min_significance = 5.0;
    /// Family-wise false-alarm level for the Poisson look-elsewhere test.
    double false_alarm_alpha = 0.01;
};

struct CoarseResult {
    std::int64_t t0c_max_ps = 0;
    std::int64_t peak_counts = 0;
    double background_mean = 0.0;
    double background_sd = 0.0;
    double significance = 0.0;
    /// Probability of a background bin reaching peak_counts, times bins scanned.
    double false_alarm = 1.0;
    std::int64_t tau_bw_c_ps = 0;
    std::int64_t first_t0_ps = 0; // candidate offset of k = -N_c
    std::int64_t n_candidates = 0;
    /// Counts of the candidates around the peak, starting at neighborhood_first_ps.
    std::vector<std::int64_t> neighborhood;
    std::int64_t neighborhood_first_ps = 0;
};

/// Thrown when the coarse peak does not stand out; carries the best candidate.
class PeakNotFoundError : public Error {
public:
    PeakNotFoundError(const std::string& what, CoarseResult best) : Error(what), best_(std::move(best)) {}
    const CoarseResult& best() const noexcept { return best_; }

private:
    CoarseResult best_;
};

/// Coarse identification over the first M events of each stream. Candidates
/// t0c_k = anchor + k * tau for k in [-N_c, N_c]; each candidate's count is
/// exactly count_coincidences on the segments. Ties go to the smallest |t0c|,
/// then the smallest t0c.
CoarseResult coarse_scan(const TagStream& s, const TagStream& i, const CoarseParams& params);

struct CoincidenceHistogram {
    std::int64_t resolution_ps = 1;
    std::int64_t center0_ps = 0;
    std::vector<std::int64_t> counts;
    std::int64_t window_width_ps = 1;
    std::int64_t lsb_ps = 1;

    std::size_t size() const noexcept { return counts.size(); }
    bool sliding() const noexcept { return window_width_ps != resolution_ps; }
    std::int64_t center_ps(std::size_t k) const noexcept {
        return center0_ps + static_cast<std::int64_t>(k) * resolution_ps;
    }
    /// Lowest difference counted in bin k (partition mode).
    std::int64_t lower_ps(std::size_t k) const noexcept {
        return center_ps(k) - (resolution_ps / lsb_ps / 2) * lsb_ps;
    }
    /// Mean of the admitted difference values for bin k; equals center_ps
    /// unless the bin holds an even number of LSB steps.
    double midpoint_ps(std::size_t k) const noexcept;
    std::int64_t total() const noexcept;
};

struct FineOptions {
    /// 0 means window == resolution (disjoint bins).
    std::int64_t window_width_ps = 0;
};

/// Fine histogram over t0c +- tau_c / 2 using the full streams. The bin width
/// is tau_c / n_f rounded down to an LSB multiple and n_f is recomputed from
/// it. Throws ResolutionError when n_f < 100 or the bin width drops below
/// one LSB.
CoincidenceHistogram fine_scan(const TagStream& s, const TagStream& i, std::int64_t t0c_max_ps,
                               std::int64_t tau_bw_c_ps, std::int64_t n_f, const FineOptions& options = {});

/// Histogram over an explicit bin layout; fine_scan delegates here.
CoincidenceHistogram histogram_differences(const TagStream& s, const TagStream& i, std::int64_t center0_ps,
                                           std::int64_t resolution_ps, std::size_t n_bins,
                                           std::int64_t window_width_ps = 0);

void save_histogram_csv(const CoincidenceHistogram& hist, const std::filesystem::path& path);
std::string histogram_csv(const CoincidenceHistogram& hist);
CoincidenceHistogram load_histogram_csv(const std::filesystem::path& path);

} // namespace tagsync
