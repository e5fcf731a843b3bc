#pragma once

#include "tagsync/gfit.hpp"
#include "tagsync/xcorr.hpp"

#include <cstdint>

namespace tagsync {

struct FineParams {
    std::int64_t tau_bw_c_ps = 500;
    std::int64_t n_f = 500;
    FineOptions options{};
    FitOptions fit{};
    /// Re-run the fine scan once around the fitted peak when the fit fails or
    /// lands more than a quarter window away from the scan centre.
    bool recenter = true;
};

struct OffsetEstimate {
    CoarseResult coarse;
    CoincidenceHistogram histogram;
    GaussianFitResult fit;
    std::int64_t fine_center_ps = 0;
    bool recentered = false;
};

/// Fine histogram around `center_ps` followed by the Gaussian fit. The
/// returned `coarse` member is left default.
OffsetEstimate refine_offset(const TagStream& s, const TagStream& i, std::int64_t center_ps, const FineParams& fine);

/// Coarse scan, fine scan and fit. Throws PeakNotFoundError from the coarse
/// stage and FitError / NoPeakError from the fit.
OffsetEstimate identify_offset(const TagStream& s, const TagStream& i, const CoarseParams& coarse,
                               const FineParams& fine);

} // namespace tagsync
