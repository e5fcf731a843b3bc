#include "tagsync/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace tagsync {

namespace {

std::int64_t argmax_center(const CoincidenceHistogram& h) {
    const auto it = std::max_element(h.counts.begin(), h.counts.end());
    return h.center_ps(static_cast<std::size_t>(it - h.counts.begin()));
}

} // namespace

OffsetEstimate refine_offset(const TagStream& s, const TagStream& i, std::int64_t center_ps, const FineParams& fine) {
    OffsetEstimate est;
    est.fine_center_ps = center_ps;
    est.histogram = fine_scan(s, i, center_ps, fine.tau_bw_c_ps, fine.n_f, fine.options);
    const double quarter = static_cast<double>(fine.tau_bw_c_ps) / 4.0;
    try {
        est.fit = fit_gaussian(est.histogram, fine.fit);
        if (!fine.recenter || (est.fit.converged && std::abs(est.fit.center_ps - static_cast<double>(center_ps)) <= quarter)) {
            return est;
        }
    } catch (const FitError&) {
        if (!fine.recenter) throw;
    }
    const std::int64_t lsb = s.lsb_ps();
    std::int64_t next = argmax_center(est.histogram);
    if (est.fit.converged) next = std::llround(est.fit.center_ps / static_cast<double>(lsb)) * lsb;
    est.fine_center_ps = next;
    est.recentered = true;
    est.histogram = fine_scan(s, i, next, fine.tau_bw_c_ps, fine.n_f, fine.options);
    est.fit = fit_gaussian(est.histogram, fine.fit);
    return est;
}

OffsetEstimate identify_offset(const TagStream& s, const TagStream& i, const CoarseParams& coarse,
                               const FineParams& fine) {
    CoarseResult c = coarse_scan(s, i, coarse);
    OffsetEstimate est = refine_offset(s, i, c.t0c_max_ps, fine);
    est.coarse = std::move(c);
    return est;
}

} // namespace tagsync
