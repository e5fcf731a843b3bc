#include "tagsync/xcorr.hpp"

#include "tagsync/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace tagsync {

namespace {

constexpr std::size_t kDenseCandidateLimit = std::size_t{1} << 24;
constexpr std::size_t kNeighborhoodHalf = 20;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

std::int64_t floor_mod(std::int64_t a, std::int64_t b) { return a - floor_div(a, b) * b; }

void require_same_lsb(const TagStream& s, const TagStream& i) {
    if (s.lsb_ps() != i.lsb_ps()) {
        throw ConfigError("streams have different LSBs (" + std::to_string(s.lsb_ps()) + " vs " +
                          std::to_string(i.lsb_ps()) + " ps)");
    }
}

void require_lsb_multiple(std::int64_t value, std::int64_t lsb, const char* what) {
    if (value % lsb != 0) {
        throw ConfigError(std::string(what) + " = " + std::to_string(value) + " ps is not a multiple of the " +
                          std::to_string(lsb) + " ps LSB");
    }
}

// Visits every pair with lo <= a - b <= hi (tick units) as visit(a - b).
// Both window edges advance monotonically with a, so the sweep is linear in
// the stream lengths plus the number of visited pairs.
template <typename Visit>
void for_each_difference(std::span<const Ticks> s, std::span<const Ticks> i, std::int64_t lo, std::int64_t hi,
                         Visit&& visit) {
    if (lo > hi || s.empty() || i.empty()) return;
    std::size_t first = 0;
    std::size_t last = 0;
    const std::size_t m = i.size();
    for (const Ticks a : s) {
        while (first < m && i[first] < a - hi) ++first;
        if (last < first) last = first;
        while (last < m && i[last] <= a - lo) ++last;
        for (std::size_t j = first; j < last; ++j) visit(a - i[j]);
    }
}

std::int64_t count_range_ticks(std::span<const Ticks> s, std::span<const Ticks> i, std::int64_t lo, std::int64_t hi) {
    if (lo > hi || s.empty() || i.empty()) return 0;
    std::int64_t total = 0;
    std::size_t first = 0;
    std::size_t last = 0;
    const std::size_t m = i.size();
    for (const Ticks a : s) {
        while (first < m && i[first] < a - hi) ++first;
        if (last < first) last = first;
        while (last < m && i[last] <= a - lo) ++last;
        total += static_cast<std::int64_t>(last - first);
    }
    return total;
}

struct Candidate {
    std::int64_t index;
    std::int64_t count;
};

// Larger count wins; equal counts go to the smaller |t0|, then the smaller t0.
bool better(const Candidate& a, const Candidate& b, std::int64_t first_t0, std::int64_t tau) {
    if (a.count != b.count) return a.count > b.count;
    const std::int64_t ta = first_t0 + a.index * tau;
    const std::int64_t tb = first_t0 + b.index * tau;
    if (std::llabs(ta) != std::llabs(tb)) return std::llabs(ta) < std::llabs(tb);
    return ta < tb;
}

} // namespace

double CoincidenceHistogram::midpoint_ps(std::size_t k) const noexcept {
    if (sliding()) return static_cast<double>(center_ps(k));
    return static_cast<double>(lower_ps(k)) + 0.5 * static_cast<double>(resolution_ps - lsb_ps);
}

std::int64_t CoincidenceHistogram::total() const noexcept {
    std::int64_t sum = 0;
    for (auto c : counts) sum += c;
    return sum;
}

std::int64_t count_in_range(const TagStream& s, const TagStream& i, std::int64_t lo_ps, std::int64_t hi_ps) {
    require_same_lsb(s, i);
    const std::int64_t lsb = s.lsb_ps();
    return count_range_ticks(s.ticks(), i.ticks(), ceil_div(lo_ps, lsb), floor_div(hi_ps, lsb));
}

std::int64_t count_coincidences(const TagStream& s, const TagStream& i, std::int64_t t0_ps, std::int64_t tau_bw_ps) {
    if (tau_bw_ps < 0) throw ConfigError("coincidence window must be nonnegative");
    const std::int64_t half = tau_bw_ps / 2;
    return count_in_range(s, i, t0_ps - half, t0_ps + half);
}

std::int64_t brute_force_count(const TagStream& s, const TagStream& i, std::int64_t t0_ps, std::int64_t tau_bw_ps) {
    require_same_lsb(s, i);
    if (tau_bw_ps < 0) throw ConfigError("coincidence window must be nonnegative");
    if (static_cast<double>(s.size()) * static_cast<double>(i.size()) > 1e7) {
        throw CapacityError("brute-force oracle limited to n*m <= 1e7");
    }
    const std::int64_t half = tau_bw_ps / 2;
    std::int64_t total = 0;
    for (std::size_t a = 0; a < s.size(); ++a) {
        for (std::size_t b = 0; b < i.size(); ++b) {
            const std::int64_t d = s.time_ps(a) - i.time_ps(b) - t0_ps;
            if (std::llabs(d) <= half) ++total;
        }
    }
    return total;
}

CoarseResult coarse_scan(const TagStream& s, const TagStream& i, const CoarseParams& params) {
    require_same_lsb(s, i);
    const std::int64_t lsb = s.lsb_ps();
    const std::size_t M = params.segment_len_M;
    if (M == 0) throw ConfigError("segment_len_M must be positive");
    if (s.size() < M || i.size() < M) {
        throw InsufficientDataError("coarse scan needs " + std::to_string(M) + " tags per stream, have " +
                                    std::to_string(s.size()) + " and " + std::to_string(i.size()));
    }
    const std::int64_t tau = params.tau_bw_c_ps;
    if (tau < lsb) throw ResolutionError("coarse resolution below the LSB");
    require_lsb_multiple(tau, lsb, "tau_bw_c_ps");

    const auto seg_s = s.ticks().first(M);
    const auto seg_i = i.ticks().first(M);
    const std::int64_t t0_ini = (seg_s.front() - seg_i.front()) * lsb;
    const std::int64_t anchor = params.search_center_ps.value_or(t0_ini);
    std::int64_t n_c = 0;
    if (params.search_span_ps) {
        if (*params.search_span_ps < 0) throw ConfigError("search_span_ps must be nonnegative");
        n_c = ceil_div(*params.search_span_ps, tau);
    } else {
        n_c = (seg_s.back() - seg_s.front()) * lsb / tau;
    }
    const std::int64_t n_cand = 2 * n_c + 1;
    const std::int64_t half = tau / 2;
    const bool even = (tau % 2 == 0);
    const std::int64_t first_t0 = anchor - n_c * tau;

    // Range of differences touching any candidate window, in ticks.
    const std::int64_t lo_t = ceil_div(first_t0 - half, lsb);
    const std::int64_t hi_t = floor_div(first_t0 + (n_cand - 1) * tau + half, lsb);

    auto bins_of = [&](std::int64_t d_ticks, auto&& add) {
        const std::int64_t u = d_ticks * lsb - first_t0 + half;
        const std::int64_t k = floor_div(u, tau);
        if (k >= 0 && k < n_cand) add(k);
        if (even && floor_mod(u, tau) == 0 && k >= 1 && k <= n_cand) add(k - 1);
    };

    CoarseResult r;
    r.tau_bw_c_ps = tau;
    r.first_t0_ps = first_t0;
    r.n_candidates = n_cand;

    std::int64_t total = 0;
    double sum_sq = 0.0;
    Candidate best{0, -1};
    std::vector<std::int64_t> dense;
    std::vector<std::int64_t> keys; // sorted unique candidate indices (sparse path)
    std::vector<std::int64_t> key_counts;

    auto consider = [&](Candidate c) {
        if (best.count < 0 || better(c, best, first_t0, tau)) best = c;
    };

    if (static_cast<std::size_t>(n_cand) <= kDenseCandidateLimit) {
        dense.assign(static_cast<std::size_t>(n_cand), 0);
        for_each_difference(seg_s, seg_i, lo_t, hi_t,
                            [&](std::int64_t d) { bins_of(d, [&](std::int64_t k) { ++dense[static_cast<std::size_t>(k)]; }); });
        for (std::int64_t k = 0; k < n_cand; ++k) {
            const std::int64_t c = dense[static_cast<std::size_t>(k)];
            total += c;
            sum_sq += static_cast<double>(c) * static_cast<double>(c);
            consider({k, c});
        }
    } else {
        std::vector<std::int64_t> hits;
        for_each_difference(seg_s, seg_i, lo_t, hi_t,
                            [&](std::int64_t d) { bins_of(d, [&](std::int64_t k) { hits.push_back(k); }); });
        std::sort(hits.begin(), hits.end());
        for (std::size_t a = 0; a < hits.size();) {
            std::size_t b = a;
            while (b < hits.size() && hits[b] == hits[a]) ++b;
            keys.push_back(hits[a]);
            key_counts.push_back(static_cast<std::int64_t>(b - a));
            a = b;
        }
        for (std::size_t q = 0; q < keys.size(); ++q) {
            total += key_counts[q];
            sum_sq += static_cast<double>(key_counts[q]) * static_cast<double>(key_counts[q]);
            consider({keys[q], key_counts[q]});
        }
        if (static_cast<std::int64_t>(keys.size()) < n_cand) {
            // Some candidates are empty; the empty one nearest zero competes on ties.
            std::int64_t k0 = std::clamp<std::int64_t>(floor_div(-first_t0 + tau / 2, tau), 0, n_cand - 1);
            for (std::int64_t k : {k0 - 1, k0, k0 + 1}) {
                if (k < 0 || k >= n_cand) continue;
                if (!std::binary_search(keys.begin(), keys.end(), k)) consider({k, 0});
            }
        }
    }

    auto count_at = [&](std::int64_t k) -> std::int64_t {
        if (!dense.empty()) return dense[static_cast<std::size_t>(k)];
        auto it = std::lower_bound(keys.begin(), keys.end(), k);
        return (it != keys.end() && *it == k) ? key_counts[static_cast<std::size_t>(it - keys.begin())] : 0;
    };

    r.t0c_max_ps = first_t0 + best.index * tau;
    r.peak_counts = best.count;
    const double nb = static_cast<double>(n_cand - 1);
    if (n_cand > 1) {
        const double rest = static_cast<double>(total - best.count);
        const double rest_sq = sum_sq - static_cast<double>(best.count) * static_cast<double>(best.count);
        r.background_mean = rest / nb;
        const double var = n_cand > 2 ? (rest_sq - nb * r.background_mean * r.background_mean) / (nb - 1.0) : 0.0;
        r.background_sd = var > 0.0 ? std::sqrt(var) : 0.0;
    }
    if (r.background_sd > 0.0) {
        r.significance = (static_cast<double>(r.peak_counts) - r.background_mean) / r.background_sd;
    } else {
        r.significance = static_cast<double>(r.peak_counts) > r.background_mean
                             ? std::numeric_limits<double>::infinity()
                             : 0.0;
    }
    r.false_alarm = std::min(1.0, static_cast<double>(n_cand) * poisson_upper_tail(r.peak_counts, r.background_mean));

    const std::int64_t nb_lo = std::max<std::int64_t>(0, best.index - static_cast<std::int64_t>(kNeighborhoodHalf));
    const std::int64_t nb_hi = std::min<std::int64_t>(n_cand - 1, best.index + static_cast<std::int64_t>(kNeighborhoodHalf));
    r.neighborhood_first_ps = first_t0 + nb_lo * tau;
    for (std::int64_t k = nb_lo; k <= nb_hi; ++k) r.neighborhood.push_back(count_at(k));

    if (r.significance < params.min_significance || r.false_alarm >= params.false_alarm_alpha) {
        std::ostringstream msg;
        msg << "coarse peak not found: best candidate t0=" << r.t0c_max_ps << " ps with " << r.peak_counts
            << " counts, significance " << r.significance << ", false-alarm " << r.false_alarm;
        throw PeakNotFoundError(msg.str(), r);
    }
    return r;
}

CoincidenceHistogram histogram_differences(const TagStream& s, const TagStream& i, std::int64_t center0_ps,
                                           std::int64_t resolution_ps, std::size_t n_bins,
                                           std::int64_t window_width_ps) {
    require_same_lsb(s, i);
    const std::int64_t lsb = s.lsb_ps();
    if (resolution_ps < lsb) throw ResolutionError("histogram resolution below the LSB");
    require_lsb_multiple(resolution_ps, lsb, "resolution_ps");
    require_lsb_multiple(center0_ps, lsb, "center0_ps");
    if (window_width_ps == 0) window_width_ps = resolution_ps;
    if (window_width_ps < 0) throw ConfigError("window width must be positive");

    CoincidenceHistogram h;
    h.resolution_ps = resolution_ps;
    h.center0_ps = center0_ps;
    h.window_width_ps = window_width_ps;
    h.lsb_ps = lsb;
    h.counts.assign(n_bins, 0);
    if (n_bins == 0) return h;

    const std::int64_t res_t = resolution_ps / lsb;
    if (!h.sliding()) {
        const std::int64_t lower0_t = h.lower_ps(0) / lsb;
        const std::int64_t upper_t = lower0_t + static_cast<std::int64_t>(n_bins) * res_t - 1;
        for_each_difference(s.ticks(), i.ticks(), lower0_t, upper_t,
                            [&](std::int64_t d) { ++h.counts[static_cast<std::size_t>((d - lower0_t) / res_t)]; });
        return h;
    }

    // Overlapping windows: gather the differences once, then count per center.
    const std::int64_t half = window_width_ps / 2;
    const std::int64_t lo_t = ceil_div(h.center_ps(0) - half, lsb);
    const std::int64_t hi_t = floor_div(h.center_ps(n_bins - 1) + half, lsb);
    std::vector<std::int64_t> diffs;
    for_each_difference(s.ticks(), i.ticks(), lo_t, hi_t, [&](std::int64_t d) { diffs.push_back(d); });
    std::sort(diffs.begin(), diffs.end());
    for (std::size_t k = 0; k < n_bins; ++k) {
        const std::int64_t c = h.center_ps(k);
        auto first = std::lower_bound(diffs.begin(), diffs.end(), ceil_div(c - half, lsb));
        auto last = std::upper_bound(diffs.begin(), diffs.end(), floor_div(c + half, lsb));
        h.counts[k] = static_cast<std::int64_t>(last - first);
    }
    return h;
}

CoincidenceHistogram fine_scan(const TagStream& s, const TagStream& i, std::int64_t t0c_max_ps,
                               std::int64_t tau_bw_c_ps, std::int64_t n_f, const FineOptions& options) {
    require_same_lsb(s, i);
    const std::int64_t lsb = s.lsb_ps();
    if (n_f < 100) {
        throw ResolutionError("n_f = " + std::to_string(n_f) + " is below the minimum of 100 fine steps");
    }
    if (tau_bw_c_ps <= 0) throw ConfigError("coarse resolution must be positive");
    const std::int64_t res = (tau_bw_c_ps / (n_f * lsb)) * lsb;
    if (res < lsb) {
        throw ResolutionError("fine resolution " + std::to_string(tau_bw_c_ps) + "/" + std::to_string(n_f) +
                              " ps is below the " + std::to_string(lsb) + " ps LSB");
    }
    const std::int64_t bins = tau_bw_c_ps / res;
    const std::int64_t centre = floor_div(t0c_max_ps, lsb) * lsb;
    const std::int64_t width = bins * res;
    const std::int64_t lower0 = centre - (width / lsb / 2) * lsb;
    const std::int64_t center0 = lower0 + (res / lsb / 2) * lsb;
    return histogram_differences(s, i, center0, res, static_cast<std::size_t>(bins), options.window_width_ps);
}

std::string histogram_csv(const CoincidenceHistogram& hist) {
    std::ostringstream out;
    out << "# resolution_ps=" << hist.resolution_ps << "\n";
    out << "# window_width_ps=" << hist.window_width_ps << "\n";
    out << "# lsb_ps=" << hist.lsb_ps << "\n";
    out << "t0_ps,counts\n";
    for (std::size_t k = 0; k < hist.size(); ++k) out << hist.center_ps(k) << ',' << hist.counts[k] << '\n';
    return out.str();
}

void save_histogram_csv(const CoincidenceHistogram& hist, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << histogram_csv(hist);
    if (!out) throw IoError("write failure on " + path.string());
}

CoincidenceHistogram load_histogram_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    CoincidenceHistogram h;
    std::optional<std::int64_t> resolution;
    std::optional<std::int64_t> window;
    std::vector<std::int64_t> centers;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(1, eq - 1);
            key.erase(0, key.find_first_not_of(' '));
            const std::string value = line.substr(eq + 1);
            try {
                if (key == "resolution_ps") resolution = std::stoll(value);
                else if (key == "window_width_ps") window = std::stoll(value);
                else if (key == "lsb_ps") h.lsb_ps = std::stoll(value);
            } catch (const std::exception&) {
                throw ParseError("malformed header value '" + value + "'", line_no);
            }
            continue;
        }
        if (line.rfind("t0_ps", 0) == 0) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError("expected t0_ps,counts", line_no);
        try {
            std::size_t used = 0;
            centers.push_back(std::stoll(line.substr(0, comma), &used));
            const std::string rest = line.substr(comma + 1);
            const std::int64_t count = std::stoll(rest, &used);
            if (used != rest.size() || count < 0) throw std::invalid_argument("count");
            h.counts.push_back(count);
        } catch (const std::exception&) {
            throw ParseError("malformed histogram row '" + line + "'", line_no);
        }
    }
    if (!resolution) throw ParseError("missing resolution_ps header", line_no);
    h.resolution_ps = *resolution;
    h.window_width_ps = window.value_or(*resolution);
    h.center0_ps = centers.empty() ? 0 : centers.front();
    for (std::size_t k = 1; k < centers.size(); ++k) {
        if (centers[k] - centers[k - 1] != h.resolution_ps) {
            throw ValidationError("histogram centers are not spaced by resolution_ps");
        }
    }
    return h;
}

} // namespace tagsync
