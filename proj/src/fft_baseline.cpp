#include "tagsync/fft_baseline.hpp"

#include "tagsync/stats.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace tagsync {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

void require_pow2_pair(std::size_t na, std::size_t nb) {
    if (na != nb) throw ShapeError("cross_correlate: lengths differ (" + std::to_string(na) + " vs " + std::to_string(nb) + ")");
    if (na == 0 || !std::has_single_bit(na)) throw ShapeError("cross_correlate: length " + std::to_string(na) + " is not a power of two");
}

std::int64_t signed_index(std::int64_t k, std::size_t n) {
    const auto nn = static_cast<std::int64_t>(n);
    return k >= nn / 2 ? k - nn : k;
}

} // namespace

void validate(const BaselineParams& p) {
    if (p.n_bins < 2 || !std::has_single_bit(p.n_bins) || p.n_bins > kMaxFftBins) {
        throw ValidationError("n_bins must be a power of two between 2 and 2^27, got " + std::to_string(p.n_bins));
    }
    if (p.bin_width_ps <= 0) throw ValidationError("bin_width_ps must be positive");
    if (p.peak_exclusion_bins == 0) throw ValidationError("peak_exclusion_bins must be positive");
    if (!(p.false_alarm_alpha > 0.0 && p.false_alarm_alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
    if (p.max_halvings < 0) throw ValidationError("max_halvings must be nonnegative");
}

BinnedStream bin_stream(const TagStream& stream, const BaselineParams& params, std::int64_t shift_ps) {
    validate(params);
    BinnedStream out;
    out.bins.assign(params.n_bins, 0);
    const auto n = static_cast<std::int64_t>(params.n_bins);
    const std::int64_t lsb = stream.lsb_ps();
    for (const Ticks t : stream.ticks()) {
        const std::int64_t b = floor_div(t * lsb + shift_ps, params.bin_width_ps);
        std::int64_t j = b % n;
        if (j < 0) j += n;
        if (b != j) out.folded = true;
        ++out.bins[static_cast<std::size_t>(j)];
    }
    return out;
}

std::vector<double> cross_correlate(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
    require_pow2_pair(a.size(), b.size());
    const std::size_t n = a.size();
    std::vector<double> ra(a.begin(), a.end());
    std::vector<double> rb(b.begin(), b.end());
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> fa;
    std::vector<std::complex<double>> fb;
    fft.fwd(fa, ra);
    fft.fwd(fb, rb);
    for (std::size_t k = 0; k < fa.size(); ++k) fa[k] = std::conj(fa[k]) * fb[k];
    std::vector<double> c;
    fft.inv(c, fa);
    c.resize(n);
    return c;
}

std::vector<double> cross_correlate_direct(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
    require_pow2_pair(a.size(), b.size());
    const std::size_t n = a.size();
    std::vector<double> c(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += static_cast<double>(a[j]) * static_cast<double>(b[(j + k) & (n - 1)]);
        c[k] = sum;
    }
    return c;
}

BaselineResult significance(std::span<const double> corr, std::size_t peak_exclusion_bins) {
    const std::size_t n = corr.size();
    if (n < 16) throw ShapeError("significance needs at least 16 correlation values");
    if (2 * peak_exclusion_bins + 2 >= n) throw ShapeError("peak exclusion leaves no baseline");
    const auto it = std::max_element(corr.begin(), corr.end());
    const auto kmax = static_cast<std::size_t>(it - corr.begin());

    // Welford over the circular complement of the exclusion zone.
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t count = 0;
    const std::size_t zone = 2 * peak_exclusion_bins + 1;
    for (std::size_t off = zone; off < n; ++off) {
        const double v = corr[(kmax + n - peak_exclusion_bins + off) % n];
        ++count;
        const double d = v - mean;
        mean += d / static_cast<double>(count);
        m2 += d * (v - mean);
    }
    const double sd = std::sqrt(m2 / static_cast<double>(count - 1));
    if (!(sd > 0.0)) throw DegenerateStatisticsError("baseline standard deviation is zero");

    BaselineResult r;
    r.s_trace.resize(n);
    for (std::size_t k = 0; k < n; ++k) r.s_trace[k] = (corr[k] - mean) / sd;
    r.k_max = static_cast<std::int64_t>(kmax);
    r.s_max = r.s_trace[kmax];
    r.n_bins = n;
    r.baseline_mean = mean;
    r.baseline_sd = sd;
    return r;
}

double threshold_sp(std::size_t n_bins, double alpha) {
    if (n_bins < 2) throw DomainError("threshold_sp needs n_bins >= 2");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("threshold_sp needs 0 < alpha < 1");
    const double target = alpha / static_cast<double>(n_bins);
    double lo = 0.0;
    double hi = 40.0;
    while (hi - lo > 1e-7) {
        const double mid = 0.5 * (lo + hi);
        if (normal_upper_tail(mid) > target) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

namespace {

BaselineResult identify_stage(const TagStream& s, const TagStream& i, const BaselineParams& params,
                              std::int64_t idler_shift_ps) {
    const BinnedStream bs = bin_stream(s, params);
    const BinnedStream bi = bin_stream(i, params, idler_shift_ps);
    const std::vector<double> corr = cross_correlate(bi.bins, bs.bins);
    BaselineResult r = significance(corr, params.peak_exclusion_bins);
    r.s_p = threshold_sp(params.n_bins, params.false_alarm_alpha);
    r.identified = r.s_max > r.s_p;
    r.folded = bs.folded || bi.folded;
    r.bin_width_ps = params.bin_width_ps;
    r.offset_ps = idler_shift_ps + signed_index(r.k_max, params.n_bins) * params.bin_width_ps;
    return r;
}

} // namespace

BaselineResult ho_identify(const TagStream& s, const TagStream& i, const BaselineParams& params) {
    validate(params);
    return identify_stage(s, i, params, 0);
}

std::vector<BaselineResult> ho_identify_iterative(const TagStream& s, const TagStream& i,
                                                  const BaselineParams& params) {
    validate(params);
    std::vector<BaselineResult> stages;
    stages.push_back(identify_stage(s, i, params, 0));
    BaselineParams p = params;
    for (int r = 0; r < params.max_halvings && stages.back().identified; ++r) {
        if (p.bin_width_ps <= 1) break;
        p.bin_width_ps = (p.bin_width_ps + 1) / 2;
        stages.push_back(identify_stage(s, i, p, stages.back().offset_ps));
    }
    return stages;
}

std::string trace_csv(const BaselineResult& r) {
    std::ostringstream os;
    os << "# bin_width_ps=" << r.bin_width_ps << "\n";
    os << "# n_bins=" << r.n_bins << "\n";
    os << std::setprecision(10);
    os << "# s_p=" << r.s_p << "\n";
    os << "# s_max=" << r.s_max << "\n";
    os << "# identified=" << (r.identified ? "true" : "false") << "\n";
    os << "# offset_ps=" << r.offset_ps << "\n";
    os << "k,S\n";
    for (std::size_t k = 0; k < r.s_trace.size(); ++k) os << k << ',' << r.s_trace[k] << '\n';
    return os.str();
}

void save_trace_csv(const BaselineResult& r, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << trace_csv(r);
    if (!f) throw IoError("write failed: " + path.string());
}

} // namespace tagsync
