// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "tagsync/bench.hpp"
#include "tagsync/fft_baseline.hpp"
#include "tagsync/gfit.hpp"
#include "tagsync/spdc_sim.hpp"
#include "tagsync/xcorr.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace tagsync;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v, int precision = 4) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(precision);
    os << v;
    return os.str();
}

TagStream make(std::vector<Ticks> t) {
    std::sort(t.begin(), t.end());
    const std::int64_t dur = t.empty() ? 0 : t.back();
    return TagStream(std::move(t), 1, dur);
}

TagStream random_tags(std::mt19937_64& rng, std::size_t n, Ticks hi) {
    std::uniform_int_distribution<Ticks> d(0, hi);
    std::vector<Ticks> t(n);
    for (auto& v : t) v = d(rng);
    return make(std::move(t));
}

/// Correlated component at `offset` with Gaussian spread, plus uniform background.
std::pair<TagStream, TagStream> correlated_pair(std::mt19937_64& rng, std::size_t pairs, std::size_t background,
                                                std::int64_t offset, double sigma, Ticks span) {
    std::uniform_int_distribution<Ticks> when(1'000'000, span);
    std::normal_distribution<double> jitter(0.0, sigma);
    std::vector<Ticks> s;
    std::vector<Ticks> i;
    s.reserve(pairs + background);
    i.reserve(pairs + background);
    for (std::size_t k = 0; k < pairs; ++k) {
        const Ticks t = when(rng);
        i.push_back(t);
        s.push_back(t + offset + std::llround(jitter(rng)));
    }
    for (std::size_t k = 0; k < background; ++k) {
        s.push_back(when(rng));
        i.push_back(when(rng));
    }
    return {make(std::move(s)), make(std::move(i))};
}

Outcome oracle_equivalence() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240101);
    std::uniform_int_distribution<std::size_t> len(0, 200);
    std::uniform_int_distribution<std::int64_t> tau(1, 1000);
    std::uniform_int_distribution<std::int64_t> off(-100'000, 100'000);
    std::uniform_int_distribution<Ticks> span(1, 300'000);
    int mismatches = 0;
    for (int k = 0; k < 1000; ++k) {
        const Ticks hi = span(rng);
        const TagStream s = random_tags(rng, len(rng), hi);
        const TagStream i = random_tags(rng, len(rng), hi);
        const std::int64_t t = off(rng);
        const std::int64_t w = tau(rng);
        if (count_coincidences(s, i, t, w) != brute_force_count(s, i, t, w)) ++mismatches;
    }
    const double elapsed = seconds_since(t0);
    return {mismatches == 0 && elapsed < 10.0,
            "1000 instances, mismatches=" + std::to_string(mismatches) + ", " + num(elapsed, 2) + " s (limit 10 s)"};
}

Outcome precision_scaling() {
    const auto t0 = Clock::now();
    ExperimentSpec spec = default_spec(Experiment::fig4);
    spec.sweep = {0.14, 0.28, 0.56, 1.0};
    const SweepTable t = run_fig4(spec);
    bool ok = true;
    std::string detail;
    for (const SweepRow& r : t.rows) {
        const double ratio = r.sd_ps / r.predicted_sd_ps;
        ok = ok && std::abs(ratio - 1.0) <= 0.25;
        detail += "Ta=" + num(r.sweep_value, 2) + " sd=" + num(r.sd_ps, 3) + " pred=" + num(r.predicted_sd_ps, 3) +
                  " ratio=" + num(ratio, 3) + "; ";
    }
    const double elapsed = seconds_since(t0);
    ok = ok && elapsed < 300.0;
    return {ok, detail + std::to_string(spec.trials) + " trials, band 25%, " + num(elapsed, 1) + " s (limit 300 s)"};
}

Outcome headline_precision() {
    const auto t0 = Clock::now();
    ExperimentSpec spec = default_spec(Experiment::fig4);
    spec.sweep = {4.5};
    const SweepTable t = run_fig4(spec);
    const SweepRow& r = t.rows.at(0);
    const double elapsed = seconds_since(t0);
    return {r.sd_ps >= 0.55 && r.sd_ps <= 0.90 && elapsed < 600.0,
            "Ta=4.5 s sd=" + num(r.sd_ps, 3) + " ps (pred " + num(r.predicted_sd_ps, 3) + "), window [0.55, 0.90], " +
                std::to_string(r.trials_used) + " trials, " + num(elapsed, 1) + " s (limit 600 s)"};
}

struct ResolutionSweep {
    SweepTable table;
    double elapsed = 0.0;
};

const ResolutionSweep& resolution_sweep() {
    static const ResolutionSweep sweep = [] {
        const auto t0 = Clock::now();
        ExperimentSpec spec = default_spec(Experiment::fig3b);
        spec.trials = 20;
        ResolutionSweep r;
        r.table = run_fig3b(spec);
        r.elapsed = seconds_since(t0);
        return r;
    }();
    return sweep;
}

Outcome fwhm_trend() {
    const ResolutionSweep& s = resolution_sweep();
    std::map<std::int64_t, double> fwhm;
    for (const SweepRow& r : s.table.rows) fwhm[std::llround(r.sweep_value)] = r.mean_fwhm_ps;
    double lo = 1e300;
    double hi = -1e300;
    for (const std::int64_t r : {1, 3, 5, 7, 9, 15}) {
        lo = std::min(lo, fwhm.at(r));
        hi = std::max(hi, fwhm.at(r));
    }
    const double rise = fwhm.at(55) - fwhm.at(1);
    bool monotone = true;
    const std::vector<std::int64_t> coarse{15, 25, 35, 55};
    for (std::size_t k = 1; k < coarse.size(); ++k) monotone = monotone && fwhm.at(coarse[k]) >= fwhm.at(coarse[k - 1]);
    std::string detail = "fwhm:";
    for (const auto& [r, f] : fwhm) detail += " " + std::to_string(r) + "->" + num(f, 2);
    detail += "; spread(1..15)=" + num(hi - lo, 3) + " (max 2), FWHM(55)-FWHM(1)=" + num(rise, 2) +
              " (min 2), nondecreasing over 15..55=" + (monotone ? "yes" : "no") + ", 20 trials, " +
              num(s.elapsed, 1) + " s";
    return {hi - lo <= 2.0 && rise >= 2.0 && monotone, detail};
}

Outcome quadratic_extrapolation() {
    const ResolutionSweep& s = resolution_sweep();
    if (!s.table.quadratic) return {false, "no quadratic fit"};
    const double c0 = s.table.quadratic->c0;
    double off1 = 0.0;
    for (const SweepRow& r : s.table.rows) {
        if (std::llround(r.sweep_value) == 1) off1 = r.mean_offset_ps;
    }
    const double lsb = static_cast<double>(default_spec(Experiment::fig3b).base_config.lsb_ps);
    const double truth = static_cast<double>(s.table.true_offset_ps);
    const bool ok = std::abs(c0 - truth) <= lsb && std::abs(c0 - off1) <= 1.0;
    return {ok, "c0=" + num(c0, 3) + " truth=" + num(truth, 0) + " (tol " + num(lsb, 0) + " LSB), offset(1 ps)=" +
                    num(off1, 3) + " |c0-offset(1)|=" + num(std::abs(c0 - off1), 3) + " (max 1)"};
}

Outcome baseline_failure_mode() {
    const auto t0 = Clock::now();
    const ExperimentSpec spec = default_spec(Experiment::fig5);
    const Fig5Report r = run_fig5(spec);
    const BaselineRow* coarse = nullptr;
    const BaselineRow* finest = nullptr;
    for (const BaselineRow& b : r.baseline) {
        if (b.bin_width_ps == 9) coarse = &b;
        if (!finest || b.bin_width_ps < finest->bin_width_ps) finest = &b;
    }
    if (!coarse || !finest) return {false, "sweep lacks a 9 ps or finest row"};
    const double direct_err = r.direct_offset_ps - static_cast<double>(r.true_offset_ps);
    std::string detail = "N=" + std::to_string(r.n_bins) + " S_p=" + num(coarse->s_p, 3) + ";";
    for (const BaselineRow& b : r.baseline) {
        detail += " " + std::to_string(b.bin_width_ps) + "ps S=" + num(b.s_max, 2) + (b.identified ? " id" : " not-id") +
                  ";";
    }
    detail += " direct=" + num(r.direct_offset_ps, 3) + " truth=" + std::to_string(r.true_offset_ps) +
              " err=" + num(direct_err, 3) + " (max 2), " + num(seconds_since(t0), 1) + " s";
    return {coarse->identified && !finest->identified && std::abs(direct_err) <= 2.0, detail};
}

Outcome threshold_reproduction() {
    const double s = threshold_sp(std::size_t{1} << 27, 0.01);
    return {std::abs(s - 6.4) <= 0.1, "threshold_sp(2^27, 0.01)=" + num(s, 4) + " (6.4 +- 0.1)"};
}

Outcome property_suite() {
    std::mt19937_64 rng(77);
    std::vector<std::string> failed;
    auto check = [&](bool ok, const std::string& name) {
        if (!ok) failed.push_back(name);
    };

    // Translation equivariance and common-shift invariance of the fine histogram.
    {
        const auto [s, i] = correlated_pair(rng, 2000, 2000, 140, 20.0, 2'000'000'000);
        const CoincidenceHistogram base = fine_scan(s, i, 140, 500, 500);
        for (const std::int64_t d : {1, 37, 1000, 123456}) {
            const CoincidenceHistogram moved = fine_scan(shift_stream(s, d), i, 140 + d, 500, 500);
            check(moved.counts == base.counts && moved.center0_ps == base.center0_ps + d, "translation");
            const CoincidenceHistogram common = fine_scan(shift_stream(s, d), shift_stream(i, d), 140, 500, 500);
            check(common.counts == base.counts && common.center0_ps == base.center0_ps, "common-shift");
        }
    }
    // Swap antisymmetry, exact on counts.
    {
        std::uniform_int_distribution<std::int64_t> off(-100'000, 100'000);
        std::uniform_int_distribution<std::int64_t> tau(0, 1000);
        for (int k = 0; k < 200; ++k) {
            const TagStream s = random_tags(rng, 150, 200'000);
            const TagStream i = random_tags(rng, 150, 200'000);
            const std::int64_t t = off(rng);
            const std::int64_t w = tau(rng);
            check(count_coincidences(s, i, t, w) == count_coincidences(i, s, -t, w), "swap");
        }
        const auto [s, i] = correlated_pair(rng, 5000, 2000, 140, 20.0, 2'000'000'000);
        const GaussianFitResult f = fit_gaussian(fine_scan(s, i, 140, 500, 500));
        const GaussianFitResult b = fit_gaussian(fine_scan(i, s, -140, 500, 500));
        check(f.converged && b.converged && std::abs(f.center_ps + b.center_ps) <= 1.0, "swap-fit");
    }
    // Bin-sum conservation.
    {
        const auto [s, i] = correlated_pair(rng, 3000, 3000, -300, 20.0, 2'000'000'000);
        for (const auto& [res, nf] : std::vector<std::pair<std::int64_t, std::int64_t>>{{1, 500}, {7, 100}, {2, 250}}) {
            const CoincidenceHistogram h = fine_scan(s, i, -300, res * nf, nf);
            const std::int64_t lo = h.lower_ps(0);
            const std::int64_t hi = h.lower_ps(h.size() - 1) + h.resolution_ps - 1;
            check(h.total() == count_in_range(s, i, lo, hi), "bin-sum");
        }
    }
    // Fit equivariance under translation and count scaling.
    {
        const Eigen::Index n = 500;
        Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n, -110.0, 389.0);
        Eigen::VectorXd y(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const double mu = 20.0 * std::exp(-std::pow(x(k) - 140.0, 2) / (2.0 * 30.0 * 30.0)) + 5.0;
            std::poisson_distribution<int> p(mu);
            y(k) = p(rng);
        }
        const GaussianFitResult base = fit_gaussian(x, y);
        for (const double d : {-1000.0, 3.0, 25000.0}) {
            const GaussianFitResult m = fit_gaussian((x.array() + d).matrix(), y);
            check(std::abs(m.center_ps - base.center_ps - d) <= 1e-8 * std::max(1.0, std::abs(d)) &&
                      std::abs(m.sigma_ps - base.sigma_ps) <= 1e-8 * base.sigma_ps,
                  "fit-translation");
        }
        for (const double a : {3.0, 1000.0}) {
            const GaussianFitResult m = fit_gaussian(x, (y * a).eval());
            check(std::abs(m.amplitude - a * base.amplitude) <= 1e-8 * a * base.amplitude &&
                      std::abs(m.center_ps - base.center_ps) <= 1e-8 * base.center_ps,
                  "fit-scaling");
        }
    }
    // FFT correlation against the direct sum.
    {
        for (std::size_t n = 2; n <= 1024; n *= 2) {
            std::uniform_int_distribution<std::int64_t> d(0, 1000);
            std::vector<std::int64_t> a(n);
            std::vector<std::int64_t> b(n);
            for (auto& v : a) v = d(rng);
            for (auto& v : b) v = d(rng);
            const auto f = cross_correlate(a, b);
            const auto g = cross_correlate_direct(a, b);
            bool same = true;
            for (std::size_t k = 0; k < n; ++k) same = same && std::abs(f[k] - g[k]) <= 1e-6 * std::max(1.0, std::abs(g[k]));
            check(same, "fft-vs-direct");
        }
    }
    std::sort(failed.begin(), failed.end());
    failed.erase(std::unique(failed.begin(), failed.end()), failed.end());
    std::string detail = "translation, swap, common-shift, bin-sum, fit equivariance, fft-vs-direct";
    if (!failed.empty()) {
        detail += "; failed:";
        for (const auto& f : failed) detail += " " + f;
    }
    return {failed.empty(), detail};
}

std::pair<TagStream, TagStream> timing_streams(std::size_t n, std::uint64_t seed) {
    // 2.5 Mcps per arm with a 140 ps correlated component on 10% of tags.
    std::mt19937_64 rng(seed);
    const auto span = static_cast<Ticks>(static_cast<double>(n) * 4e5);
    return correlated_pair(rng, n / 10, n - n / 10, 140, 30.0, span);
}

double best_fine_scan_time(const TagStream& s, const TagStream& i, int repeats) {
    double best = 1e300;
    std::int64_t total = 0;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = Clock::now();
        const CoincidenceHistogram h = fine_scan(s, i, 140, 500, 500);
        best = std::min(best, seconds_since(t0));
        total += h.total();
    }
    [[maybe_unused]] static volatile std::int64_t sink = 0;
    sink = total;
    return best;
}

Outcome performance_contract() {
    const std::size_t n = 10'000'000;
    double t1 = 0.0;
    double t2 = 0.0;
    {
        const auto [s, i] = timing_streams(n, 1);
        t1 = best_fine_scan_time(s, i, 5);
    }
    {
        const auto [s, i] = timing_streams(2 * n, 2);
        t2 = best_fine_scan_time(s, i, 5);
    }
    const double ratio = t2 / t1;
    return {ratio <= 2.3, "fine scan 500 ps: 1e7 tags " + num(t1, 3) + " s, 2e7 tags " + num(t2, 3) +
                              " s, ratio " + num(ratio, 3) + " (max 2.3, best of 5)"};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 oracle equivalence", oracle_equivalence},
        {"2 precision scaling", precision_scaling},
        {"3 headline precision", headline_precision},
        {"4 fwhm trend", fwhm_trend},
        {"5 quadratic extrapolation", quadratic_extrapolation},
        {"6 baseline failure mode", baseline_failure_mode},
        {"7 threshold", threshold_reproduction},
        {"8 property suite", property_suite},
        {"9 performance", performance_contract},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
