#include "tagsync/bench.hpp"

#include "tagsync/pipeline.hpp"
#include "tagsync/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace tagsync {

namespace {

constexpr std::uint64_t kSweepSeedStride = 100'000;

unsigned worker_count(const ExperimentSpec& spec, std::size_t jobs) {
    unsigned n = spec.threads != 0 ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

/// Runs body(k) for k in [0, jobs); results must be stored by index.
template <typename Body>
void parallel_for(std::size_t jobs, unsigned workers, Body&& body) {
    if (workers <= 1) {
        for (std::size_t k = 0; k < jobs; ++k) body(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < jobs; k = next++) {
                try {
                    body(k);
                } catch (...) {
                    const std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

double predicted_sd(const SourceConfig& c, double ta_s) {
    const double jitter = std::hypot(c.jitter_fwhm_signal_ps, c.jitter_fwhm_idler_ps);
    return predict_precision(c.g2_fwhm_ps, jitter, c.detected_pair_rate(), ta_s).sd_ps;
}

struct TrialOutcome {
    bool ok = false;
    double center = 0.0;
    double fwhm = 0.0;
    std::string error;
};

SweepRow summarize(double value, const std::vector<TrialOutcome>& outcomes, double predicted, const std::string& label) {
    std::vector<double> centers;
    std::vector<double> fwhms;
    std::string first_error;
    for (const auto& o : outcomes) {
        if (o.ok) {
            centers.push_back(o.center);
            fwhms.push_back(o.fwhm);
        } else if (first_error.empty()) {
            first_error = o.error;
        }
    }
    SweepRow row;
    row.sweep_value = value;
    row.trials_used = centers.size();
    row.failures = outcomes.size() - centers.size();
    row.predicted_sd_ps = predicted;
    if (row.failures * 10 > outcomes.size()) {
        throw InsufficientDataError(label + ": " + std::to_string(row.failures) + " of " +
                                    std::to_string(outcomes.size()) + " trials failed; first error: " + first_error);
    }
    const Eigen::Map<const Eigen::VectorXd> c(centers.data(), static_cast<Eigen::Index>(centers.size()));
    const Eigen::Map<const Eigen::VectorXd> f(fwhms.data(), static_cast<Eigen::Index>(fwhms.size()));
    row.mean_offset_ps = c.size() ? sample_mean(c) : 0.0;
    row.sd_ps = sample_sd(c);
    row.mean_fwhm_ps = f.size() ? sample_mean(f) : 0.0;
    return row;
}

std::int64_t fine_center_for(const ExperimentSpec& spec, const TagStream& s, const TagStream& i,
                             std::int64_t calibrated) {
    if (!spec.per_trial_coarse) return calibrated;
    CoarseParams cp = spec.coarse;
    cp.segment_len_M = std::min(s.size(), i.size());
    return coarse_scan(s, i, cp).t0c_max_ps;
}

TrialOutcome fine_trial(const TagStream& s, const TagStream& i, std::int64_t center, std::int64_t resolution,
                        std::int64_t coarse_window) {
    TrialOutcome o;
    try {
        const FineGeometry g = fine_geometry(resolution, coarse_window);
        FineParams fp;
        fp.tau_bw_c_ps = g.tau_bw_c_ps;
        fp.n_f = g.n_f;
        const OffsetEstimate e = refine_offset(s, i, center, fp);
        if (!e.fit.converged) {
            o.error = "fit did not converge";
            return o;
        }
        o.ok = true;
        o.center = e.fit.center_ps;
        o.fwhm = e.fit.fwhm_ps;
    } catch (const Error& ex) {
        o.error = ex.what();
    }
    return o;
}

/// Shared driver of table1 and fig3b: one acquisition per trial, analysed at
/// every resolution.
SweepTable run_resolution_sweep(const ExperimentSpec& spec) {
    validate(spec);
    SweepTable table;
    table.experiment = spec.name;
    table.sweep_name = "resolution_ps";
    table.true_offset_ps = true_offset_ps(spec.base_config);
    table.center_ps = spec.per_trial_coarse ? 0 : calibrate_center(spec);

    std::vector<std::int64_t> resolutions;
    for (const double v : spec.sweep) resolutions.push_back(std::llround(v));
    std::vector<std::vector<TrialOutcome>> outcomes(resolutions.size(), std::vector<TrialOutcome>(spec.trials));
    parallel_for(spec.trials, worker_count(spec, spec.trials), [&](std::size_t k) {
        SourceConfig cfg = spec.base_config;
        cfg.seed = trial_seed(spec, 0, k);
        const SimulationResult sim = simulate(cfg);
        std::int64_t center = table.center_ps;
        try {
            center = fine_center_for(spec, sim.signal, sim.idler, table.center_ps);
        } catch (const Error& ex) {
            for (auto& per_res : outcomes) per_res[k].error = ex.what();
            return;
        }
        for (std::size_t j = 0; j < resolutions.size(); ++j) {
            outcomes[j][k] = fine_trial(sim.signal, sim.idler, center, resolutions[j], spec.coarse_window_ps);
        }
    });
    const double predicted = predicted_sd(spec.base_config, spec.base_config.ta_s);
    for (std::size_t j = 0; j < resolutions.size(); ++j) {
        table.rows.push_back(summarize(static_cast<double>(resolutions[j]), outcomes[j], predicted,
                                       "resolution " + std::to_string(resolutions[j]) + " ps"));
    }
    return table;
}

std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw IoError("write failure on " + path.string());
}

} // namespace

std::string to_string(Experiment e) {
    switch (e) {
    case Experiment::table1: return "table1";
    case Experiment::fig3b: return "fig3b";
    case Experiment::fig4: return "fig4";
    case Experiment::fig5: return "fig5";
    case Experiment::coarse_demo: return "coarse_demo";
    }
    return "unknown";
}

Experiment parse_experiment(const std::string& name) {
    for (const Experiment e : {Experiment::table1, Experiment::fig3b, Experiment::fig4, Experiment::fig5,
                               Experiment::coarse_demo}) {
        if (to_string(e) == name) return e;
    }
    throw ConfigError("unknown experiment '" + name + "' (expected table1, fig3b, fig4, fig5 or coarse_demo)");
}

ExperimentSpec default_spec(Experiment e) {
    ExperimentSpec spec;
    spec.name = e;
    spec.coarse.segment_len_M = 5000;
    spec.coarse.tau_bw_c_ps = 500;
    switch (e) {
    case Experiment::table1:
    case Experiment::fig3b:
        spec.base_config = presets::common_clock();
        spec.sweep = {1, 3, 5, 7, 9, 15, 25, 35, 55};
        break;
    case Experiment::fig4:
        spec.base_config = presets::common_clock();
        spec.sweep = {0.14, 0.28, 0.56, 1.0, 2.0, 4.5};
        break;
    case Experiment::fig5:
        spec.base_config = presets::fiber_10km();
        spec.sweep = {9, 4.5, 2.25};
        spec.trials = 1;
        break;
    case Experiment::coarse_demo:
        spec.base_config = presets::two_clock();
        spec.base_config.ta_s = 0.14;
        spec.trials = 1;
        break;
    }
    if (e == Experiment::table1 || e == Experiment::fig3b || e == Experiment::fig4) {
        // Common clock: the offset is known to lie within a few microseconds,
        // so the calibration scan searches +-10 us around zero over all tags.
        spec.coarse.search_center_ps = 0;
        spec.coarse.search_span_ps = 10'000'000;
    }
    return spec;
}

void validate(const ExperimentSpec& spec) {
    validate(spec.base_config);
    if (spec.trials == 0) throw ConfigError("trials must be positive");
    const bool reports_sd = spec.name == Experiment::fig3b || spec.name == Experiment::fig4;
    if (reports_sd && spec.trials < 20) throw ConfigError("SD-reporting experiments need at least 20 trials");
    if (spec.name != Experiment::coarse_demo && spec.sweep.empty()) throw ConfigError("sweep must not be empty");
    for (const double v : spec.sweep) {
        if (!(v > 0.0)) throw ConfigError("sweep values must be positive");
    }
    if (spec.name == Experiment::fig3b) {
        std::vector<std::int64_t> r;
        for (const double v : spec.sweep) r.push_back(std::llround(v));
        std::sort(r.begin(), r.end());
        if (std::unique(r.begin(), r.end()) - r.begin() < 4) {
            throw ConfigError("fig3b needs at least 4 distinct resolutions for the quadratic fit");
        }
    }
    if (!(spec.calibration_ta_s > 0.0)) throw ConfigError("calibration_ta_s must be positive");
    if (spec.coarse_window_ps <= 0 || spec.fig4_resolution_ps <= 0) throw ConfigError("widths must be positive");
}

std::uint64_t trial_seed(const ExperimentSpec& spec, std::size_t sweep_index, std::size_t trial) {
    return spec.base_config.seed + 1 + kSweepSeedStride * sweep_index + trial;
}

FineGeometry fine_geometry(std::int64_t resolution_ps, std::int64_t coarse_window_ps) {
    if (resolution_ps <= 0) throw ResolutionError("fine resolution must be positive");
    FineGeometry g;
    g.n_f = std::max<std::int64_t>((coarse_window_ps + resolution_ps - 1) / resolution_ps, 100);
    g.tau_bw_c_ps = g.n_f * resolution_ps;
    return g;
}

std::int64_t calibrate_center(const ExperimentSpec& spec) {
    SourceConfig cfg = spec.base_config;
    cfg.ta_s = spec.calibration_ta_s;
    const SimulationResult sim = simulate(cfg);
    CoarseParams cp = spec.coarse;
    cp.segment_len_M = std::min(sim.signal.size(), sim.idler.size());
    if (cp.segment_len_M == 0) throw InsufficientDataError("calibration acquisition recorded no tags");
    FineParams fp;
    fp.tau_bw_c_ps = spec.coarse_window_ps;
    fp.n_f = std::max<std::int64_t>(spec.coarse_window_ps / sim.signal.lsb_ps(), 100);
    const OffsetEstimate e = identify_offset(sim.signal, sim.idler, cp, fp);
    const std::int64_t lsb = sim.signal.lsb_ps();
    return std::llround(e.fit.center_ps / static_cast<double>(lsb)) * lsb;
}

SweepTable run_table1(const ExperimentSpec& spec) { return run_resolution_sweep(spec); }

SweepTable run_fig3b(const ExperimentSpec& spec) {
    SweepTable table = run_resolution_sweep(spec);
    std::vector<std::int64_t> r;
    std::vector<double> off;
    for (const auto& row : table.rows) {
        if (row.trials_used == 0) continue;
        r.push_back(std::llround(row.sweep_value));
        off.push_back(row.mean_offset_ps);
    }
    table.quadratic = fit_quadratic_offset(r, off);
    double best_fine = std::numeric_limits<double>::infinity();
    const SweepRow* coarsest = nullptr;
    for (const auto& row : table.rows) {
        if (row.sweep_value <= 9.0) best_fine = std::min(best_fine, row.sd_ps);
        if (!coarsest || row.sweep_value > coarsest->sweep_value) coarsest = &row;
    }
    if (coarsest && std::isfinite(best_fine)) table.sd_degraded = coarsest->sd_ps > best_fine;
    return table;
}

SweepTable run_fig4(const ExperimentSpec& spec) {
    validate(spec);
    SweepTable table;
    table.experiment = spec.name;
    table.sweep_name = "ta_s";
    table.true_offset_ps = true_offset_ps(spec.base_config);
    table.center_ps = spec.per_trial_coarse ? 0 : calibrate_center(spec);
    for (std::size_t j = 0; j < spec.sweep.size(); ++j) {
        const double ta = spec.sweep[j];
        std::vector<TrialOutcome> outcomes(spec.trials);
        parallel_for(spec.trials, worker_count(spec, spec.trials), [&](std::size_t k) {
            SourceConfig cfg = spec.base_config;
            cfg.ta_s = ta;
            cfg.seed = trial_seed(spec, j, k);
            const SimulationResult sim = simulate(cfg);
            try {
                const std::int64_t center = fine_center_for(spec, sim.signal, sim.idler, table.center_ps);
                outcomes[k] = fine_trial(sim.signal, sim.idler, center, spec.fig4_resolution_ps, spec.coarse_window_ps);
            } catch (const Error& ex) {
                outcomes[k].error = ex.what();
            }
        });
        table.rows.push_back(summarize(ta, outcomes, predicted_sd(spec.base_config, ta), "ta " + fmt(ta) + " s"));
    }
    return table;
}

Fig5Report run_fig5(const ExperimentSpec& spec) {
    validate(spec);
    const SimulationResult sim = simulate(spec.base_config);
    Fig5Report rep;
    rep.true_offset_ps = sim.truth.true_offset_ps;
    rep.n_bins = spec.fft_bins;

    FineParams fp;
    fp.tau_bw_c_ps = spec.coarse_window_ps;
    fp.n_f = std::max<std::int64_t>(spec.coarse_window_ps / sim.signal.lsb_ps(), 100);
    const OffsetEstimate direct = identify_offset(sim.signal, sim.idler, spec.coarse, fp);
    rep.direct_offset_ps = direct.fit.center_ps;
    rep.direct_fwhm_ps = direct.fit.fwhm_ps;
    rep.coarse_significance = direct.coarse.significance;
    const bool direct_ok = direct.fit.converged &&
                           std::abs(rep.direct_offset_ps - static_cast<double>(rep.true_offset_ps)) <= 2.0;

    const std::int64_t lsb = sim.signal.lsb_ps();
    for (const double requested : spec.sweep) {
        BaselineParams bp;
        bp.n_bins = spec.fft_bins;
        bp.bin_width_ps = std::max<std::int64_t>(1, std::llround(requested / static_cast<double>(lsb))) * lsb;
        const BaselineResult r = ho_identify(sim.signal, sim.idler, bp);
        BaselineRow row;
        row.requested_bin_width_ps = requested;
        row.bin_width_ps = bp.bin_width_ps;
        row.s_max = r.s_max;
        row.s_p = r.s_p;
        row.identified = r.identified;
        row.offset_ps = r.offset_ps;
        row.folded = r.folded;
        const auto fold = static_cast<std::int64_t>(bp.n_bins) * bp.bin_width_ps;
        std::int64_t d = (r.offset_ps - rep.true_offset_ps) % fold;
        if (d < 0) d += fold;
        if (d >= fold / 2) d -= fold;
        row.residual_ps = d;
        row.agrees_within_bin = r.identified && std::llabs(d) <= bp.bin_width_ps;
        if (!r.identified && direct_ok) rep.baseline_fails_where_direct_succeeds = true;
        rep.baseline.push_back(row);
    }
    return rep;
}

CoarseDemoReport run_coarse_demo(const ExperimentSpec& spec) {
    validate(spec);
    const SimulationResult sim = simulate(spec.base_config);
    CoarseDemoReport rep;
    rep.true_offset_ps = sim.truth.true_offset_ps;
    try {
        rep.coarse = coarse_scan(sim.signal, sim.idler, spec.coarse);
    } catch (const PeakNotFoundError& e) {
        rep.coarse = e.best();
    }
    return rep;
}

std::string sweep_csv(const SweepTable& t) {
    std::ostringstream os;
    os << "# experiment=" << to_string(t.experiment) << "\n";
    os << "# true_offset_ps=" << t.true_offset_ps << "\n";
    os << "# fine_center_ps=" << t.center_ps << "\n";
    if (t.quadratic) {
        os << "# c0_ps=" << fmt(t.quadratic->c0, 10) << "\n";
        os << "# c1=" << fmt(t.quadratic->c1, 10) << "\n";
        os << "# c2=" << fmt(t.quadratic->c2, 10) << "\n";
    }
    if (t.sd_degraded) os << "# sd_degraded=" << (*t.sd_degraded ? "true" : "false") << "\n";
    os << t.sweep_name << ",mean_offset_ps,sd_ps,mean_fwhm_ps,predicted_sd_ps,trials_used,failures\n";
    for (const auto& r : t.rows) {
        os << fmt(r.sweep_value) << ',' << fmt(r.mean_offset_ps, 10) << ',' << fmt(r.sd_ps) << ','
           << fmt(r.mean_fwhm_ps) << ',' << fmt(r.predicted_sd_ps) << ',' << r.trials_used << ',' << r.failures << '\n';
    }
    return os.str();
}

std::string fig5_csv(const Fig5Report& r) {
    std::ostringstream os;
    os << "# true_offset_ps=" << r.true_offset_ps << "\n";
    os << "# direct_offset_ps=" << fmt(r.direct_offset_ps, 12) << "\n";
    os << "# direct_fwhm_ps=" << fmt(r.direct_fwhm_ps) << "\n";
    os << "# coarse_significance=" << fmt(r.coarse_significance) << "\n";
    os << "# n_bins=" << r.n_bins << "\n";
    os << "# baseline_fails_where_direct_succeeds=" << (r.baseline_fails_where_direct_succeeds ? "true" : "false")
       << "\n";
    os << "requested_bin_width_ps,bin_width_ps,s_max,s_p,identified,offset_ps,residual_ps,folded,agrees_within_bin\n";
    for (const auto& b : r.baseline) {
        os << fmt(b.requested_bin_width_ps) << ',' << b.bin_width_ps << ',' << fmt(b.s_max) << ',' << fmt(b.s_p) << ','
           << (b.identified ? 1 : 0) << ',' << b.offset_ps << ',' << b.residual_ps << ',' << (b.folded ? 1 : 0) << ','
           << (b.agrees_within_bin ? 1 : 0) << '\n';
    }
    return os.str();
}

std::string coarse_demo_csv(const CoarseDemoReport& r) {
    std::ostringstream os;
    os << "# true_offset_ps=" << r.true_offset_ps << "\n";
    os << "# t0c_max_ps=" << r.coarse.t0c_max_ps << "\n";
    os << "# peak_counts=" << r.coarse.peak_counts << "\n";
    os << "# background_mean=" << fmt(r.coarse.background_mean) << "\n";
    os << "# significance=" << fmt(r.coarse.significance) << "\n";
    os << "t0c_ps,counts\n";
    for (std::size_t k = 0; k < r.coarse.neighborhood.size(); ++k) {
        os << r.coarse.neighborhood_first_ps + static_cast<std::int64_t>(k) * r.coarse.tau_bw_c_ps << ','
           << r.coarse.neighborhood[k] << '\n';
    }
    return os.str();
}

std::string manifest_text(const ExperimentSpec& spec) {
    std::ostringstream os;
    os << "experiment=" << to_string(spec.name) << "\n";
    os << "software=tagsync " << TAGSYNC_VERSION << "\n";
    os << "trials=" << spec.trials << "\n";
    os << "sweep=";
    for (std::size_t k = 0; k < spec.sweep.size(); ++k) os << (k ? "," : "") << fmt(spec.sweep[k]);
    os << "\n";
    os << "calibration_ta_s=" << fmt(spec.calibration_ta_s) << "\n";
    os << "calibration_seed=" << spec.base_config.seed << "\n";
    os << "per_trial_coarse=" << (spec.per_trial_coarse ? "true" : "false") << "\n";
    const std::size_t points = spec.name == Experiment::fig4 ? spec.sweep.size() : 1;
    for (std::size_t j = 0; j < points; ++j) {
        os << "trial_seeds[" << j << "]=" << trial_seed(spec, j, 0) << ".." << trial_seed(spec, j, spec.trials - 1)
           << "\n";
    }
    os << "config=" << to_json(spec.base_config) << "\n";
    return os.str();
}

std::vector<std::filesystem::path> run_experiment(const ExperimentSpec& spec) {
    std::string csv;
    switch (spec.name) {
    case Experiment::table1: csv = sweep_csv(run_table1(spec)); break;
    case Experiment::fig3b: csv = sweep_csv(run_fig3b(spec)); break;
    case Experiment::fig4: csv = sweep_csv(run_fig4(spec)); break;
    case Experiment::fig5: csv = fig5_csv(run_fig5(spec)); break;
    case Experiment::coarse_demo: csv = coarse_demo_csv(run_coarse_demo(spec)); break;
    }
    std::vector<std::filesystem::path> written;
    if (spec.output_dir.empty()) return written;
    std::error_code ec;
    std::filesystem::create_directories(spec.output_dir, ec);
    if (ec) throw IoError("cannot create " + spec.output_dir.string() + ": " + ec.message());
    const auto csv_path = spec.output_dir / (to_string(spec.name) + ".csv");
    write_text(csv_path, csv);
    written.push_back(csv_path);
    const auto manifest_path = spec.output_dir / "manifest";
    write_text(manifest_path, manifest_text(spec));
    written.push_back(manifest_path);
    return written;
}

} // namespace tagsync
