#include "tagsync/cli.hpp"

#include "tagsync/bench.hpp"
#include "tagsync/fft_baseline.hpp"
#include "tagsync/pipeline.hpp"
#include "tagsync/spdc_sim.hpp"

#include <CLI11.hpp>

#include <bit>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace tagsync {

namespace {

struct UsageError : Error {
    using Error::Error;
};

/// Key-value or single-row CSV report, in insertion order.
class Report {
public:
    void add(const std::string& key, const std::string& value) { items_.emplace_back(key, value); }
    void add(const std::string& key, double value) {
        std::ostringstream os;
        os << std::setprecision(10) << value;
        add(key, os.str());
    }
    void add(const std::string& key, std::int64_t value) { add(key, std::to_string(value)); }
    void add(const std::string& key, std::size_t value) { add(key, std::to_string(value)); }
    void add(const std::string& key, bool value) { add(key, std::string(value ? "true" : "false")); }

    void print(std::ostream& out, const std::string& format) const {
        if (format == "csv") {
            for (std::size_t k = 0; k < items_.size(); ++k) out << (k ? "," : "") << items_[k].first;
            out << '\n';
            for (std::size_t k = 0; k < items_.size(); ++k) out << (k ? "," : "") << items_[k].second;
            out << '\n';
            return;
        }
        for (const auto& [key, value] : items_) out << key << '=' << value << '\n';
    }

private:
    std::vector<std::pair<std::string, std::string>> items_;
};

void add_coarse(Report& r, const CoarseResult& c) {
    r.add("coarse_t0_ps", c.t0c_max_ps);
    r.add("coarse_peak_counts", c.peak_counts);
    r.add("coarse_background_mean", c.background_mean);
    r.add("coarse_background_sd", c.background_sd);
    r.add("coarse_significance", c.significance);
    r.add("coarse_false_alarm", c.false_alarm);
    r.add("coarse_candidates", c.n_candidates);
}

void add_fit(Report& r, const GaussianFitResult& f) {
    r.add("center_ps", f.center_ps);
    r.add("fwhm_ps", f.fwhm_ps);
    r.add("sigma_ps", f.sigma_ps);
    r.add("amplitude", f.amplitude);
    r.add("baseline", f.baseline);
    r.add("residual_rms", f.residual_rms);
    r.add("converged", f.converged);
    r.add("iterations", static_cast<std::int64_t>(f.iterations));
}

std::size_t parse_bins(const std::string& text) {
    std::size_t value = 0;
    try {
        std::size_t used = 0;
        if (text.rfind("2^", 0) == 0) {
            const int e = std::stoi(text.substr(2), &used);
            if (used != text.size() - 2 || e < 0 || e > 40) throw UsageError("bad exponent");
            value = std::size_t{1} << e;
        } else {
            const unsigned long long v = std::stoull(text, &used);
            if (used != text.size()) throw UsageError("trailing characters");
            value = static_cast<std::size_t>(v);
        }
    } catch (const std::exception&) {
        throw UsageError("--bins: cannot parse '" + text + "'");
    }
    if (!std::has_single_bit(value)) throw UsageError("--bins must be a power of two, got " + text);
    if (value < 16 || value > kMaxFftBins) throw UsageError("--bins must lie between 16 and 2^27, got " + text);
    return value;
}

std::string banner() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << "# tagsync " << TAGSYNC_VERSION << " " << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << text;
    if (!f) throw IoError("write failure on " + path);
}

struct SimulateArgs {
    std::string config;
    std::string preset;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<double> ta;
    std::string format = "binary";
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    if (a.config.empty() == a.preset.empty()) throw UsageError("simulate: give exactly one of --config or --preset");
    SourceConfig cfg = a.config.empty() ? presets::by_name(a.preset) : load_source_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (a.ta) cfg.ta_s = *a.ta;
    validate(cfg);
    const StreamFormat fmt = a.format == "csv" ? StreamFormat::csv : StreamFormat::binary;
    const SimulationResult sim = simulate(cfg);
    const std::string sig = a.out + "_signal";
    const std::string idl = a.out + "_idler";
    const std::string tru = a.out + "_truth";
    save_stream(sim.signal, sig, fmt);
    save_stream(sim.idler, idl, fmt);
    Report truth;
    truth.add("true_offset_ps", sim.truth.true_offset_ps);
    truth.add("emitted_pairs", static_cast<std::int64_t>(sim.truth.emitted_pairs));
    truth.add("detected_pairs", static_cast<std::int64_t>(sim.truth.detected_pairs));
    truth.add("seed", static_cast<std::int64_t>(cfg.seed));
    std::ostringstream ts;
    truth.print(ts, "kv");
    write_file(tru, ts.str());

    out << "config=" << to_json(cfg) << '\n';
    Report r;
    r.add("signal_path", sig);
    r.add("idler_path", idl);
    r.add("truth_path", tru);
    r.add("signal_tags", sim.signal.size());
    r.add("idler_tags", sim.idler.size());
    r.print(out, "kv");
    truth.print(out, "kv");
    return kExitOk;
}

struct CorrelateArgs {
    std::string signal;
    std::string idler;
    std::int64_t coarse_bw = 500;
    std::optional<std::int64_t> fine_res;
    std::size_t m = 5000;
    std::int64_t nf = 500;
    std::optional<std::int64_t> search_span;
    std::optional<std::int64_t> search_center;
    std::string hist;
    std::string format = "kv";
};

int cmd_correlate(const CorrelateArgs& a, std::ostream& out, std::ostream& err) {
    const TagStream s = load_stream(a.signal).stream;
    const TagStream i = load_stream(a.idler).stream;
    const std::int64_t lsb = s.lsb_ps();
    if (i.lsb_ps() != lsb) throw ValidationError("signal and idler LSBs differ");
    if (a.coarse_bw < lsb || a.coarse_bw % lsb != 0) {
        throw UsageError("--coarse-bw must be a positive multiple of the " + std::to_string(lsb) + " ps LSB");
    }
    std::int64_t nf = a.nf;
    if (a.fine_res) {
        if (*a.fine_res < lsb) {
            throw UsageError("--fine-res " + std::to_string(*a.fine_res) + " ps is below the " + std::to_string(lsb) +
                             " ps LSB of the recording");
        }
        nf = a.coarse_bw / *a.fine_res;
    }
    if (nf < 100) {
        throw UsageError("fine stage needs at least 100 steps per coarse bin, have " + std::to_string(nf) +
                         "; widen --coarse-bw or refine --fine-res");
    }
    if (a.coarse_bw / nf < lsb) {
        throw UsageError("fine resolution " + std::to_string(a.coarse_bw) + "/" + std::to_string(nf) +
                         " ps is below the LSB");
    }

    CoarseParams cp;
    cp.segment_len_M = std::min({a.m, s.size(), i.size()});
    if (cp.segment_len_M < a.m) {
        err << "note: streams hold fewer than " << a.m << " tags; coarse segment uses " << cp.segment_len_M << "\n";
    }
    if (cp.segment_len_M == 0) throw ValidationError("correlate: a stream is empty");
    cp.tau_bw_c_ps = a.coarse_bw;
    cp.search_span_ps = a.search_span;
    cp.search_center_ps = a.search_center;
    FineParams fp;
    fp.tau_bw_c_ps = a.coarse_bw;
    fp.n_f = nf;

    Report r;
    try {
        const OffsetEstimate e = identify_offset(s, i, cp, fp);
        if (!a.hist.empty()) save_histogram_csv(e.histogram, a.hist);
        r.add("coarse_segment_len", cp.segment_len_M);
        add_coarse(r, e.coarse);
        r.add("fine_resolution_ps", e.histogram.resolution_ps);
        r.add("fine_bins", e.histogram.size());
        r.add("fine_center_ps", e.fine_center_ps);
        add_fit(r, e.fit);
        r.print(out, a.format);
        return e.fit.converged ? kExitOk : kExitNotIdentified;
    } catch (const PeakNotFoundError& ex) {
        err << "peak not found: " << ex.what() << "\n";
        r.add("coarse_segment_len", cp.segment_len_M);
        add_coarse(r, ex.best());
        r.print(out, a.format);
        return kExitNotIdentified;
    }
}

struct BaselineArgs {
    std::string signal;
    std::string idler;
    std::string bins = "1048576";
    std::int64_t bin_width = 9;
    double alpha = 0.01;
    std::size_t exclusion = 5;
    int iterations = 0;
    std::string trace;
    std::string format = "kv";
};

int cmd_baseline(const BaselineArgs& a, std::ostream& out) {
    BaselineParams p;
    p.n_bins = parse_bins(a.bins);
    if (a.bin_width <= 0) throw UsageError("--bin-width must be positive");
    if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
    if (a.exclusion == 0) throw UsageError("--exclusion must be positive");
    if (a.iterations < 0) throw UsageError("--iterations must be nonnegative");
    p.bin_width_ps = a.bin_width;
    p.false_alarm_alpha = a.alpha;
    p.peak_exclusion_bins = a.exclusion;
    p.max_halvings = a.iterations;
    const TagStream s = load_stream(a.signal).stream;
    const TagStream i = load_stream(a.idler).stream;
    const std::vector<BaselineResult> stages = ho_identify_iterative(s, i, p);
    if (!a.trace.empty()) save_trace_csv(stages.front(), a.trace);
    for (std::size_t k = 0; k < stages.size(); ++k) {
        const BaselineResult& b = stages[k];
        Report r;
        if (stages.size() > 1) r.add("stage", k);
        r.add("bin_width_ps", b.bin_width_ps);
        r.add("n_bins", b.n_bins);
        r.add("s_max", b.s_max);
        r.add("s_p", b.s_p);
        r.add("k_max", b.k_max);
        r.add("offset_ps", b.offset_ps);
        r.add("identified", b.identified);
        r.add("folded", b.folded);
        r.print(out, a.format);
    }
    return stages.front().identified ? kExitOk : kExitNotIdentified;
}

struct SweepArgs {
    std::string experiment;
    std::string out = "sweep_out";
    std::optional<std::size_t> trials;
    std::optional<std::uint64_t> seed;
    std::optional<double> calibration_ta;
    bool per_trial_coarse = false;
    std::optional<std::string> fft_bins;
};

int cmd_sweep(const SweepArgs& a, unsigned threads, std::ostream& out) {
    ExperimentSpec spec = default_spec(parse_experiment(a.experiment));
    if (a.trials) spec.trials = *a.trials;
    if (a.seed) spec.base_config.seed = *a.seed;
    if (a.calibration_ta) spec.calibration_ta_s = *a.calibration_ta;
    if (a.fft_bins) spec.fft_bins = parse_bins(*a.fft_bins);
    spec.per_trial_coarse = a.per_trial_coarse;
    spec.output_dir = a.out;
    spec.threads = threads;
    for (const auto& path : run_experiment(spec)) out << "wrote " << path.string() << '\n';
    return kExitOk;
}

int cmd_report(const std::string& path, bool poisson_weights, const std::string& format, std::ostream& out) {
    const CoincidenceHistogram h = load_histogram_csv(path);
    FitOptions opt;
    opt.poisson_weights = poisson_weights;
    const GaussianFitResult f = fit_gaussian(h, opt);
    Report r;
    r.add("resolution_ps", h.resolution_ps);
    r.add("bins", h.size());
    r.add("total_counts", h.total());
    add_fit(r, f);
    r.print(out, format);
    return f.converged ? kExitOk : kExitNotIdentified;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Coincidence identification and time-offset estimation for time-tagged photon streams", "tagsync"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(TAGSYNC_VERSION));
    bool no_banner = false;
    unsigned threads = 0;
    app.add_flag("--no-banner", no_banner, "Omit the timestamped banner line");
    app.add_option("--threads", threads, "Cap on worker threads (0: all cores)")->capture_default_str();

    SimulateArgs sim;
    auto* simulate_cmd = app.add_subcommand("simulate", "Generate a synthetic signal/idler pair of streams");
    simulate_cmd->add_option("--config", sim.config, "Source configuration JSON file")->check(CLI::ExistingFile);
    simulate_cmd->add_option("--preset", sim.preset, "Built-in configuration")
        ->check(CLI::IsMember(presets::names()));
    simulate_cmd->add_option("--out", sim.out, "Output prefix")->required();
    simulate_cmd->add_option("--seed", sim.seed, "Override the configured seed");
    simulate_cmd->add_option("--ta", sim.ta, "Override the acquisition time (s)");
    simulate_cmd->add_option("--format", sim.format, "Stream file format")
        ->check(CLI::IsMember({"csv", "binary"}))
        ->capture_default_str();

    CorrelateArgs cor;
    auto* correlate_cmd = app.add_subcommand("correlate", "Coarse scan, fine histogram and Gaussian fit");
    correlate_cmd->add_option("signal", cor.signal, "Signal stream file")->required()->check(CLI::ExistingFile);
    correlate_cmd->add_option("idler", cor.idler, "Idler stream file")->required()->check(CLI::ExistingFile);
    correlate_cmd->add_option("--coarse-bw", cor.coarse_bw, "Coarse resolution (ps)")->capture_default_str();
    correlate_cmd->add_option("--fine-res", cor.fine_res, "Fine resolution (ps); sets --nf to coarse-bw / fine-res [1]");
    correlate_cmd->add_option("--m", cor.m, "Coarse segment length (events)")->capture_default_str();
    correlate_cmd->add_option("--nf", cor.nf, "Fine steps per coarse bin")->capture_default_str();
    correlate_cmd->add_option("--search-span", cor.search_span, "Coarse half-range (ps) [segment span]");
    correlate_cmd->add_option("--search-center", cor.search_center, "Coarse grid anchor (ps) [first-tag difference]");
    correlate_cmd->add_option("--hist", cor.hist, "Write the fine histogram CSV here");
    correlate_cmd->add_option("--format", cor.format, "Report format")
        ->check(CLI::IsMember({"kv", "csv"}))
        ->capture_default_str();

    BaselineArgs base;
    auto* baseline_cmd = app.add_subcommand("baseline", "FFT cross-correlation with the significance rule");
    baseline_cmd->add_option("signal", base.signal, "Signal stream file")->required()->check(CLI::ExistingFile);
    baseline_cmd->add_option("idler", base.idler, "Idler stream file")->required()->check(CLI::ExistingFile);
    baseline_cmd->add_option("--bins", base.bins, "FFT length, power of two up to 2^27 (2^k accepted)")
        ->capture_default_str();
    baseline_cmd->add_option("--bin-width", base.bin_width, "Bin width (ps)")->capture_default_str();
    baseline_cmd->add_option("--alpha", base.alpha, "Expected false peaks per trace")->capture_default_str();
    baseline_cmd->add_option("--exclusion", base.exclusion, "Bins around the peak left out of the baseline")
        ->capture_default_str();
    baseline_cmd->add_option("--iterations", base.iterations, "Bin-width halvings while identified")
        ->capture_default_str();
    baseline_cmd->add_option("--trace", base.trace, "Write the significance trace CSV here");
    baseline_cmd->add_option("--format", base.format, "Report format")
        ->check(CLI::IsMember({"kv", "csv"}))
        ->capture_default_str();

    SweepArgs sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "Run a seeded Monte-Carlo experiment and write CSV");
    sweep_cmd->add_option("experiment", sw.experiment, "table1, fig3b, fig4, fig5 or coarse_demo")
        ->required()
        ->check(CLI::IsMember({"table1", "fig3b", "fig4", "fig5", "coarse_demo"}));
    sweep_cmd->add_option("--out", sw.out, "Output directory")->capture_default_str();
    sweep_cmd->add_option("--trials", sw.trials, "Trials per sweep point [50]");
    sweep_cmd->add_option("--seed", sw.seed, "Base seed [preset seed]");
    sweep_cmd->add_option("--calibration-ta", sw.calibration_ta, "Calibration acquisition (s) [1]");
    sweep_cmd->add_flag("--per-trial-coarse", sw.per_trial_coarse, "Coarse scan every trial instead of calibrating");
    sweep_cmd->add_option("--fft-bins", sw.fft_bins, "FFT length for fig5 [2^20]");

    std::string report_path;
    bool report_weights = false;
    std::string report_format = "kv";
    auto* report_cmd = app.add_subcommand("report", "Fit a saved histogram CSV");
    report_cmd->add_option("histogram", report_path, "Histogram CSV")->required()->check(CLI::ExistingFile);
    report_cmd->add_flag("--poisson-weights", report_weights, "Weight residuals by 1/count");
    report_cmd->add_option("--format", report_format, "Report format")
        ->check(CLI::IsMember({"kv", "csv"}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (!no_banner) out << banner() << '\n';
    try {
        if (*simulate_cmd) return cmd_simulate(sim, out);
        if (*correlate_cmd) return cmd_correlate(cor, out, err);
        if (*baseline_cmd) return cmd_baseline(base, out);
        if (*sweep_cmd) return cmd_sweep(sw, threads, out);
        if (*report_cmd) return cmd_report(report_path, report_weights, report_format, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        if (*simulate_cmd) err << simulate_cmd->help();
        return kExitUsage;
    } catch (const ResolutionError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FitError& e) {
        err << "not identified: " << e.what() << "\n";
        return kExitNotIdentified;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitUsage;
}

} // namespace tagsync
