#pragma once

#include "tagsync/fft_baseline.hpp"
#include "tagsync/gfit.hpp"
#include "tagsync/spdc_sim.hpp"
#include "tagsync/xcorr.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tagsync {

enum class Experiment { table1, fig3b, fig4, fig5, coarse_demo };

std::string to_string(Experiment e);
/// Throws ConfigError on an unknown name.
Experiment parse_experiment(const std::string& name);

struct ExperimentSpec {
    Experiment name = Experiment::table1;
    SourceConfig base_config;
    std::size_t trials = 50;
    /// Resolutions (ps) for table1 / fig3b, acquisition times (s) for fig4,
    /// baseline bin widths (ps, rounded to the LSB) for fig5.
    std::vector<double> sweep;
    /// Empty: nothing is written.
    std::filesystem::path output_dir;
    /// Length of the separate acquisition used to locate the peak before the
    /// trials; the trials then only run the fine stage around it.
    double calibration_ta_s = 1.0;
    /// Run the coarse stage over all tags of every trial instead of the
    /// calibration run.
    bool per_trial_coarse = false;
    CoarseParams coarse{};
    std::int64_t coarse_window_ps = 500;
    /// Fine resolution for fig4.
    std::int64_t fig4_resolution_ps = 7;
    std::size_t fft_bins = std::size_t{1} << 20;
    unsigned threads = 0; // 0: hardware concurrency
};

/// Replica defaults for each experiment.
ExperimentSpec default_spec(Experiment e);

/// Throws ConfigError for an unusable spec (empty sweep, too few trials for
/// an SD-reporting experiment, ...).
void validate(const ExperimentSpec& spec);

/// Seed of trial k at sweep point j; trials of one sweep share data when the
/// experiment sweeps an analysis parameter.
std::uint64_t trial_seed(const ExperimentSpec& spec, std::size_t sweep_index, std::size_t trial);

struct SweepRow {
    double sweep_value = 0.0;
    double mean_offset_ps = 0.0;
    double sd_ps = 0.0;
    double mean_fwhm_ps = 0.0;
    double predicted_sd_ps = 0.0;
    std::size_t trials_used = 0;
    std::size_t failures = 0;
};

struct SweepTable {
    Experiment experiment = Experiment::table1;
    std::string sweep_name;
    std::vector<SweepRow> rows;
    std::int64_t true_offset_ps = 0;
    /// Fine-scan centre from calibration (unused with per_trial_coarse).
    std::int64_t center_ps = 0;
    std::optional<QuadraticFit> quadratic;
    /// fig3b: SD at the coarsest resolution exceeds the best SD at or below 9 ps.
    std::optional<bool> sd_degraded;
};

/// Fine-stage geometry used for a requested resolution: n_f is at least 100
/// and the window at least the coarse window.
struct FineGeometry {
    std::int64_t n_f = 500;
    std::int64_t tau_bw_c_ps = 500;
};
FineGeometry fine_geometry(std::int64_t resolution_ps, std::int64_t coarse_window_ps);

/// Simulates a calibration acquisition and locates the peak with the full
/// pipeline. Returns the rounded fitted offset.
std::int64_t calibrate_center(const ExperimentSpec& spec);

SweepTable run_table1(const ExperimentSpec& spec);
SweepTable run_fig3b(const ExperimentSpec& spec);
SweepTable run_fig4(const ExperimentSpec& spec);

struct BaselineRow {
    double requested_bin_width_ps = 0.0;
    std::int64_t bin_width_ps = 0;
    double s_max = 0.0;
    double s_p = 0.0;
    bool identified = false;
    std::int64_t offset_ps = 0;
    /// FFT offset minus truth, reduced into the signed fold range.
    std::int64_t residual_ps = 0;
    bool folded = false;
    bool agrees_within_bin = false;
};

struct Fig5Report {
    std::int64_t true_offset_ps = 0;
    double direct_offset_ps = 0.0;
    double direct_fwhm_ps = 0.0;
    double coarse_significance = 0.0;
    std::size_t n_bins = 0;
    std::vector<BaselineRow> baseline;
    /// Some bin width fails the baseline rule while the direct fit lands
    /// within 2 ps of the truth.
    bool baseline_fails_where_direct_succeeds = false;
};

Fig5Report run_fig5(const ExperimentSpec& spec);

struct CoarseDemoReport {
    CoarseResult coarse;
    std::int64_t true_offset_ps = 0;
};

CoarseDemoReport run_coarse_demo(const ExperimentSpec& spec);

std::string sweep_csv(const SweepTable& table);
std::string fig5_csv(const Fig5Report& report);
std::string coarse_demo_csv(const CoarseDemoReport& report);
std::string manifest_text(const ExperimentSpec& spec);

/// Runs the experiment and writes `<name>.csv` and `manifest` into
/// spec.output_dir. Returns the files written.
std::vector<std::filesystem::path> run_experiment(const ExperimentSpec& spec);

} // namespace tagsync
