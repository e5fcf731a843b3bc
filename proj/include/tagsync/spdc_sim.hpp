#pragma once

#include "tagsync/stats.hpp"
#include "tagsync/timetag.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace tagsync {

/// Linear clock model: local = (1 + drift_rate) * true + offset_ps.
struct ClockModel {
    std::int64_t offset_ps = 0;
    double drift_rate = 0.0;

    friend bool operator==(const ClockModel&, const ClockModel&) = default;
};

/// Parameters of the synthetic pair source and both detection arms.
struct SourceConfig {
    double pair_rate_cps = 4560.0;
    double ta_s = 1.0;
    double g2_fwhm_ps = 0.4;
    double eta_signal = 0.5;
    double eta_idler = 0.5;
    double jitter_fwhm_signal_ps = 49.85;
    double jitter_fwhm_idler_ps = 49.85;
    double dark_rate_signal_cps = 0.0;
    double dark_rate_idler_cps = 0.0;
    std::int64_t path_delay_signal_ps = 0;
    std::int64_t path_delay_idler_ps = 0;
    ClockModel clock_signal{};
    ClockModel clock_idler{};
    std::int64_t lsb_ps = 1;
    std::uint64_t seed = 1;

    /// Expected rate of pairs detected in both arms.
    double detected_pair_rate() const { return pair_rate_cps * eta_signal * eta_idler; }
    /// FWHM of the signal-minus-idler difference spread.
    double combined_fwhm_ps() const;
    std::int64_t duration_ps() const;

    friend bool operator==(const SourceConfig&, const SourceConfig&) = default;
};

/// Throws ConfigError describing the first violated constraint.
void validate(const SourceConfig& config);

/// Reads the JSON-style key/value file; absent keys keep their defaults and
/// unknown keys are rejected.
SourceConfig load_source_config(const std::string& path);
SourceConfig parse_source_config(const std::string& json_text);
std::string to_json(const SourceConfig& config);

/// Ready-made configurations for the experiments in the bench harness.
namespace presets {
/// Common-clock precision experiment: R_c = 1140 cps, combined jitter
/// FWHM 70.5 ps, 2.5 Mcps uncorrelated singles per arm, 140 ps offset.
SourceConfig common_clock();
/// Same source, but 70 ps jitter attributed to each detector.
SourceConfig common_clock_per_detector_jitter();
/// Two independent clock references with a small relative drift that
/// broadens the peak to about 135 ps over 2.2 s.
SourceConfig two_clock();
/// 10 km fiber in the signal arm, ~620 cps pair rate, 5 s acquisition.
SourceConfig fiber_10km();
SourceConfig by_name(const std::string& name);
std::vector<std::string> names();
} // namespace presets

enum class Arm { signal, idler };

/// Pair emission times (ps, true time) plus the per-pair G2 spread. The
/// spread is shared by both photons of a pair, so it lives with the emission.
struct PairEmissions {
    std::vector<double> time_ps;
    std::vector<double> spread_ps;

    std::size_t size() const noexcept { return time_ps.size(); }
};

struct SimTruth {
    std::int64_t true_offset_ps = 0;
    std::uint64_t emitted_pairs = 0;
    std::uint64_t detected_pairs = 0;
};

struct SimulationResult {
    TagStream signal;
    TagStream idler;
    SimTruth truth;
};

using SimRng = std::mt19937_64;

/// Homogeneous Poisson emission over [0, ta_s]; sorted.
PairEmissions emit_pairs(const SourceConfig& config, SimRng& rng);

/// Detection chain for one arm: thinning, half the pair spread, jitter,
/// path delay, clock transform, dark counts, LSB quantization, clipping.
TagStream detect_arm(const PairEmissions& emissions, Arm arm, const SourceConfig& config, SimRng& rng);

/// Ground-truth signal-minus-idler offset at mid-acquisition.
std::int64_t true_offset_ps(const SourceConfig& config);

/// Deterministic in config.seed.
SimulationResult simulate(const SourceConfig& config);


} // namespace tagsync
