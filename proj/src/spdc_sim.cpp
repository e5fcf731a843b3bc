#include "tagsync/spdc_sim.hpp"

#include "tagsync/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tagsync {

namespace {

constexpr double kPsPerSecond = 1e12;
constexpr double kMaxExpectedEvents = 1e9;

double per_arm_jitter_for_combined(double combined_fwhm, double g2_fwhm) {
    return std::sqrt((combined_fwhm * combined_fwhm - g2_fwhm * g2_fwhm) / 2.0);
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

// Sorted Poisson arrivals on [0, duration] quantized to the LSB grid.
void append_dark_counts(std::vector<Ticks>& out, double rate_cps, std::int64_t duration_ps, std::int64_t lsb,
                        SimRng& rng) {
    if (rate_cps <= 0.0 || duration_ps <= 0) return;
    const double expected = rate_cps * static_cast<double>(duration_ps) / kPsPerSecond;
    if (expected > kMaxExpectedEvents) {
        throw CapacityError("expected dark count " + std::to_string(expected) + " exceeds capacity");
    }
    out.reserve(out.size() + static_cast<std::size_t>(expected + 6.0 * std::sqrt(expected) + 16.0));
    std::exponential_distribution<double> gap(rate_cps / kPsPerSecond);
    const Ticks last_tick = duration_ps / lsb;
    const double dlsb = static_cast<double>(lsb);
    double t = gap(rng);
    while (t <= static_cast<double>(duration_ps)) {
        const Ticks q = std::llround(t / dlsb);
        if (q <= last_tick) out.push_back(q);
        t += gap(rng);
    }
}

TagStream detect_arm_impl(const PairEmissions& emissions, Arm arm, const SourceConfig& config, SimRng& rng,
                          std::vector<char>* kept_mask) {
    const bool is_signal = arm == Arm::signal;
    const double eta = is_signal ? config.eta_signal : config.eta_idler;
    const double jitter_sigma = (is_signal ? config.jitter_fwhm_signal_ps : config.jitter_fwhm_idler_ps) / kFwhmPerSigma;
    const double delay = static_cast<double>(is_signal ? config.path_delay_signal_ps : config.path_delay_idler_ps);
    const ClockModel& clock = is_signal ? config.clock_signal : config.clock_idler;
    const double half_sign = is_signal ? 0.5 : -0.5;
    const std::int64_t duration = config.duration_ps();
    const std::int64_t lsb = config.lsb_ps;

    std::bernoulli_distribution keep(std::clamp(eta, 0.0, 1.0));
    std::normal_distribution<double> jitter(0.0, jitter_sigma > 0.0 ? jitter_sigma : 1.0);

    if (kept_mask) kept_mask->assign(emissions.size(), 0);
    std::vector<double> arrivals;
    arrivals.reserve(static_cast<std::size_t>(static_cast<double>(emissions.size()) * eta) + 16);
    for (std::size_t k = 0; k < emissions.size(); ++k) {
        if (!keep(rng)) continue;
        if (kept_mask) (*kept_mask)[k] = 1;
        double t = emissions.time_ps[k] + half_sign * emissions.spread_ps[k] + delay;
        if (jitter_sigma > 0.0) t += jitter(rng);
        t = (1.0 + clock.drift_rate) * t + static_cast<double>(clock.offset_ps);
        arrivals.push_back(t);
    }
    std::sort(arrivals.begin(), arrivals.end());

    const Ticks last_tick = duration / lsb;
    std::vector<Ticks> photons;
    photons.reserve(arrivals.size());
    for (double t : arrivals) {
        const Ticks q = std::llround(t / static_cast<double>(lsb));
        if (q >= 0 && q <= last_tick) photons.push_back(q);
    }

    std::vector<Ticks> darks;
    append_dark_counts(darks, is_signal ? config.dark_rate_signal_cps : config.dark_rate_idler_cps, duration, lsb, rng);

    std::vector<Ticks> merged;
    merged.reserve(photons.size() + darks.size());
    std::merge(photons.begin(), photons.end(), darks.begin(), darks.end(), std::back_inserter(merged));
    return TagStream(std::move(merged), lsb, duration, is_signal ? "signal" : "idler");
}

} // namespace

double SourceConfig::combined_fwhm_ps() const {
    return std::sqrt(g2_fwhm_ps * g2_fwhm_ps + jitter_fwhm_signal_ps * jitter_fwhm_signal_ps +
                     jitter_fwhm_idler_ps * jitter_fwhm_idler_ps);
}

std::int64_t SourceConfig::duration_ps() const { return std::llround(ta_s * kPsPerSecond); }

void validate(const SourceConfig& c) {
    require(finite_nonneg(c.pair_rate_cps), "pair_rate_cps must be finite and nonnegative");
    require(std::isfinite(c.ta_s) && c.ta_s > 0.0, "ta_s must be positive");
    require(c.ta_s <= 1e4, "ta_s above 1e4 s would overflow picosecond tags");
    require(finite_nonneg(c.g2_fwhm_ps), "g2_fwhm_ps must be finite and nonnegative");
    require(c.eta_signal >= 0.0 && c.eta_signal <= 1.0, "eta_signal must lie in [0, 1]");
    require(c.eta_idler >= 0.0 && c.eta_idler <= 1.0, "eta_idler must lie in [0, 1]");
    require(finite_nonneg(c.jitter_fwhm_signal_ps), "jitter_fwhm_signal_ps must be finite and nonnegative");
    require(finite_nonneg(c.jitter_fwhm_idler_ps), "jitter_fwhm_idler_ps must be finite and nonnegative");
    require(finite_nonneg(c.dark_rate_signal_cps), "dark_rate_signal_cps must be finite and nonnegative");
    require(finite_nonneg(c.dark_rate_idler_cps), "dark_rate_idler_cps must be finite and nonnegative");
    require(c.path_delay_signal_ps >= 0, "path_delay_signal_ps must be nonnegative");
    require(c.path_delay_idler_ps >= 0, "path_delay_idler_ps must be nonnegative");
    require(std::abs(c.clock_signal.drift_rate) < 1e-6, "clock_signal.drift_rate must satisfy |drift| < 1e-6");
    require(std::abs(c.clock_idler.drift_rate) < 1e-6, "clock_idler.drift_rate must satisfy |drift| < 1e-6");
    require(c.lsb_ps >= 1, "lsb_ps must be >= 1");
}

SourceConfig parse_source_config(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");

    SourceConfig c;
    auto clock_from = [](const nlohmann::json& node, const std::string& name) {
        if (!node.is_object()) throw ConfigError(name + " must be an object");
        ClockModel m;
        for (const auto& [key, value] : node.items()) {
            if (key == "offset_ps") m.offset_ps = value.get<std::int64_t>();
            else if (key == "drift_rate") m.drift_rate = value.get<double>();
            else throw ConfigError("unknown key '" + key + "' in " + name);
        }
        return m;
    };
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "pair_rate_cps") c.pair_rate_cps = value.get<double>();
            else if (key == "ta_s") c.ta_s = value.get<double>();
            else if (key == "g2_fwhm_ps") c.g2_fwhm_ps = value.get<double>();
            else if (key == "eta_signal") c.eta_signal = value.get<double>();
            else if (key == "eta_idler") c.eta_idler = value.get<double>();
            else if (key == "jitter_fwhm_signal_ps") c.jitter_fwhm_signal_ps = value.get<double>();
            else if (key == "jitter_fwhm_idler_ps") c.jitter_fwhm_idler_ps = value.get<double>();
            else if (key == "dark_rate_signal_cps") c.dark_rate_signal_cps = value.get<double>();
            else if (key == "dark_rate_idler_cps") c.dark_rate_idler_cps = value.get<double>();
            else if (key == "path_delay_signal_ps") c.path_delay_signal_ps = value.get<std::int64_t>();
            else if (key == "path_delay_idler_ps") c.path_delay_idler_ps = value.get<std::int64_t>();
            else if (key == "clock_signal") c.clock_signal = clock_from(value, key);
            else if (key == "clock_idler") c.clock_idler = clock_from(value, key);
            else if (key == "lsb_ps") c.lsb_ps = value.get<std::int64_t>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::type_error& e) {
        throw ConfigError(std::string("config value has the wrong type: ") + e.what());
    }
    validate(c);
    return c;
}

SourceConfig load_source_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_source_config(ss.str());
}

std::string to_json(const SourceConfig& c) {
    nlohmann::ordered_json j;
    j["pair_rate_cps"] = c.pair_rate_cps;
    j["ta_s"] = c.ta_s;
    j["g2_fwhm_ps"] = c.g2_fwhm_ps;
    j["eta_signal"] = c.eta_signal;
    j["eta_idler"] = c.eta_idler;
    j["jitter_fwhm_signal_ps"] = c.jitter_fwhm_signal_ps;
    j["jitter_fwhm_idler_ps"] = c.jitter_fwhm_idler_ps;
    j["dark_rate_signal_cps"] = c.dark_rate_signal_cps;
    j["dark_rate_idler_cps"] = c.dark_rate_idler_cps;
    j["path_delay_signal_ps"] = c.path_delay_signal_ps;
    j["path_delay_idler_ps"] = c.path_delay_idler_ps;
    j["clock_signal"] = {{"offset_ps", c.clock_signal.offset_ps}, {"drift_rate", c.clock_signal.drift_rate}};
    j["clock_idler"] = {{"offset_ps", c.clock_idler.offset_ps}, {"drift_rate", c.clock_idler.drift_rate}};
    j["lsb_ps"] = c.lsb_ps;
    j["seed"] = c.seed;
    return j.dump(2);
}

namespace presets {

SourceConfig common_clock() {
    SourceConfig c;
    c.pair_rate_cps = 4560.0; // x 0.5 x 0.5 = 1140 cps detected pairs
    c.ta_s = 4.5;
    c.g2_fwhm_ps = 0.4;
    c.eta_signal = 0.5;
    c.eta_idler = 0.5;
    c.jitter_fwhm_signal_ps = per_arm_jitter_for_combined(70.5, c.g2_fwhm_ps);
    c.jitter_fwhm_idler_ps = c.jitter_fwhm_signal_ps;
    // Uncorrelated singles (unpaired photons plus darks) feeding the
    // accidental-coincidence floor.
    c.dark_rate_signal_cps = 2.5e6;
    c.dark_rate_idler_cps = 2.5e6;
    c.path_delay_signal_ps = 140;
    c.path_delay_idler_ps = 0;
    c.lsb_ps = 1;
    c.seed = 20201;
    return c;
}

SourceConfig common_clock_per_detector_jitter() {
    SourceConfig c = common_clock();
    c.jitter_fwhm_signal_ps = 70.0;
    c.jitter_fwhm_idler_ps = 70.0;
    return c;
}

SourceConfig two_clock() {
    SourceConfig c = common_clock();
    c.ta_s = 2.2;
    c.dark_rate_signal_cps = 187720.0;
    c.dark_rate_idler_cps = 187720.0;
    c.clock_idler.offset_ps = -3'217'000;
    // Fitted, not measured: a uniform smear of ~133 ps over 2.2 s brings the
    // 70.5 ps peak to ~135 ps FWHM.
    c.clock_signal.drift_rate = 6.05e-11;
    c.seed = 20202;
    return c;
}

SourceConfig fiber_10km() {
    SourceConfig c;
    c.pair_rate_cps = 9920.0; // x 0.25 x 0.25 = 620 cps detected pairs
    c.ta_s = 5.0;
    c.g2_fwhm_ps = 0.4;
    c.eta_signal = 0.25;
    c.eta_idler = 0.25;
    c.jitter_fwhm_signal_ps = per_arm_jitter_for_combined(70.5, c.g2_fwhm_ps);
    c.jitter_fwhm_idler_ps = c.jitter_fwhm_signal_ps;
    c.dark_rate_signal_cps = 4500.0;
    c.dark_rate_idler_cps = 4500.0;
    c.path_delay_signal_ps = 48'973'000; // 10 km at group index 1.468
    c.path_delay_idler_ps = 0;
    c.lsb_ps = 1;
    c.seed = 20205;
    return c;
}

SourceConfig by_name(const std::string& name) {
    if (name == "common_clock") return common_clock();
    if (name == "common_clock_per_detector_jitter") return common_clock_per_detector_jitter();
    if (name == "two_clock") return two_clock();
    if (name == "fiber_10km") return fiber_10km();
    throw ConfigError("unknown preset '" + name + "'");
}

std::vector<std::string> names() {
    return {"common_clock", "common_clock_per_detector_jitter", "two_clock", "fiber_10km"};
}

} // namespace presets

PairEmissions emit_pairs(const SourceConfig& config, SimRng& rng) {
    validate(config);
    PairEmissions out;
    if (config.pair_rate_cps <= 0.0) return out;
    const double expected = config.pair_rate_cps * config.ta_s;
    if (expected > kMaxExpectedEvents) {
        throw CapacityError("expected pair count " + std::to_string(expected) + " exceeds capacity");
    }
    const auto reserve = static_cast<std::size_t>(expected + 6.0 * std::sqrt(expected) + 16.0);
    out.time_ps.reserve(reserve);
    out.spread_ps.reserve(reserve);

    std::exponential_distribution<double> gap(config.pair_rate_cps / kPsPerSecond);
    const double g2_sigma = config.g2_fwhm_ps / kFwhmPerSigma;
    std::normal_distribution<double> spread(0.0, g2_sigma > 0.0 ? g2_sigma : 1.0);
    const double span = config.ta_s * kPsPerSecond;
    for (double t = gap(rng); t <= span; t += gap(rng)) {
        out.time_ps.push_back(t);
        out.spread_ps.push_back(g2_sigma > 0.0 ? spread(rng) : 0.0);
    }
    return out;
}

TagStream detect_arm(const PairEmissions& emissions, Arm arm, const SourceConfig& config, SimRng& rng) {
    validate(config);
    return detect_arm_impl(emissions, arm, config, rng, nullptr);
}

std::int64_t true_offset_ps(const SourceConfig& c) {
    const double mid = 0.5 * c.ta_s * kPsPerSecond;
    const double ds = static_cast<double>(c.path_delay_signal_ps);
    const double di = static_cast<double>(c.path_delay_idler_ps);
    const double signal = (1.0 + c.clock_signal.drift_rate) * (mid + ds) + static_cast<double>(c.clock_signal.offset_ps);
    const double idler = (1.0 + c.clock_idler.drift_rate) * (mid + di) + static_cast<double>(c.clock_idler.offset_ps);
    return std::llround(signal - idler);
}

SimulationResult simulate(const SourceConfig& config) {
    validate(config);
    SimRng rng(config.seed);
    const PairEmissions emissions = emit_pairs(config, rng);
    std::vector<char> kept_signal;
    std::vector<char> kept_idler;
    TagStream signal = detect_arm_impl(emissions, Arm::signal, config, rng, &kept_signal);
    TagStream idler = detect_arm_impl(emissions, Arm::idler, config, rng, &kept_idler);

    SimTruth truth;
    truth.true_offset_ps = true_offset_ps(config);
    truth.emitted_pairs = emissions.size();
    for (std::size_t k = 0; k < emissions.size(); ++k) {
        truth.detected_pairs += (kept_signal[k] && kept_idler[k]) ? 1 : 0;
    }
    return {std::move(signal), std::move(idler), truth};
}

} // namespace tagsync
