#include "blockpred/scenario.hpp"

#include "blockpred/errors.hpp"
#include "blockpred/rng.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <string>

namespace blockpred {

FadingParams fading_from_targets(double unblocked_snr_db, double k_factor_db,
                                 double snr_threshold_db, double slot_seconds) {
    if (slot_seconds <= 0.0) {
        throw ConfigError("slot duration must be > 0");
    }
    const double total = std::pow(10.0, unblocked_snr_db / 10.0);
    const double kf = std::pow(10.0, k_factor_db / 10.0);
    FadingParams fp;
    fp.unblocked_amplitude = std::sqrt(total * kf / (1.0 + kf));
    fp.diffuse_sigma = std::sqrt(total / (1.0 + kf) / 2.0);
    fp.snr_threshold_db = snr_threshold_db;
    fp.slot_seconds = slot_seconds;
    return fp;
}

void ScenarioDistribution::validate() const {
    const auto bad = [](const std::string& what) { throw ConfigError("scenario config: " + what); };
    if (devices < 1) bad("devices must be >= 1");
    if (beamwidth <= 0.0) bad("beamwidth must be > 0");
    if (objects_min < 0 || objects_min > objects_max) bad("object count range invalid");
    if (object_length_min <= 0.0 || object_length_min > object_length_max)
        bad("object length range invalid");
    if (speed_min <= 0.0 || speed_min > speed_max) bad("object speed range invalid");
    if (attenuation_db_min > attenuation_db_max) bad("attenuation range invalid");
    if (attenuation_db_max >= 0.0) bad("attenuation must be negative dB");
    if (slot_ms <= 0.0) bad("transmission interval must be > 0");
    if (area_min.x >= area_max.x || area_min.y >= area_max.y) bad("device area invalid");
}

ScenarioParams sample_scenario(const ScenarioDistribution& config, std::uint64_t seed) {
    config.validate();
    RandomStream rng(seed);
    ScenarioParams sp;
    sp.rng_seed = seed;
    sp.bs_position = config.bs_position;
    sp.beamwidth = config.beamwidth;
    sp.fading = fading_from_targets(config.unblocked_snr_db, config.k_factor_db,
                                    config.snr_threshold_db, config.slot_ms / 1000.0);
    sp.device_positions.reserve(static_cast<std::size_t>(config.devices));
    for (int k = 0; k < config.devices; ++k) {
        const double x = rng.uniform(config.area_min.x, config.area_max.x);
        const double y = rng.uniform(config.area_min.y, config.area_max.y);
        sp.device_positions.push_back({x, y});
    }
    const int count = rng.uniform_int(config.objects_min, config.objects_max);
    sp.objects.reserve(static_cast<std::size_t>(count));
    for (int m = 0; m < count; ++m) {
        BlockageObject obj;
        obj.arc_length = rng.uniform(config.object_length_min, config.object_length_max);
        obj.speed = rng.uniform(config.speed_min, config.speed_max);
        obj.initial_phase = rng.uniform();
        obj.attenuation_db = rng.uniform(config.attenuation_db_min, config.attenuation_db_max);
        sp.objects.push_back(obj);
    }
    return sp;
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + value + "'");
    }
    while (used < value.size() && std::isspace(static_cast<unsigned char>(value[used]))) ++used;
    if (used != value.size() || !std::isfinite(out)) {
        throw ConfigError(key + ": expected a number, got '" + value + "'");
    }
    return out;
}

long long parse_int(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(value, &used);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + value + "'");
    }
    while (used < value.size() && std::isspace(static_cast<unsigned char>(value[used]))) ++used;
    if (used != value.size()) {
        throw ConfigError(key + ": expected an integer, got '" + value + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // Prefer the shortest representation that still round-trips.
    for (int prec = 1; prec < 17; ++prec) {
        char probe[64];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
        if (std::stod(probe) == v) return probe;
    }
    return buf;
}

std::vector<std::pair<std::string, std::string>> scenario_key_values(const ScenarioDistribution& d) {
    const auto num = [](double v) { return format_double(v); };
    return {
        {"devices", std::to_string(d.devices)},
        {"unblocked_snr_db", num(d.unblocked_snr_db)},
        {"k_factor_db", num(d.k_factor_db)},
        {"beamwidth", num(d.beamwidth)},
        {"snr_threshold_db", num(d.snr_threshold_db)},
        {"objects_min", std::to_string(d.objects_min)},
        {"objects_max", std::to_string(d.objects_max)},
        {"object_length_min", num(d.object_length_min)},
        {"object_length_max", num(d.object_length_max)},
        {"speed_min", num(d.speed_min)},
        {"speed_max", num(d.speed_max)},
        {"attenuation_db_min", num(d.attenuation_db_min)},
        {"attenuation_db_max", num(d.attenuation_db_max)},
        {"slot_ms", num(d.slot_ms)},
        {"bs_x", num(d.bs_position.x)},
        {"bs_y", num(d.bs_position.y)},
        {"area_min_x", num(d.area_min.x)},
        {"area_min_y", num(d.area_min.y)},
        {"area_max_x", num(d.area_max.x)},
        {"area_max_y", num(d.area_max.y)},
    };
}

bool apply_scenario_key(ScenarioDistribution& d, const std::string& key,
                        const std::string& value) {
    if (key == "devices") d.devices = static_cast<int>(parse_int(key, value));
    else if (key == "unblocked_snr_db") d.unblocked_snr_db = parse_double(key, value);
    else if (key == "k_factor_db") d.k_factor_db = parse_double(key, value);
    else if (key == "beamwidth") d.beamwidth = parse_double(key, value);
    else if (key == "snr_threshold_db") d.snr_threshold_db = parse_double(key, value);
    else if (key == "objects_min") d.objects_min = static_cast<int>(parse_int(key, value));
    else if (key == "objects_max") d.objects_max = static_cast<int>(parse_int(key, value));
    else if (key == "object_length_min") d.object_length_min = parse_double(key, value);
    else if (key == "object_length_max") d.object_length_max = parse_double(key, value);
    else if (key == "speed_min") d.speed_min = parse_double(key, value);
    else if (key == "speed_max") d.speed_max = parse_double(key, value);
    else if (key == "attenuation_db_min") d.attenuation_db_min = parse_double(key, value);
    else if (key == "attenuation_db_max") d.attenuation_db_max = parse_double(key, value);
    else if (key == "slot_ms") d.slot_ms = parse_double(key, value);
    else if (key == "bs_x") d.bs_position.x = parse_double(key, value);
    else if (key == "bs_y") d.bs_position.y = parse_double(key, value);
    else if (key == "area_min_x") d.area_min.x = parse_double(key, value);
    else if (key == "area_min_y") d.area_min.y = parse_double(key, value);
    else if (key == "area_max_x") d.area_max.x = parse_double(key, value);
    else if (key == "area_max_y") d.area_max.y = parse_double(key, value);
    else return false;
    return true;
}

} // namespace blockpred
