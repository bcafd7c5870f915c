#pragma once

#include "blockpred/geometry.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace blockpred {

// Fading constants for one cell. Amplitudes are linear; the threshold is
// kept in dB because labels and observations are defined in dB terms.
struct FadingParams {
    double unblocked_amplitude = 0.0; // dominant-path amplitude when clear
    double diffuse_sigma = 0.0;       // std of each diffuse quadrature component
    double snr_threshold_db = -20.0;  // gamma0
    double slot_seconds = 0.05;
};

// Solve A^2 + 2*sigma^2 = unblocked SNR and A^2/(2*sigma^2) = K-factor.
FadingParams fading_from_targets(double unblocked_snr_db, double k_factor_db,
                                 double snr_threshold_db, double slot_seconds);

struct BlockageObject {
    double arc_length = 0.05;    // curve-length units
    double speed = 0.0;          // loops per second, constant
    double initial_phase = 0.0;  // fraction of a loop in [0,1)
    double attenuation_db = 0.0; // dominant-path power drop at full occlusion, < 0
};

struct ScenarioParams {
    std::vector<Vec2> device_positions;
    Vec2 bs_position{-1.3, 0.0};
    double beamwidth = 0.025;
    std::vector<BlockageObject> objects;
    FadingParams fading;
    std::uint64_t rng_seed = 0;
};

// Distribution a cell is drawn from; defaults follow the standard evaluation
// parameter set (uniform device layout, 2-5 objects, etc.).
struct ScenarioDistribution {
    int devices = 20;
    double unblocked_snr_db = 0.0;
    double k_factor_db = 15.0;
    double beamwidth = 0.025;
    double snr_threshold_db = -20.0;
    int objects_min = 2;
    int objects_max = 5;
    double object_length_min = 0.05;
    double object_length_max = 0.05;
    double speed_min = 0.005; // loops per second
    double speed_max = 0.01;
    double attenuation_db_min = -30.0;
    double attenuation_db_max = -10.0;
    double slot_ms = 50.0;
    Vec2 bs_position{-1.3, 0.0};
    Vec2 area_min{-1.0, -0.5};
    Vec2 area_max{1.0, 0.5};

    void validate() const; // throws ConfigError on min > max etc.
};

/// Deterministic in (config, seed). Draw order: device positions (x,y pairs),
// object count, then per object length, speed, phase, attenuation.
ScenarioParams sample_scenario(const ScenarioDistribution& config, std::uint64_t seed);

// Key-value form used both in config files and in dataset headers; the key
// names mirror the evaluation-parameter table (see README).
std::vector<std::pair<std::string, std::string>> scenario_key_values(const ScenarioDistribution& d);

// Returns false when the key is not a scenario key; throws ConfigError on a
// malformed value.
bool apply_scenario_key(ScenarioDistribution& d, const std::string& key,
                        const std::string& value);

// Strict numeric parsing shared by the config machinery.
double parse_double(const std::string& key, const std::string& value);
long long parse_int(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::string format_double(double v); // round-trip exact

} // namespace blockpred
