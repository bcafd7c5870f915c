#pragma once

#include "blockpred/dataset.hpp"
#include "blockpred/evaluation.hpp"
#include "blockpred/model.hpp"
#include "blockpred/scenario.hpp"
#include "blockpred/training.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace blockpred {

// Merged run configuration. chunk_len, trunc_len and w are shared between
// the joint, meta and adaptation trainers.
struct RunConfig {
    ScenarioDistribution scenario;
    int tasks = 100;
    int slots = 10000;
    LabelMode mode = LabelMode::Any;
    int xi = 0;
    int tau = 25;

    int hidden_in = 128;
    int lstm_units = 128;
    int hidden_out = 128;

    JointConfig joint;
    MetaConfig meta;
    AdaptConfig adaptation;
    EvalConfig eval;
    std::vector<int> t_test_list = {500};

    std::uint64_t seed = 1;
    bool deterministic = false;

    ModelDims dims_for(int devices) const {
        return ModelDims{2 * devices, hidden_in, lstm_units, hidden_out};
    }
    void validate() const;
};

// key = value lines, '#' comments. Unknown keys are hard errors that name
// the key. Later lines override earlier ones.
RunConfig parse_config_file(const std::string& path);

// Applies one key; throws ConfigError for unknown keys or bad values.
void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

// Full dump of every supported key at its current value.
std::vector<std::pair<std::string, std::string>> resolved_key_values(const RunConfig& cfg);

// Writes the resolved config in the same key = value format parse reads.
void write_resolved_config(const RunConfig& cfg, const std::string& path);

} // namespace blockpred
