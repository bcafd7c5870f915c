#include "blockpred/config.hpp"

#include "blockpred/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace blockpred {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(static_cast<int>(parse_int(key, item)));
    }
    if (out.empty()) throw ConfigError(key + ": expected a comma-separated integer list");
    return out;
}

std::string format_int_list(const std::vector<int>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(values[i]);
    }
    return out;
}

} // namespace

void RunConfig::validate() const {
    scenario.validate();
    if (tasks < 1) throw ConfigError("tasks must be >= 1");
    if (xi < 0 || tau < 1) throw ConfigError("xi must be >= 0 and tau >= 1");
    if (slots <= xi + tau) throw ConfigError("slots must exceed xi + tau");
    dims_for(scenario.devices).validate();
    if (joint.lr <= 0.0 || joint.steps < 0) throw ConfigError("bad joint training settings");
    if (meta.alpha < 0.0 || meta.beta <= 0.0) throw ConfigError("alpha must be >= 0, beta > 0");
    if (meta.meta_batch < 1 || meta.inner_steps < 1 || meta.max_meta_iters < 0) {
        throw ConfigError("bad meta training settings");
    }
    if (meta.chunk_len < 1 || meta.trunc_len < 1 || meta.positive_weight <= 0.0) {
        throw ConfigError("chunk_len and trunc_len must be >= 1, w > 0");
    }
    if (!(meta.train_fraction > 0.0 && meta.train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie in (0, 1)");
    }
    if (adaptation.lr <= 0.0 || adaptation.epochs < 0) throw ConfigError("bad adaptation settings");
    if (eval.clean_window < 1 || eval.horizon < 0) throw ConfigError("bad eval settings");
    if (!(eval.threshold > 0.0 && eval.threshold < 1.0)) {
        throw ConfigError("threshold must lie in (0, 1)");
    }
    for (int t : t_test_list) {
        if (t < 0) throw ConfigError("t_test values must be >= 0");
    }
}

void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (apply_scenario_key(cfg.scenario, key, value)) return;

    if (key == "tasks") cfg.tasks = static_cast<int>(parse_int(key, value));
    else if (key == "slots") cfg.slots = static_cast<int>(parse_int(key, value));
    else if (key == "label_mode") cfg.mode = label_mode_from_string(value);
    else if (key == "xi") cfg.xi = static_cast<int>(parse_int(key, value));
    else if (key == "tau") cfg.tau = static_cast<int>(parse_int(key, value));
    else if (key == "hidden_in") cfg.hidden_in = static_cast<int>(parse_int(key, value));
    else if (key == "lstm_units") cfg.lstm_units = static_cast<int>(parse_int(key, value));
    else if (key == "hidden_out") cfg.hidden_out = static_cast<int>(parse_int(key, value));
    else if (key == "joint_lr") cfg.joint.lr = parse_double(key, value);
    else if (key == "joint_steps") cfg.joint.steps = static_cast<int>(parse_int(key, value));
    else if (key == "joint_optimizer") cfg.joint.optimizer = optimizer_from_string(value);
    else if (key == "alpha") cfg.meta.alpha = parse_double(key, value);
    else if (key == "beta") cfg.meta.beta = parse_double(key, value);
    else if (key == "meta_batch") cfg.meta.meta_batch = static_cast<int>(parse_int(key, value));
    else if (key == "inner_steps") cfg.meta.inner_steps = static_cast<int>(parse_int(key, value));
    else if (key == "first_order") cfg.meta.first_order = parse_bool(key, value);
    else if (key == "max_meta_iters") cfg.meta.max_meta_iters = static_cast<int>(parse_int(key, value));
    else if (key == "convergence_window")
        cfg.meta.convergence_window = static_cast<int>(parse_int(key, value));
    else if (key == "convergence_tol") cfg.meta.convergence_tol = parse_double(key, value);
    else if (key == "train_fraction") cfg.meta.train_fraction = parse_double(key, value);
    else if (key == "outer_optimizer") cfg.meta.outer_optimizer = optimizer_from_string(value);
    else if (key == "chunk_len") {
        const int v = static_cast<int>(parse_int(key, value));
        cfg.joint.chunk_len = v;
        cfg.meta.chunk_len = v;
    } else if (key == "trunc_len") {
        const int v = static_cast<int>(parse_int(key, value));
        cfg.joint.trunc_len = v;
        cfg.meta.trunc_len = v;
        cfg.adaptation.trunc_len = v;
    } else if (key == "w") {
        const double v = parse_double(key, value);
        cfg.joint.positive_weight = v;
        cfg.meta.positive_weight = v;
        cfg.adaptation.positive_weight = v;
    } else if (key == "adapt_lr") cfg.adaptation.lr = parse_double(key, value);
    else if (key == "adapt_epochs") cfg.adaptation.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "threshold") cfg.eval.threshold = parse_double(key, value);
    else if (key == "clean_window") cfg.eval.clean_window = static_cast<int>(parse_int(key, value));
    else if (key == "horizon") cfg.eval.horizon = static_cast<int>(parse_int(key, value));
    else if (key == "t_test") cfg.t_test_list = parse_int_list(key, value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "deterministic") cfg.deterministic = parse_bool(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        }
        try {
            apply_config_key(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

std::vector<std::pair<std::string, std::string>> resolved_key_values(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> kv = scenario_key_values(cfg.scenario);
    const auto add = [&](const char* k, const std::string& v) { kv.emplace_back(k, v); };
    add("tasks", std::to_string(cfg.tasks));
    add("slots", std::to_string(cfg.slots));
    add("label_mode", to_string(cfg.mode));
    add("xi", std::to_string(cfg.xi));
    add("tau", std::to_string(cfg.tau));
    add("hidden_in", std::to_string(cfg.hidden_in));
    add("lstm_units", std::to_string(cfg.lstm_units));
    add("hidden_out", std::to_string(cfg.hidden_out));
    add("joint_lr", format_double(cfg.joint.lr));
    add("joint_steps", std::to_string(cfg.joint.steps));
    add("joint_optimizer", to_string(cfg.joint.optimizer));
    add("alpha", format_double(cfg.meta.alpha));
    add("beta", format_double(cfg.meta.beta));
    add("meta_batch", std::to_string(cfg.meta.meta_batch));
    add("inner_steps", std::to_string(cfg.meta.inner_steps));
    add("first_order", cfg.meta.first_order ? "true" : "false");
    add("max_meta_iters", std::to_string(cfg.meta.max_meta_iters));
    add("convergence_window", std::to_string(cfg.meta.convergence_window));
    add("convergence_tol", format_double(cfg.meta.convergence_tol));
    add("train_fraction", format_double(cfg.meta.train_fraction));
    add("outer_optimizer", to_string(cfg.meta.outer_optimizer));
    add("chunk_len", std::to_string(cfg.meta.chunk_len));
    add("trunc_len", std::to_string(cfg.meta.trunc_len));
    add("w", format_double(cfg.meta.positive_weight));
    add("adapt_lr", format_double(cfg.adaptation.lr));
    add("adapt_epochs", std::to_string(cfg.adaptation.epochs));
    add("threshold", format_double(cfg.eval.threshold));
    add("clean_window", std::to_string(cfg.eval.clean_window));
    add("horizon", std::to_string(cfg.eval.horizon));
    add("t_test", format_int_list(cfg.t_test_list));
    add("seed", std::to_string(cfg.seed));
    add("deterministic", cfg.deterministic ? "true" : "false");
    return kv;
}

void write_resolved_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (const auto& [key, value] : resolved_key_values(cfg)) {
        out << key << " = " << value << "\n";
    }
    if (!out.flush()) throw IoError("failed writing '" + path + "'");
}

} // namespace blockpred
