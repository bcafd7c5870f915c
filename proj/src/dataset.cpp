#include "blockpred/dataset.hpp"

#include "blockpred/errors.hpp"
#include "blockpred/io.hpp"
#include "blockpred/parallel.hpp"
#include "blockpred/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace blockpred {

namespace {
constexpr const char* kDatasetMagic = "blockpred-dataset v1";
} // namespace

const char* to_string(LabelMode mode) {
    return mode == LabelMode::Any ? "any" : "all";
}

LabelMode label_mode_from_string(const std::string& s) {
    if (s == "any") return LabelMode::Any;
    if (s == "all") return LabelMode::All;
    throw ConfigError("label mode must be 'any' or 'all', got '" + s + "'");
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double linear_to_db(double linear) { return 10.0 * std::log10(linear); }

LabelSequence make_labels(const ChannelTrace& trace, int device, LabelMode mode,
                          int xi, int tau, double gamma0_db) {
    if (xi < 0) throw ConfigError("xi must be >= 0");
    if (tau < 1) throw ConfigError("tau must be >= 1");
    if (device < 0 || device >= trace.devices) throw ConfigError("device index out of range");
    const int slots = trace.slots;
    if (slots <= xi + tau) throw ConfigError("trace shorter than xi + tau + 1 slots");

    const double threshold = db_to_linear(gamma0_db);
    std::vector<std::uint8_t> blocked(static_cast<std::size_t>(slots));
    for (int t = 0; t < slots; ++t) {
        blocked[static_cast<std::size_t>(t)] = is_blocked(trace.snr_at(device, t), threshold);
    }

    LabelSequence out;
    out.mode = mode;
    out.xi = xi;
    out.tau = tau;
    out.valid_count = slots - xi - tau;
    out.z.resize(static_cast<std::size_t>(out.valid_count));

    // Sliding count of blocked slots inside the window [t+xi+1, t+xi+tau].
    int count = 0;
    for (int j = xi + 1; j <= xi + tau; ++j) count += blocked[static_cast<std::size_t>(j)];
    for (int t = 0; t < out.valid_count; ++t) {
        const bool hit = mode == LabelMode::Any ? count > 0 : count == tau;
        out.z[static_cast<std::size_t>(t)] = hit ? 1 : 0;
        if (t + 1 < out.valid_count) {
            count -= blocked[static_cast<std::size_t>(t + xi + 1)];
            count += blocked[static_cast<std::size_t>(t + xi + tau + 1)];
        }
    }
    return out;
}

AffineNorm AffineNorm::from_threshold(double gamma0_db) {
    AffineNorm norm;
    norm.offset_db = gamma0_db;
    norm.scale_db = std::abs(gamma0_db) > 0.0 ? std::abs(gamma0_db) : 1.0;
    norm.clamp_value = 0.0;
    return norm;
}

ObservationSequence make_observations(const ChannelTrace& trace, int target,
                                      double gamma0_db, const AffineNorm& norm) {
    if (target < 0 || target >= trace.devices) throw ConfigError("target device out of range");
    const int devices = trace.devices;
    const int slots = trace.slots;
    const double threshold = db_to_linear(gamma0_db);

    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(devices));
    order.push_back(target);
    for (int k = 0; k < devices; ++k) {
        if (k != target) order.push_back(k);
    }

    ObservationSequence seq;
    seq.slots = slots;
    seq.devices = devices;
    seq.obs.resize(static_cast<std::size_t>(slots) * seq.row_width());
    for (int t = 0; t < slots; ++t) {
        float* row = seq.obs.data() + static_cast<std::size_t>(t) * seq.row_width();
        for (int pos = 0; pos < devices; ++pos) {
            const int k = order[static_cast<std::size_t>(pos)];
            const float snr = trace.snr_at(k, t);
            const bool flag = is_blocked(snr, threshold);
            const double feature =
                flag ? norm.clamp_value
                     : (linear_to_db(static_cast<double>(snr)) - norm.offset_db) / norm.scale_db;
            row[2 * pos] = flag ? 1.0f : 0.0f;
            row[2 * pos + 1] = static_cast<float>(feature);
        }
    }
    return seq;
}

MetaDataset build_meta_dataset(const DatasetMeta& meta, int threads) {
    meta.scenario.validate();
    if (meta.tasks < 1) throw ConfigError("task count must be >= 1");
    if (meta.xi < 0) throw ConfigError("xi must be >= 0");
    if (meta.tau < 1) throw ConfigError("tau must be >= 1");
    if (meta.slots <= meta.xi + meta.tau) throw ConfigError("slots must exceed xi + tau");

    MetaDataset ds;
    ds.meta = meta;
    ds.tasks.resize(static_cast<std::size_t>(meta.tasks));
    parallel_for(static_cast<std::size_t>(meta.tasks), threads, [&](std::size_t i) {
        TaskDataset& task = ds.tasks[i];
        task.task_id = static_cast<int>(i);
        task.scenario_seed = derive_seed(meta.master_seed, seed_tag::scenario, i);
        const ScenarioParams sp = sample_scenario(meta.scenario, task.scenario_seed);
        task.trace =
            simulate_traces(sp, meta.slots, derive_seed(meta.master_seed, seed_tag::channel, i));
        task.labels.reserve(static_cast<std::size_t>(task.devices()));
        for (int k = 0; k < task.devices(); ++k) {
            task.labels.push_back(make_labels(task.trace, k, meta.mode, meta.xi, meta.tau,
                                              meta.scenario.snr_threshold_db));
        }
    });
    return ds;
}

double positive_label_rate(const MetaDataset& ds) {
    std::uint64_t positives = 0;
    std::uint64_t total = 0;
    for (const TaskDataset& task : ds.tasks) {
        for (const LabelSequence& seq : task.labels) {
            for (int t = 0; t < seq.valid_count; ++t) {
                positives += seq.z[static_cast<std::size_t>(t)];
            }
            total += static_cast<std::uint64_t>(seq.valid_count);
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(positives) / static_cast<double>(total);
}

void save_dataset(const MetaDataset& ds, const std::string& path) {
    std::vector<std::pair<std::string, std::string>> header;
    header.emplace_back("tasks", std::to_string(ds.meta.tasks));
    header.emplace_back("slots", std::to_string(ds.meta.slots));
    header.emplace_back("label_mode", to_string(ds.meta.mode));
    header.emplace_back("xi", std::to_string(ds.meta.xi));
    header.emplace_back("tau", std::to_string(ds.meta.tau));
    header.emplace_back("master_seed", std::to_string(ds.meta.master_seed));
    for (auto& kv : scenario_key_values(ds.meta.scenario)) {
        header.push_back(kv);
    }

    std::string payload;
    const std::size_t per_task =
        8 + static_cast<std::size_t>(ds.meta.scenario.devices) * ds.meta.slots * 9;
    payload.reserve(ds.tasks.size() * per_task);
    for (const TaskDataset& task : ds.tasks) {
        put_u64(payload, task.scenario_seed);
        for (float v : task.trace.snr) put_f32(payload, v);
        for (float v : task.trace.zeta) put_f32(payload, v);
        for (const LabelSequence& seq : task.labels) {
            for (int t = 0; t < seq.valid_count; ++t) {
                put_u8(payload, seq.z[static_cast<std::size_t>(t)]);
            }
        }
    }
    write_artifact(path, kDatasetMagic, header, payload);
}

MetaDataset load_dataset(const std::string& path) {
    const Artifact art = read_artifact(path, kDatasetMagic);

    // Header damage surfaces as a format problem, not a config one.
    DatasetMeta meta;
    std::size_t scenario_keys = 0;
    try {
        meta.tasks = static_cast<int>(parse_int("tasks", require_key(art.header, "tasks")));
        meta.slots = static_cast<int>(parse_int("slots", require_key(art.header, "slots")));
        meta.mode = label_mode_from_string(require_key(art.header, "label_mode"));
        meta.xi = static_cast<int>(parse_int("xi", require_key(art.header, "xi")));
        meta.tau = static_cast<int>(parse_int("tau", require_key(art.header, "tau")));
        meta.master_seed = static_cast<std::uint64_t>(
            parse_int("master_seed", require_key(art.header, "master_seed")));
        const std::set<std::string> own = {"tasks", "slots",       "label_mode",
                                           "xi",    "tau",         "master_seed",
                                           "checksum", "payload-bytes"};
        for (const auto& [key, value] : art.header) {
            if (own.count(key)) continue;
            if (!apply_scenario_key(meta.scenario, key, value)) {
                throw FormatError(path + ": unknown dataset header key '" + key + "'");
            }
            ++scenario_keys;
        }
    } catch (const ConfigError& e) {
        throw FormatError(path + ": bad dataset header: " + e.what());
    }
    if (scenario_keys != scenario_key_values(meta.scenario).size()) {
        throw FormatError(path + ": dataset header is missing scenario keys");
    }
    if (meta.tasks < 1 || meta.slots <= meta.xi + meta.tau) {
        throw FormatError(path + ": dataset header shape is inconsistent");
    }

    MetaDataset ds;
    ds.meta = meta;
    ds.tasks.resize(static_cast<std::size_t>(meta.tasks));
    const int devices = meta.scenario.devices;
    const int valid = meta.slots - meta.xi - meta.tau;
    ByteReader reader{art.payload};
    for (int i = 0; i < meta.tasks; ++i) {
        TaskDataset& task = ds.tasks[static_cast<std::size_t>(i)];
        task.task_id = i;
        task.scenario_seed = reader.u64();
        task.trace.devices = devices;
        task.trace.slots = meta.slots;
        task.trace.scenario = sample_scenario(meta.scenario, task.scenario_seed);
        const std::size_t cells = static_cast<std::size_t>(devices) * meta.slots;
        task.trace.snr.resize(cells);
        for (std::size_t c = 0; c < cells; ++c) task.trace.snr[c] = reader.f32();
        task.trace.zeta.resize(cells);
        for (std::size_t c = 0; c < cells; ++c) task.trace.zeta[c] = reader.f32();
        task.labels.resize(static_cast<std::size_t>(devices));
        for (int k = 0; k < devices; ++k) {
            LabelSequence& seq = task.labels[static_cast<std::size_t>(k)];
            seq.mode = meta.mode;
            seq.xi = meta.xi;
            seq.tau = meta.tau;
            seq.valid_count = valid;
            seq.z.resize(static_cast<std::size_t>(valid));
            for (int t = 0; t < valid; ++t) {
                const std::uint8_t bit = reader.u8();
                if (bit > 1) throw FormatError(path + ": label byte out of range");
                seq.z[static_cast<std::size_t>(t)] = bit;
            }
        }
    }
    if (reader.pos != art.payload.size()) {
        throw FormatError(path + ": trailing bytes after last task");
    }
    return ds;
}

std::pair<TaskDataset, TaskDataset> split_sequence(const TaskDataset& task,
                                                   double first_fraction,
                                                   double second_fraction) {
    if (!(first_fraction >= 0.0) || !(second_fraction >= 0.0) ||
        std::abs(first_fraction + second_fraction - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be non-negative and sum to 1");
    }
    if (task.labels.empty()) throw ConfigError("split requires labeled task data");
    const int slots = task.slots();
    const int boundary = static_cast<int>(std::llround(first_fraction * slots));
    const int xi = task.labels.front().xi;
    const int tau = task.labels.front().tau;
    const int min_len = xi + tau + 1;
    if (boundary < min_len || slots - boundary < min_len) {
        throw ConfigError("split part shorter than xi + tau + 1 slots");
    }

    const auto slice = [&](int begin, int end) {
        TaskDataset part;
        part.task_id = task.task_id;
        part.scenario_seed = task.scenario_seed;
        part.trace.devices = task.devices();
        part.trace.slots = end - begin;
        part.trace.scenario = task.trace.scenario;
        const std::size_t width = static_cast<std::size_t>(end - begin);
        part.trace.snr.resize(static_cast<std::size_t>(part.trace.devices) * width);
        part.trace.zeta.resize(part.trace.snr.size());
        for (int k = 0; k < part.trace.devices; ++k) {
            const std::size_t src = static_cast<std::size_t>(k) * slots + begin;
            const std::size_t dst = static_cast<std::size_t>(k) * width;
            std::copy_n(task.trace.snr.begin() + src, width, part.trace.snr.begin() + dst);
            std::copy_n(task.trace.zeta.begin() + src, width, part.trace.zeta.begin() + dst);
        }
        // A label window only looks forward, so slicing the label array is
        // exactly the recomputation on the sliced trace.
        part.labels.reserve(task.labels.size());
        for (const LabelSequence& seq : task.labels) {
            LabelSequence cut;
            cut.mode = seq.mode;
            cut.xi = seq.xi;
            cut.tau = seq.tau;
            cut.valid_count = (end - begin) - xi - tau;
            cut.z.assign(seq.z.begin() + begin, seq.z.begin() + begin + cut.valid_count);
            part.labels.push_back(std::move(cut));
        }
        return part;
    };
    return {slice(0, boundary), slice(boundary, slots)};
}

void export_trace_csv(const TaskDataset& task, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    const double threshold = db_to_linear(task.trace.scenario.fading.snr_threshold_db);

    out << "slot";
    for (int k = 0; k < task.devices(); ++k) {
        out << ",snr_db_" << k << ",zeta_" << k << ",blocked_" << k;
    }
    out << "\n";
    char buf[64];
    for (int t = 0; t < task.slots(); ++t) {
        out << t;
        for (int k = 0; k < task.devices(); ++k) {
            const float snr = task.trace.snr_at(k, t);
            std::snprintf(buf, sizeof(buf), "%.9g", linear_to_db(static_cast<double>(snr)));
            out << ',' << buf;
            std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(task.trace.zeta_at(k, t)));
            out << ',' << buf << ',' << (is_blocked(snr, threshold) ? 1 : 0);
        }
        out << "\n";
    }
    if (!out.flush()) throw IoError("failed writing '" + path + "'");
}

} // namespace blockpred
