#pragma once

#include "blockpred/channel.hpp"
#include "blockpred/scenario.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace blockpred {

enum class LabelMode : std::uint8_t { Any = 0, All = 1 };

const char* to_string(LabelMode mode);
LabelMode label_mode_from_string(const std::string& s);

// Shared threshold comparison: a slot is blocked when gamma <= gamma0.
inline bool is_blocked(float snr_linear, double threshold_linear) {
    return static_cast<double>(snr_linear) <= threshold_linear;
}

double db_to_linear(double db);
double linear_to_db(double linear);

// Any/all outage labels for one device. z[t] is defined for t < valid_count;
// the final xi+tau slots have no complete prediction window and are excluded
// from losses and metrics rather than zero-filled.
struct LabelSequence {
    std::vector<std::uint8_t> z;
    int valid_count = 0;
    LabelMode mode = LabelMode::Any;
    int xi = 0;
    int tau = 1;
};

// ANY: z_t = 1 iff any of gamma_{k,t+xi+1..t+xi+tau} <= gamma0.
// ALL: z_t = 1 iff all of them are.
LabelSequence make_labels(const ChannelTrace& trace, int device, LabelMode mode,
                          int xi, int tau, double gamma0_db);

// SNR features are dB values affinely normalized by fixed constants; slots at
// or below the threshold expose only the availability flag and the clamp.
struct AffineNorm {
    double offset_db = -20.0;
    double scale_db = 20.0;
    double clamp_value = 0.0;

    static AffineNorm from_threshold(double gamma0_db);
};

// T x 2K rows of (blocked_flag, snr_feature) tuples, target device first,
// remaining devices in ascending index order.
struct ObservationSequence {
    int slots = 0;
    int devices = 0;
    std::vector<float> obs;

    int row_width() const { return 2 * devices; }
    const float* row(int t) const {
        return obs.data() + static_cast<std::size_t>(t) * row_width();
    }
};

ObservationSequence make_observations(const ChannelTrace& trace, int target,
                                      double gamma0_db, const AffineNorm& norm);

struct TaskDataset {
    int task_id = 0;
    std::uint64_t scenario_seed = 0;
    ChannelTrace trace;
    std::vector<LabelSequence> labels; // one per device

    int devices() const { return trace.devices; }
    int slots() const { return trace.slots; }
};

struct DatasetMeta {
    ScenarioDistribution scenario;
    LabelMode mode = LabelMode::Any;
    int xi = 0;
    int tau = 25;
    int tasks = 100;
    int slots = 10000;
    std::uint64_t master_seed = 0;
};

struct MetaDataset {
    DatasetMeta meta;
    std::vector<TaskDataset> tasks;
};

MetaDataset build_meta_dataset(const DatasetMeta& meta, int threads);

// Fraction of positive labels among valid slots, over every device sequence.
double positive_label_rate(const MetaDataset& ds);

// Single-file container: text header (config, checksum) + little-endian
// payload of f32 SNR/zeta arrays and u8 label arrays per task.
void save_dataset(const MetaDataset& ds, const std::string& path);
MetaDataset load_dataset(const std::string& path);

// Prefix/suffix partition at a slot boundary; label validity tails are
// recomputed per part. Fractions must sum to 1 and each part must keep at
// least one valid labeled slot.
std::pair<TaskDataset, TaskDataset> split_sequence(const TaskDataset& task,
                                                   double first_fraction,
                                                   double second_fraction);

// One trace as CSV for inspection: slot, then per device snr_db/zeta/blocked.
void export_trace_csv(const TaskDataset& task, const std::string& path);

} // namespace blockpred
