#include "blockpred/training.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace blockpred {

const char* to_string(OptimizerKind kind) {
    return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "adam") return OptimizerKind::Adam;
    throw ConfigError("optimizer must be 'sgd' or 'adam', got '" + s + "'");
}

DeviceSequence device_sequence(const TaskDataset& task, int device) {
    if (device < 0 || device >= task.devices()) throw ConfigError("device index out of range");
    if (task.labels.size() != static_cast<std::size_t>(task.devices())) {
        throw ConfigError("task is missing label sequences");
    }
    const double gamma0 = task.trace.scenario.fading.snr_threshold_db;
    DeviceSequence seq;
    seq.obs = make_observations(task.trace, device, gamma0, AffineNorm::from_threshold(gamma0));
    seq.labels = task.labels[static_cast<std::size_t>(device)];
    return seq;
}

namespace {

ObservationSequence slice_observations(const ObservationSequence& obs, int begin, int end) {
    ObservationSequence out;
    out.slots = end - begin;
    out.devices = obs.devices;
    const std::size_t width = static_cast<std::size_t>(obs.row_width());
    out.obs.assign(obs.obs.begin() + begin * width, obs.obs.begin() + end * width);
    return out;
}

} // namespace

DeviceSequence slice_device_sequence(const DeviceSequence& seq, int begin, int end) {
    if (begin < 0 || end > seq.obs.slots || begin >= end) {
        throw ConfigError("slice range out of bounds");
    }
    DeviceSequence out;
    out.obs = slice_observations(seq.obs, begin, end);
    out.labels.mode = seq.labels.mode;
    out.labels.xi = seq.labels.xi;
    out.labels.tau = seq.labels.tau;
    out.labels.valid_count =
        std::max(0, (end - begin) - seq.labels.xi - seq.labels.tau);
    out.labels.z.assign(seq.labels.z.begin() + begin,
                        seq.labels.z.begin() + begin + out.labels.valid_count);
    return out;
}

std::pair<DeviceSequence, DeviceSequence> split_device_sequence(const DeviceSequence& seq,
                                                                double first_fraction) {
    if (!(first_fraction > 0.0 && first_fraction < 1.0)) {
        throw ConfigError("split fraction must lie in (0, 1)");
    }
    const int slots = seq.obs.slots;
    const int boundary = static_cast<int>(std::llround(first_fraction * slots));
    const int min_len = seq.labels.xi + seq.labels.tau + 1;
    if (boundary < min_len || slots - boundary < min_len) {
        throw ConfigError("sequence too short to split into train/test halves");
    }
    return {slice_device_sequence(seq, 0, boundary),
            slice_device_sequence(seq, boundary, slots)};
}

DeviceSequence slice_device_sequence_for_chunk(const DeviceSequence& seq, int begin, int end,
                                               int local_valid) {
    if (begin < 0 || end > seq.obs.slots || begin >= end) {
        throw ConfigError("chunk range out of bounds");
    }
    if (local_valid < 0 || local_valid > end - begin ||
        begin + local_valid > seq.labels.valid_count) {
        throw ConfigError("chunk label range out of bounds");
    }
    DeviceSequence out;
    out.obs = slice_observations(seq.obs, begin, end);
    out.labels.mode = seq.labels.mode;
    out.labels.xi = seq.labels.xi;
    out.labels.tau = seq.labels.tau;
    out.labels.valid_count = local_valid;
    out.labels.z.assign(seq.labels.z.begin() + begin, seq.labels.z.begin() + begin + local_valid);
    return out;
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "iteration,train_loss,test_loss,seconds\n";
    char buf[128];
    for (const CurvePoint& p : curve) {
        if (std::isnan(p.test_loss)) {
            std::snprintf(buf, sizeof(buf), "%lld,%.9g,,%.3f", static_cast<long long>(p.iteration),
                          p.train_loss, p.seconds);
        } else {
            std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.3f",
                          static_cast<long long>(p.iteration), p.train_loss, p.test_loss,
                          p.seconds);
        }
        out << buf << "\n";
    }
    if (!out.flush()) throw IoError("failed writing '" + path + "'");
}

} // namespace blockpred
