#pragma once

#include "blockpred/dataset.hpp"
#include "blockpred/model.hpp"
#include "blockpred/training.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace blockpred {

// A blockage onset preceded by an unbroken clean run: gamma drops to or
// below gamma0 at onset_slot, was above it at onset_slot-1, and stayed above
// it for the clean_window slots before that.
struct OnsetEvent {
    int device = 0;
    int onset_slot = 0;
    int clean_history = 0; // actual clean run length, >= clean_window
};

std::vector<OnsetEvent> extract_onset_events(const ChannelTrace& trace, int device,
                                             int clean_window, double gamma0_db);

// Stateful slot-by-slot predictor, always warmed from the sequence start.
class SequencePredictor {
  public:
    virtual ~SequencePredictor() = default;
    virtual void reset() = 0;
    virtual double advance(const float* obs_row) = 0;
};

// Repeats the target device's current blocked flag (tuple position 0).
class NaivePredictor final : public SequencePredictor {
  public:
    void reset() override {}
    double advance(const float* obs_row) override { return static_cast<double>(obs_row[0]); }
};

// Plays back the true labels; slots past the valid range read as 0.
class OraclePredictor final : public SequencePredictor {
  public:
    explicit OraclePredictor(const LabelSequence& labels) : labels_(&labels) {}
    void reset() override { cursor_ = 0; }
    double advance(const float*) override {
        const int t = cursor_++;
        if (t < labels_->valid_count) return static_cast<double>(labels_->z[static_cast<std::size_t>(t)]);
        return 0.0;
    }

  private:
    const LabelSequence* labels_;
    int cursor_ = 0;
};

template <typename T>
class NetPredictor final : public SequencePredictor {
  public:
    explicit NetPredictor(ModelParams<T> params)
        : params_(std::move(params)), state_(RecurrentState<T>::zeros(params_.dims.lstm_units)) {}
    void reset() override { state_ = RecurrentState<T>::zeros(params_.dims.lstm_units); }
    double advance(const float* obs_row) override {
        return static_cast<double>(forward_step(params_, obs_row, state_));
    }

  private:
    ModelParams<T> params_;
    RecurrentState<T> state_;
};

struct PredictionTimeRecord {
    int task_id = 0;
    int device = 0;
    int onset_slot = 0;
    bool censored = false;
    int relative_time = 0; // fire slot minus (onset - xi - tau); meaningless when censored
};

struct EvalConfig {
    double threshold = 0.5;
    int clean_window = 50;
    int horizon = 25; // measurement window ends at onset + horizon
};

// Runs the predictor once from slot 0 and, for each event, finds the first
// slot in [onset - xi - tau, onset + horizon] whose output exceeds the
// threshold. Events whose window leaves the sequence are a caller error.
std::vector<PredictionTimeRecord> measure_prediction_times(
    SequencePredictor& predictor, const ObservationSequence& obs,
    const std::vector<OnsetEvent>& events, int xi, int tau, const EvalConfig& cfg, int task_id);

struct CdfPoint {
    double time = 0.0;
    double fraction = 0.0;
};

// Empirical CDF over non-censored relative times, normalized by the total
// record count, so censored events cap the curve below 1.
std::vector<CdfPoint> build_cdf(const std::vector<PredictionTimeRecord>& records);

// Median relative time with censored records counted as +infinity.
double median_relative_time(const std::vector<PredictionTimeRecord>& records);

enum class InitKind { Maml, Joint, Random, Naive, Oracle };

const char* to_string(InitKind kind);
InitKind init_kind_from_string(const std::string& s);

struct SweepInits {
    const ModelParams<float>* maml = nullptr;
    const ModelParams<float>* joint = nullptr;
    bool include_random = false;
    ModelDims random_dims{};
    std::uint64_t random_seed = 0; // fans out per (task, device)
    bool include_naive = false;
    bool include_oracle = false;
};

struct EvalSeries {
    InitKind kind = InitKind::Naive;
    int t_test = 0;
    std::vector<PredictionTimeRecord> records;
};

struct EvalReport {
    std::vector<EvalSeries> series;
};

// For each device of the task, each init kind and each T_test: adapt on the
// first T_test slots (network inits only), then measure prediction times for
// every clean onset whose measurement window lies entirely in [T_test,
// slots). Adaptation and evaluation slots never overlap.
EvalReport adaptation_sweep(const SweepInits& inits, const TaskDataset& task,
                            const std::vector<int>& t_test_list, const AdaptConfig& adapt_cfg,
                            const EvalConfig& eval_cfg);

// Appends part's records into matching (kind, t_test) series of `into`.
void merge_report(EvalReport& into, const EvalReport& part);

// One row per event: init_kind, t_test, task, device, onset, relative time
// or empty when censored.
void write_events_csv(const std::string& path, const EvalReport& report);

// One row per CDF point: init_kind, t_test, time, fraction.
void write_cdf_csv(const std::string& path, const EvalReport& report);

} // namespace blockpred
