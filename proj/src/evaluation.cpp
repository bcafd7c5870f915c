#include "blockpred/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace blockpred {

std::vector<OnsetEvent> extract_onset_events(const ChannelTrace& trace, int device,
                                             int clean_window, double gamma0_db) {
    if (device < 0 || device >= trace.devices) throw ConfigError("device index out of range");
    if (clean_window < 1) throw ConfigError("clean_window must be >= 1");
    const double threshold = db_to_linear(gamma0_db);
    std::vector<OnsetEvent> events;
    int clean_run = 0;
    for (int t = 0; t < trace.slots; ++t) {
        if (is_blocked(trace.snr_at(device, t), threshold)) {
            if (clean_run >= clean_window) {
                events.push_back({device, t, clean_run});
            }
            clean_run = 0;
        } else {
            ++clean_run;
        }
    }
    return events;
}

std::vector<PredictionTimeRecord> measure_prediction_times(
    SequencePredictor& predictor, const ObservationSequence& obs,
    const std::vector<OnsetEvent>& events, int xi, int tau, const EvalConfig& cfg, int task_id) {
    if (xi < 0 || tau < 1) throw ConfigError("invalid xi/tau");
    for (const OnsetEvent& ev : events) {
        if (ev.onset_slot - xi - tau < 0 || ev.onset_slot + cfg.horizon >= obs.slots) {
            throw ConfigError("event measurement window leaves the sequence");
        }
    }
    predictor.reset();
    std::vector<double> probs(static_cast<std::size_t>(obs.slots));
    for (int t = 0; t < obs.slots; ++t) {
        probs[static_cast<std::size_t>(t)] = predictor.advance(obs.row(t));
    }
    std::vector<PredictionTimeRecord> records;
    records.reserve(events.size());
    for (const OnsetEvent& ev : events) {
        const int window_begin = ev.onset_slot - xi - tau;
        const int window_end = ev.onset_slot + cfg.horizon;
        PredictionTimeRecord rec;
        rec.task_id = task_id;
        rec.device = ev.device;
        rec.onset_slot = ev.onset_slot;
        rec.censored = true;
        for (int t = window_begin; t <= window_end; ++t) {
            if (probs[static_cast<std::size_t>(t)] > cfg.threshold) {
                rec.censored = false;
                rec.relative_time = t - window_begin;
                break;
            }
        }
        records.push_back(rec);
    }
    return records;
}

std::vector<CdfPoint> build_cdf(const std::vector<PredictionTimeRecord>& records) {
    if (records.empty()) throw ConfigError("cannot build a CDF from zero events");
    std::vector<int> times;
    times.reserve(records.size());
    for (const PredictionTimeRecord& r : records) {
        if (!r.censored) times.push_back(r.relative_time);
    }
    std::sort(times.begin(), times.end());
    std::vector<CdfPoint> cdf;
    const double total = static_cast<double>(records.size());
    std::size_t i = 0;
    while (i < times.size()) {
        std::size_t j = i;
        while (j < times.size() && times[j] == times[i]) ++j;
        // j = number of records with time <= times[i]
        cdf.push_back({static_cast<double>(times[i]), static_cast<double>(j) / total});
        i = j;
    }
    return cdf;
}

double median_relative_time(const std::vector<PredictionTimeRecord>& records) {
    if (records.empty()) throw ConfigError("median of zero events");
    std::vector<double> times;
    times.reserve(records.size());
    for (const PredictionTimeRecord& r : records) {
        times.push_back(r.censored ? std::numeric_limits<double>::infinity()
                                   : static_cast<double>(r.relative_time));
    }
    std::sort(times.begin(), times.end());
    const std::size_t n = times.size();
    if (n % 2 == 1) return times[n / 2];
    return 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

const char* to_string(InitKind kind) {
    switch (kind) {
    case InitKind::Maml: return "maml";
    case InitKind::Joint: return "joint";
    case InitKind::Random: return "random";
    case InitKind::Naive: return "naive";
    case InitKind::Oracle: return "oracle";
    }
    return "?";
}

InitKind init_kind_from_string(const std::string& s) {
    if (s == "maml") return InitKind::Maml;
    if (s == "joint") return InitKind::Joint;
    if (s == "random") return InitKind::Random;
    if (s == "naive") return InitKind::Naive;
    if (s == "oracle") return InitKind::Oracle;
    throw ConfigError("unknown init kind '" + s + "'");
}

namespace {

EvalSeries& series_for(EvalReport& report, InitKind kind, int t_test) {
    for (EvalSeries& s : report.series) {
        if (s.kind == kind && s.t_test == t_test) return s;
    }
    report.series.push_back({kind, t_test, {}});
    return report.series.back();
}

} // namespace

EvalReport adaptation_sweep(const SweepInits& inits, const TaskDataset& task,
                            const std::vector<int>& t_test_list, const AdaptConfig& adapt_cfg,
                            const EvalConfig& eval_cfg) {
    if (t_test_list.empty()) throw ConfigError("t_test list is empty");
    if (task.labels.empty()) throw ConfigError("task has no labels");
    const int xi = task.labels.front().xi;
    const int tau = task.labels.front().tau;
    if (eval_cfg.clean_window < xi + tau) {
        throw ConfigError("clean_window must be >= xi + tau");
    }
    const int slots = task.slots();
    for (int t_test : t_test_list) {
        if (t_test < 0 || t_test >= slots) {
            throw ConfigError("t_test must lie in [0, slots)");
        }
    }
    const double gamma0 = task.trace.scenario.fading.snr_threshold_db;

    std::vector<InitKind> kinds;
    if (inits.maml) kinds.push_back(InitKind::Maml);
    if (inits.joint) kinds.push_back(InitKind::Joint);
    if (inits.include_random) kinds.push_back(InitKind::Random);
    if (inits.include_naive) kinds.push_back(InitKind::Naive);
    if (inits.include_oracle) kinds.push_back(InitKind::Oracle);
    if (kinds.empty()) throw ConfigError("no init kinds selected");

    EvalReport report;
    for (int device = 0; device < task.devices(); ++device) {
        const DeviceSequence seq = device_sequence(task, device);
        const auto all_events =
            extract_onset_events(task.trace, device, eval_cfg.clean_window, gamma0);
        for (int t_test : t_test_list) {
            std::vector<OnsetEvent> events;
            for (const OnsetEvent& ev : all_events) {
                const int window_begin = ev.onset_slot - xi - tau;
                if (window_begin >= t_test && ev.onset_slot + eval_cfg.horizon < slots) {
                    events.push_back(ev);
                }
            }
            for (InitKind kind : kinds) {
                EvalSeries& series = series_for(report, kind, t_test);
                if (events.empty()) continue;
                std::unique_ptr<SequencePredictor> predictor;
                if (kind == InitKind::Naive) {
                    predictor = std::make_unique<NaivePredictor>();
                } else if (kind == InitKind::Oracle) {
                    predictor = std::make_unique<OraclePredictor>(seq.labels);
                } else {
                    ModelParams<float> init;
                    if (kind == InitKind::Maml) {
                        init = *inits.maml;
                    } else if (kind == InitKind::Joint) {
                        init = *inits.joint;
                    } else {
                        ModelDims dims = inits.random_dims;
                        dims.input_dim = seq.obs.row_width();
                        const std::uint64_t index =
                            static_cast<std::uint64_t>(task.task_id) *
                                static_cast<std::uint64_t>(task.devices()) +
                            static_cast<std::uint64_t>(device);
                        init = init_params<float>(
                            dims, derive_seed(inits.random_seed, seed_tag::random_init, index));
                    }
                    ModelParams<float> adapted = init;
                    if (t_test > 0) {
                        const DeviceSequence prefix = slice_device_sequence(seq, 0, t_test);
                        adapted = adapt(init, prefix, adapt_cfg);
                    }
                    predictor = std::make_unique<NetPredictor<float>>(std::move(adapted));
                }
                auto records = measure_prediction_times(*predictor, seq.obs, events, xi, tau,
                                                        eval_cfg, task.task_id);
                series.records.insert(series.records.end(), records.begin(), records.end());
            }
        }
    }
    return report;
}

void merge_report(EvalReport& into, const EvalReport& part) {
    for (const EvalSeries& s : part.series) {
        EvalSeries& dst = series_for(into, s.kind, s.t_test);
        dst.records.insert(dst.records.end(), s.records.begin(), s.records.end());
    }
}

void write_events_csv(const std::string& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "init_kind,t_test,task,device,onset_slot,relative_time\n";
    for (const EvalSeries& s : report.series) {
        for (const PredictionTimeRecord& r : s.records) {
            out << to_string(s.kind) << ',' << s.t_test << ',' << r.task_id << ',' << r.device
                << ',' << r.onset_slot << ',';
            if (r.censored) {
                out << "censored";
            } else {
                out << r.relative_time;
            }
            out << "\n";
        }
    }
    if (!out.flush()) throw IoError("failed writing '" + path + "'");
}

void write_cdf_csv(const std::string& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "init_kind,t_test,time,fraction\n";
    char buf[64];
    for (const EvalSeries& s : report.series) {
        if (s.records.empty()) continue;
        for (const CdfPoint& p : build_cdf(s.records)) {
            std::snprintf(buf, sizeof(buf), "%s,%d,%g,%.9g", to_string(s.kind), s.t_test, p.time,
                          p.fraction);
            out << buf << "\n";
        }
    }
    if (!out.flush()) throw IoError("failed writing '" + path + "'");
}

} // namespace blockpred
