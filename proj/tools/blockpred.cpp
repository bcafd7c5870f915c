#include <CLI11.hpp>

#include "blockpred/config.hpp"
#include "blockpred/dataset.hpp"
#include "blockpred/errors.hpp"
#include "blockpred/evaluation.hpp"
#include "blockpred/model.hpp"
#include "blockpred/parallel.hpp"
#include "blockpred/rng.hpp"
#include "blockpred/training.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace blockpred;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    int threads = hardware_threads();
    bool deterministic = false;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required = true) {
    cmd->add_option("--config", args.config_path, "config file (key = value lines)");
    cmd->add_option("--seed", args.seed, "master seed (overrides the config)");
    cmd->add_option("--threads", args.threads, "worker threads");
    cmd->add_flag("--deterministic", args.deterministic,
                  "single-threaded, bit-reproducible execution");
    auto* out = cmd->add_option("--out", args.out, "output path");
    if (out_required) out->required();
}

RunConfig make_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) cfg = parse_config_file(args.config_path);
    if (args.seed) cfg.seed = *args.seed;
    if (args.deterministic) cfg.deterministic = true;
    cfg.validate();
    return cfg;
}

int effective_threads(const CommonArgs& args, const RunConfig& cfg) {
    if (cfg.deterministic) return 1;
    return args.threads < 1 ? 1 : args.threads;
}

// Every run leaves its fully resolved configuration next to its outputs.
void write_config_sidecar(const RunConfig& cfg, const std::string& out_path, bool out_is_dir) {
    if (out_is_dir) {
        write_resolved_config(cfg, (std::filesystem::path(out_path) / "resolved.config").string());
    } else {
        write_resolved_config(cfg, out_path + ".config");
    }
}

std::vector<std::pair<std::string, std::string>> checkpoint_header(const RunConfig& cfg,
                                                                   const std::string& kind,
                                                                   std::int64_t step) {
    std::vector<std::pair<std::string, std::string>> extra;
    extra.emplace_back("trainer", kind);
    extra.emplace_back("step", std::to_string(step));
    for (const auto& kv : resolved_key_values(cfg)) {
        extra.emplace_back("cfg." + kv.first, kv.second);
    }
    return extra;
}

void save_train_state(const std::string& path, const TrainState<float>& st, const RunConfig& cfg,
                      const std::string& kind) {
    const bool with_opt = !st.opt.m.empty();
    save_checkpoint<float>(path, st.params, checkpoint_header(cfg, kind, st.step),
                           with_opt ? &st.opt.m : nullptr, with_opt ? &st.opt.v : nullptr,
                           st.step);
}

void resume_train_state(TrainState<float>& st, const std::string& path) {
    const auto loaded = load_checkpoint<float>(path);
    st.params = loaded.params;
    st.step = loaded.adam_steps;
    if (loaded.has_optimizer) {
        st.opt.m = loaded.adam_m;
        st.opt.v = loaded.adam_v;
        st.opt.steps = loaded.adam_steps;
    }
}

int cmd_generate(const CommonArgs& args) {
    const RunConfig cfg = make_config(args);
    DatasetMeta meta;
    meta.scenario = cfg.scenario;
    meta.mode = cfg.mode;
    meta.xi = cfg.xi;
    meta.tau = cfg.tau;
    meta.tasks = cfg.tasks;
    meta.slots = cfg.slots;
    meta.master_seed = cfg.seed;
    const MetaDataset ds = build_meta_dataset(meta, effective_threads(args, cfg));
    save_dataset(ds, args.out);
    write_config_sidecar(cfg, args.out, false);
    std::printf("tasks: %d\ndevices: %d\nslots: %d\npositive_rate: %.6f\n", meta.tasks,
                ds.tasks.front().devices(), meta.slots, positive_label_rate(ds));
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& data_path, const std::string& resume,
              bool meta) {
    const RunConfig cfg = make_config(args);
    const MetaDataset ds = load_dataset(data_path);
    const int devices = ds.tasks.front().devices();
    TrainState<float> st;
    st.params = init_params<float>(cfg.dims_for(devices), derive_seed(cfg.seed, seed_tag::model_init));
    if (!resume.empty()) resume_train_state(st, resume);

    std::vector<CurvePoint> curve;
    if (meta) {
        curve = maml_meta_train(st, ds, cfg.meta, cfg.seed, effective_threads(args, cfg));
    } else {
        curve = joint_train(st, ds, cfg.joint, cfg.seed);
    }
    save_train_state(args.out, st, cfg, meta ? "maml" : "joint");
    write_curve_csv(args.out + ".curve.csv", curve);
    write_config_sidecar(cfg, args.out, false);
    if (!curve.empty()) {
        std::printf("steps: %lld\nfinal_train_loss: %.6f\n",
                    static_cast<long long>(st.step), curve.back().train_loss);
    } else {
        std::printf("steps: %lld\n", static_cast<long long>(st.step));
    }
    return 0;
}

int cmd_adapt(const CommonArgs& args, const std::string& data_path, const std::string& init_path,
              int task, int device, int t_test) {
    const RunConfig cfg = make_config(args);
    const MetaDataset ds = load_dataset(data_path);
    if (task < 0 || task >= static_cast<int>(ds.tasks.size())) {
        throw ConfigError("task index out of range");
    }
    const TaskDataset& td = ds.tasks[static_cast<std::size_t>(task)];
    if (device < 0 || device >= td.devices()) throw ConfigError("device index out of range");
    if (t_test < 1 || t_test > td.trace.slots) throw ConfigError("t-test out of range");

    const auto loaded = load_checkpoint<float>(init_path);
    const DeviceSequence seq = device_sequence(td, device);
    const ModelParams<float> adapted =
        adapt<float>(loaded.params, slice_device_sequence(seq, 0, t_test), cfg.adaptation);
    save_checkpoint<float>(args.out, adapted, checkpoint_header(cfg, "adapted", 0));
    write_config_sidecar(cfg, args.out, false);
    std::printf("adapted task %d device %d on %d slots\n", task, device, t_test);
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& data_path, const std::string& maml_path,
             const std::string& joint_path, bool use_random, bool use_naive, bool use_oracle) {
    const RunConfig cfg = make_config(args);
    const MetaDataset ds = load_dataset(data_path);
    const int devices = ds.tasks.front().devices();

    std::optional<ModelParams<float>> maml_params;
    std::optional<ModelParams<float>> joint_params;
    SweepInits inits;
    if (!maml_path.empty()) {
        maml_params = load_checkpoint<float>(maml_path).params;
        inits.maml = &*maml_params;
    }
    if (!joint_path.empty()) {
        joint_params = load_checkpoint<float>(joint_path).params;
        inits.joint = &*joint_params;
    }
    inits.include_random = use_random;
    inits.random_dims = cfg.dims_for(devices);
    inits.random_seed = cfg.seed;
    inits.include_naive = use_naive;
    inits.include_oracle = use_oracle;
    if (!inits.maml && !inits.joint && !use_random && !use_naive && !use_oracle) {
        throw ConfigError("eval needs at least one of --maml, --joint, --random, --naive, --oracle");
    }

    std::filesystem::create_directories(args.out);
    const int threads = effective_threads(args, cfg);
    std::vector<EvalReport> parts(ds.tasks.size());
    parallel_for(ds.tasks.size(), threads, [&](std::size_t i) {
        parts[i] = adaptation_sweep(inits, ds.tasks[i], cfg.t_test_list, cfg.adaptation, cfg.eval);
    });
    EvalReport report;
    for (const EvalReport& part : parts) merge_report(report, part);

    const auto dir = std::filesystem::path(args.out);
    write_events_csv((dir / "events.csv").string(), report);
    write_cdf_csv((dir / "cdf.csv").string(), report);
    write_config_sidecar(cfg, args.out, true);
    for (const EvalSeries& s : report.series) {
        const double median = median_relative_time(s.records);
        std::printf("%s t_test=%d events=%zu median_relative_time=%s\n", to_string(s.kind),
                    s.t_test, s.records.size(),
                    std::isfinite(median) ? std::to_string(median).c_str() : "censored");
    }
    return 0;
}

int cmd_export_trace(const CommonArgs& args, const std::string& data_path, int task) {
    const MetaDataset ds = load_dataset(data_path);
    if (task < 0 || task >= static_cast<int>(ds.tasks.size())) {
        throw ConfigError("task index out of range");
    }
    export_trace_csv(ds.tasks[static_cast<std::size_t>(task)], args.out);
    std::printf("wrote %d slots\n", ds.tasks[static_cast<std::size_t>(task)].trace.slots);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blockage prediction workbench: synthetic mmWave traces, recurrent "
                 "predictors, meta-trained initializations"};
    app.require_subcommand(1);

    CommonArgs gen_args;
    auto* gen = app.add_subcommand("generate", "sample tasks and write a dataset file");
    add_common(gen, gen_args);

    CommonArgs joint_args;
    std::string joint_data, joint_resume;
    auto* joint = app.add_subcommand("joint-train", "train one model on all tasks pooled");
    add_common(joint, joint_args);
    joint->add_option("--data", joint_data, "dataset file")->required();
    joint->add_option("--resume", joint_resume, "checkpoint to continue from");

    CommonArgs meta_args;
    std::string meta_data, meta_resume;
    auto* meta = app.add_subcommand("meta-train", "meta-train an initialization");
    add_common(meta, meta_args);
    meta->add_option("--data", meta_data, "dataset file")->required();
    meta->add_option("--resume", meta_resume, "checkpoint to continue from");

    CommonArgs adapt_args;
    std::string adapt_data, adapt_init;
    int adapt_task = 0, adapt_device = 0, adapt_t_test = 500;
    auto* adapt_cmd = app.add_subcommand("adapt", "fine-tune an initialization on one device");
    add_common(adapt_cmd, adapt_args);
    adapt_cmd->add_option("--data", adapt_data, "dataset file")->required();
    adapt_cmd->add_option("--init", adapt_init, "initialization checkpoint")->required();
    adapt_cmd->add_option("--task", adapt_task, "task index");
    adapt_cmd->add_option("--device", adapt_device, "device index");
    adapt_cmd->add_option("--t-test", adapt_t_test, "adaptation slots (prefix length)");

    CommonArgs eval_args;
    std::string eval_data, eval_maml, eval_joint;
    bool eval_random = false, eval_naive = false, eval_oracle = false;
    auto* eval = app.add_subcommand("eval", "measure prediction-time CDFs per init");
    add_common(eval, eval_args);
    eval->add_option("--data", eval_data, "held-out dataset file")->required();
    eval->add_option("--maml", eval_maml, "meta-trained checkpoint");
    eval->add_option("--joint", eval_joint, "jointly trained checkpoint");
    eval->add_flag("--random", eval_random, "include the untrained-init baseline");
    eval->add_flag("--naive", eval_naive, "include the repeat-last-observation baseline");
    eval->add_flag("--oracle", eval_oracle, "include the true-label oracle");

    CommonArgs export_args;
    std::string export_data;
    int export_task = 0;
    auto* exp = app.add_subcommand("export-trace", "dump one task's trace as CSV");
    add_common(exp, export_args);
    exp->add_option("--data", export_data, "dataset file")->required();
    exp->add_option("--task", export_task, "task index");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) return cmd_generate(gen_args);
        if (*joint) return cmd_train(joint_args, joint_data, joint_resume, false);
        if (*meta) return cmd_train(meta_args, meta_data, meta_resume, true);
        if (*adapt_cmd) {
            return cmd_adapt(adapt_args, adapt_data, adapt_init, adapt_task, adapt_device,
                             adapt_t_test);
        }
        if (*eval) {
            return cmd_eval(eval_args, eval_data, eval_maml, eval_joint, eval_random, eval_naive,
                            eval_oracle);
        }
        if (*exp) return cmd_export_trace(export_args, export_data, export_task);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
