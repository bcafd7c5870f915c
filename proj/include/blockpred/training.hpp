#pragma once

#include "blockpred/dataset.hpp"
#include "blockpred/errors.hpp"
#include "blockpred/model.hpp"
#include "blockpred/parallel.hpp"
#include "blockpred/rng.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace blockpred {

enum class OptimizerKind { Sgd, Adam };

const char* to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& s);

template <typename T>
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    std::int64_t steps = 0;
    std::vector<T> m; // ADAM first moment, sized on first update
    std::vector<T> v; // ADAM second moment

    static OptimizerState sgd(double lr) { return {OptimizerKind::Sgd, lr, 0, {}, {}}; }
    static OptimizerState adam(double lr) { return {OptimizerKind::Adam, lr, 0, {}, {}}; }
};

// In-place descent step. ADAM uses beta1=0.9, beta2=0.999, eps=1e-8 with
// bias correction. Non-finite gradient entries raise NumericalError.
template <typename T>
void optimizer_update(OptimizerState<T>& state, std::vector<T>& values,
                      const std::vector<T>& grad) {
    if (values.size() != grad.size()) throw ConfigError("gradient shape mismatch");
    for (T g : grad) {
        if (!std::isfinite(static_cast<double>(g))) {
            throw NumericalError("non-finite gradient");
        }
    }
    ++state.steps;
    const T lr = static_cast<T>(state.learning_rate);
    if (state.kind == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * grad[i];
        return;
    }
    if (state.m.empty()) {
        state.m.assign(values.size(), T(0));
        state.v.assign(values.size(), T(0));
    }
    if (state.m.size() != values.size()) throw ConfigError("optimizer moment shape mismatch");
    const T b1 = T(0.9);
    const T b2 = T(0.999);
    const T eps = T(1e-8);
    const T c1 = T(1) - static_cast<T>(std::pow(0.9, static_cast<double>(state.steps)));
    const T c2 = T(1) - static_cast<T>(std::pow(0.999, static_cast<double>(state.steps)));
    for (std::size_t i = 0; i < values.size(); ++i) {
        state.m[i] = b1 * state.m[i] + (T(1) - b1) * grad[i];
        state.v[i] = b2 * state.v[i] + (T(1) - b2) * grad[i] * grad[i];
        const T mhat = state.m[i] / c1;
        const T vhat = state.v[i] / c2;
        values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

// One per-device training unit: shared-feature observations with the target
// device's tuple first, plus that device's label sequence.
struct DeviceSequence {
    ObservationSequence obs;
    LabelSequence labels;
};

DeviceSequence device_sequence(const TaskDataset& task, int device);

// Contiguous slot range [begin, end). Local label validity is recomputed so
// that no label's window reaches past `end` (prefix slices never peek ahead).
DeviceSequence slice_device_sequence(const DeviceSequence& seq, int begin, int end);

// Contiguous prefix/suffix halves for the meta train/test split.
std::pair<DeviceSequence, DeviceSequence> split_device_sequence(const DeviceSequence& seq,
                                                                double first_fraction);

// Chunk view used by chunked_gradient and the joint trainer: labels here may
// legitimately look past the chunk end (state resets are a training
// regularizer, not a data split).
DeviceSequence slice_device_sequence_for_chunk(const DeviceSequence& seq, int begin, int end,
                                               int local_valid);

// Masked mean loss/gradient over the sequence evaluated in chunk_len-sized
// chunks with the recurrent state reset to zero between chunks (the
// meta-training regime; adaptation and evaluation never reset).
template <typename T>
SequenceGradients<T> chunked_gradient(const ModelParams<T>& params, const DeviceSequence& seq,
                                      T positive_weight, int chunk_len, int trunc_len) {
    if (chunk_len < 1) throw ConfigError("chunk_len must be >= 1");
    if (seq.labels.valid_count < 1) throw ConfigError("no valid labeled slots");
    if (chunk_len >= seq.obs.slots) {
        // single chunk covering the sequence: identical to plain truncated BPTT
        return tbptt_gradients<T>(params, seq.obs, seq.labels.z.data(), seq.labels.valid_count,
                                  positive_weight, trunc_len,
                                  RecurrentState<T>::zeros(params.dims.lstm_units));
    }
    const ParamLayout lay(params.dims);
    SequenceGradients<T> total;
    total.grad.assign(lay.total, T(0));
    total.final_state = RecurrentState<T>::zeros(params.dims.lstm_units);
    double loss_sum = 0.0;
    int valid_total = 0;
    for (int begin = 0; begin < seq.obs.slots; begin += chunk_len) {
        const int end = std::min(begin + chunk_len, seq.obs.slots);
        const int local_valid = std::min(seq.labels.valid_count - begin, end - begin);
        if (local_valid < 1) break; // tail chunks carry no labels and no state
        const DeviceSequence chunk = slice_device_sequence_for_chunk(seq, begin, end, local_valid);
        const auto g = tbptt_gradients<T>(params, chunk.obs, chunk.labels.z.data(), local_valid,
                                          positive_weight, trunc_len,
                                          RecurrentState<T>::zeros(params.dims.lstm_units));
        loss_sum += static_cast<double>(g.loss) * local_valid;
        valid_total += local_valid;
        for (std::size_t i = 0; i < total.grad.size(); ++i) {
            total.grad[i] += g.grad[i] * static_cast<T>(local_valid);
        }
        total.final_state = g.final_state;
    }
    const T inv = T(1) / static_cast<T>(valid_total);
    for (T& v : total.grad) v *= inv;
    total.loss = static_cast<T>(loss_sum / valid_total);
    total.valid_slots = valid_total;
    return total;
}

struct JointConfig {
    double lr = 1e-3;
    int steps = 1000;
    int chunk_len = 512;
    int trunc_len = 128;
    double positive_weight = 9.0;
    OptimizerKind optimizer = OptimizerKind::Adam;
};

struct MetaConfig {
    double alpha = 0.01;  // inner SGD step size
    double beta = 1e-3;   // outer step size
    int meta_batch = 8;
    int inner_steps = 1;
    int chunk_len = 512;
    int trunc_len = 128;
    double positive_weight = 9.0;
    bool first_order = true;
    int max_meta_iters = 300;
    int convergence_window = 50;
    double convergence_tol = 1e-4;
    double train_fraction = 0.5;
    OptimizerKind outer_optimizer = OptimizerKind::Adam;
};

struct AdaptConfig {
    double lr = 0.01;
    int epochs = 1;
    int trunc_len = 128;
    double positive_weight = 9.0;
};

struct CurvePoint {
    std::int64_t iteration = 0;
    double train_loss = 0.0;
    double test_loss = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
};

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve);

template <typename T>
struct TrainState {
    ModelParams<T> params;
    OptimizerState<T> opt;
    std::int64_t step = 0;
};

namespace detail {

inline void require_dataset(const MetaDataset& ds) {
    if (ds.tasks.empty()) throw ConfigError("dataset has no tasks");
    for (const TaskDataset& t : ds.tasks) {
        if (t.labels.empty()) throw ConfigError("dataset task has no label sequences");
    }
}

template <typename T>
double vector_norm(const std::vector<T>& v) {
    double s = 0.0;
    for (T x : v) s += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(s);
}

} // namespace detail

// Task-agnostic baseline: every step draws one (task, device) pair and one
// chunk_len window uniformly (per-step derived streams, so a resumed run
// continues the exact draw sequence), resets the recurrent state, and applies
// one truncated-BPTT gradient step on that window.
template <typename T>
std::vector<CurvePoint> joint_train(TrainState<T>& st, const MetaDataset& ds,
                                    const JointConfig& cfg, std::uint64_t seed) {
    detail::require_dataset(ds);
    if (cfg.steps < 0) throw ConfigError("steps must be >= 0");
    st.opt.kind = cfg.optimizer;
    st.opt.learning_rate = cfg.lr;
    const int devices = ds.tasks.front().devices();
    const auto t_start = std::chrono::steady_clock::now();

    std::vector<CurvePoint> curve;
    curve.reserve(static_cast<std::size_t>(cfg.steps));
    for (int s = 0; s < cfg.steps; ++s) {
        RandomStream draw(derive_seed(seed, seed_tag::shuffle, static_cast<std::uint64_t>(st.step)));
        const int pair = draw.uniform_int(0, static_cast<int>(ds.tasks.size()) * devices - 1);
        const TaskDataset& task = ds.tasks[static_cast<std::size_t>(pair / devices)];
        const DeviceSequence full = device_sequence(task, pair % devices);
        const int len = std::min(cfg.chunk_len, full.obs.slots);
        const int max_start = std::min(full.obs.slots - len, full.labels.valid_count - 1);
        const int begin = max_start > 0 ? draw.uniform_int(0, max_start) : 0;
        const int local_valid = std::min(full.labels.valid_count - begin, len);
        const DeviceSequence window =
            slice_device_sequence_for_chunk(full, begin, begin + len, local_valid);

        const auto g = tbptt_gradients<T>(st.params, window.obs, window.labels.z.data(),
                                          local_valid, static_cast<T>(cfg.positive_weight),
                                          cfg.trunc_len,
                                          RecurrentState<T>::zeros(st.params.dims.lstm_units));
        if (!std::isfinite(static_cast<double>(g.loss))) {
            throw NumericalError("joint training diverged at step " + std::to_string(st.step));
        }
        try {
            optimizer_update(st.opt, st.params.flat, g.grad);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " at step " + std::to_string(st.step));
        }
        ++st.step;
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        curve.push_back({st.step, static_cast<double>(g.loss),
                         std::numeric_limits<double>::quiet_NaN(), secs});
    }
    return curve;
}

// Eq.-(11)-style task adaptation: plain SGD, each epoch is one gradient step
// on the masked mean loss of the whole sequence (state starts at zero, no
// chunk resets). epochs=0 or a sequence with no valid labels returns the
// initialization unchanged.
template <typename T>
ModelParams<T> adapt(const ModelParams<T>& init, const DeviceSequence& seq,
                     const AdaptConfig& cfg) {
    if (cfg.lr <= 0.0) throw ConfigError("adaptation lr must be > 0");
    if (cfg.epochs < 0) throw ConfigError("adaptation epochs must be >= 0");
    ModelParams<T> params = init;
    if (cfg.epochs == 0 || seq.obs.slots == 0 || seq.labels.valid_count < 1) {
        return params;
    }
    OptimizerState<T> opt = OptimizerState<T>::sgd(cfg.lr);
    for (int e = 0; e < cfg.epochs; ++e) {
        const auto g = tbptt_gradients<T>(params, seq.obs, seq.labels.z.data(),
                                          seq.labels.valid_count,
                                          static_cast<T>(cfg.positive_weight), cfg.trunc_len,
                                          RecurrentState<T>::zeros(params.dims.lstm_units));
        if (!std::isfinite(static_cast<double>(g.loss))) {
            throw NumericalError("adaptation diverged at epoch " + std::to_string(e));
        }
        optimizer_update(opt, params.flat, g.grad);
    }
    return params;
}

// First-order MAML outer gradient for one meta-batch member, plus the losses
// used for the training curve.
template <typename T>
struct MemberGradient {
    std::vector<T> grad;
    double train_loss = 0.0;
    double test_loss = 0.0;
};

template <typename T>
MemberGradient<T> maml_member_gradient(const ModelParams<T>& theta, const DeviceSequence& seq,
                                       const MetaConfig& cfg) {
    const auto halves = split_device_sequence(seq, cfg.train_fraction);
    ModelParams<T> phi = theta;
    MemberGradient<T> out;
    for (int s = 0; s < cfg.inner_steps; ++s) {
        const auto g_tr = chunked_gradient<T>(phi, halves.first,
                                              static_cast<T>(cfg.positive_weight), cfg.chunk_len,
                                              cfg.trunc_len);
        if (s == 0) out.train_loss = static_cast<double>(g_tr.loss);
        for (std::size_t i = 0; i < phi.flat.size(); ++i) {
            phi.flat[i] -= static_cast<T>(cfg.alpha) * g_tr.grad[i];
        }
    }
    auto g_te = chunked_gradient<T>(phi, halves.second, static_cast<T>(cfg.positive_weight),
                                    cfg.chunk_len, cfg.trunc_len);
    out.test_loss = static_cast<double>(g_te.loss);

    if (cfg.first_order || cfg.alpha == 0.0) {
        out.grad = std::move(g_te.grad);
        return out;
    }

    // Exact mode (tiny nets only): d/dtheta L_te(theta - alpha g_tr(theta))
    // = (I - alpha H_tr) g_te, with the Hessian-vector product taken by
    // central differences of the inner gradient. Caveat: the difference probe
    // yields J g_te where J is the Jacobian of the inner gradient field, but
    // the chain rule needs J^T g_te. The two agree only when the field is a
    // true gradient (symmetric J), which requires trunc_len >= chunk_len;
    // with shorter truncation the carried entry states act as stop-gradients
    // and J is asymmetric, so this mode is approximate in that regime.
    if (cfg.inner_steps != 1) {
        throw ConfigError("exact-mode outer gradient supports inner_steps=1 only");
    }
    const double vnorm = detail::vector_norm(g_te.grad);
    const double r = vnorm > 0.0 ? 1e-3 / vnorm : 0.0;
    out.grad = std::move(g_te.grad);
    if (r > 0.0) {
        ModelParams<T> probe = theta;
        for (std::size_t i = 0; i < probe.flat.size(); ++i) {
            probe.flat[i] = theta.flat[i] + static_cast<T>(r) * out.grad[i];
        }
        const auto g_hi = chunked_gradient<T>(probe, halves.first,
                                              static_cast<T>(cfg.positive_weight), cfg.chunk_len,
                                              cfg.trunc_len);
        for (std::size_t i = 0; i < probe.flat.size(); ++i) {
            probe.flat[i] = theta.flat[i] - static_cast<T>(r) * out.grad[i];
        }
        const auto g_lo = chunked_gradient<T>(probe, halves.first,
                                              static_cast<T>(cfg.positive_weight), cfg.chunk_len,
                                              cfg.trunc_len);
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            const double hvp = (static_cast<double>(g_hi.grad[i]) - static_cast<double>(g_lo.grad[i])) /
                               (2.0 * r);
            out.grad[i] -= static_cast<T>(cfg.alpha * hvp);
        }
    }
    return out;
}

// Algorithm: per meta-iteration draw meta_batch (task, device) pairs, adapt
// theta on each pair's train half with inner_steps of SGD, and step theta
// with the mean outer gradient of the test halves. Stops at max_meta_iters
// or when the moving average of the meta-test loss stalls.
template <typename T>
std::vector<CurvePoint> maml_meta_train(TrainState<T>& st, const MetaDataset& ds,
                                        const MetaConfig& cfg, std::uint64_t seed, int threads) {
    detail::require_dataset(ds);
    if (cfg.alpha < 0.0 || cfg.beta <= 0.0) throw ConfigError("alpha must be >= 0, beta > 0");
    if (cfg.meta_batch < 1) throw ConfigError("meta_batch must be >= 1");
    if (cfg.inner_steps < 1) throw ConfigError("inner_steps must be >= 1");
    st.opt.kind = cfg.outer_optimizer;
    st.opt.learning_rate = cfg.beta;
    const int devices = ds.tasks.front().devices();
    const auto t_start = std::chrono::steady_clock::now();

    std::vector<CurvePoint> curve;
    std::vector<double> test_history;
    for (int iter = 0; iter < cfg.max_meta_iters; ++iter) {
        RandomStream draw(derive_seed(seed, seed_tag::shuffle, static_cast<std::uint64_t>(st.step)));
        std::vector<int> members(static_cast<std::size_t>(cfg.meta_batch));
        for (int& m : members) {
            m = draw.uniform_int(0, static_cast<int>(ds.tasks.size()) * devices - 1);
        }

        std::vector<MemberGradient<T>> grads(members.size());
        parallel_for(members.size(), threads, [&](std::size_t b) {
            const int pair = members[b];
            const DeviceSequence seq =
                device_sequence(ds.tasks[static_cast<std::size_t>(pair / devices)], pair % devices);
            grads[b] = maml_member_gradient<T>(st.params, seq, cfg);
        });

        // Ordered reduction: results do not depend on the thread count.
        std::vector<T> outer(st.params.flat.size(), T(0));
        double train_loss = 0.0;
        double test_loss = 0.0;
        const T invb = T(1) / static_cast<T>(cfg.meta_batch);
        for (const MemberGradient<T>& mg : grads) {
            for (std::size_t i = 0; i < outer.size(); ++i) outer[i] += mg.grad[i] * invb;
            train_loss += mg.train_loss / cfg.meta_batch;
            test_loss += mg.test_loss / cfg.meta_batch;
        }
        if (!std::isfinite(test_loss) || !std::isfinite(train_loss)) {
            throw NumericalError("meta-training diverged at iteration " + std::to_string(st.step));
        }
        try {
            optimizer_update(st.opt, st.params.flat, outer);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " at meta-iteration " +
                                 std::to_string(st.step));
        }
        ++st.step;
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        curve.push_back({st.step, train_loss, test_loss, secs});

        test_history.push_back(test_loss);
        const std::size_t w = static_cast<std::size_t>(cfg.convergence_window);
        if (w > 0 && test_history.size() >= 2 * w) {
            double recent = 0.0;
            double previous = 0.0;
            for (std::size_t i = 0; i < w; ++i) {
                recent += test_history[test_history.size() - 1 - i] / static_cast<double>(w);
                previous += test_history[test_history.size() - 1 - w - i] / static_cast<double>(w);
            }
            if (previous - recent < cfg.convergence_tol) break;
        }
    }
    return curve;
}

} // namespace blockpred
