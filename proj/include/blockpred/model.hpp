#pragma once

#include "blockpred/dataset.hpp"
#include "blockpred/errors.hpp"
#include "blockpred/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace blockpred {

// Predictor: dense ReLU input layer -> LSTM -> dense ReLU -> linear sigmoid.
struct ModelDims {
    int input_dim = 40;
    int hidden_in = 128;
    int lstm_units = 128;
    int hidden_out = 128;

    bool operator==(const ModelDims&) const = default;

    void validate() const {
        if (input_dim < 1 || hidden_in < 1 || lstm_units < 1 || hidden_out < 1) {
            throw ConfigError("model dimensions must all be >= 1");
        }
    }
};

// Offsets into the flat parameter vector. Order: W_in, b_in, W_x, W_h,
// b_lstm, W_h1, b_h1, W_out, b_out. Matrices are row-major; the three LSTM
// blocks stack the gates in order input, forget, candidate, output.
struct ParamLayout {
    std::size_t w_in, b_in, w_x, w_h, b_lstm, w_h1, b_h1, w_out, b_out, total;

    explicit ParamLayout(const ModelDims& d) {
        const std::size_t in = static_cast<std::size_t>(d.input_dim);
        const std::size_t hi = static_cast<std::size_t>(d.hidden_in);
        const std::size_t lu = static_cast<std::size_t>(d.lstm_units);
        const std::size_t ho = static_cast<std::size_t>(d.hidden_out);
        w_in = 0;
        b_in = w_in + hi * in;
        w_x = b_in + hi;
        w_h = w_x + 4 * lu * hi;
        b_lstm = w_h + 4 * lu * lu;
        w_h1 = b_lstm + 4 * lu;
        b_h1 = w_h1 + ho * lu;
        w_out = b_h1 + ho;
        b_out = w_out + ho;
        total = b_out + 1;
    }
};

template <typename T>
struct ModelParams {
    ModelDims dims;
    std::vector<T> flat;
};

template <typename T>
struct RecurrentState {
    std::vector<T> cell;
    std::vector<T> hidden;

    static RecurrentState zeros(int units) {
        RecurrentState s;
        s.cell.assign(static_cast<std::size_t>(units), T(0));
        s.hidden.assign(static_cast<std::size_t>(units), T(0));
        return s;
    }
};

namespace detail {

template <typename T>
T sigmoid(T x) {
    if (x >= T(0)) {
        return T(1) / (T(1) + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

// y = W x + b
template <typename T>
void affine(const T* w, const T* b, const T* x, int rows, int cols, T* y) {
    for (int r = 0; r < rows; ++r) {
        T acc = b[r];
        const T* row = w + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
}

// y += W^T d
template <typename T>
void add_transposed(const T* w, const T* d, int rows, int cols, T* y) {
    for (int r = 0; r < rows; ++r) {
        const T dr = d[r];
        if (dr == T(0)) continue;
        const T* row = w + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) y[c] += row[c] * dr;
    }
}

// dW += d (outer) x
template <typename T, typename X>
void add_outer(T* dw, const T* d, const X* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const T dr = d[r];
        if (dr == T(0)) continue;
        T* row = dw + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) row[c] += dr * static_cast<T>(x[c]);
    }
}

// Per-step activations recorded on the forward pass of one window.
template <typename T>
struct StepTape {
    std::vector<T> a;      // slots x hidden_in, post-ReLU
    std::vector<T> gates;  // slots x 4*lstm, post-nonlinearity (i,f,g,o)
    std::vector<T> cell;   // slots x lstm
    std::vector<T> tanh_c; // slots x lstm
    std::vector<T> hidden; // slots x lstm
    std::vector<T> b;      // slots x hidden_out, post-ReLU
    std::vector<T> prob;   // slots

    void resize(const ModelDims& d, int slots) {
        const std::size_t n = static_cast<std::size_t>(slots);
        a.resize(n * d.hidden_in);
        gates.resize(n * 4 * d.lstm_units);
        cell.resize(n * d.lstm_units);
        tanh_c.resize(n * d.lstm_units);
        hidden.resize(n * d.lstm_units);
        b.resize(n * d.hidden_out);
        prob.resize(n);
    }
};

// One forward step, recording activations at tape row `slot`. `x` is the
// observation row; prev_h / prev_c are the pre-step recurrent state.
template <typename T>
void step_forward(const ModelParams<T>& p, const ParamLayout& lay, const float* x,
                  const T* prev_h, const T* prev_c, StepTape<T>& tape, int slot) {
    const ModelDims& d = p.dims;
    const T* par = p.flat.data();
    const int hi = d.hidden_in;
    const int lu = d.lstm_units;
    const int ho = d.hidden_out;

    T* a = tape.a.data() + static_cast<std::size_t>(slot) * hi;
    for (int r = 0; r < hi; ++r) {
        T acc = par[lay.b_in + r];
        const T* row = par + lay.w_in + static_cast<std::size_t>(r) * d.input_dim;
        for (int c = 0; c < d.input_dim; ++c) acc += row[c] * static_cast<T>(x[c]);
        a[r] = acc > T(0) ? acc : T(0);
    }

    T* gates = tape.gates.data() + static_cast<std::size_t>(slot) * 4 * lu;
    for (int r = 0; r < 4 * lu; ++r) {
        T acc = par[lay.b_lstm + r];
        const T* wx = par + lay.w_x + static_cast<std::size_t>(r) * hi;
        for (int c = 0; c < hi; ++c) acc += wx[c] * a[c];
        const T* wh = par + lay.w_h + static_cast<std::size_t>(r) * lu;
        for (int c = 0; c < lu; ++c) acc += wh[c] * prev_h[c];
        gates[r] = acc;
    }
    T* gi = gates;
    T* gf = gates + lu;
    T* gg = gates + 2 * lu;
    T* go = gates + 3 * lu;
    for (int r = 0; r < lu; ++r) gi[r] = sigmoid(gi[r]);
    for (int r = 0; r < lu; ++r) gf[r] = sigmoid(gf[r]);
    for (int r = 0; r < lu; ++r) gg[r] = std::tanh(gg[r]);
    for (int r = 0; r < lu; ++r) go[r] = sigmoid(go[r]);

    T* c = tape.cell.data() + static_cast<std::size_t>(slot) * lu;
    T* tc = tape.tanh_c.data() + static_cast<std::size_t>(slot) * lu;
    T* h = tape.hidden.data() + static_cast<std::size_t>(slot) * lu;
    for (int r = 0; r < lu; ++r) {
        c[r] = gf[r] * prev_c[r] + gi[r] * gg[r];
        tc[r] = std::tanh(c[r]);
        h[r] = go[r] * tc[r];
    }

    T* b = tape.b.data() + static_cast<std::size_t>(slot) * ho;
    for (int r = 0; r < ho; ++r) {
        T acc = par[lay.b_h1 + r];
        const T* row = par + lay.w_h1 + static_cast<std::size_t>(r) * lu;
        for (int cc = 0; cc < lu; ++cc) acc += row[cc] * h[cc];
        b[r] = acc > T(0) ? acc : T(0);
    }

    T logit = par[lay.b_out];
    for (int cc = 0; cc < ho; ++cc) logit += par[lay.w_out + cc] * b[cc];
    tape.prob[static_cast<std::size_t>(slot)] = sigmoid(logit);
}

} // namespace detail

// Fan-in-scaled uniform weights, zero biases, LSTM forget-gate bias 1. Draw
// order follows the flat layout so two calls with one seed agree exactly.
template <typename T>
ModelParams<T> init_params(const ModelDims& dims, std::uint64_t seed) {
    dims.validate();
    const ParamLayout lay(dims);
    ModelParams<T> p;
    p.dims = dims;
    p.flat.assign(lay.total, T(0));
    RandomStream rng(seed);
    const auto fill = [&](std::size_t at, std::size_t count, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < count; ++i) {
            p.flat[at + i] = static_cast<T>(rng.uniform(-bound, bound));
        }
    };
    const std::size_t in = static_cast<std::size_t>(dims.input_dim);
    const std::size_t hi = static_cast<std::size_t>(dims.hidden_in);
    const std::size_t lu = static_cast<std::size_t>(dims.lstm_units);
    const std::size_t ho = static_cast<std::size_t>(dims.hidden_out);
    fill(lay.w_in, hi * in, dims.input_dim);
    fill(lay.w_x, 4 * lu * hi, dims.hidden_in);
    fill(lay.w_h, 4 * lu * lu, dims.lstm_units);
    fill(lay.w_h1, ho * lu, dims.lstm_units);
    fill(lay.w_out, ho, dims.hidden_out);
    for (std::size_t r = 0; r < lu; ++r) {
        p.flat[lay.b_lstm + lu + r] = T(1); // forget gate
    }
    return p;
}

template <typename T>
T forward_step(const ModelParams<T>& p, const float* row, RecurrentState<T>& state) {
    const ParamLayout lay(p.dims);
    if (static_cast<int>(state.cell.size()) != p.dims.lstm_units ||
        static_cast<int>(state.hidden.size()) != p.dims.lstm_units) {
        throw ConfigError("recurrent state size does not match lstm_units");
    }
    detail::StepTape<T> tape;
    tape.resize(p.dims, 1);
    detail::step_forward(p, lay, row, state.hidden.data(), state.cell.data(), tape, 0);
    state.cell.assign(tape.cell.begin(), tape.cell.end());
    state.hidden.assign(tape.hidden.begin(), tape.hidden.end());
    return tape.prob[0];
}

// Sequential composition of forward_step; the state argument is advanced so
// evaluation can be chunked at any boundary without changing the outputs.
template <typename T>
std::vector<T> forward_sequence(const ModelParams<T>& p, const ObservationSequence& obs,
                                RecurrentState<T>& state) {
    if (obs.row_width() != p.dims.input_dim) {
        throw ConfigError("observation width does not match model input_dim");
    }
    if (static_cast<int>(state.cell.size()) != p.dims.lstm_units ||
        static_cast<int>(state.hidden.size()) != p.dims.lstm_units) {
        throw ConfigError("recurrent state size does not match lstm_units");
    }
    const ParamLayout lay(p.dims);
    detail::StepTape<T> tape;
    tape.resize(p.dims, 1);
    std::vector<T> probs(static_cast<std::size_t>(obs.slots));
    for (int t = 0; t < obs.slots; ++t) {
        detail::step_forward(p, lay, obs.row(t), state.hidden.data(), state.cell.data(), tape, 0);
        state.cell.assign(tape.cell.begin(), tape.cell.end());
        state.hidden.assign(tape.hidden.begin(), tape.hidden.end());
        probs[static_cast<std::size_t>(t)] = tape.prob[0];
    }
    return probs;
}

// Eq.-(8)-style loss with per-term clipping, so a perfect prediction costs
// exactly zero.
template <typename T>
T weighted_bce(std::uint8_t z, T x, T w) {
    const T eps = T(1e-7);
    if (z) return -w * std::log(std::max(x, eps));
    return -std::log(std::max(T(1) - x, eps));
}

// d(weighted_bce)/d(logit); zero where the clip is active, matching the loss.
template <typename T>
T weighted_bce_dlogit(std::uint8_t z, T x, T w) {
    const T eps = T(1e-7);
    if (z) return x > eps ? -w * (T(1) - x) : T(0);
    return T(1) - x > eps ? x : T(0);
}

template <typename T>
struct SequenceGradients {
    T loss = T(0); // mean over valid slots
    std::vector<T> grad;
    RecurrentState<T> final_state;
    int valid_slots = 0;
};

// Gradients of the masked mean loss over the whole sequence, computed with
// truncated backpropagation: the recurrent state is carried across
// trunc_len-sized windows, but no gradient crosses a window boundary.
template <typename T>
SequenceGradients<T> tbptt_gradients(const ModelParams<T>& p, const ObservationSequence& obs,
                                     const std::uint8_t* labels, int valid_count,
                                     T positive_weight, int trunc_len,
                                     const RecurrentState<T>& entry_state) {
    if (obs.row_width() != p.dims.input_dim) {
        throw ConfigError("observation width does not match model input_dim");
    }
    if (trunc_len < 1) throw ConfigError("trunc_len must be >= 1");
    if (valid_count < 1) throw ConfigError("no valid labeled slots");
    if (valid_count > obs.slots) throw ConfigError("valid_count exceeds sequence length");
    if (static_cast<int>(entry_state.cell.size()) != p.dims.lstm_units ||
        static_cast<int>(entry_state.hidden.size()) != p.dims.lstm_units) {
        throw ConfigError("recurrent state size does not match lstm_units");
    }

    const ModelDims& d = p.dims;
    const ParamLayout lay(d);
    const int hi = d.hidden_in;
    const int lu = d.lstm_units;
    const int ho = d.hidden_out;
    const T* par = p.flat.data();
    const T inv_n = T(1) / static_cast<T>(valid_count);

    SequenceGradients<T> out;
    out.grad.assign(lay.total, T(0));
    out.valid_slots = valid_count;
    T* g = out.grad.data();

    detail::StepTape<T> tape;
    const int max_window = std::min(trunc_len, obs.slots);
    tape.resize(d, max_window);

    std::vector<T> entry_h(entry_state.hidden);
    std::vector<T> entry_c(entry_state.cell);
    std::vector<T> dh(static_cast<std::size_t>(lu));
    std::vector<T> dc(static_cast<std::size_t>(lu));
    std::vector<T> dgates(static_cast<std::size_t>(4 * lu));
    std::vector<T> da(static_cast<std::size_t>(hi));
    std::vector<T> db(static_cast<std::size_t>(ho));
    T loss_sum = T(0);

    for (int begin = 0; begin < obs.slots; begin += trunc_len) {
        const int end = std::min(begin + trunc_len, obs.slots);
        const int len = end - begin;

        for (int t = 0; t < len; ++t) {
            const T* ph = t == 0 ? entry_h.data()
                                 : tape.hidden.data() + static_cast<std::size_t>(t - 1) * lu;
            const T* pc = t == 0 ? entry_c.data()
                                 : tape.cell.data() + static_cast<std::size_t>(t - 1) * lu;
            detail::step_forward(p, lay, obs.row(begin + t), ph, pc, tape, t);
            if (begin + t < valid_count) {
                loss_sum += weighted_bce(labels[begin + t], tape.prob[static_cast<std::size_t>(t)],
                                         positive_weight);
            }
        }

        std::fill(dh.begin(), dh.end(), T(0));
        std::fill(dc.begin(), dc.end(), T(0));
        for (int t = len - 1; t >= 0; --t) {
            const std::size_t ts = static_cast<std::size_t>(t);
            const T* a = tape.a.data() + ts * hi;
            const T* gates = tape.gates.data() + ts * 4 * lu;
            const T* gi = gates;
            const T* gf = gates + lu;
            const T* gg = gates + 2 * lu;
            const T* go = gates + 3 * lu;
            const T* tc = tape.tanh_c.data() + ts * lu;
            const T* h = tape.hidden.data() + ts * lu;
            const T* b = tape.b.data() + ts * ho;
            const T* ph = t == 0 ? entry_h.data() : tape.hidden.data() + (ts - 1) * lu;
            const T* pc = t == 0 ? entry_c.data() : tape.cell.data() + (ts - 1) * lu;

            // Output head.
            T dlogit = T(0);
            if (begin + t < valid_count) {
                dlogit = weighted_bce_dlogit(labels[begin + t], tape.prob[ts], positive_weight) *
                         inv_n;
            }
            if (dlogit != T(0)) {
                for (int r = 0; r < ho; ++r) g[lay.w_out + r] += dlogit * b[r];
                g[lay.b_out] += dlogit;
            }
            for (int r = 0; r < ho; ++r) {
                db[static_cast<std::size_t>(r)] =
                    b[r] > T(0) ? dlogit * par[lay.w_out + r] : T(0);
            }
            detail::add_outer(g + lay.w_h1, db.data(), h, ho, lu);
            for (int r = 0; r < ho; ++r) g[lay.b_h1 + r] += db[static_cast<std::size_t>(r)];
            detail::add_transposed(par + lay.w_h1, db.data(), ho, lu, dh.data());

            // LSTM cell.
            for (int r = 0; r < lu; ++r) {
                const std::size_t rs = static_cast<std::size_t>(r);
                const T dhr = dh[rs];
                dc[rs] += dhr * go[r] * (T(1) - tc[r] * tc[r]);
                dgates[3 * lu + r] = dhr * tc[r] * go[r] * (T(1) - go[r]);
                dgates[rs] = dc[rs] * gg[r] * gi[r] * (T(1) - gi[r]);
                dgates[lu + r] = dc[rs] * pc[r] * gf[r] * (T(1) - gf[r]);
                dgates[2 * lu + r] = dc[rs] * gi[r] * (T(1) - gg[r] * gg[r]);
            }
            detail::add_outer(g + lay.w_x, dgates.data(), a, 4 * lu, hi);
            detail::add_outer(g + lay.w_h, dgates.data(), ph, 4 * lu, lu);
            for (int r = 0; r < 4 * lu; ++r) g[lay.b_lstm + r] += dgates[static_cast<std::size_t>(r)];

            // Into the input layer.
            std::fill(da.begin(), da.end(), T(0));
            detail::add_transposed(par + lay.w_x, dgates.data(), 4 * lu, hi, da.data());
            for (int r = 0; r < hi; ++r) {
                if (a[r] <= T(0)) da[static_cast<std::size_t>(r)] = T(0);
            }
            detail::add_outer(g + lay.w_in, da.data(), obs.row(begin + t), hi, d.input_dim);
            for (int r = 0; r < hi; ++r) g[lay.b_in + r] += da[static_cast<std::size_t>(r)];

            // Recurrent carry to t-1 (cut at the window boundary).
            std::fill(dh.begin(), dh.end(), T(0));
            detail::add_transposed(par + lay.w_h, dgates.data(), 4 * lu, lu, dh.data());
            for (int r = 0; r < lu; ++r) {
                dc[static_cast<std::size_t>(r)] *= gf[r];
            }
        }

        entry_h.assign(tape.hidden.begin() + static_cast<std::size_t>(len - 1) * lu,
                       tape.hidden.begin() + static_cast<std::size_t>(len) * lu);
        entry_c.assign(tape.cell.begin() + static_cast<std::size_t>(len - 1) * lu,
                       tape.cell.begin() + static_cast<std::size_t>(len) * lu);
    }

    out.loss = loss_sum * inv_n;
    out.final_state.hidden = std::move(entry_h);
    out.final_state.cell = std::move(entry_c);
    return out;
}

// Checkpoint artifact: dims + width tag + caller header entries + flat
// parameters, optionally followed by ADAM moments for exact resume.
template <typename T>
struct LoadedCheckpoint {
    ModelParams<T> params;
    std::map<std::string, std::string> header;
    std::vector<T> adam_m;
    std::vector<T> adam_v;
    std::int64_t adam_steps = 0;
    bool has_optimizer = false;
};

void save_checkpoint_f32(const std::string& path, const ModelParams<float>& params,
                         const std::vector<std::pair<std::string, std::string>>& extra,
                         const std::vector<float>* adam_m, const std::vector<float>* adam_v,
                         std::int64_t adam_steps);
void save_checkpoint_f64(const std::string& path, const ModelParams<double>& params,
                         const std::vector<std::pair<std::string, std::string>>& extra,
                         const std::vector<double>* adam_m, const std::vector<double>* adam_v,
                         std::int64_t adam_steps);
LoadedCheckpoint<float> load_checkpoint_f32(const std::string& path);
LoadedCheckpoint<double> load_checkpoint_f64(const std::string& path);

template <typename T>
void save_checkpoint(const std::string& path, const ModelParams<T>& params,
                     const std::vector<std::pair<std::string, std::string>>& extra = {},
                     const std::vector<T>* adam_m = nullptr,
                     const std::vector<T>* adam_v = nullptr, std::int64_t adam_steps = 0) {
    if constexpr (std::is_same_v<T, float>) {
        save_checkpoint_f32(path, params, extra, adam_m, adam_v, adam_steps);
    } else {
        save_checkpoint_f64(path, params, extra, adam_m, adam_v, adam_steps);
    }
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    if constexpr (std::is_same_v<T, float>) {
        return load_checkpoint_f32(path);
    } else {
        return load_checkpoint_f64(path);
    }
}

} // namespace blockpred
