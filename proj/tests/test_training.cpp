#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "blockpred/dataset.hpp"
#include "blockpred/errors.hpp"
#include "blockpred/model.hpp"
#include "blockpred/rng.hpp"
#include "blockpred/training.hpp"
#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace blockpred;

namespace {

MetaDataset tiny_dataset(int tasks = 2, int slots = 300, std::uint64_t seed = 11) {
    DatasetMeta meta;
    meta.scenario.devices = 3;
    meta.tasks = tasks;
    meta.slots = slots;
    meta.mode = LabelMode::Any;
    meta.xi = 0;
    meta.tau = 5;
    meta.master_seed = seed;
    return build_meta_dataset(meta, 2);
}

ModelDims dims_for_dataset(const MetaDataset& ds, int lstm = 6) {
    return ModelDims{2 * ds.tasks.front().devices(), 5, lstm, 4};
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-5});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

template <typename F>
bool stable_fd(const F& f, const std::vector<double>& x, std::vector<double>& out) {
    out = oracle::fd_gradient(f, x, 1e-5);
    const auto check = oracle::fd_gradient(f, x, 2e-5);
    return max_rel_error(out, check) < 2e-5;
}

} // namespace

TEST_CASE("sgd closed form") {
    auto opt = OptimizerState<float>::sgd(0.5);
    std::vector<float> x = {1.0f, -2.0f};
    optimizer_update(opt, x, {0.25f, -0.5f});
    CHECK(x[0] == 0.875f);
    CHECK(x[1] == -1.75f);
    CHECK(opt.steps == 1);
}

TEST_CASE("adam first step closed form") {
    auto opt = OptimizerState<double>::adam(0.1);
    std::vector<double> x = {1.0, 1.0, 1.0};
    const std::vector<double> g = {0.3, -0.02, 0.0};
    optimizer_update(opt, x, g);
    // after bias correction the first step is lr * g / (|g| + eps)
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double expect = 1.0 - 0.1 * g[i] / (std::abs(g[i]) + 1e-8);
        CHECK(x[i] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("adam matches a reference two-step trajectory") {
    auto opt = OptimizerState<double>::adam(0.05);
    std::vector<double> x = {0.2};
    double m = 0.0, v = 0.0;
    double ref = 0.2;
    for (int t = 1; t <= 2; ++t) {
        const double g = t == 1 ? 0.4 : -0.1;
        optimizer_update(opt, x, {g});
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mhat = m / (1.0 - std::pow(0.9, t));
        const double vhat = v / (1.0 - std::pow(0.999, t));
        ref -= 0.05 * mhat / (std::sqrt(vhat) + 1e-8);
        CHECK(x[0] == doctest::Approx(ref).epsilon(1e-14));
    }
}

TEST_CASE("optimizer error contracts") {
    auto opt = OptimizerState<float>::sgd(0.1);
    std::vector<float> x = {1.0f};
    CHECK_THROWS_AS(optimizer_update(opt, x, {1.0f, 2.0f}), ConfigError);
    CHECK_THROWS_AS(optimizer_update(opt, x, {std::numeric_limits<float>::quiet_NaN()}),
                    NumericalError);
    CHECK_THROWS_AS(optimizer_update(opt, x, {std::numeric_limits<float>::infinity()}),
                    NumericalError);
}

TEST_CASE("device_sequence pairs observations with that device's labels") {
    const auto ds = tiny_dataset();
    const TaskDataset& task = ds.tasks[0];
    for (int k = 0; k < task.devices(); ++k) {
        const auto seq = device_sequence(task, k);
        CHECK(seq.obs.slots == task.trace.slots);
        CHECK(seq.obs.row_width() == 2 * task.devices());
        CHECK(seq.labels.z == task.labels[static_cast<std::size_t>(k)].z);
        // target tuple first
        const double thr = db_to_linear(task.trace.scenario.fading.snr_threshold_db);
        for (int t = 0; t < 20; ++t) {
            const bool blocked = static_cast<double>(task.trace.snr_at(k, t)) <= thr;
            CHECK(seq.obs.row(t)[0] == (blocked ? 1.0f : 0.0f));
        }
    }
}

TEST_CASE("slices never see labels whose windows cross the boundary") {
    const auto ds = tiny_dataset();
    const auto seq = device_sequence(ds.tasks[0], 0);
    const int xi = seq.labels.xi, tau = seq.labels.tau;

    const auto head = slice_device_sequence(seq, 0, 100);
    CHECK(head.obs.slots == 100);
    CHECK(head.labels.valid_count == 100 - xi - tau);
    CHECK(head.labels.z.size() == static_cast<std::size_t>(100 - xi - tau));

    const auto mid = slice_device_sequence(seq, 40, 100);
    CHECK(mid.labels.valid_count == 60 - xi - tau);
    for (int t = 0; t < mid.labels.valid_count; ++t) {
        CHECK(mid.labels.z[static_cast<std::size_t>(t)] ==
              seq.labels.z[static_cast<std::size_t>(40 + t)]);
    }

    const auto tiny = slice_device_sequence(seq, 0, xi + tau);
    CHECK(tiny.labels.valid_count == 0);

    CHECK_THROWS_AS(slice_device_sequence(seq, -1, 10), ConfigError);
    CHECK_THROWS_AS(slice_device_sequence(seq, 10, 5), ConfigError);
    CHECK_THROWS_AS(slice_device_sequence(seq, 0, seq.obs.slots + 1), ConfigError);
}

TEST_CASE("chunk slices keep the stored look-ahead labels") {
    const auto ds = tiny_dataset();
    const auto seq = device_sequence(ds.tasks[0], 1);
    const auto chunk = slice_device_sequence_for_chunk(seq, 50, 150, 100);
    CHECK(chunk.obs.slots == 100);
    CHECK(chunk.labels.valid_count == 100); // labels may look past the chunk
    for (int t = 0; t < 100; ++t) {
        CHECK(chunk.labels.z[static_cast<std::size_t>(t)] ==
              seq.labels.z[static_cast<std::size_t>(50 + t)]);
    }
    CHECK_THROWS_AS(slice_device_sequence_for_chunk(seq, 50, 150, 300), ConfigError);
}

TEST_CASE("split halves partition the sequence") {
    const auto ds = tiny_dataset();
    const auto seq = device_sequence(ds.tasks[0], 0);
    const auto halves = split_device_sequence(seq, 0.5);
    CHECK(halves.first.obs.slots == 150);
    CHECK(halves.second.obs.slots == 150);
    CHECK(halves.first.labels.valid_count == 150 - seq.labels.xi - seq.labels.tau);
    CHECK_THROWS_AS(split_device_sequence(seq, 0.0), ConfigError);
    CHECK_THROWS_AS(split_device_sequence(seq, 1.0), ConfigError);
    CHECK_THROWS_AS(split_device_sequence(seq, 0.01), ConfigError);
}

TEST_CASE("chunked gradient with one chunk equals plain truncated BPTT") {
    const auto ds = tiny_dataset();
    const auto seq = device_sequence(ds.tasks[0], 0);
    const auto p = init_params<float>(dims_for_dataset(ds), 5);
    const auto direct = tbptt_gradients<float>(p, seq.obs, seq.labels.z.data(),
                                               seq.labels.valid_count, 9.0f, 64,
                                               RecurrentState<float>::zeros(p.dims.lstm_units));
    const auto chunked = chunked_gradient<float>(p, seq, 9.0f, seq.obs.slots, 64);
    CHECK(chunked.grad == direct.grad);
    CHECK(chunked.loss == direct.loss);
}

TEST_CASE("chunked gradient equals the weighted mean over zero-state chunks") {
    const auto ds = tiny_dataset();
    const auto seq = device_sequence(ds.tasks[0], 2);
    const auto p = init_params<float>(dims_for_dataset(ds), 6);
    const int chunk_len = 128;

    const auto got = chunked_gradient<float>(p, seq, 9.0f, chunk_len, 32);

    std::vector<float> acc(p.flat.size(), 0.0f);
    double loss_sum = 0.0;
    int valid_total = 0;
    for (int begin = 0; begin < seq.obs.slots; begin += chunk_len) {
        const int end = std::min(begin + chunk_len, seq.obs.slots);
        const int local_valid = std::min(seq.labels.valid_count - begin, end - begin);
        if (local_valid < 1) break;
        const auto chunk = slice_device_sequence_for_chunk(seq, begin, end, local_valid);
        const auto g = tbptt_gradients<float>(p, chunk.obs, chunk.labels.z.data(), local_valid,
                                              9.0f, 32,
                                              RecurrentState<float>::zeros(p.dims.lstm_units));
        loss_sum += static_cast<double>(g.loss) * local_valid;
        valid_total += local_valid;
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g.grad[i] * local_valid;
    }
    REQUIRE(valid_total == seq.labels.valid_count);
    const float inv = 1.0f / static_cast<float>(valid_total);
    for (auto& v : acc) v *= inv;
    CHECK(got.grad == acc);
    CHECK(got.loss == doctest::Approx(loss_sum / valid_total).epsilon(1e-7));
}

TEST_CASE("joint training follows the documented draw sequence") {
    const auto ds = tiny_dataset(1, 300);
    // restrict to one device so the pair draw is degenerate
    MetaDataset one = ds;
    JointConfig cfg;
    cfg.lr = 0.05;
    cfg.steps = 6;
    cfg.chunk_len = 100;
    cfg.trunc_len = 32;
    cfg.optimizer = OptimizerKind::Sgd;

    const std::uint64_t seed = 77;
    TrainState<float> st;
    st.params = init_params<float>(dims_for_dataset(one), 9);
    joint_train(st, one, cfg, seed);

    // replay: same pair/window draws, same gradient, same SGD update
    TrainState<float> ref;
    ref.params = init_params<float>(dims_for_dataset(one), 9);
    const int devices = one.tasks.front().devices();
    for (int s = 0; s < cfg.steps; ++s) {
        RandomStream draw(derive_seed(seed, seed_tag::shuffle, static_cast<std::uint64_t>(s)));
        const int pair = draw.uniform_int(0, static_cast<int>(one.tasks.size()) * devices - 1);
        const auto full = device_sequence(one.tasks[static_cast<std::size_t>(pair / devices)],
                                          pair % devices);
        const int len = std::min(cfg.chunk_len, full.obs.slots);
        const int max_start = std::min(full.obs.slots - len, full.labels.valid_count - 1);
        const int begin = max_start > 0 ? draw.uniform_int(0, max_start) : 0;
        const int local_valid = std::min(full.labels.valid_count - begin, len);
        const auto window = slice_device_sequence_for_chunk(full, begin, begin + len, local_valid);
        const auto g = tbptt_gradients<float>(ref.params, window.obs, window.labels.z.data(),
                                              local_valid, 9.0f, cfg.trunc_len,
                                              RecurrentState<float>::zeros(6));
        for (std::size_t i = 0; i < ref.params.flat.size(); ++i) {
            ref.params.flat[i] -= static_cast<float>(cfg.lr) * g.grad[i];
        }
    }
    CHECK(st.params.flat == ref.params.flat);
    CHECK(st.step == 6);
}

TEST_CASE("split runs continue the draw sequence of a single run") {
    const auto ds = tiny_dataset();
    JointConfig cfg;
    cfg.steps = 10;
    cfg.chunk_len = 120;
    cfg.trunc_len = 32;

    TrainState<float> once;
    once.params = init_params<float>(dims_for_dataset(ds), 3);
    joint_train(once, ds, cfg, 5);

    TrainState<float> twice;
    twice.params = init_params<float>(dims_for_dataset(ds), 3);
    cfg.steps = 4;
    joint_train(twice, ds, cfg, 5);
    cfg.steps = 6;
    joint_train(twice, ds, cfg, 5);

    CHECK(once.params.flat == twice.params.flat);
    CHECK(once.opt.m == twice.opt.m);
    CHECK(once.opt.v == twice.opt.v);
    CHECK(once.step == twice.step);
}

TEST_CASE("meta-training is thread-count invariant") {
    const auto ds = tiny_dataset();
    MetaConfig cfg;
    cfg.meta_batch = 4;
    cfg.max_meta_iters = 5;
    cfg.chunk_len = 100;
    cfg.trunc_len = 32;

    TrainState<float> a;
    a.params = init_params<float>(dims_for_dataset(ds), 1);
    maml_meta_train(a, ds, cfg, 21, 1);

    TrainState<float> b;
    b.params = init_params<float>(dims_for_dataset(ds), 1);
    maml_meta_train(b, ds, cfg, 21, 3);

    CHECK(a.params.flat == b.params.flat);
    CHECK(a.step == b.step);
}

TEST_CASE("meta-training with alpha 0 collapses to SGD on the test half") {
    const auto ds = tiny_dataset();
    MetaConfig cfg;
    cfg.alpha = 0.0;
    cfg.beta = 0.02;
    cfg.meta_batch = 1;
    cfg.max_meta_iters = 1;
    cfg.chunk_len = 100;
    cfg.trunc_len = 32;
    cfg.outer_optimizer = OptimizerKind::Sgd;

    const std::uint64_t seed = 13;
    TrainState<float> st;
    st.params = init_params<float>(dims_for_dataset(ds), 4);
    const auto theta0 = st.params;
    maml_meta_train(st, ds, cfg, seed, 1);

    // replay the single member draw
    const int devices = ds.tasks.front().devices();
    RandomStream draw(derive_seed(seed, seed_tag::shuffle, 0));
    const int pair = draw.uniform_int(0, static_cast<int>(ds.tasks.size()) * devices - 1);
    const auto seq = device_sequence(ds.tasks[static_cast<std::size_t>(pair / devices)],
                                     pair % devices);
    const auto halves = split_device_sequence(seq, cfg.train_fraction);
    const auto g_te = chunked_gradient<float>(theta0, halves.second, 9.0f, cfg.chunk_len,
                                              cfg.trunc_len);
    ModelParams<float> expect = theta0;
    for (std::size_t i = 0; i < expect.flat.size(); ++i) {
        expect.flat[i] -= static_cast<float>(cfg.beta) * g_te.grad[i];
    }
    CHECK(st.params.flat == expect.flat);
}

TEST_CASE("first-order member gradient matches the two-evaluation oracle") {
    const auto ds = tiny_dataset();
    const auto seq = device_sequence(ds.tasks[1], 1);
    const auto theta = init_params<float>(dims_for_dataset(ds), 8);
    MetaConfig cfg;
    cfg.alpha = 0.05;
    cfg.inner_steps = 2;
    cfg.chunk_len = 100;
    cfg.trunc_len = 32;
    cfg.first_order = true;

    const auto got = maml_member_gradient<float>(theta, seq, cfg);

    // oracle: run the inner SGD explicitly, then take the plain gradient of
    // the test half at the adapted parameters
    const auto halves = split_device_sequence(seq, cfg.train_fraction);
    ModelParams<float> phi = theta;
    for (int s = 0; s < cfg.inner_steps; ++s) {
        const auto g_tr =
            chunked_gradient<float>(phi, halves.first, 9.0f, cfg.chunk_len, cfg.trunc_len);
        for (std::size_t i = 0; i < phi.flat.size(); ++i) {
            phi.flat[i] -= static_cast<float>(cfg.alpha) * g_tr.grad[i];
        }
    }
    const auto oracle_grad =
        chunked_gradient<float>(phi, halves.second, 9.0f, cfg.chunk_len, cfg.trunc_len);
    CHECK(got.grad == oracle_grad.grad);
    CHECK(got.test_loss == doctest::Approx(static_cast<double>(oracle_grad.loss)));
}

TEST_CASE("exact member gradient matches finite differences of the meta objective") {
    const auto ds = tiny_dataset(1, 200, 31);
    const auto seq = device_sequence(ds.tasks[0], 0);
    MetaConfig cfg;
    cfg.alpha = 0.02;
    cfg.inner_steps = 1;
    // trunc_len == chunk_len so the inner gradient is a true gradient; with
    // shorter truncation the carried states make its Jacobian asymmetric and
    // the Hessian-vector identity behind exact mode does not hold.
    cfg.chunk_len = 64;
    cfg.trunc_len = 64;
    cfg.first_order = false;

    const ModelDims dims = dims_for_dataset(ds, 4);
    const auto halves = split_device_sequence(seq, cfg.train_fraction);
    RandomStream rng(40);
    int compared = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 8 && compared < 3; ++trial) {
        auto theta = init_params<double>(dims, 50 + trial);
        for (auto& v : theta.flat) v += rng.uniform(-0.05, 0.05);

        const auto got = maml_member_gradient<double>(theta, seq, cfg);

        const auto objective = [&](const std::vector<double>& x) {
            ModelParams<double> q;
            q.dims = dims;
            q.flat = x;
            const auto g_tr =
                chunked_gradient<double>(q, halves.first, 9.0, cfg.chunk_len, cfg.trunc_len);
            ModelParams<double> phi = q;
            for (std::size_t i = 0; i < phi.flat.size(); ++i) {
                phi.flat[i] -= cfg.alpha * g_tr.grad[i];
            }
            const auto g_te =
                chunked_gradient<double>(phi, halves.second, 9.0, cfg.chunk_len, cfg.trunc_len);
            return static_cast<double>(g_te.loss);
        };
        std::vector<double> fd;
        if (!stable_fd(objective, theta.flat, fd)) continue;
        ++compared;
        worst = std::max(worst, max_rel_error(got.grad, fd));
    }
    REQUIRE(compared == 3);
    CHECK(worst < 1e-4);
    MESSAGE("exact-mode max relative error: ", worst);
}

TEST_CASE("exact mode rejects multi-step inner loops") {
    const auto ds = tiny_dataset();
    const auto seq = device_sequence(ds.tasks[0], 0);
    const auto theta = init_params<float>(dims_for_dataset(ds), 2);
    MetaConfig cfg;
    cfg.first_order = false;
    cfg.inner_steps = 2;
    CHECK_THROWS_AS(maml_member_gradient<float>(theta, seq, cfg), ConfigError);
}

TEST_CASE("adaptation ignores everything past the adaptation boundary") {
    const auto ds = tiny_dataset();
    const TaskDataset& task = ds.tasks[0];
    const int t_test = 150;
    const int device = 0;

    // clone the task and rewrite the trace after t_test for every device
    TaskDataset mutated = task;
    for (int k = 0; k < task.devices(); ++k) {
        for (int t = t_test; t < task.trace.slots; ++t) {
            const std::size_t idx =
                static_cast<std::size_t>(k) * task.trace.slots + static_cast<std::size_t>(t);
            mutated.trace.snr[idx] = task.trace.snr[idx] * 3.7f + 0.01f;
        }
    }
    for (int k = 0; k < task.devices(); ++k) {
        mutated.labels[static_cast<std::size_t>(k)] =
            make_labels(mutated.trace, k, LabelMode::Any, 0, 5,
                        task.trace.scenario.fading.snr_threshold_db);
    }

    const auto init = init_params<float>(dims_for_dataset(ds), 14);
    AdaptConfig cfg;
    cfg.lr = 0.05;
    cfg.epochs = 3;
    cfg.trunc_len = 32;

    const auto a = adapt<float>(init, slice_device_sequence(device_sequence(task, device), 0, t_test), cfg);
    const auto b = adapt<float>(
        init, slice_device_sequence(device_sequence(mutated, device), 0, t_test), cfg);
    CHECK(a.flat == b.flat);

    // sanity: adapting on the full mutated sequence does differ
    const auto c = adapt<float>(init, device_sequence(mutated, device), cfg);
    const auto d = adapt<float>(init, device_sequence(task, device), cfg);
    CHECK(c.flat != d.flat);
}

TEST_CASE("zero-epoch adaptation returns the initialization unchanged") {
    const auto ds = tiny_dataset();
    const auto init = init_params<float>(dims_for_dataset(ds), 16);
    AdaptConfig cfg;
    cfg.epochs = 0;
    const auto out = adapt<float>(init, device_sequence(ds.tasks[0], 0), cfg);
    CHECK(out.flat == init.flat);
}

TEST_CASE("training on a learnable sequence reduces the loss") {
    const auto ds = tiny_dataset(2, 600, 19);
    JointConfig cfg;
    cfg.steps = 120;
    cfg.lr = 5e-3;
    cfg.chunk_len = 256;
    cfg.trunc_len = 64;
    TrainState<float> st;
    st.params = init_params<float>(dims_for_dataset(ds, 8), 23);
    const auto curve = joint_train(st, ds, cfg, 3);
    REQUIRE(curve.size() == 120);
    double early = 0.0, late = 0.0;
    for (int i = 0; i < 20; ++i) {
        early += curve[static_cast<std::size_t>(i)].train_loss / 20.0;
        late += curve[curve.size() - 20 + static_cast<std::size_t>(i)].train_loss / 20.0;
    }
    CHECK(late < early);
}

TEST_CASE("meta-training reports divergence as a numerical error") {
    const auto ds = tiny_dataset();
    TrainState<float> st;
    st.params = init_params<float>(dims_for_dataset(ds), 2);
    st.params.flat.back() = std::numeric_limits<float>::quiet_NaN(); // output bias
    MetaConfig mcfg;
    mcfg.max_meta_iters = 2;
    mcfg.meta_batch = 1;
    CHECK_THROWS_AS(maml_meta_train(st, ds, mcfg, 1, 1), NumericalError);

    TrainState<float> st2;
    st2.params = init_params<float>(dims_for_dataset(ds), 2);
    st2.params.flat.back() = std::numeric_limits<float>::quiet_NaN();
    JointConfig jcfg;
    jcfg.steps = 2;
    CHECK_THROWS_AS(joint_train(st2, ds, jcfg, 1), NumericalError);
}

TEST_CASE("meta-training stops when the moving average stalls") {
    const auto ds = tiny_dataset();
    MetaConfig cfg;
    cfg.meta_batch = 1;
    cfg.max_meta_iters = 200;
    cfg.convergence_window = 3;
    cfg.convergence_tol = 1e9; // every improvement counts as a stall
    cfg.chunk_len = 100;
    cfg.trunc_len = 32;
    TrainState<float> st;
    st.params = init_params<float>(dims_for_dataset(ds), 6);
    const auto curve = maml_meta_train(st, ds, cfg, 2, 1);
    CHECK(curve.size() == 6); // stops right at 2 * window
}

TEST_CASE("curve CSV leaves missing test losses empty") {
    const std::string path =
        (std::filesystem::temp_directory_path() / "bp_curve_test.csv").string();
    std::vector<CurvePoint> curve;
    curve.push_back({1, 0.5, 0.25, 0.1});
    curve.push_back({2, 0.4, std::numeric_limits<double>::quiet_NaN(), 0.2});
    write_curve_csv(path, curve);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "iteration,train_loss,test_loss,seconds");
    std::getline(in, line);
    CHECK(line.substr(0, 2) == "1,");
    CHECK(line.find(",0.25,") != std::string::npos);
    std::getline(in, line);
    CHECK(line.find(",,") != std::string::npos);
    std::filesystem::remove(path);
}
