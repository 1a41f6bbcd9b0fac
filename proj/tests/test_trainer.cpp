#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "visent/checkpoint.hpp"
#include "visent/errors.hpp"
#include "visent/trainer.hpp"

using namespace visent;

namespace {

WorldConfig small_world() {
    WorldConfig wc;
    wc.height = 16;
    wc.width = 16;
    wc.video_frames = 3;
    return wc;
}

ModelConfig small_model(uint64_t seed = 5) {
    ModelConfig mc;
    mc.dim = 48;   // >= token dim for patch 4, keeps the tied output head
    mc.heads = 2;
    mc.layers = 2;
    mc.patch = 4;
    mc.mlp_ratio = 2;
    mc.prompt_len = 2;
    mc.seed = seed;
    return mc;
}

TaskDataset small_dataset(TaskKind kind, ContextType ctx, int count, uint64_t seed0 = 500) {
    TaskDataset d;
    d.kind = kind;
    d.context = ctx;
    d.direction = is_camera_task(kind) ? Direction::generation : Direction::understanding;
    for (int i = 0; i < count; ++i)
        d.samples.push_back(make_task_sample(kind, seed0 + static_cast<uint64_t>(i),
                                             context_row(ctx), d.direction, small_world()));
    return d;
}

TokenGrid small_grid(uint64_t seed) {
    const TaskSample s = make_task_sample(TaskKind::depth_map, seed, context_row(ContextType::II),
                                          Direction::understanding, small_world());
    return tokenize(compose({s}, ContextType::II, ShotConfig{4}), 4);
}

}  // namespace

TEST_CASE("noising: interpolation endpoints") {
    const TokenGrid clean = small_grid(3);

    const NoisySentence z0 = noising(clean, 0.0, 77);
    CHECK(z0.grid.tokens == clean.tokens);

    const NoisySentence z1 = noising(clean, 1.0, 77);
    for (int r = 0; r < clean.rows; ++r) {
        const double* z = z1.grid.row(r);
        const double* e = z1.epsilon.data() + static_cast<size_t>(r) * clean.token_dim;
        const double* x = clean.row(r);
        for (int j = 0; j < clean.token_dim; ++j) {
            if (clean.target_mask[static_cast<size_t>(r)] != 0)
                CHECK(z[j] == e[j]);
            else
                CHECK(z[j] == x[j]);
        }
    }
}

TEST_CASE("noising: context rows stay bit-equal at every t") {
    const TokenGrid clean = small_grid(4);
    for (double t : {0.1, 0.33, 0.5, 0.999}) {
        const NoisySentence z = noising(clean, t, 55);
        for (int r = 0; r < clean.rows; ++r) {
            if (clean.target_mask[static_cast<size_t>(r)] != 0) continue;
            CHECK(std::memcmp(z.grid.row(r), clean.row(r),
                              sizeof(double) * static_cast<size_t>(clean.token_dim)) == 0);
        }
    }
}

TEST_CASE("noising: interpolation identity against an independent recompute") {
    const TokenGrid clean = small_grid(5);
    for (double t : {0.25, 0.7}) {
        const NoisySentence z = noising(clean, t, 99);
        for (int r = 0; r < clean.rows; ++r) {
            if (clean.target_mask[static_cast<size_t>(r)] == 0) continue;
            for (int j = 0; j < clean.token_dim; ++j) {
                const double e = z.epsilon[static_cast<size_t>(r) * clean.token_dim + j];
                const double want = (1.0 - t) * clean.row(r)[j] + t * e;
                CHECK(z.grid.row(r)[j] == want);
            }
        }
    }
}

TEST_CASE("noising: deterministic in the seed, t validated") {
    const TokenGrid clean = small_grid(6);
    const NoisySentence a = noising(clean, 0.4, 123);
    const NoisySentence b = noising(clean, 0.4, 123);
    CHECK(a.grid.tokens == b.grid.tokens);
    CHECK(a.epsilon == b.epsilon);
    CHECK_THROWS_AS(noising(clean, 1.5, 1), ConfigError);
    CHECK_THROWS_AS(noising(clean, -0.1, 1), ConfigError);
}

TEST_CASE("loss: exact zero at the target velocity, mask blocks context rows") {
    const TokenGrid clean = small_grid(7);
    const NoisySentence z = noising(clean, 0.6, 11);
    Mat perfect(clean.rows, clean.token_dim);
    for (int r = 0; r < clean.rows; ++r)
        for (int j = 0; j < clean.token_dim; ++j)
            perfect.at(r, j) = z.epsilon[static_cast<size_t>(r) * clean.token_dim + j] -
                               clean.row(r)[j];
    CHECK(velocity_loss(perfect, z.epsilon, clean.tokens, clean.target_mask) == 0.0);

    // perturbing any context row leaves the loss untouched, exactly
    Mat perturbed = perfect;
    for (int r = 0; r < clean.rows; ++r)
        if (clean.target_mask[static_cast<size_t>(r)] == 0)
            for (int j = 0; j < clean.token_dim; ++j) perturbed.at(r, j) = 1e9;
    CHECK(velocity_loss(perturbed, z.epsilon, clean.tokens, clean.target_mask) == 0.0);
}

TEST_CASE("loss: zero prediction gives the mean square of the velocity target") {
    const TokenGrid clean = small_grid(8);
    const NoisySentence z = noising(clean, 0.5, 13);
    Mat zero(clean.rows, clean.token_dim);

    double acc = 0.0;
    int rows = 0;
    for (int r = 0; r < clean.rows; ++r) {
        if (clean.target_mask[static_cast<size_t>(r)] == 0) continue;
        rows += 1;
        for (int j = 0; j < clean.token_dim; ++j) {
            const double v =
                z.epsilon[static_cast<size_t>(r) * clean.token_dim + j] - clean.row(r)[j];
            acc += v * v;
        }
    }
    const double want = acc / (static_cast<double>(rows) * clean.token_dim);
    CHECK(velocity_loss(zero, z.epsilon, clean.tokens, clean.target_mask) ==
          doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("loss: gradient matches the quadratic form") {
    const TokenGrid clean = small_grid(9);
    const NoisySentence z = noising(clean, 0.5, 17);
    Mat out(clean.rows, clean.token_dim);
    RngStream rng(3);
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();

    Mat grad;
    const double base = velocity_loss(out, z.epsilon, clean.tokens, clean.target_mask, &grad);
    // directional probe
    const int r = clean.target_begin();
    const double h = 1e-6;
    out.at(r, 5) += h;
    const double up = velocity_loss(out, z.epsilon, clean.tokens, clean.target_mask);
    CHECK((up - base) / h == doctest::Approx(grad.at(r, 5)).epsilon(1e-4));
    // context rows receive exactly zero gradient
    for (int row = 0; row < clean.rows; ++row)
        if (clean.target_mask[static_cast<size_t>(row)] == 0)
            for (int j = 0; j < clean.token_dim; ++j) CHECK(grad.at(row, j) == 0.0);
}

TEST_CASE("sample_context: supports and frequencies") {
    RngStream rng(2025);
    for (int i = 0; i < 1000; ++i) {
        const ContextType c = sample_context(TaskKind::camera_move, rng);
        CHECK((c == ContextType::I || c == ContextType::IV));
    }

    RngStream r2(77);
    int counts[4] = {0, 0, 0, 0};
    for (int i = 0; i < 10000; ++i)
        counts[static_cast<int>(sample_context(TaskKind::depth_map, r2))] += 1;
    CHECK(std::abs(counts[0] / 10000.0 - 0.3) <= 0.03);
    CHECK(std::abs(counts[1] / 10000.0 - 0.3) <= 0.03);
    CHECK(std::abs(counts[2] / 10000.0 - 0.4) <= 0.03);
    CHECK(counts[3] == 0);

    RngStream r3(42), r4(42);
    for (int i = 0; i < 100; ++i)
        CHECK(sample_context(TaskKind::depth_map, r3) == sample_context(TaskKind::depth_map, r4));
}

TEST_CASE("trainer: loss descends on a small task (median of three seeds)") {
    std::vector<double> first_losses, last_losses;
    TrainingData data;
    data.sets.push_back(small_dataset(TaskKind::scribble_map, ContextType::II, 8));
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        DiTModel model(small_model(seed));
        model.inject_lora(LoRAConfig{});
        TrainConfig tc;
        tc.lr = 1e-3;
        tc.iters_per_epoch = 200;
        tc.epochs = 1;
        tc.seed = seed;
        Trainer trainer(model, data, tc);
        trainer.run();
        // average the first and last 20 iterations to damp per-draw noise
        double first = 0.0, last = 0.0;
        for (int i = 0; i < 20; ++i) {
            first += trainer.history()[static_cast<size_t>(i)].loss / 20.0;
            last += trainer.history()[trainer.history().size() - 1 - static_cast<size_t>(i)].loss / 20.0;
        }
        first_losses.push_back(first);
        last_losses.push_back(last);
    }
    std::sort(first_losses.begin(), first_losses.end());
    std::sort(last_losses.begin(), last_losses.end());
    CHECK(last_losses[1] < first_losses[1]);  // medians
}

TEST_CASE("trainer: base parameters stay bit-frozen through training") {
    TrainingData data;
    data.sets.push_back(small_dataset(TaskKind::depth_map, ContextType::II, 6));
    DiTModel model(small_model());
    model.inject_lora(LoRAConfig{});
    std::vector<std::vector<double>> before;
    for (Tensor* t : model.base_parameters()) before.push_back(t->v);

    TrainConfig tc;
    tc.lr = 1e-3;
    tc.iters_per_epoch = 50;
    tc.epochs = 1;
    Trainer trainer(model, data, tc);
    trainer.run();

    size_t i = 0;
    for (Tensor* t : model.base_parameters()) REQUIRE(t->v == before[i++]);
    // and the adapters actually moved
    double moved = 0.0;
    for (Tensor* t : model.trainable_parameters())
        for (double v : t->g) moved += std::abs(v);
    CHECK(trainer.iteration() == 50);
}

TEST_CASE("trainer: resumed run replays the next epoch exactly") {
    TrainingData data;
    data.sets.push_back(small_dataset(TaskKind::depth_map, ContextType::II, 6));

    TrainConfig tc;
    tc.lr = 1e-3;
    tc.iters_per_epoch = 12;
    tc.epochs = 2;
    tc.seed = 9;

    // straight two-epoch run
    DiTModel m1(small_model());
    m1.inject_lora(LoRAConfig{});
    Trainer t1(m1, data, tc);
    t1.run();

    // one epoch, checkpoint, resume
    DiTModel m2(small_model());
    m2.inject_lora(LoRAConfig{});
    TrainConfig tc1 = tc;
    tc1.epochs = 1;
    Trainer t2(m2, data, tc1);
    t2.run();
    TrainerSnapshot snap;
    snap.epoch = t2.epoch();
    snap.iteration = t2.iteration();
    snap.adam = t2.adam();
    snap.data_rng = t2.data_rng().serialize();
    snap.noise_rng = t2.noise_rng().serialize();
    save_checkpoint("/tmp/visent_test_resume.ckpt", m2, &snap);

    LoadedCheckpoint loaded = load_checkpoint("/tmp/visent_test_resume.ckpt");
    REQUIRE(loaded.snapshot.has_value());
    Trainer t3(*loaded.model, data, tc);
    t3.adam() = loaded.snapshot->adam;
    t3.data_rng().deserialize(loaded.snapshot->data_rng);
    t3.noise_rng().deserialize(loaded.snapshot->noise_rng);
    t3.restore_counters(loaded.snapshot->epoch, loaded.snapshot->iteration);
    t3.run();

    REQUIRE(t3.history().size() == 12);
    for (int i = 0; i < 12; ++i)
        CHECK(t3.history()[static_cast<size_t>(i)].loss ==
              t1.history()[static_cast<size_t>(12 + i)].loss);
}

TEST_CASE("trainer: non-finite loss aborts with a diagnostic") {
    TrainingData data;
    data.sets.push_back(small_dataset(TaskKind::depth_map, ContextType::II, 4));
    DiTModel model(small_model());
    model.inject_lora(LoRAConfig{});
    for (auto& e : model.lora_state().entries)
        std::fill(e.up.v.begin(), e.up.v.end(), 1e200);

    TrainConfig tc;
    tc.iters_per_epoch = 2;
    tc.epochs = 1;
    Trainer trainer(model, data, tc);
    CHECK_THROWS_AS(trainer.run(), NumericalError);
}

TEST_CASE("trainer: refuses to run without adapters") {
    TrainingData data;
    data.sets.push_back(small_dataset(TaskKind::depth_map, ContextType::II, 4));
    DiTModel model(small_model());
    TrainConfig tc;
    CHECK_THROWS_AS(Trainer(model, data, tc), ConfigError);
}

TEST_CASE("trainer: mixed regime draws contexts from the applicable set") {
    TrainingData data;
    for (ContextType c : applicable_contexts(TaskKind::camera_move))
        data.sets.push_back(small_dataset(TaskKind::camera_move, c, 4));
    ModelConfig mc = small_model();
    mc.max_t = 64;
    DiTModel model(mc);
    model.inject_lora(LoRAConfig{});
    TrainConfig tc;
    tc.regime = Regime::per_task_mixed;
    tc.iters_per_epoch = 30;
    tc.epochs = 1;
    Trainer trainer(model, data, tc);
    trainer.run();
    for (const auto& row : trainer.history())
        CHECK((row.context == ContextType::I || row.context == ContextType::IV));
}
