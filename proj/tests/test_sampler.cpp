#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "visent/errors.hpp"
#include "visent/sampler.hpp"
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

VisualSentence small_sentence(uint64_t seed, ContextType ctx = ContextType::II,
                              TaskKind kind = TaskKind::depth_map) {
    const Direction dir = is_camera_task(kind) ? Direction::generation : Direction::understanding;
    const TaskSample s = make_task_sample(kind, seed, context_row(ctx), dir, small_world());
    return compose({s}, ctx, ShotConfig{4});
}

}  // namespace

TEST_CASE("integrate_flow: one exact Euler step recovers the clean target") {
    const VisualSentence sentence = small_sentence(3);
    const TokenGrid clean = tokenize(sentence, 4);
    const int begin = clean.target_begin();
    const int rows = clean.target_rows();

    // velocity oracle: v = z - x on target rows (exact for the on-path pair)
    auto velocity = [&](const TokenGrid& g, double) {
        Mat v(g.rows, g.token_dim);
        for (int r = begin; r < begin + rows; ++r)
            for (int j = 0; j < g.token_dim; ++j)
                v.at(r, j) = g.row(r)[j] - clean.row(r)[j];
        return v;
    };

    SampleConfig cfg;
    cfg.steps = 1;
    cfg.seed = 11;
    const SampleOutput out = integrate_flow(velocity, clean, cfg);
    const Clip want = detokenize_target(clean);
    for (int f = 0; f < want.frame_count(); ++f)
        for (size_t i = 0; i < want.frames[static_cast<size_t>(f)].size(); ++i)
            CHECK(out.clip.frames[static_cast<size_t>(f)][i] ==
                  doctest::Approx(want.frames[static_cast<size_t>(f)][i]).epsilon(1e-12));
}

TEST_CASE("integrate_flow: context rows are bit-clean at every evaluation") {
    const VisualSentence sentence = small_sentence(5);
    const TokenGrid clean = tokenize(sentence, 4);

    bool context_seen_clean = true;
    auto velocity = [&](const TokenGrid& g, double) {
        for (int r = 0; r < g.rows; ++r) {
            if (g.target_mask[static_cast<size_t>(r)] != 0) continue;
            if (std::memcmp(g.row(r), clean.row(r),
                            sizeof(double) * static_cast<size_t>(g.token_dim)) != 0)
                context_seen_clean = false;
        }
        Mat v(g.rows, g.token_dim);
        return v;
    };

    SampleConfig cfg;
    cfg.steps = 8;
    cfg.seed = 2;
    const SampleOutput out = integrate_flow(velocity, clean, cfg);
    CHECK(context_seen_clean);
    CHECK(out.context_intact);
}

TEST_CASE("integrate_flow: trace shape, init statistics, final snapshot") {
    const VisualSentence sentence = small_sentence(7);
    const TokenGrid clean = tokenize(sentence, 4);
    auto velocity = [&](const TokenGrid& g, double) { return Mat(g.rows, g.token_dim); };

    SampleConfig cfg;
    cfg.steps = 6;
    cfg.seed = 31;
    cfg.trace = true;
    const SampleOutput out = integrate_flow(velocity, clean, cfg);
    REQUIRE(out.trace.size() == 7);  // steps + 1

    // first snapshot ~ N(0,1): sample mean within 4 sigma / sqrt(n)
    double mean = 0.0;
    for (double v : out.trace.front()) mean += v;
    mean /= static_cast<double>(out.trace.front().size());
    CHECK(std::abs(mean) <= 4.0 / std::sqrt(static_cast<double>(out.trace.front().size())));

    // last snapshot equals the returned latent: decode and compare
    TokenGrid g = clean;
    std::memcpy(g.row(g.target_begin()), out.trace.back().data(),
                sizeof(double) * out.trace.back().size());
    const Clip decoded = detokenize_target(g);
    CHECK(decoded == out.clip);
}

TEST_CASE("integrate_flow: deterministic under a fixed seed") {
    const VisualSentence sentence = small_sentence(9);
    const TokenGrid clean = tokenize(sentence, 4);
    auto velocity = [&](const TokenGrid& g, double t) {
        Mat v(g.rows, g.token_dim);
        for (int r = 0; r < g.rows; ++r)
            for (int j = 0; j < g.token_dim; ++j) v.at(r, j) = 0.3 * g.row(r)[j] + 0.1 * t;
        return v;
    };
    SampleConfig cfg;
    cfg.steps = 12;
    cfg.seed = 77;
    const SampleOutput a = integrate_flow(velocity, clean, cfg);
    const SampleOutput b = integrate_flow(velocity, clean, cfg);
    CHECK(a.clip == b.clip);
}

TEST_CASE("integrate_flow: non-finite latents abort with the step index") {
    const VisualSentence sentence = small_sentence(13);
    const TokenGrid clean = tokenize(sentence, 4);
    auto velocity = [&](const TokenGrid& g, double) {
        Mat v(g.rows, g.token_dim);
        for (size_t i = 0; i < v.size(); ++i) v.data()[i] = std::numeric_limits<double>::infinity();
        return v;
    };
    SampleConfig cfg;
    cfg.steps = 4;
    CHECK_THROWS_WITH_AS(integrate_flow(velocity, clean, cfg), doctest::Contains("step"),
                         NumericalError);
}

TEST_CASE("sample_target: output matches the context row's target modality") {
    ModelConfig mc;
    mc.dim = 48;
    mc.heads = 2;
    mc.layers = 1;
    mc.patch = 4;
    mc.mlp_ratio = 2;
    mc.seed = 21;
    DiTModel model(mc);
    SampleConfig cfg;
    cfg.steps = 2;
    for (ContextType ctx : {ContextType::I, ContextType::II, ContextType::III}) {
        const VisualSentence s = small_sentence(40 + static_cast<uint64_t>(ctx), ctx);
        const SampleOutput out = sample_target(model, s, cfg);
        const Modality want = context_row(ctx)[3];
        CHECK(out.clip.modality == want);
        CHECK(out.clip.frame_count() == (want == Modality::image ? 1 : 3));
    }
    const VisualSentence cam = small_sentence(99, ContextType::IV, TaskKind::camera_move);
    const SampleOutput out = sample_target(model, cam, cfg);
    CHECK(out.clip.modality == Modality::video);
}

TEST_CASE("sample_target: modality mismatch with the context row is rejected") {
    ModelConfig mc;
    mc.dim = 48;
    mc.heads = 2;
    mc.layers = 1;
    mc.patch = 4;
    mc.seed = 21;
    DiTModel model(mc);
    VisualSentence s = small_sentence(50, ContextType::II);
    s.context_type = ContextType::III;  // claims video queries, clips are images
    SampleConfig cfg;
    CHECK_THROWS_AS(sample_target(model, s, cfg), ConfigError);
}

TEST_CASE("sample config: steps floor") {
    const VisualSentence sentence = small_sentence(3);
    const TokenGrid clean = tokenize(sentence, 4);
    auto velocity = [&](const TokenGrid& g, double) { return Mat(g.rows, g.token_dim); };
    SampleConfig cfg;
    cfg.steps = 0;
    CHECK_THROWS_AS(integrate_flow(velocity, clean, cfg), ConfigError);
}
