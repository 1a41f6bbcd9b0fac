#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <tuple>

#include "visent/errors.hpp"
#include "visent/token_grid.hpp"

using namespace visent;

namespace {

std::vector<TaskSample> make_samples(TaskKind kind, ContextType ctx, int count,
                                     Direction dir = Direction::understanding,
                                     uint64_t seed0 = 100) {
    std::vector<TaskSample> out;
    for (int i = 0; i < count; ++i)
        out.push_back(make_task_sample(kind, seed0 + static_cast<uint64_t>(i), context_row(ctx),
                                       is_camera_task(kind) ? Direction::generation : dir));
    return out;
}

Clip random_clip(RngStream& rng, Modality m, int frames, int h, int w) {
    Clip c(m, frames, h, w);
    for (auto& fr : c.frames)
        for (double& v : fr) v = rng.uniform();
    return c;
}

}  // namespace

TEST_CASE("context rows match the four layouts") {
    const Modality V = Modality::video, I = Modality::image;
    CHECK(context_row(ContextType::I) == ModalityPlan{V, V, V, V});
    CHECK(context_row(ContextType::II) == ModalityPlan{I, I, I, I});
    CHECK(context_row(ContextType::III) == ModalityPlan{I, I, V, V});
    CHECK(context_row(ContextType::IV) == ModalityPlan{I, V, I, V});
}

TEST_CASE("shot extension repeats the query pair pattern") {
    // 6-shot III: I,I,V,V,V,V
    const Modality want6[6] = {Modality::image, Modality::image, Modality::video,
                               Modality::video, Modality::video, Modality::video};
    for (int p = 0; p < 6; ++p) CHECK(slot_modality(ContextType::III, p, 6) == want6[p]);
    // 8-shot IV alternates throughout
    for (int p = 0; p < 8; ++p)
        CHECK(slot_modality(ContextType::IV, p, 8) ==
              (p % 2 == 0 ? Modality::image : Modality::video));
}

TEST_CASE("compose: context III modality sequence") {
    const auto samples = make_samples(TaskKind::depth_map, ContextType::III, 1);
    const VisualSentence s = compose(samples, ContextType::III, ShotConfig{4});
    CHECK(s.clips[0].clip.modality == Modality::image);
    CHECK(s.clips[1].clip.modality == Modality::image);
    CHECK(s.clips[2].clip.modality == Modality::video);
    CHECK(s.clips[3].clip.modality == Modality::video);
}

TEST_CASE("compose: eight one-frame clips for context II, target last") {
    const auto samples = make_samples(TaskKind::depth_map, ContextType::II, 3);
    const VisualSentence s = compose(samples, ContextType::II, ShotConfig{8});
    CHECK(s.clips.size() == 8);
    for (const auto& rc : s.clips) CHECK(rc.clip.frame_count() == 1);
    CHECK(s.clips.back().role == Role::target);
    CHECK(total_frames(s) == 8);
}

TEST_CASE("compose: frame totals") {
    const auto s1 = compose(make_samples(TaskKind::depth_map, ContextType::I, 1), ContextType::I,
                            ShotConfig{4});
    CHECK(total_frames(s1) == 20);  // 4 clips x 5 frames
    const auto s2 = compose(make_samples(TaskKind::camera_move, ContextType::IV, 1,
                                         Direction::generation, 300),
                            ContextType::IV, ShotConfig{4});
    CHECK(total_frames(s2) == 12);  // 1+5+1+5

    const auto s3 = compose(make_samples(TaskKind::depth_map, ContextType::I, 2), ContextType::I,
                            ShotConfig{6});
    CHECK(total_frames(s3) == 30);
}

TEST_CASE("compose: modality mismatch names the position") {
    const auto samples = make_samples(TaskKind::depth_map, ContextType::II, 1);
    CHECK_THROWS_WITH_AS(compose(samples, ContextType::I, ShotConfig{4}),
                         doctest::Contains("position 0"), ConfigError);
}

TEST_CASE("compose: requires enough distinct pairs") {
    const auto samples = make_samples(TaskKind::depth_map, ContextType::II, 1);
    CHECK_THROWS_AS(compose(samples, ContextType::II, ShotConfig{8}), ConfigError);
    CHECK_THROWS_AS(compose(samples, ContextType::II, ShotConfig{5}), ConfigError);
}

TEST_CASE("compose: split by role recovers the inputs bit-identically") {
    const auto samples = make_samples(TaskKind::semantic_seg, ContextType::III, 1);
    const VisualSentence s = compose(samples, ContextType::III, ShotConfig{4});
    CHECK(s.clips[0].role == Role::example_in);
    CHECK(s.clips[0].clip == samples[0].a);
    CHECK(s.clips[1].role == Role::example_out);
    CHECK(s.clips[1].clip == samples[0].a_prime);
    CHECK(s.clips[2].role == Role::query_in);
    CHECK(s.clips[2].clip == samples[0].b);
    CHECK(s.clips[3].role == Role::target);
    CHECK(s.clips[3].clip == samples[0].b_prime);
}

TEST_CASE("reverse: pairwise swap, involution, direction toggle") {
    const auto samples = make_samples(TaskKind::depth_map, ContextType::II, 1);
    const VisualSentence s = compose(samples, ContextType::II, ShotConfig{4});
    const VisualSentence r = reverse(s);
    CHECK(r.clips[0].clip == s.clips[1].clip);
    CHECK(r.clips[1].clip == s.clips[0].clip);
    CHECK(r.clips[2].clip == s.clips[3].clip);
    CHECK(r.clips[3].clip == s.clips[2].clip);
    CHECK(r.direction == Direction::generation);
    CHECK(r.clips.back().role == Role::target);

    const VisualSentence rr = reverse(r);
    CHECK(rr.direction == s.direction);
    for (int i = 0; i < 4; ++i) {
        CHECK(rr.clips[static_cast<size_t>(i)].clip == s.clips[static_cast<size_t>(i)].clip);
        CHECK(rr.clips[static_cast<size_t>(i)].role == s.clips[static_cast<size_t>(i)].role);
    }
}

TEST_CASE("reverse: depth understanding target becomes the natural clip") {
    const auto samples = make_samples(TaskKind::depth_map, ContextType::II, 1);
    const VisualSentence s = compose(samples, ContextType::II, ShotConfig{4});
    const VisualSentence r = reverse(s);
    CHECK(r.target() == samples[0].b);  // natural image now generated
}

TEST_CASE("reverse: only defined for four shots") {
    const auto samples = make_samples(TaskKind::depth_map, ContextType::II, 2);
    const VisualSentence s6 = compose(samples, ContextType::II, ShotConfig{6});
    CHECK_THROWS_AS(reverse(s6), ConfigError);
}

// ---- token grid ----

TEST_CASE("tokenize: counts and dims for context II") {
    const auto samples = make_samples(TaskKind::depth_map, ContextType::II, 1);
    const VisualSentence s = compose(samples, ContextType::II, ShotConfig{4});
    const TokenGrid g = tokenize(s, 8);
    CHECK(g.rows == 64);  // 4 frames x 16 patches
    CHECK(g.token_dim == 192);
    int target = 0;
    for (uint8_t m : g.target_mask) target += m;
    CHECK(target == 16);  // final clip frames x (H/p)^2
}

TEST_CASE("tokenize: uniform clip tokens are identical") {
    VisualSentence s;
    s.context_type = ContextType::II;
    s.shot_config = ShotConfig{4};
    Clip gray = Clip::image(32, 32);
    gray.fill(0.42, 0.42, 0.42);
    s.clips = {{Role::example_in, gray}, {Role::example_out, gray},
               {Role::query_in, gray},  {Role::target, gray}};
    const TokenGrid g = tokenize(s, 8);
    for (int r = 1; r < g.rows; ++r)
        for (int j = 0; j < g.token_dim; ++j) CHECK(g.row(r)[j] == g.row(0)[0]);
}

TEST_CASE("tokenize/detokenize: exact round trip on random sentences") {
    RngStream rng(2024);
    for (ContextType ctx : {ContextType::I, ContextType::III, ContextType::IV}) {
        VisualSentence s;
        s.context_type = ctx;
        s.shot_config = ShotConfig{4};
        const auto row = context_row(ctx);
        const Role roles[4] = {Role::example_in, Role::example_out, Role::query_in, Role::target};
        for (int i = 0; i < 4; ++i)
            s.clips.push_back({roles[i], random_clip(rng, row[static_cast<size_t>(i)],
                                                     row[static_cast<size_t>(i)] == Modality::image ? 1 : 5,
                                                     32, 32)});
        const TokenGrid g = tokenize(s, 8);
        const VisualSentence back = detokenize(g);
        for (int i = 0; i < 4; ++i) {
            CHECK(back.clips[static_cast<size_t>(i)].clip == s.clips[static_cast<size_t>(i)].clip);
            CHECK(back.clips[static_cast<size_t>(i)].role == s.clips[static_cast<size_t>(i)].role);
        }
    }
}

TEST_CASE("tokenize: coordinates are unique and time is cumulative") {
    const auto samples = make_samples(TaskKind::depth_map, ContextType::III, 1);
    const VisualSentence s = compose(samples, ContextType::III, ShotConfig{4});
    const TokenGrid g = tokenize(s, 8);
    std::set<std::tuple<int, int, int>> seen;
    int prev_t = -1;
    for (int r = 0; r < g.rows; ++r) {
        const auto& c = g.coords[static_cast<size_t>(r)];
        seen.insert({c.t, c.h, c.w});
        CHECK(c.t >= prev_t);
        if (c.t > prev_t) prev_t = c.t;
    }
    CHECK(static_cast<int>(seen.size()) == g.rows);
    // last clip spans times 7..11 (1 + 1 + 5 frames before it)
    CHECK(g.coords.back().t == 11);

    const TokenGrid pc = tokenize(s, 8, true);
    CHECK(pc.coords.back().t == 4);  // per-clip time restarts
}

TEST_CASE("detokenize: target only and clamp") {
    const auto samples = make_samples(TaskKind::depth_map, ContextType::III, 1);
    const VisualSentence s = compose(samples, ContextType::III, ShotConfig{4});
    TokenGrid g = tokenize(s, 8);
    const Clip target = detokenize_target(g);
    CHECK(target.modality == Modality::video);
    CHECK(target.frame_count() == 5);

    g.row(g.target_begin())[0] = 1.2;
    const Clip clamped = detokenize_target(g);
    CHECK(clamped.at(0, 0, 0, 0) == 1.0);
}

TEST_CASE("tokenize: indivisible resolution is rejected") {
    const auto samples = make_samples(TaskKind::depth_map, ContextType::II, 1);
    const VisualSentence s = compose(samples, ContextType::II, ShotConfig{4});
    CHECK_THROWS_AS(tokenize(s, 7), ConfigError);
}

TEST_CASE("detokenize: coordinate gaps are corruption") {
    const auto samples = make_samples(TaskKind::depth_map, ContextType::II, 1);
    const VisualSentence s = compose(samples, ContextType::II, ShotConfig{4});
    TokenGrid g = tokenize(s, 8);
    g.coords[5].w += 1;
    CHECK_THROWS_WITH_AS(detokenize(g), doctest::Contains("corrupt"), DataError);
}
