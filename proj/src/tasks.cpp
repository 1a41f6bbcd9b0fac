#include "visent/tasks.hpp"

#include <algorithm>
#include <cmath>

#include "visent/errors.hpp"
#include "visent/render.hpp"

namespace visent {

const char* to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::scribble_map: return "scribble_map";
        case TaskKind::vangogh_style: return "vangogh_style";
        case TaskKind::camera_move: return "camera_move";
        case TaskKind::depth_map: return "depth_map";
        case TaskKind::semantic_seg: return "semantic_seg";
        case TaskKind::salient_track: return "salient_track";
    }
    return "?";
}

const char* to_string(Direction dir) {
    return dir == Direction::understanding ? "understanding" : "generation";
}

TaskKind parse_task(const std::string& name) {
    for (TaskKind k : kAllTasks)
        if (name == to_string(k)) return k;
    throw ConfigError("unknown task: " + name);
}

Direction parse_direction(const std::string& name) {
    if (name == "understanding") return Direction::understanding;
    if (name == "generation") return Direction::generation;
    throw ConfigError("unknown direction: " + name);
}

namespace {

Clip annotate_scribble(const Clip& src, const Scene& scene) {
    const auto ids = rasterize_ids(scene, src.frame_count(), src.height, src.width);
    Clip out(src.modality, src.frame_count(), src.height, src.width);
    const int h = src.height, w = src.width;
    for (int t = 0; t < src.frame_count(); ++t) {
        const auto& m = ids[static_cast<size_t>(t)];
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int id = m[static_cast<size_t>(y) * w + x];
                if (id < 0) continue;
                bool boundary = false;
                if (y > 0 && m[static_cast<size_t>(y - 1) * w + x] != id) boundary = true;
                if (!boundary && y + 1 < h && m[static_cast<size_t>(y + 1) * w + x] != id) boundary = true;
                if (!boundary && x > 0 && m[static_cast<size_t>(y) * w + x - 1] != id) boundary = true;
                if (!boundary && x + 1 < w && m[static_cast<size_t>(y) * w + x + 1] != id) boundary = true;
                if (boundary)
                    for (int c = 0; c < 3; ++c) out.at(t, y, x, c) = 1.0;
            }
        }
    }
    return out;
}

Clip annotate_depth(const Clip& src, const Scene& scene) {
    const auto ids = rasterize_ids(scene, src.frame_count(), src.height, src.width);
    Clip out(src.modality, src.frame_count(), src.height, src.width);
    double z_min = 0.0;
    for (const auto& obj : scene.objects) z_min = z_min == 0.0 ? obj.z : std::min(z_min, obj.z);
    for (int t = 0; t < src.frame_count(); ++t) {
        const auto& m = ids[static_cast<size_t>(t)];
        for (int i = 0; i < src.height * src.width; ++i) {
            const int id = m[static_cast<size_t>(i)];
            const double v = id < 0 ? 0.0 : z_min / scene.objects[static_cast<size_t>(id)].z;
            auto& fr = out.frames[static_cast<size_t>(t)];
            fr[static_cast<size_t>(i) * 3] = v;
            fr[static_cast<size_t>(i) * 3 + 1] = v;
            fr[static_cast<size_t>(i) * 3 + 2] = v;
        }
    }
    return out;
}

Clip annotate_seg(const Clip& src, const Scene& scene) {
    const auto ids = rasterize_ids(scene, src.frame_count(), src.height, src.width);
    Clip out(src.modality, src.frame_count(), src.height, src.width);
    for (int t = 0; t < src.frame_count(); ++t) {
        const auto& m = ids[static_cast<size_t>(t)];
        for (int i = 0; i < src.height * src.width; ++i) {
            const int id = m[static_cast<size_t>(i)];
            const auto& c = id < 0 ? kSegPalette[0]
                                   : kSegPalette[static_cast<size_t>(
                                         scene.objects[static_cast<size_t>(id)].class_id + 1)];
            auto& fr = out.frames[static_cast<size_t>(t)];
            fr[static_cast<size_t>(i) * 3] = c[0];
            fr[static_cast<size_t>(i) * 3 + 1] = c[1];
            fr[static_cast<size_t>(i) * 3 + 2] = c[2];
        }
    }
    return out;
}

Clip annotate_salient(const Clip& src, const Scene& scene) {
    const auto ids = rasterize_ids(scene, src.frame_count(), src.height, src.width);
    Clip out(src.modality, src.frame_count(), src.height, src.width);
    for (int t = 0; t < src.frame_count(); ++t) {
        const auto& m = ids[static_cast<size_t>(t)];
        // Largest visible object this frame; ties break toward the earlier
        // object index.
        std::vector<int> area(scene.objects.size(), 0);
        for (int v : m)
            if (v >= 0) area[static_cast<size_t>(v)] += 1;
        int best = -1, best_area = 0;
        for (size_t i = 0; i < area.size(); ++i)
            if (area[i] > best_area) {
                best_area = area[i];
                best = static_cast<int>(i);
            }
        if (best < 0) continue;
        for (int i = 0; i < src.height * src.width; ++i)
            if (m[static_cast<size_t>(i)] == best) {
                auto& fr = out.frames[static_cast<size_t>(t)];
                fr[static_cast<size_t>(i) * 3] = 1.0;
                fr[static_cast<size_t>(i) * 3 + 1] = 1.0;
                fr[static_cast<size_t>(i) * 3 + 2] = 1.0;
            }
    }
    return out;
}

Clip annotate_style(const Clip& src) {
    Clip out = src;
    for (auto& fr : out.frames) {
        for (size_t i = 0; i + 2 < fr.size(); i += 3) {
            const double r = fr[i], g = fr[i + 1], b = fr[i + 2];
            for (int c = 0; c < 3; ++c) {
                const double v = kStyleMatrix[static_cast<size_t>(c)][0] * r +
                                 kStyleMatrix[static_cast<size_t>(c)][1] * g +
                                 kStyleMatrix[static_cast<size_t>(c)][2] * b;
                fr[i + static_cast<size_t>(c)] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return out;
}

constexpr int kPanChoices[24][2] = {
    {-2, -2}, {-2, -1}, {-2, 0}, {-2, 1}, {-2, 2}, {-1, -2}, {-1, -1}, {-1, 0},
    {-1, 1},  {-1, 2},  {0, -2}, {0, -1}, {0, 1},  {0, 2},   {1, -2},  {1, -1},
    {1, 0},   {1, 1},   {1, 2},  {2, -2}, {2, -1}, {2, 0},   {2, 1},   {2, 2},
};

int frames_for(Modality m, const WorldConfig& cfg) {
    return m == Modality::image ? 1 : cfg.video_frames;
}

uint64_t task_seed_root(TaskKind kind, uint64_t seed) {
    return derive_seed(seed, 0xbadc0ffeull + static_cast<uint64_t>(kind));
}

}  // namespace

Clip annotate(const Clip& src, const Scene& scene, TaskKind kind) {
    switch (kind) {
        case TaskKind::scribble_map: return annotate_scribble(src, scene);
        case TaskKind::depth_map: return annotate_depth(src, scene);
        case TaskKind::semantic_seg: return annotate_seg(src, scene);
        case TaskKind::salient_track: return annotate_salient(src, scene);
        case TaskKind::vangogh_style: return annotate_style(src);
        case TaskKind::camera_move:
            throw ConfigError("camera_move is an edit, not an annotation");
    }
    throw ConfigError("annotate: unknown task");
}

TaskSample make_task_sample(TaskKind kind, uint64_t seed, const ModalityPlan& plan,
                            Direction direction, const WorldConfig& cfg) {
    TaskSample sample;
    sample.kind = kind;
    sample.seed = seed;
    sample.plan = plan;

    if (is_camera_task(kind)) {
        if (direction == Direction::understanding)
            throw ConfigError("camera_move supports direction=generation only");
        if (plan[1] != Modality::video || plan[3] != Modality::video)
            throw ConfigError(std::string("unsupported context for camera_move: plan requires video "
                                          "outputs (motion needs time)"));
        if (plan[0] != plan[2])
            throw ConfigError("unsupported context for camera_move: pair inputs must share modality");
    } else {
        if (plan[0] != plan[1] || plan[2] != plan[3])
            throw ConfigError(std::string("unsupported context for ") + to_string(kind) +
                              ": each pair must share one modality");
    }
    sample.direction = is_camera_task(kind) ? Direction::generation : direction;

    const uint64_t root = task_seed_root(kind, seed);
    RngStream rng_a(derive_seed(root, 1));
    RngStream rng_b(derive_seed(root, 2));
    RngStream rng_edit(derive_seed(root, 3));

    if (is_camera_task(kind)) {
        const auto pan = kPanChoices[rng_edit.index(24)];
        sample.pan_x = pan[0];
        sample.pan_y = pan[1];
        sample.scene_a = sample_scene(rng_a, cfg.video_frames, cfg);
        sample.scene_b = sample_scene(rng_b, cfg.video_frames, cfg);
        const Clip src_a = render_scene(sample.scene_a, cfg.video_frames, cfg.height, cfg.width);
        const Clip src_b = render_scene(sample.scene_b, cfg.video_frames, cfg.height, cfg.width);
        sample.a_prime = apply_camera_move(src_a, pan[0], pan[1], sample.scene_a.background);
        sample.b_prime = apply_camera_move(src_b, pan[0], pan[1], sample.scene_b.background);
        sample.a = plan[0] == Modality::image ? src_a.frame_as_image(0) : src_a;
        sample.b = plan[2] == Modality::image ? src_b.frame_as_image(0) : src_b;
        return sample;
    }

    const int fa = frames_for(plan[0], cfg);
    const int fb = frames_for(plan[2], cfg);
    sample.scene_a = sample_scene(rng_a, fa, cfg);
    sample.scene_b = sample_scene(rng_b, fb, cfg);
    Clip src_a = render_scene(sample.scene_a, fa, cfg.height, cfg.width);
    Clip src_b = render_scene(sample.scene_b, fb, cfg.height, cfg.width);
    Clip ann_a = annotate(src_a, sample.scene_a, kind);
    Clip ann_b = annotate(src_b, sample.scene_b, kind);

    if (direction == Direction::understanding) {
        sample.a = std::move(src_a);
        sample.a_prime = std::move(ann_a);
        sample.b = std::move(src_b);
        sample.b_prime = std::move(ann_b);
    } else {
        sample.a = std::move(ann_a);
        sample.a_prime = std::move(src_a);
        sample.b = std::move(ann_b);
        sample.b_prime = std::move(src_b);
    }
    return sample;
}

}  // namespace visent
