#pragma once

#include <array>
#include <string>

#include "visent/clip.hpp"
#include "visent/scene.hpp"

namespace visent {

enum class TaskKind {
    scribble_map,
    vangogh_style,
    camera_move,
    depth_map,
    semantic_seg,
    salient_track,
};

enum class Direction { understanding, generation };

inline constexpr std::array<TaskKind, 6> kAllTasks = {
    TaskKind::scribble_map, TaskKind::vangogh_style, TaskKind::camera_move,
    TaskKind::depth_map,    TaskKind::semantic_seg,  TaskKind::salient_track,
};

const char* to_string(TaskKind kind);
const char* to_string(Direction dir);
TaskKind parse_task(const std::string& name);
Direction parse_direction(const std::string& name);

inline bool is_camera_task(TaskKind kind) { return kind == TaskKind::camera_move; }

// Derived clip from a source clip. For geometry-based annotators the scene
// is re-rasterized at the clip's resolution and frame count, so the output
// is an exact function of (scene, kind). camera_move is an edit, not an
// annotation, and is rejected here.
Clip annotate(const Clip& src, const Scene& scene, TaskKind kind);

using ModalityPlan = std::array<Modality, 4>;

struct TaskSample {
    Clip a, a_prime, b, b_prime;  // clips in emitted sentence order
    TaskKind kind = TaskKind::depth_map;
    uint64_t seed = 0;
    Direction direction = Direction::understanding;
    ModalityPlan plan = {Modality::image, Modality::image, Modality::image, Modality::image};
    // Construction metadata; not part of the on-disk sample.
    Scene scene_a, scene_b;
    int pan_x = 0, pan_y = 0;
};

// Builds one visual-sentence sample. A and B come from independent scene
// draws; both pairs are produced by the same annotator or editor. For
// direction == generation, each (input, output) pair is swapped so derived
// clips precede naturals. camera_move is generation-only and keeps its
// natural (source, edited) order.
TaskSample make_task_sample(TaskKind kind, uint64_t seed, const ModalityPlan& plan,
                            Direction direction = Direction::understanding,
                            const WorldConfig& cfg = {});

}  // namespace visent
