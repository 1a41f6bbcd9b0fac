#pragma once

#include "visent/clip.hpp"
#include "visent/scene.hpp"

namespace visent {

// Per-frame object index map: -1 background, otherwise index into
// scene.objects of the nearest object covering the pixel center.
std::vector<std::vector<int>> rasterize_ids(const Scene& scene, int frames, int height, int width);

// Deterministic rasterization. Object position at frame t is
// center + t*velocity + camera_offset[t]; nearer planes paint over farther
// ones. Throws DataError naming the object if any object leaves the frame.
Clip render_scene(const Scene& scene, int frames, int height, int width);

// Translates every frame by the cumulative pan (frame t moves t*pan pixels),
// filling uncovered pixels with the scene background color. Video input
// only; errors when the cumulative pan reaches the frame size.
Clip apply_camera_move(const Clip& src, int pan_x, int pan_y,
                       const std::array<double, 3>& background = kBackgroundColor);

}  // namespace visent
