#pragma once

#include <array>
#include <vector>

#include "visent/rng.hpp"

namespace visent {

enum class ShapeKind { circle, rectangle, triangle };

// World constants are shipped as fixed values so every annotation is
// reproducible from (seed, config) alone.
inline constexpr int kNumClasses = 6;

// Depth planes per class. Pairwise ratios are distinct, so a normalized
// depth map of a multi-object scene identifies the absolute planes (and with
// them the class colors) uniquely.
inline constexpr std::array<double, kNumClasses> kClassDepth = {1.6, 2.1, 2.9, 4.3, 5.9, 7.7};

// Base colors by class, used for the rendered objects.
inline constexpr std::array<std::array<double, 3>, kNumClasses> kClassColor = {{
    {0.90, 0.20, 0.20},
    {0.20, 0.60, 0.90},
    {0.95, 0.75, 0.15},
    {0.25, 0.80, 0.35},
    {0.75, 0.30, 0.85},
    {0.95, 0.50, 0.10},
}};

// Annotation palette for segmentation maps; index 0 is background.
inline constexpr std::array<std::array<double, 3>, kNumClasses + 1> kSegPalette = {{
    {0.00, 0.00, 0.00},
    {1.00, 0.00, 0.00},
    {0.00, 0.00, 1.00},
    {1.00, 1.00, 0.00},
    {0.00, 1.00, 0.00},
    {1.00, 0.00, 1.00},
    {0.00, 1.00, 1.00},
}};

inline constexpr std::array<double, 3> kBackgroundColor = {0.10, 0.11, 0.13};

// Palette remap matrix for the style task: rgb' = clamp(M * rgb).
inline constexpr std::array<std::array<double, 3>, 3> kStyleMatrix = {{
    {0.60, 0.30, 0.30},
    {0.20, 0.70, 0.30},
    {0.50, 0.10, 0.60},
}};

struct SceneObject {
    ShapeKind shape = ShapeKind::circle;
    double cx = 0.5, cy = 0.5;  // center in unit coordinates
    double size = 0.1;          // circle radius / rect half-width / triangle circumradius
    double aspect = 1.0;        // rect half-height = size * aspect
    double z = 1.0;             // depth plane, smaller = nearer
    int class_id = 0;
    std::array<double, 3> color = {1, 1, 1};
    double vx = 0.0, vy = 0.0;  // unit coords per frame
};

struct Scene {
    std::vector<SceneObject> objects;  // at most 4; class ids unique; z unique
    std::array<double, 3> background = kBackgroundColor;
    std::vector<std::array<double, 2>> camera_offset;  // per frame, unit coords
};

struct WorldConfig {
    int height = 32;
    int width = 32;
    int video_frames = 5;
    int min_objects = 2;
    int max_objects = 4;
};

// Point-in-shape test at a given object position.
bool shape_contains(const SceneObject& obj, double px, double py, double cx, double cy);

// Half-extent of an object's bounding box (x and y).
std::array<double, 2> shape_extent(const SceneObject& obj);

// Draws a scene whose objects stay fully inside the unit frame for `frames`
// steps. Deterministic in the rng stream; a fixed number of draws per object.
Scene sample_scene(RngStream& rng, int frames, const WorldConfig& cfg);

}  // namespace visent
