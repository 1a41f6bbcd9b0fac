#include "visent/scene.hpp"

#include <algorithm>
#include <cmath>

namespace visent {

bool shape_contains(const SceneObject& obj, double px, double py, double cx, double cy) {
    const double dx = px - cx;
    const double dy = py - cy;
    switch (obj.shape) {
        case ShapeKind::circle:
            return dx * dx + dy * dy <= obj.size * obj.size;
        case ShapeKind::rectangle:
            return std::abs(dx) <= obj.size && std::abs(dy) <= obj.size * obj.aspect;
        case ShapeKind::triangle: {
            // Isoceles triangle: apex up, circumradius = size.
            const double ax = 0.0, ay = -obj.size;
            const double bx = 0.86602540378443865 * obj.size, by = 0.5 * obj.size;
            const double cx2 = -bx, cy2 = by;
            auto side = [&](double x1, double y1, double x2, double y2) {
                return (x2 - x1) * (dy - y1) - (y2 - y1) * (dx - x1);
            };
            const double s1 = side(ax, ay, bx, by);
            const double s2 = side(bx, by, cx2, cy2);
            const double s3 = side(cx2, cy2, ax, ay);
            return (s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0);
        }
    }
    return false;
}

std::array<double, 2> shape_extent(const SceneObject& obj) {
    switch (obj.shape) {
        case ShapeKind::circle:
            return {obj.size, obj.size};
        case ShapeKind::rectangle:
            return {obj.size, obj.size * obj.aspect};
        case ShapeKind::triangle:
            return {0.86602540378443865 * obj.size, obj.size};
    }
    return {obj.size, obj.size};
}

Scene sample_scene(RngStream& rng, int frames, const WorldConfig& cfg) {
    Scene scene;
    scene.background = kBackgroundColor;
    scene.camera_offset.assign(static_cast<size_t>(std::max(frames, 1)), {0.0, 0.0});

    const int count = cfg.min_objects + rng.index(cfg.max_objects - cfg.min_objects + 1);

    // Distinct classes via a partial Fisher-Yates over the class list.
    std::array<int, kNumClasses> classes;
    for (int i = 0; i < kNumClasses; ++i) classes[i] = i;
    for (int i = 0; i < count; ++i) {
        const int j = i + rng.index(kNumClasses - i);
        std::swap(classes[i], classes[j]);
    }

    const double margin = 0.02;
    for (int i = 0; i < count; ++i) {
        SceneObject obj;
        obj.class_id = classes[i];
        obj.z = kClassDepth[obj.class_id];
        obj.color = kClassColor[obj.class_id];
        obj.shape = static_cast<ShapeKind>(rng.index(3));
        obj.size = rng.uniform(0.08, 0.18);
        obj.aspect = rng.uniform(0.7, 1.3);

        // Displacement over the clip, then a start position leaving room for
        // the full trajectory. Single-frame scenes keep the same draw count.
        const double dx = rng.uniform(-0.15, 0.15);
        const double dy = rng.uniform(-0.15, 0.15);
        const auto ext = shape_extent(obj);
        const double bx = ext[0] + margin;
        const double by = ext[1] + margin;
        const double lo_x = bx + std::max(0.0, -dx);
        const double hi_x = 1.0 - bx - std::max(0.0, dx);
        const double lo_y = by + std::max(0.0, -dy);
        const double hi_y = 1.0 - by - std::max(0.0, dy);
        obj.cx = rng.uniform(lo_x, hi_x);
        obj.cy = rng.uniform(lo_y, hi_y);
        if (frames > 1) {
            obj.vx = dx / (frames - 1);
            obj.vy = dy / (frames - 1);
        }
        scene.objects.push_back(obj);
    }

    // Near-to-far paint order is resolved at render time; keep draw order.
    return scene;
}

}  // namespace visent
