#include "visent/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "visent/errors.hpp"

namespace visent {

std::vector<std::vector<int>> rasterize_ids(const Scene& scene, int frames, int height, int width) {
    std::vector<std::vector<int>> ids(static_cast<size_t>(frames),
                                      std::vector<int>(static_cast<size_t>(height) * width, -1));

    // Near first; the first containing object wins the pixel.
    std::vector<int> order(scene.objects.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scene.objects[a].z < scene.objects[b].z; });

    for (int t = 0; t < frames; ++t) {
        const auto cam = t < static_cast<int>(scene.camera_offset.size())
                             ? scene.camera_offset[static_cast<size_t>(t)]
                             : std::array<double, 2>{0.0, 0.0};
        for (int idx : order) {
            const auto& obj = scene.objects[static_cast<size_t>(idx)];
            const double cx = obj.cx + t * obj.vx + cam[0];
            const double cy = obj.cy + t * obj.vy + cam[1];
            const auto ext = shape_extent(obj);
            if (cx - ext[0] < 0.0 || cx + ext[0] > 1.0 || cy - ext[1] < 0.0 || cy + ext[1] > 1.0)
                throw DataError("object class " + std::to_string(obj.class_id) +
                                " escapes the frame at t=" + std::to_string(t));

            const int y0 = std::max(0, static_cast<int>(std::floor((cy - ext[1]) * height)) - 1);
            const int y1 = std::min(height - 1, static_cast<int>(std::ceil((cy + ext[1]) * height)) + 1);
            const int x0 = std::max(0, static_cast<int>(std::floor((cx - ext[0]) * width)) - 1);
            const int x1 = std::min(width - 1, static_cast<int>(std::ceil((cx + ext[0]) * width)) + 1);
            auto& frame_ids = ids[static_cast<size_t>(t)];
            for (int y = y0; y <= y1; ++y) {
                const double py = (y + 0.5) / height;
                for (int x = x0; x <= x1; ++x) {
                    int& cell = frame_ids[static_cast<size_t>(y) * width + x];
                    if (cell != -1) continue;
                    const double px = (x + 0.5) / width;
                    if (shape_contains(obj, px, py, cx, cy)) cell = idx;
                }
            }
        }
    }
    return ids;
}

Clip render_scene(const Scene& scene, int frames, int height, int width) {
    if (frames < 1) throw ConfigError("render_scene: frames must be >= 1");
    if (height < 16 || width < 16) throw ConfigError("render_scene: resolution below 16x16");

    const auto ids = rasterize_ids(scene, frames, height, width);
    Clip clip(frames == 1 ? Modality::image : Modality::video, frames, height, width);
    for (int t = 0; t < frames; ++t) {
        const auto& frame_ids = ids[static_cast<size_t>(t)];
        auto& px = clip.frames[static_cast<size_t>(t)];
        for (int i = 0; i < height * width; ++i) {
            const int id = frame_ids[static_cast<size_t>(i)];
            const auto& c = id < 0 ? scene.background : scene.objects[static_cast<size_t>(id)].color;
            px[static_cast<size_t>(i) * 3] = c[0];
            px[static_cast<size_t>(i) * 3 + 1] = c[1];
            px[static_cast<size_t>(i) * 3 + 2] = c[2];
        }
    }
    return clip;
}

Clip apply_camera_move(const Clip& src, int pan_x, int pan_y,
                       const std::array<double, 3>& background) {
    if (src.modality != Modality::video)
        throw ConfigError("apply_camera_move: source must be a video clip");
    const int last = src.frame_count() - 1;
    if (std::abs(pan_x) * last >= src.width || std::abs(pan_y) * last >= src.height)
        throw DataError("apply_camera_move: cumulative pan exceeds frame size");

    Clip out = src;
    for (int t = 0; t < src.frame_count(); ++t) {
        const int sx = pan_x * t;
        const int sy = pan_y * t;
        for (int y = 0; y < src.height; ++y) {
            for (int x = 0; x < src.width; ++x) {
                const int oy = y - sy;
                const int ox = x - sx;
                for (int c = 0; c < 3; ++c) {
                    out.at(t, y, x, c) =
                        (oy >= 0 && oy < src.height && ox >= 0 && ox < src.width)
                            ? src.at(t, oy, ox, c)
                            : background[static_cast<size_t>(c)];
                }
            }
        }
    }
    return out;
}

}  // namespace visent
