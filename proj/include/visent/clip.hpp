#pragma once

#include <array>
#include <string>
#include <vector>

#include "visent/errors.hpp"

namespace visent {

enum class Modality { image, video };

inline const char* to_string(Modality m) { return m == Modality::image ? "image" : "video"; }

// A frame stack in [0,1] RGB. An image is the F == 1 special case; every
// frame is H*W*3 row-major with interleaved channels.
struct Clip {
    int height = 0;
    int width = 0;
    Modality modality = Modality::image;
    std::vector<std::vector<double>> frames;

    Clip() = default;
    Clip(Modality m, int frame_count, int h, int w) : height(h), width(w), modality(m) {
        if (frame_count < 1) throw InvariantError("clip needs at least one frame");
        if (m == Modality::image && frame_count != 1)
            throw InvariantError("image clip must have exactly one frame");
        frames.assign(static_cast<size_t>(frame_count),
                      std::vector<double>(static_cast<size_t>(h) * w * 3, 0.0));
    }

    static Clip image(int h, int w) { return Clip(Modality::image, 1, h, w); }
    static Clip video(int frame_count, int h, int w) { return Clip(Modality::video, frame_count, h, w); }

    int frame_count() const { return static_cast<int>(frames.size()); }

    double& at(int f, int y, int x, int c) {
        return frames[static_cast<size_t>(f)][(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    double at(int f, int y, int x, int c) const {
        return frames[static_cast<size_t>(f)][(static_cast<size_t>(y) * width + x) * 3 + c];
    }

    void fill(double r, double g, double b) {
        for (auto& fr : frames)
            for (size_t i = 0; i + 2 < fr.size(); i += 3) {
                fr[i] = r;
                fr[i + 1] = g;
                fr[i + 2] = b;
            }
    }

    bool same_shape(const Clip& o) const {
        return height == o.height && width == o.width && frame_count() == o.frame_count();
    }

    // Single frame extracted as a 1-frame image clip.
    Clip frame_as_image(int f) const {
        Clip out = Clip::image(height, width);
        out.frames[0] = frames[static_cast<size_t>(f)];
        return out;
    }

    bool operator==(const Clip& o) const {
        return height == o.height && width == o.width && modality == o.modality && frames == o.frames;
    }
};

inline void check_pixel_range(const Clip& c, const std::string& what) {
    for (const auto& fr : c.frames)
        for (double v : fr)
            if (!(v >= 0.0 && v <= 1.0)) throw InvariantError(what + ": pixel out of [0,1]");
}

}  // namespace visent
