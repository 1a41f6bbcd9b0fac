#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "visent/clip.hpp"

namespace visent {

struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> bytes;  // H*W*3 row-major
};

// Minimal lossless PNG: 8-bit RGB, no interlace, zlib stream built from
// stored (uncompressed) deflate blocks. Readable by any viewer; the reader
// below only accepts files this writer produces.
void write_png(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_png(const std::filesystem::path& path);

inline uint8_t quantize_u8(double v) {
    double s = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<uint8_t>(s * 255.0 + 0.5);
}

RgbImage frame_to_image(const Clip& clip, int frame);
void image_to_frame(const RgbImage& img, Clip& clip, int frame);

// One file per frame: <dir>/frame_000.png ... Returns the relative filenames.
std::vector<std::string> write_clip(const std::filesystem::path& dir, const Clip& clip);
Clip read_clip(const std::filesystem::path& dir, const std::vector<std::string>& files,
               Modality modality);

// Horizontal strip of every frame of every clip, 2px separators between
// clips. Used for qualitative galleries and sampler step traces.
RgbImage make_strip(const std::vector<const Clip*>& clips);

}  // namespace visent
