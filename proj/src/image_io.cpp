#include "visent/image_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "visent/errors.hpp"

namespace visent {
namespace {

uint32_t crc_table_entry(uint32_t n) {
    uint32_t c = n;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    return c;
}

const std::array<uint32_t, 256>& crc_table() {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t n = 0; n < 256; ++n) t[n] = crc_table_entry(n);
        return t;
    }();
    return table;
}

uint32_t crc32(const uint8_t* data, size_t len, uint32_t crc = 0xffffffffu) {
    for (size_t i = 0; i < len; ++i) crc = crc_table()[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc;
}

uint32_t adler32(const uint8_t* data, size_t len) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_be32(out, static_cast<uint32_t>(data.size()));
    size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = crc32(out.data() + type_at, 4 + data.size()) ^ 0xffffffffu;
    put_be32(out, crc);
}

constexpr uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

uint32_t read_be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

}  // namespace

void write_png(const std::filesystem::path& path, const RgbImage& img) {
    if (img.bytes.size() != static_cast<size_t>(img.height) * img.width * 3)
        throw InvariantError("write_png: byte count does not match dimensions");

    // Raw scanlines, filter byte 0 per row.
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (static_cast<size_t>(img.width) * 3 + 1));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        const uint8_t* row = img.bytes.data() + static_cast<size_t>(y) * img.width * 3;
        raw.insert(raw.end(), row, row + static_cast<size_t>(img.width) * 3);
    }

    // zlib wrapper with stored deflate blocks.
    std::vector<uint8_t> idat;
    idat.push_back(0x78);
    idat.push_back(0x01);
    size_t pos = 0;
    do {
        size_t n = std::min<size_t>(raw.size() - pos, 65535);
        bool final = pos + n == raw.size();
        idat.push_back(final ? 1 : 0);
        idat.push_back(static_cast<uint8_t>(n & 0xff));
        idat.push_back(static_cast<uint8_t>(n >> 8));
        idat.push_back(static_cast<uint8_t>(~n & 0xff));
        idat.push_back(static_cast<uint8_t>((~n >> 8) & 0xff));
        idat.insert(idat.end(), raw.begin() + pos, raw.begin() + pos + n);
        pos += n;
    } while (pos < raw.size());
    put_be32(idat, adler32(raw.data(), raw.size()));

    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.width));
    put_be32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);

    std::vector<uint8_t> file(kSignature, kSignature + 8);
    append_chunk(file, "IHDR", ihdr);
    append_chunk(file, "IDAT", idat);
    append_chunk(file, "IEND", {});

    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for write: " + path.string());
    out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

RgbImage read_png(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path.string());
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (file.size() < 8 || std::memcmp(file.data(), kSignature, 8) != 0)
        throw DataError("not a png: " + path.string());

    RgbImage img;
    std::vector<uint8_t> idat;
    size_t at = 8;
    bool saw_ihdr = false;
    while (at + 8 <= file.size()) {
        uint32_t len = read_be32(file.data() + at);
        if (at + 12 + len > file.size()) throw DataError("truncated png: " + path.string());
        std::string type(reinterpret_cast<const char*>(file.data() + at + 4), 4);
        const uint8_t* data = file.data() + at + 8;
        if (type == "IHDR") {
            if (len != 13) throw DataError("bad IHDR: " + path.string());
            img.width = static_cast<int>(read_be32(data));
            img.height = static_cast<int>(read_be32(data + 4));
            if (data[8] != 8 || data[9] != 2 || data[12] != 0)
                throw DataError("unsupported png layout (expect 8-bit RGB, no interlace): " + path.string());
            saw_ihdr = true;
        } else if (type == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (type == "IEND") {
            break;
        }
        at += 12 + len;
    }
    if (!saw_ihdr) throw DataError("missing IHDR: " + path.string());

    if (idat.size() < 6 || idat[0] != 0x78) throw DataError("bad zlib header: " + path.string());
    std::vector<uint8_t> raw;
    size_t p = 2;
    for (;;) {
        if (p + 5 > idat.size()) throw DataError("truncated zlib stream: " + path.string());
        uint8_t hdr = idat[p];
        if ((hdr & 0x06) != 0) throw DataError("unsupported deflate block (writer uses stored): " + path.string());
        size_t n = idat[p + 1] | (size_t(idat[p + 2]) << 8);
        p += 5;
        if (p + n > idat.size()) throw DataError("truncated stored block: " + path.string());
        raw.insert(raw.end(), idat.begin() + p, idat.begin() + p + n);
        p += n;
        if (hdr & 1) break;
    }

    size_t stride = static_cast<size_t>(img.width) * 3 + 1;
    if (raw.size() != stride * static_cast<size_t>(img.height))
        throw DataError("png payload size mismatch: " + path.string());
    img.bytes.resize(static_cast<size_t>(img.height) * img.width * 3);
    for (int y = 0; y < img.height; ++y) {
        const uint8_t* row = raw.data() + static_cast<size_t>(y) * stride;
        if (row[0] != 0) throw DataError("unsupported png filter: " + path.string());
        std::memcpy(img.bytes.data() + static_cast<size_t>(y) * img.width * 3, row + 1,
                    static_cast<size_t>(img.width) * 3);
    }
    return img;
}

RgbImage frame_to_image(const Clip& clip, int frame) {
    RgbImage img;
    img.height = clip.height;
    img.width = clip.width;
    img.bytes.resize(static_cast<size_t>(clip.height) * clip.width * 3);
    const auto& fr = clip.frames[static_cast<size_t>(frame)];
    for (size_t i = 0; i < fr.size(); ++i) img.bytes[i] = quantize_u8(fr[i]);
    return img;
}

void image_to_frame(const RgbImage& img, Clip& clip, int frame) {
    if (img.height != clip.height || img.width != clip.width)
        throw DataError("frame dimensions do not match clip");
    auto& fr = clip.frames[static_cast<size_t>(frame)];
    for (size_t i = 0; i < fr.size(); ++i) fr[i] = img.bytes[i] / 255.0;
}

std::vector<std::string> write_clip(const std::filesystem::path& dir, const Clip& clip) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    for (int f = 0; f < clip.frame_count(); ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03d.png", f);
        write_png(dir / name, frame_to_image(clip, f));
        files.emplace_back(name);
    }
    return files;
}

Clip read_clip(const std::filesystem::path& dir, const std::vector<std::string>& files,
               Modality modality) {
    if (files.empty()) throw DataError("clip has no frames: " + dir.string());
    RgbImage first = read_png(dir / files[0]);
    Clip clip(modality, static_cast<int>(files.size()), first.height, first.width);
    image_to_frame(first, clip, 0);
    for (size_t f = 1; f < files.size(); ++f) image_to_frame(read_png(dir / files[f]), clip, static_cast<int>(f));
    return clip;
}

RgbImage make_strip(const std::vector<const Clip*>& clips) {
    if (clips.empty()) throw InvariantError("make_strip: no clips");
    const int h = clips[0]->height;
    const int sep = 2;
    int total_w = 0;
    int panels = 0;
    for (const Clip* c : clips) {
        if (c->height != h) throw InvariantError("make_strip: clip heights differ");
        total_w += c->width * c->frame_count();
        panels += 1;
    }
    total_w += sep * (panels - 1);

    RgbImage strip;
    strip.height = h;
    strip.width = total_w;
    strip.bytes.assign(static_cast<size_t>(h) * total_w * 3, 96);  // gray separators

    int x0 = 0;
    for (const Clip* c : clips) {
        for (int f = 0; f < c->frame_count(); ++f) {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < c->width; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        strip.bytes[(static_cast<size_t>(y) * total_w + x0 + x) * 3 + ch] =
                            quantize_u8(c->at(f, y, x, ch));
            x0 += c->width;
        }
        x0 += sep;
    }
    return strip;
}

}  // namespace visent
