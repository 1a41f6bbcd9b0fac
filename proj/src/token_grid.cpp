#include "visent/token_grid.hpp"

#include <algorithm>
#include <string>

#include "visent/errors.hpp"

namespace visent {

TokenGrid tokenize(const VisualSentence& sentence, int patch, bool per_clip_time) {
    validate_sentence(sentence);
    const Clip& first = sentence.clips[0].clip;
    if (patch < 1) throw ConfigError("patch size must be positive");
    if (first.height % patch != 0 || first.width % patch != 0)
        throw ConfigError("resolution " + std::to_string(first.height) + "x" +
                          std::to_string(first.width) + " not divisible by patch " +
                          std::to_string(patch));

    TokenGrid grid;
    grid.patch = patch;
    grid.token_dim = 3 * patch * patch;
    grid.height = first.height;
    grid.width = first.width;
    grid.context_type = sentence.context_type;
    grid.shot_config = sentence.shot_config;
    grid.direction = sentence.direction;
    grid.kind = sentence.kind;
    grid.per_clip_time = per_clip_time;

    const int hp = first.height / patch;
    const int wp = first.width / patch;

    int n = 0;
    for (const auto& rc : sentence.clips) n += rc.clip.frame_count() * hp * wp;
    grid.rows = n;
    grid.tokens.assign(static_cast<size_t>(n) * grid.token_dim, 0.0);
    grid.coords.resize(static_cast<size_t>(n));
    grid.target_mask.assign(static_cast<size_t>(n), 0);

    int row = 0;
    int time_base = 0;
    for (const auto& rc : sentence.clips) {
        const Clip& clip = rc.clip;
        const int begin = row;
        for (int f = 0; f < clip.frame_count(); ++f) {
            const int t = per_clip_time ? f : time_base + f;
            for (int ph = 0; ph < hp; ++ph) {
                for (int pw = 0; pw < wp; ++pw) {
                    double* tok = grid.row(row);
                    for (int py = 0; py < patch; ++py)
                        for (int px = 0; px < patch; ++px)
                            for (int c = 0; c < 3; ++c)
                                tok[(py * patch + px) * 3 + c] =
                                    clip.at(f, ph * patch + py, pw * patch + px, c);
                    grid.coords[static_cast<size_t>(row)] = {t, ph, pw};
                    grid.target_mask[static_cast<size_t>(row)] = rc.role == Role::target ? 1 : 0;
                    row += 1;
                }
            }
        }
        grid.clip_boundaries.push_back({begin, row});
        grid.clip_meta.push_back({rc.role, clip.modality, clip.frame_count()});
        time_base += clip.frame_count();
    }
    return grid;
}

namespace {

void check_grid(const TokenGrid& grid) {
    if (grid.clip_boundaries.size() != grid.clip_meta.size() || grid.clip_boundaries.empty())
        throw DataError("token grid corrupt: clip metadata mismatch");
    if (grid.tokens.size() != static_cast<size_t>(grid.rows) * grid.token_dim ||
        grid.coords.size() != static_cast<size_t>(grid.rows) ||
        grid.target_mask.size() != static_cast<size_t>(grid.rows))
        throw DataError("token grid corrupt: buffer sizes disagree");

    const int hp = grid.height / grid.patch;
    const int wp = grid.width / grid.patch;
    int row = 0;
    int time_base = 0;
    for (size_t ci = 0; ci < grid.clip_meta.size(); ++ci) {
        const auto& meta = grid.clip_meta[ci];
        const auto& range = grid.clip_boundaries[ci];
        if (range.begin != row) throw DataError("token grid corrupt: clip range gap");
        for (int f = 0; f < meta.frames; ++f) {
            const int t = grid.per_clip_time ? f : time_base + f;
            for (int ph = 0; ph < hp; ++ph)
                for (int pw = 0; pw < wp; ++pw) {
                    const auto& c = grid.coords[static_cast<size_t>(row)];
                    if (c.t != t || c.h != ph || c.w != pw)
                        throw DataError("token grid corrupt: coordinate gap at row " +
                                        std::to_string(row));
                    const bool want_target = meta.role == Role::target;
                    if ((grid.target_mask[static_cast<size_t>(row)] != 0) != want_target)
                        throw DataError("token grid corrupt: target mask at row " +
                                        std::to_string(row));
                    row += 1;
                }
        }
        if (range.end != row) throw DataError("token grid corrupt: clip range end");
        time_base += meta.frames;
    }
    if (row != grid.rows) throw DataError("token grid corrupt: row count");
}

Clip rebuild_clip(const TokenGrid& grid, size_t clip_index) {
    const auto& meta = grid.clip_meta[clip_index];
    const auto& range = grid.clip_boundaries[clip_index];
    const int hp = grid.height / grid.patch;
    const int wp = grid.width / grid.patch;
    const int p = grid.patch;
    Clip clip(meta.modality, meta.frames, grid.height, grid.width);
    int row = range.begin;
    for (int f = 0; f < meta.frames; ++f)
        for (int ph = 0; ph < hp; ++ph)
            for (int pw = 0; pw < wp; ++pw) {
                const double* tok = grid.row(row);
                for (int py = 0; py < p; ++py)
                    for (int px = 0; px < p; ++px)
                        for (int c = 0; c < 3; ++c)
                            clip.at(f, ph * p + py, pw * p + px, c) =
                                std::clamp(tok[(py * p + px) * 3 + c], 0.0, 1.0);
                row += 1;
            }
    return clip;
}

}  // namespace

VisualSentence detokenize(const TokenGrid& grid) {
    check_grid(grid);
    VisualSentence s;
    s.context_type = grid.context_type;
    s.shot_config = grid.shot_config;
    s.direction = grid.direction;
    s.kind = grid.kind;
    for (size_t ci = 0; ci < grid.clip_meta.size(); ++ci)
        s.clips.push_back({grid.clip_meta[ci].role, rebuild_clip(grid, ci)});
    validate_sentence(s);
    return s;
}

Clip detokenize_target(const TokenGrid& grid) {
    check_grid(grid);
    return rebuild_clip(grid, grid.clip_meta.size() - 1);
}

}  // namespace visent
