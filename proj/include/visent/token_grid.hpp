#pragma once

#include <cstdint>
#include <vector>

#include "visent/sentence.hpp"

namespace visent {

// Flattened latent tokens for one sentence. The codec is a pure reshape:
// one token per p x p spatial patch per frame, D = 3p^2, clips concatenated
// along the time axis. Inversion is exact, which the tests rely on.
struct TokenGrid {
    int patch = 8;
    int token_dim = 0;  // 3 * patch * patch
    int rows = 0;       // token count N
    int height = 0, width = 0;

    std::vector<double> tokens;  // rows * token_dim

    struct Coord {
        int t = 0, h = 0, w = 0;
    };
    std::vector<Coord> coords;
    std::vector<uint8_t> target_mask;  // true exactly on the final clip's tokens

    struct ClipRange {
        int begin = 0, end = 0;  // token range [begin, end)
    };
    std::vector<ClipRange> clip_boundaries;

    struct ClipMeta {
        Role role = Role::example_in;
        Modality modality = Modality::image;
        int frames = 1;
    };
    std::vector<ClipMeta> clip_meta;

    // Sentence attributes carried through so detokenize can rebuild it.
    ContextType context_type = ContextType::II;
    ShotConfig shot_config;
    Direction direction = Direction::understanding;
    TaskKind kind = TaskKind::depth_map;
    bool per_clip_time = false;

    double* row(int i) { return tokens.data() + static_cast<size_t>(i) * token_dim; }
    const double* row(int i) const { return tokens.data() + static_cast<size_t>(i) * token_dim; }

    int target_begin() const { return clip_boundaries.back().begin; }
    int target_rows() const { return clip_boundaries.back().end - clip_boundaries.back().begin; }
};

// per_clip_time = false runs the frame index cumulatively across clips (the
// default); true restarts it at each clip boundary.
TokenGrid tokenize(const VisualSentence& sentence, int patch, bool per_clip_time = false);

// Exact inverse of tokenize, with pixel values clamped to [0,1].
VisualSentence detokenize(const TokenGrid& grid);
Clip detokenize_target(const TokenGrid& grid);

}  // namespace visent
