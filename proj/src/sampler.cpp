#include "visent/sampler.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "visent/errors.hpp"

namespace visent {

namespace {

std::vector<double> snapshot_target(const TokenGrid& grid) {
    const int begin = grid.target_begin();
    const int rows = grid.target_rows();
    std::vector<double> snap(static_cast<size_t>(rows) * grid.token_dim);
    std::memcpy(snap.data(), grid.row(begin), sizeof(double) * snap.size());
    return snap;
}

}  // namespace

SampleOutput integrate_flow(const VelocityFn& velocity, const TokenGrid& clean_grid,
                            const SampleConfig& cfg) {
    if (cfg.steps < 1) throw ConfigError("sampler needs steps >= 1");

    TokenGrid grid = clean_grid;
    const int d = grid.token_dim;
    const int t_begin = grid.target_begin();
    const int t_end = grid.clip_boundaries.back().end;

    // t=1 initialization: pure noise on the target rows.
    RngStream rng(derive_seed(cfg.seed, 0x5a3full));
    for (int r = t_begin; r < t_end; ++r) {
        double* z = grid.row(r);
        for (int j = 0; j < d; ++j) z[j] = rng.normal();
    }

    SampleOutput out;
    if (cfg.trace) out.trace.push_back(snapshot_target(grid));

    const double dt = 1.0 / cfg.steps;
    for (int k = 0; k < cfg.steps; ++k) {
        const double t = 1.0 - k * dt;

        // clean-context re-injection; records whether it was already intact
        for (int r = 0; r < grid.rows; ++r) {
            if (grid.target_mask[static_cast<size_t>(r)] != 0) continue;
            if (std::memcmp(grid.row(r), clean_grid.row(r), sizeof(double) * static_cast<size_t>(d)) != 0)
                out.context_intact = false;
            std::memcpy(grid.row(r), clean_grid.row(r), sizeof(double) * static_cast<size_t>(d));
        }

        const Mat v = velocity(grid, t);
        if (v.rows() != grid.rows || v.cols() != d)
            throw InvariantError("sampler: velocity shape mismatch");

        for (int r = t_begin; r < t_end; ++r) {
            double* z = grid.row(r);
            const double* vr = v.row(r);
            for (int j = 0; j < d; ++j) {
                z[j] -= dt * vr[j];
                if (!std::isfinite(z[j]))
                    throw NumericalError("non-finite latent at sampler step " + std::to_string(k));
            }
        }
        if (cfg.trace) out.trace.push_back(snapshot_target(grid));
    }

    out.clip = detokenize_target(grid);
    return out;
}

SampleOutput sample_target(const DiTModel& model, const VisualSentence& sentence,
                           const SampleConfig& cfg) {
    validate_sentence(sentence);
    // shape conformance against the context row
    for (size_t i = 0; i < sentence.clips.size(); ++i) {
        const Modality want = slot_modality(sentence.context_type, static_cast<int>(i),
                                            sentence.shot_config.shots);
        if (sentence.clips[i].clip.modality != want)
            throw ConfigError("sample: clip " + std::to_string(i) + " modality does not match context row");
    }

    const TokenGrid clean = tokenize(sentence, model.config().patch, model.config().per_clip_time);
    const PromptEmbedding prompt = model.prompt_embedding(sentence.kind);
    auto velocity = [&](const TokenGrid& grid, double t) { return model.forward(grid, t, prompt); };
    return integrate_flow(velocity, clean, cfg);
}

}  // namespace visent
