#pragma once

#include <functional>
#include <vector>

#include "visent/model.hpp"

namespace visent {

struct SampleConfig {
    int steps = 50;
    uint64_t seed = 0;
    bool trace = false;
};

struct SampleOutput {
    Clip clip;
    // One snapshot of the target-row latents per integration point
    // (steps + 1 entries when tracing; the last equals the final latent).
    std::vector<std::vector<double>> trace;
    // True when every step saw the context rows bit-equal to the clean
    // tokens; asserted by tests, re-injected unconditionally regardless.
    bool context_intact = true;
};

// Velocity field: (grid holding current z, t) -> N x D matrix.
using VelocityFn = std::function<Mat(const TokenGrid&, double)>;

// Euler integration of the flow from t=1 to t=0 with uniform steps. Target
// rows start from standard-normal noise; context rows are reset to the
// clean tokens before every evaluation.
SampleOutput integrate_flow(const VelocityFn& velocity, const TokenGrid& clean_grid,
                            const SampleConfig& cfg);

// Generates the target clip of `sentence` with the model; the content of the
// sentence's target clip is ignored (only its shape is used).
SampleOutput sample_target(const DiTModel& model, const VisualSentence& sentence,
                           const SampleConfig& cfg);

}  // namespace visent
