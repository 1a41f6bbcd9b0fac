#pragma once

#include <string>
#include <vector>

#include "visent/tensor.hpp"

namespace visent {

// Low-rank adapters attach to the attention projections; during fine-tuning
// they are the only trainable parameters. adapted = base + (alpha/rank) *
// down * up, with up zero-initialized so injection starts as an exact no-op.
struct LoRAConfig {
    int rank = 16;
    double alpha = 16.0;
    std::vector<std::string> targets;  // projection keys; empty means all eight

    static const std::vector<std::string>& all_targets();
    double scale() const { return alpha / rank; }
};

struct LoRAEntry {
    std::string target;  // e.g. "sa.q"
    int layer = 0;
    Tensor down;  // (in, rank)
    Tensor up;    // (rank, out)
};

struct LoRAState {
    LoRAConfig config;
    std::vector<LoRAEntry> entries;

    size_t trainable_count() const {
        size_t n = 0;
        for (const auto& e : entries) n += e.down.count() + e.up.count();
        return n;
    }
};

}  // namespace visent
