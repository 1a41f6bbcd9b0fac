#pragma once

#include <memory>
#include <string>
#include <vector>

#include "visent/lora.hpp"
#include "visent/tensor.hpp"
#include "visent/token_grid.hpp"

namespace visent {

enum class TextMode { detailed, rough, null_text };
const char* to_string(TextMode m);
TextMode parse_text_mode(const std::string& name);

// How the velocity output is produced. x_prediction runs the transformer to
// a clean-target estimate and converts algebraically, v = (z - x_hat) /
// max(t, t_floor); raw_velocity emits the projection head directly.
enum class HeadMode { x_prediction, raw_velocity };
const char* to_string(HeadMode m);
HeadMode parse_head_mode(const std::string& name);

struct ModelConfig {
    int dim = 96;  // must cover token_dim so the frozen output head spans pixel space
    int heads = 4;
    int layers = 6;
    int patch = 4;
    int max_t = 64, max_h = 32, max_w = 32;
    int mlp_ratio = 4;
    int prompt_len = 4;
    int num_tasks = 6;
    TextMode text_mode = TextMode::detailed;
    HeadMode head = HeadMode::x_prediction;
    double t_floor = 0.01;
    uint64_t seed = 1;
    bool per_clip_time = false;

    int token_dim() const { return 3 * patch * patch; }
    int head_dim() const { return dim / heads; }
    int mlp_dim() const { return dim * mlp_ratio; }
    void validate() const;
};

// The prompt sequence for one (task, text mode). Vectors are a copy of the
// model's learned table rows; the ids drive the actual lookup in forward.
struct PromptEmbedding {
    TextMode mode = TextMode::null_text;
    int task_index = -1;
    // Copy of the selected table rows for inspection; forward resolves the
    // rows from (mode, task_index) so gradients reach the live table.
    Mat vectors;

    bool empty() const { return mode == TextMode::null_text; }
};

struct ForwardOptions {
    // Test hook: suppress attention between context and target tokens.
    bool block_context_target_attention = false;
};

// Activation caches for one forward pass; required by backward.
struct Workspace;

// Small video diffusion transformer: full self-attention over every token
// of the sentence, timestep injected through adaptive layer-norm modulation,
// optional cross-attention to a per-task prompt sequence, velocity output in
// token space.
class DiTModel {
public:
    explicit DiTModel(const ModelConfig& cfg);
    ~DiTModel();
    DiTModel(const DiTModel&) = delete;
    DiTModel& operator=(const DiTModel&) = delete;

    const ModelConfig& config() const { return cfg_; }

    PromptEmbedding prompt_embedding(TaskKind task) const;

    // 3D factorized sinusoidal encoding over (t, h, w); dim() columns.
    // Errors when a coordinate exceeds the configured position bounds.
    Mat positional_encoding(const std::vector<TokenGrid::Coord>& coords) const;

    Mat forward(const TokenGrid& grid, double t, const PromptEmbedding& prompt,
                Workspace* ws = nullptr, const ForwardOptions& opts = {}) const;
    // Accumulates parameter gradients for the pass recorded in ws.
    void backward(Workspace& ws, const Mat& d_out);
    void zero_grad();

    void inject_lora(const LoRAConfig& cfg);
    bool has_lora() const { return lora_ != nullptr; }
    LoRAState& lora_state();
    const LoRAState& lora_state() const;
    // Folds the adapters into the base weights; erroring on a second call
    // until fresh adapters are injected.
    void merge_lora();

    std::vector<Tensor*> base_parameters();
    std::vector<const Tensor*> base_parameters() const;
    std::vector<Tensor*> trainable_parameters();  // LoRA tensors
    std::vector<Tensor*> all_parameters();

    Tensor* find_parameter(const std::string& name);

private:
    struct AttnParams {
        Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    };
    struct Block {
        Tensor mod_w, mod_b;  // t-feature -> 9 * dim modulation
        AttnParams sa, ca;
        Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    };

    void init_parameters();
    void build_registry();

    ModelConfig cfg_;
    Tensor in_w_, in_b_;
    Tensor t_w1_, t_b1_, t_w2_, t_b2_;
    std::vector<Block> blocks_;
    Tensor final_mod_w_, final_mod_b_;
    Tensor out_w_, out_b_;
    Tensor prompt_detailed_, prompt_rough_;

    std::vector<Tensor*> base_registry_;
    std::unique_ptr<LoRAState> lora_;
    bool lora_merged_ = false;
    // per layer: pointers for the eight projection slots, null when absent
    std::vector<std::array<LoRAEntry*, 8>> lora_index_;

    friend struct Workspace;
    friend class ModelOps;
};

struct LayerCache {
    Mat h_in, ln1, xm1;
    std::vector<double> rstd1;
    Mat q, k, v;
    std::vector<Mat> attn;  // per head (N, N)
    Mat attn_cat, sa_out;
    Mat sa_q_xd, sa_k_xd, sa_v_xd, sa_o_xd;

    Mat h_mid, ln2, xm2;
    std::vector<double> rstd2;
    Mat ca_q, ca_k, ca_v;
    std::vector<Mat> ca_attn;  // per head (N, P)
    Mat ca_cat, ca_out;
    Mat ca_q_xd, ca_k_xd, ca_v_xd, ca_o_xd;

    Mat h_pre_mlp, ln3, xm3;
    std::vector<double> rstd3;
    Mat mlp_pre, mlp_act, mlp_out;

    std::vector<double> mod;  // 9 * dim
};

struct Workspace {
    Mat x0, pos, h0;
    std::vector<double> temb, t_h1, t_a1, tfeat;
    std::vector<LayerCache> layers;
    Mat h_final, xf;
    std::vector<double> fmod;  // 2 * dim
    Mat head_out;              // projection output (x_hat or raw velocity)
    Mat out;                   // velocity returned to the caller

    TextMode prompt_mode = TextMode::null_text;
    int prompt_task = -1;
    Mat prompt;  // materialized prompt rows used by this pass

    std::vector<uint8_t> mask;  // target mask copy
    ForwardOptions opts;
    double t = 0.0;
    int n = 0;
};

}  // namespace visent
