#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "visent/model.hpp"
#include "visent/rng.hpp"
#include "visent/token_grid.hpp"

namespace visent {

// A token grid at interpolation time t: target rows hold
// (1-t)*x + t*eps, context rows are the clean tokens bit-for-bit.
struct NoisySentence {
    TokenGrid grid;               // tokens = z_t
    double t = 0.0;
    std::vector<double> epsilon;  // rows*token_dim, zero outside target rows
};

// Draws standard-normal noise for the target rows only. t = 0 returns the
// clean tokens; training samples t from (0, 1].
NoisySentence noising(const TokenGrid& clean, double t, uint64_t seed);

// Mean squared error between the model output and v = eps - x over target
// rows only; context-row outputs never contribute. Optionally emits the
// gradient with respect to the model output.
double velocity_loss(const Mat& model_out, const std::vector<double>& epsilon,
                     const std::vector<double>& clean_tokens,
                     const std::vector<uint8_t>& target_mask, Mat* d_out = nullptr);

// Mixed-context draw: non-camera tasks use I:0.3 II:0.3 III:0.4, camera
// movement I:0.5 IV:0.5.
ContextType sample_context(TaskKind task, RngStream& rng);

enum class Regime { per_task_per_context, per_task_mixed, co_train_all };
const char* to_string(Regime r);
Regime parse_regime(const std::string& name);

enum class TimestepDist { uniform, logit_normal };

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 1;
    int iters_per_epoch = 200;
    int epochs = 20;
    uint64_t seed = 0;
    int shots = 4;
    Regime regime = Regime::per_task_per_context;
    TimestepDist timestep = TimestepDist::uniform;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

// In-memory training set for one (task, context, direction).
struct TaskDataset {
    TaskKind kind = TaskKind::depth_map;
    ContextType context = ContextType::II;
    Direction direction = Direction::understanding;
    std::vector<TaskSample> samples;
};

struct TrainingData {
    std::vector<TaskDataset> sets;

    const TaskDataset* find(TaskKind kind, ContextType context) const;
    std::vector<TaskKind> distinct_tasks() const;
};

// Adam with bias-corrected moments over the LoRA tensors only.
struct AdamState {
    int64_t step = 0;
    std::vector<std::vector<double>> m, v;  // parallel to the trainable list

    void reset(const std::vector<Tensor*>& params);
    void apply(const std::vector<Tensor*>& params, const TrainConfig& cfg);
};

struct IterationLog {
    int64_t iteration = 0;
    int epoch = 0;
    TaskKind task = TaskKind::depth_map;
    ContextType context = ContextType::II;
    double loss = 0.0;
};

class Trainer {
public:
    Trainer(DiTModel& model, const TrainingData& data, const TrainConfig& cfg);

    // Hooks fire after every iteration and at each epoch end. The epoch hook
    // can persist a checkpoint; all replayable state lives in this class.
    using IterHook = std::function<void(const IterationLog&)>;
    using EpochHook = std::function<void(int epoch)>;

    void run(const IterHook& on_iter = nullptr, const EpochHook& on_epoch = nullptr);
    // One optimizer step (batch_size sentences); returns the mean loss.
    double step();

    int epoch() const { return epoch_; }
    int64_t iteration() const { return iteration_; }
    AdamState& adam() { return adam_; }
    RngStream& data_rng() { return data_rng_; }
    RngStream& noise_rng() { return noise_rng_; }
    void restore_counters(int epoch, int64_t iteration);

    const std::vector<IterationLog>& history() const { return history_; }

private:
    VisualSentence draw_sentence(TaskKind* out_task, ContextType* out_context);

    DiTModel& model_;
    const TrainingData& data_;
    TrainConfig cfg_;
    std::vector<Tensor*> trainable_;
    AdamState adam_;
    RngStream data_rng_, noise_rng_;
    int epoch_ = 0;
    int64_t iteration_ = 0;
    std::vector<IterationLog> history_;
    Workspace ws_;
};

}  // namespace visent
