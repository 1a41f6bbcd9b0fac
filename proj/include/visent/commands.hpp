#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "visent/manifest.hpp"
#include "visent/metrics.hpp"
#include "visent/model.hpp"
#include "visent/sentence.hpp"
#include "visent/trainer.hpp"

namespace visent {

// Command implementations shared by the CLI binary and the test suites.
// Errors surface as ConfigError / DataError / NumericalError; the CLI maps
// them to exit codes 2 / 3 / 4.

struct GenDataArgs {
    TaskKind task = TaskKind::depth_map;
    ContextType context = ContextType::II;
    std::optional<Direction> direction;  // defaults per task
    int count = 20;
    uint64_t seed = 0;
    std::filesystem::path out;
    WorldConfig world;
};

void cmd_gen_data(const GenDataArgs& args);

// Train run configuration, parsed from a JSON file. Every field has the
// documented default; omitted fields are logged.
struct TrainRunConfig {
    TrainConfig train;
    ModelConfig model;
    LoRAConfig lora;
    std::vector<std::filesystem::path> dataset_dirs;
    std::optional<std::filesystem::path> resume;
    std::vector<std::string> applied_defaults;
    std::string raw_json;
};

TrainRunConfig parse_train_config(const std::string& json_text);

struct TrainArgs {
    std::filesystem::path config_path;
    std::filesystem::path out_dir;
    bool quiet = false;
};

struct TrainResult {
    std::filesystem::path final_checkpoint;
    std::filesystem::path final_adapter;
    std::filesystem::path curve_csv;
    double last_loss = 0.0;
};

TrainResult cmd_train(const TrainArgs& args);

struct EvalArgs {
    std::filesystem::path checkpoint;
    TaskKind task = TaskKind::depth_map;
    std::vector<ContextType> contexts = {ContextType::II};
    std::vector<int> shots = {4};
    uint64_t split_seed = 1009;
    int count = 10;
    int steps = 50;
    bool reversed = false;
    int gallery_count = 3;
    std::filesystem::path out;
    WorldConfig world;
    bool quiet = false;
};

struct EvalResult {
    std::vector<MetricReport> reports;
    // per report row: wall-clock seconds spent generating
    std::vector<double> generation_seconds;
    // per report row: per-query RMSE values (for calibration work)
    std::vector<std::vector<double>> per_query_rmse;
};

EvalResult cmd_eval(const EvalArgs& args);

struct SampleArgs {
    std::filesystem::path checkpoint;
    TaskKind task = TaskKind::depth_map;
    ContextType context = ContextType::II;
    int shots = 4;
    uint64_t seed = 42;
    int steps = 50;
    bool trace = false;
    bool reversed = false;
    std::filesystem::path out;
    WorldConfig world;
};

void cmd_sample(const SampleArgs& args);

struct ReproArgs {
    std::string recipe;  // fig4-separate, fig5-reversal, fig6-mixed,
                         // tab2-training-strategies, tab3-shots
    std::filesystem::path out;
    uint64_t seed = 7;
    int epochs = 4;
    int iters = 150;
    int count = 20;
    int eval_count = 6;
    int steps = 30;
    bool quiet = false;
};

void cmd_repro(const ReproArgs& args);

void cmd_inspect(const std::filesystem::path& checkpoint, std::string* out_text = nullptr);

// Builds the held-out evaluation sentence #index for the given setting.
VisualSentence make_eval_sentence(TaskKind task, ContextType context, int shots,
                                  Direction direction, uint64_t split_seed, int index,
                                  const WorldConfig& world);

// Environment overrides (seed and output root only).
uint64_t apply_seed_override(uint64_t seed);
std::filesystem::path apply_out_root(const std::filesystem::path& path);

}  // namespace visent
