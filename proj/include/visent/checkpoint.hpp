#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "visent/model.hpp"
#include "visent/trainer.hpp"

namespace visent {

// Single binary container: little-endian, eight-byte magic, versioned
// header, then named blobs of (name_len u32, name, dtype u8, rank u8,
// dims u64[rank], payload). dtypes: 1 = f64, 2 = i64, 3 = u8.
struct Blob {
    uint8_t dtype = 0;
    std::vector<uint64_t> dims;
    std::vector<uint8_t> raw;

    size_t element_count() const;
    std::vector<double> as_f64() const;
    int64_t as_i64() const;
    std::string as_string() const;
};

class CheckpointWriter {
public:
    void add_f64(const std::string& name, const double* data, std::vector<uint64_t> dims);
    void add_i64(const std::string& name, int64_t value);
    void add_bytes(const std::string& name, const std::string& data);
    // Atomic: writes to <path>.tmp then renames.
    void write(const std::filesystem::path& path) const;

private:
    std::vector<std::pair<std::string, Blob>> blobs_;
};

class CheckpointReader {
public:
    explicit CheckpointReader(const std::filesystem::path& path);
    bool has(const std::string& name) const;
    const Blob& get(const std::string& name) const;
    const std::vector<std::pair<std::string, Blob>>& blobs() const { return blobs_; }
    uint32_t version() const { return version_; }

private:
    uint32_t version_ = 0;
    std::vector<std::pair<std::string, Blob>> blobs_;
    std::map<std::string, size_t> index_;
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);
std::string lora_config_to_json(const LoRAConfig& cfg);
LoRAConfig lora_config_from_json(const std::string& text);

struct TrainerSnapshot {
    int epoch = 0;
    int64_t iteration = 0;
    AdamState adam;
    std::string data_rng, noise_rng;
};

// Full training checkpoint: model config + base parameters, adapters when
// injected, optimizer moments, rng states and counters when provided.
void save_checkpoint(const std::filesystem::path& path, const DiTModel& model,
                     const TrainerSnapshot* snapshot = nullptr);

struct LoadedCheckpoint {
    std::unique_ptr<DiTModel> model;
    std::optional<TrainerSnapshot> snapshot;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Adapter-only container, so one base checkpoint can serve many tasks.
void save_lora(const std::filesystem::path& path, const DiTModel& model);
void load_lora_into(const std::filesystem::path& path, DiTModel& model);

}  // namespace visent
