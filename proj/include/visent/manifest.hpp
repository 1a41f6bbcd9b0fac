#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "visent/scene.hpp"
#include "visent/sentence.hpp"
#include "visent/trainer.hpp"

namespace visent {

// One generated TaskSample on disk: a directory per clip, one PNG per frame,
// and a manifest naming everything.
struct SampleManifest {
    TaskKind kind = TaskKind::depth_map;
    uint64_t seed = 0;
    ModalityPlan plan;
    Direction direction = Direction::understanding;
    std::vector<std::vector<std::string>> clip_files;  // a, a_prime, b, b_prime

    std::string to_json() const;
    static SampleManifest from_json(const std::string& text);
};

struct DatasetManifest {
    TaskKind task = TaskKind::depth_map;
    ContextType context = ContextType::II;
    Direction direction = Direction::understanding;
    int count = 0;
    uint64_t seed = 0;
    int height = 32, width = 32, video_frames = 5;
    std::vector<std::string> sample_dirs;

    std::string to_json() const;
    static DatasetManifest from_json(const std::string& text);
};

void write_sample(const std::filesystem::path& dir, const TaskSample& sample);
TaskSample read_sample(const std::filesystem::path& dir);

void write_dataset_manifest(const std::filesystem::path& dir, const DatasetManifest& m);
DatasetManifest read_dataset_manifest(const std::filesystem::path& dir);

// Loads a gen-data output directory into memory for training.
TaskDataset load_dataset(const std::filesystem::path& dir);

// Run bookkeeping: artifacts registered during a command, hashed with the
// git blob scheme, re-verified when the manifest is finalized.
class RunManifest {
public:
    RunManifest(std::string command, std::string run_id);

    void set_config(const std::string& config_json);
    void set_seed(uint64_t seed);
    void add_note(const std::string& key, const std::string& value);
    void add_artifact(const std::filesystem::path& path);
    void add_timing(const std::string& label, double seconds);

    const std::string& run_id() const { return run_id_; }

    // Verifies every artifact still exists and hash-matches, then writes
    // <dir>/run_manifest.json.
    void finalize(const std::filesystem::path& dir) const;

private:
    std::string command_;
    std::string run_id_;
    std::string config_hash_;
    uint64_t seed_ = 0;
    std::vector<std::pair<std::string, std::string>> notes_;
    std::vector<std::pair<std::string, std::string>> artifacts_;  // path, hash
    std::vector<std::pair<std::string, double>> timings_;
};

// Deterministic run id from the command name and its config bytes.
std::string make_run_id(const std::string& command, const std::string& config_json);

}  // namespace visent
