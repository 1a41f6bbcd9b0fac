#include "visent/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "visent/errors.hpp"
#include "visent/hash.hpp"
#include "visent/image_io.hpp"

namespace visent {

namespace {

using nlohmann::ordered_json;

std::string modality_name(Modality m) { return m == Modality::image ? "image" : "video"; }

Modality parse_modality(const std::string& s) {
    if (s == "image") return Modality::image;
    if (s == "video") return Modality::video;
    throw DataError("unknown modality: " + s);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write: " + path.string());
    f << text;
    if (!f) throw DataError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read: " + path.string());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

constexpr const char* kClipNames[4] = {"a", "a_prime", "b", "b_prime"};

}  // namespace

std::string SampleManifest::to_json() const {
    ordered_json j;
    j["kind"] = to_string(kind);
    j["seed"] = seed;
    ordered_json plan_j = ordered_json::array();
    for (Modality m : plan) plan_j.push_back(modality_name(m));
    j["plan"] = plan_j;
    j["direction"] = to_string(direction);
    ordered_json clips;
    for (int i = 0; i < 4; ++i) clips[kClipNames[i]] = clip_files[static_cast<size_t>(i)];
    j["clips"] = clips;
    return j.dump(2);
}

SampleManifest SampleManifest::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    SampleManifest m;
    m.kind = parse_task(j.at("kind").get<std::string>());
    m.seed = j.at("seed").get<uint64_t>();
    const auto plan_j = j.at("plan");
    for (int i = 0; i < 4; ++i)
        m.plan[static_cast<size_t>(i)] = parse_modality(plan_j.at(i).get<std::string>());
    m.direction = parse_direction(j.at("direction").get<std::string>());
    m.clip_files.resize(4);
    for (int i = 0; i < 4; ++i)
        m.clip_files[static_cast<size_t>(i)] =
            j.at("clips").at(kClipNames[i]).get<std::vector<std::string>>();
    return m;
}

std::string DatasetManifest::to_json() const {
    ordered_json j;
    j["task"] = to_string(task);
    j["context"] = to_string(context);
    j["direction"] = to_string(direction);
    j["count"] = count;
    j["seed"] = seed;
    j["height"] = height;
    j["width"] = width;
    j["video_frames"] = video_frames;
    j["samples"] = sample_dirs;
    return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    DatasetManifest m;
    m.task = parse_task(j.at("task").get<std::string>());
    m.context = parse_context(j.at("context").get<std::string>());
    m.direction = parse_direction(j.at("direction").get<std::string>());
    m.count = j.at("count").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.video_frames = j.at("video_frames").get<int>();
    m.sample_dirs = j.at("samples").get<std::vector<std::string>>();
    return m;
}

void write_sample(const std::filesystem::path& dir, const TaskSample& sample) {
    SampleManifest m;
    m.kind = sample.kind;
    m.seed = sample.seed;
    m.plan = sample.plan;
    m.direction = sample.direction;
    m.clip_files.resize(4);
    const Clip* clips[4] = {&sample.a, &sample.a_prime, &sample.b, &sample.b_prime};
    for (int i = 0; i < 4; ++i)
        m.clip_files[static_cast<size_t>(i)] = write_clip(dir / kClipNames[i], *clips[i]);
    write_text(dir / "manifest.json", m.to_json());
}

TaskSample read_sample(const std::filesystem::path& dir) {
    const SampleManifest m = SampleManifest::from_json(read_text(dir / "manifest.json"));
    TaskSample s;
    s.kind = m.kind;
    s.seed = m.seed;
    s.plan = m.plan;
    s.direction = m.direction;
    Clip* clips[4] = {&s.a, &s.a_prime, &s.b, &s.b_prime};
    for (int i = 0; i < 4; ++i)
        *clips[i] = read_clip(dir / kClipNames[i], m.clip_files[static_cast<size_t>(i)],
                              m.plan[static_cast<size_t>(i)]);
    return s;
}

void write_dataset_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
    write_text(dir / "manifest.json", m.to_json());
}

DatasetManifest read_dataset_manifest(const std::filesystem::path& dir) {
    return DatasetManifest::from_json(read_text(dir / "manifest.json"));
}

TaskDataset load_dataset(const std::filesystem::path& dir) {
    const DatasetManifest m = read_dataset_manifest(dir);
    TaskDataset d;
    d.kind = m.task;
    d.context = m.context;
    d.direction = m.direction;
    for (const auto& sub : m.sample_dirs) d.samples.push_back(read_sample(dir / sub));
    if (d.samples.empty()) throw DataError("dataset has no samples: " + dir.string());
    return d;
}

RunManifest::RunManifest(std::string command, std::string run_id)
    : command_(std::move(command)), run_id_(std::move(run_id)) {}

void RunManifest::set_config(const std::string& config_json) {
    config_hash_ = git_blob_sha1(config_json);
}

void RunManifest::set_seed(uint64_t seed) { seed_ = seed; }

void RunManifest::add_note(const std::string& key, const std::string& value) {
    notes_.emplace_back(key, value);
}

void RunManifest::add_artifact(const std::filesystem::path& path) {
    artifacts_.emplace_back(path.string(), git_blob_sha1_file(path.string()));
}

void RunManifest::add_timing(const std::string& label, double seconds) {
    timings_.emplace_back(label, seconds);
}

void RunManifest::finalize(const std::filesystem::path& dir) const {
    for (const auto& [path, hash] : artifacts_) {
        if (!std::filesystem::exists(path))
            throw DataError("manifest artifact vanished: " + path);
        if (git_blob_sha1_file(path) != hash)
            throw DataError("manifest artifact changed after registration: " + path);
    }
    ordered_json j;
    j["run_id"] = run_id_;
    j["command"] = command_;
    j["config_hash"] = config_hash_;
    j["seed"] = seed_;
    ordered_json notes;
    for (const auto& [k, v] : notes_) notes[k] = v;
    j["notes"] = notes;
    ordered_json arts = ordered_json::array();
    for (const auto& [path, hash] : artifacts_) {
        ordered_json a;
        std::error_code ec;
        const auto rel = std::filesystem::relative(path, dir, ec);
        a["path"] = (!ec && !rel.empty() && rel.native()[0] != '.') ? rel.string() : path;
        a["sha1"] = hash;
        arts.push_back(a);
    }
    j["artifacts"] = arts;
    ordered_json times;
    for (const auto& [k, v] : timings_) times[k] = v;
    j["timings_sec"] = times;
    write_text(dir / "run_manifest.json", j.dump(2));
}

std::string make_run_id(const std::string& command, const std::string& config_json) {
    return command + "-" + git_blob_sha1(config_json).substr(0, 12);
}

}  // namespace visent
