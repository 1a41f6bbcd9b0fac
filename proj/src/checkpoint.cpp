#include "visent/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "visent/errors.hpp"

namespace visent {

namespace {

constexpr char kMagic[8] = {'V', 'S', 'N', 'T', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t read_u32(const uint8_t* p) {
    return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
}

uint64_t read_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

size_t dtype_size(uint8_t dtype) {
    switch (dtype) {
        case 1: return 8;
        case 2: return 8;
        case 3: return 1;
    }
    throw DataError("checkpoint: unknown dtype " + std::to_string(dtype));
}

}  // namespace

size_t Blob::element_count() const {
    size_t n = 1;
    for (uint64_t d : dims) n *= static_cast<size_t>(d);
    return dims.empty() ? 0 : n;
}

std::vector<double> Blob::as_f64() const {
    if (dtype != 1) throw DataError("checkpoint blob is not f64");
    std::vector<double> out(raw.size() / 8);
    std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

int64_t Blob::as_i64() const {
    if (dtype != 2 || raw.size() != 8) throw DataError("checkpoint blob is not a scalar i64");
    int64_t v;
    std::memcpy(&v, raw.data(), 8);
    return v;
}

std::string Blob::as_string() const {
    if (dtype != 3) throw DataError("checkpoint blob is not bytes");
    return std::string(raw.begin(), raw.end());
}

void CheckpointWriter::add_f64(const std::string& name, const double* data,
                               std::vector<uint64_t> dims) {
    Blob b;
    b.dtype = 1;
    b.dims = std::move(dims);
    b.raw.resize(b.element_count() * 8);
    std::memcpy(b.raw.data(), data, b.raw.size());
    blobs_.emplace_back(name, std::move(b));
}

void CheckpointWriter::add_i64(const std::string& name, int64_t value) {
    Blob b;
    b.dtype = 2;
    b.dims = {1};
    b.raw.resize(8);
    std::memcpy(b.raw.data(), &value, 8);
    blobs_.emplace_back(name, std::move(b));
}

void CheckpointWriter::add_bytes(const std::string& name, const std::string& data) {
    Blob b;
    b.dtype = 3;
    b.dims = {data.size()};
    b.raw.assign(data.begin(), data.end());
    blobs_.emplace_back(name, std::move(b));
}

void CheckpointWriter::write(const std::filesystem::path& path) const {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    put_u32(out, kVersion);
    put_u32(out, 0);  // reserved
    put_u64(out, blobs_.size());
    for (const auto& [name, b] : blobs_) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(b.dtype);
        out.push_back(static_cast<uint8_t>(b.dims.size()));
        for (uint64_t d : b.dims) put_u64(out, d);
        out.insert(out.end(), b.raw.begin(), b.raw.end());
    }

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write checkpoint: " + path.string());
        f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
        if (!f) throw DataError("checkpoint write failed: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

CheckpointReader::CheckpointReader(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path.string());
    std::vector<uint8_t> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (data.size() < 24 || std::memcmp(data.data(), kMagic, 8) != 0)
        throw DataError("not a checkpoint file: " + path.string());
    version_ = read_u32(data.data() + 8);
    if (version_ != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version_));
    const uint64_t count = read_u64(data.data() + 16);
    size_t at = 24;
    for (uint64_t i = 0; i < count; ++i) {
        if (at + 4 > data.size()) throw DataError("truncated checkpoint: " + path.string());
        const uint32_t name_len = read_u32(data.data() + at);
        at += 4;
        if (at + name_len + 2 > data.size()) throw DataError("truncated checkpoint: " + path.string());
        std::string name(reinterpret_cast<const char*>(data.data() + at), name_len);
        at += name_len;
        Blob b;
        b.dtype = data[at];
        const uint8_t rank = data[at + 1];
        at += 2;
        if (at + static_cast<size_t>(rank) * 8 > data.size())
            throw DataError("truncated checkpoint: " + path.string());
        for (uint8_t r = 0; r < rank; ++r) {
            b.dims.push_back(read_u64(data.data() + at));
            at += 8;
        }
        const size_t bytes = b.element_count() * dtype_size(b.dtype);
        if (at + bytes > data.size()) throw DataError("truncated checkpoint: " + path.string());
        b.raw.assign(data.begin() + static_cast<std::ptrdiff_t>(at),
                     data.begin() + static_cast<std::ptrdiff_t>(at + bytes));
        at += bytes;
        index_[name] = blobs_.size();
        blobs_.emplace_back(std::move(name), std::move(b));
    }
}

bool CheckpointReader::has(const std::string& name) const { return index_.count(name) > 0; }

const Blob& CheckpointReader::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("checkpoint blob missing: " + name);
    return blobs_[it->second].second;
}

std::string model_config_to_json(const ModelConfig& cfg) {
    nlohmann::ordered_json j;
    j["dim"] = cfg.dim;
    j["heads"] = cfg.heads;
    j["layers"] = cfg.layers;
    j["patch"] = cfg.patch;
    j["max_t"] = cfg.max_t;
    j["max_h"] = cfg.max_h;
    j["max_w"] = cfg.max_w;
    j["mlp_ratio"] = cfg.mlp_ratio;
    j["prompt_len"] = cfg.prompt_len;
    j["num_tasks"] = cfg.num_tasks;
    j["text_mode"] = to_string(cfg.text_mode);
    j["head"] = to_string(cfg.head);
    j["t_floor"] = cfg.t_floor;
    j["seed"] = cfg.seed;
    j["per_clip_time"] = cfg.per_clip_time;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ModelConfig cfg;
    cfg.dim = j.value("dim", cfg.dim);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.layers = j.value("layers", cfg.layers);
    cfg.patch = j.value("patch", cfg.patch);
    cfg.max_t = j.value("max_t", cfg.max_t);
    cfg.max_h = j.value("max_h", cfg.max_h);
    cfg.max_w = j.value("max_w", cfg.max_w);
    cfg.mlp_ratio = j.value("mlp_ratio", cfg.mlp_ratio);
    cfg.prompt_len = j.value("prompt_len", cfg.prompt_len);
    cfg.num_tasks = j.value("num_tasks", cfg.num_tasks);
    cfg.text_mode = parse_text_mode(j.value("text_mode", "detailed"));
    cfg.head = parse_head_mode(j.value("head", "x_prediction"));
    cfg.t_floor = j.value("t_floor", cfg.t_floor);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.per_clip_time = j.value("per_clip_time", cfg.per_clip_time);
    return cfg;
}

std::string lora_config_to_json(const LoRAConfig& cfg) {
    nlohmann::ordered_json j;
    j["rank"] = cfg.rank;
    j["alpha"] = cfg.alpha;
    j["targets"] = cfg.targets;
    return j.dump();
}

LoRAConfig lora_config_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    LoRAConfig cfg;
    cfg.rank = j.value("rank", cfg.rank);
    cfg.alpha = j.value("alpha", cfg.alpha);
    if (j.contains("targets")) cfg.targets = j.at("targets").get<std::vector<std::string>>();
    return cfg;
}

namespace {

void add_tensor(CheckpointWriter& w, const std::string& prefix, const Tensor& t) {
    w.add_f64(prefix + t.name, t.v.data(),
              {static_cast<uint64_t>(t.rows), static_cast<uint64_t>(t.cols)});
}

void load_tensor(const CheckpointReader& r, const std::string& prefix, Tensor& t) {
    const Blob& b = r.get(prefix + t.name);
    if (b.element_count() != t.count())
        throw DataError("checkpoint tensor size mismatch for " + t.name);
    const auto vals = b.as_f64();
    std::copy(vals.begin(), vals.end(), t.v.begin());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DiTModel& model,
                     const TrainerSnapshot* snapshot) {
    CheckpointWriter w;
    w.add_bytes("meta/model_config", model_config_to_json(model.config()));
    for (const Tensor* t : model.base_parameters()) add_tensor(w, "base/", *t);

    if (model.has_lora()) {
        const LoRAState& lora = model.lora_state();
        w.add_bytes("meta/lora_config", lora_config_to_json(lora.config));
        for (const auto& e : lora.entries) {
            add_tensor(w, "lora/", e.down);
            add_tensor(w, "lora/", e.up);
        }
    }

    if (snapshot != nullptr) {
        w.add_i64("train/epoch", snapshot->epoch);
        w.add_i64("train/iteration", snapshot->iteration);
        w.add_i64("opt/step", snapshot->adam.step);
        for (size_t i = 0; i < snapshot->adam.m.size(); ++i) {
            w.add_f64("opt/m/" + std::to_string(i), snapshot->adam.m[i].data(),
                      {snapshot->adam.m[i].size()});
            w.add_f64("opt/v/" + std::to_string(i), snapshot->adam.v[i].data(),
                      {snapshot->adam.v[i].size()});
        }
        w.add_bytes("rng/data", snapshot->data_rng);
        w.add_bytes("rng/noise", snapshot->noise_rng);
    }
    w.write(path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    CheckpointReader r(path);
    LoadedCheckpoint out;
    const ModelConfig cfg = model_config_from_json(r.get("meta/model_config").as_string());
    out.model = std::make_unique<DiTModel>(cfg);
    for (Tensor* t : out.model->base_parameters()) load_tensor(r, "base/", *t);

    if (r.has("meta/lora_config")) {
        out.model->inject_lora(lora_config_from_json(r.get("meta/lora_config").as_string()));
        for (auto& e : out.model->lora_state().entries) {
            load_tensor(r, "lora/", e.down);
            load_tensor(r, "lora/", e.up);
        }
    }

    if (r.has("opt/step")) {
        TrainerSnapshot snap;
        snap.epoch = static_cast<int>(r.get("train/epoch").as_i64());
        snap.iteration = r.get("train/iteration").as_i64();
        snap.adam.step = r.get("opt/step").as_i64();
        for (size_t i = 0;; ++i) {
            const std::string mk = "opt/m/" + std::to_string(i);
            if (!r.has(mk)) break;
            snap.adam.m.push_back(r.get(mk).as_f64());
            snap.adam.v.push_back(r.get("opt/v/" + std::to_string(i)).as_f64());
        }
        snap.data_rng = r.get("rng/data").as_string();
        snap.noise_rng = r.get("rng/noise").as_string();
        out.snapshot = std::move(snap);
    }
    return out;
}

void save_lora(const std::filesystem::path& path, const DiTModel& model) {
    const LoRAState& lora = model.lora_state();
    CheckpointWriter w;
    w.add_bytes("meta/lora_config", lora_config_to_json(lora.config));
    for (const auto& e : lora.entries) {
        add_tensor(w, "lora/", e.down);
        add_tensor(w, "lora/", e.up);
    }
    w.write(path);
}

void load_lora_into(const std::filesystem::path& path, DiTModel& model) {
    CheckpointReader r(path);
    if (!model.has_lora())
        model.inject_lora(lora_config_from_json(r.get("meta/lora_config").as_string()));
    for (auto& e : model.lora_state().entries) {
        load_tensor(r, "lora/", e.down);
        load_tensor(r, "lora/", e.up);
    }
}

}  // namespace visent
