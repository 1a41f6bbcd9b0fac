#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>

#include "visent/checkpoint.hpp"
#include "visent/commands.hpp"
#include "visent/errors.hpp"
#include "visent/hash.hpp"
#include "visent/image_io.hpp"
#include "visent/manifest.hpp"

using namespace visent;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "visent_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ModelConfig io_model_config() {
    ModelConfig mc;
    mc.dim = 48;
    mc.heads = 2;
    mc.layers = 2;
    mc.patch = 4;
    mc.mlp_ratio = 2;
    mc.prompt_len = 2;
    mc.seed = 77;
    return mc;
}

TokenGrid io_grid(uint64_t seed) {
    WorldConfig wc;
    wc.height = 16;
    wc.width = 16;
    wc.video_frames = 3;
    const TaskSample s = make_task_sample(TaskKind::depth_map, seed, context_row(ContextType::II),
                                          Direction::understanding, wc);
    return tokenize(compose({s}, ContextType::II, ShotConfig{4}), 4);
}

}  // namespace

TEST_CASE("sha1: known digests") {
    CHECK(sha1_hex(std::string("abc")) == "a9993e364706816aba3e25717850c26c9cd0d89d");
    CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("png: byte round trip") {
    const fs::path dir = temp_dir("png");
    RngStream rng(4);
    RgbImage img;
    img.height = 23;  // odd sizes exercise the stored-block path
    img.width = 17;
    img.bytes.resize(static_cast<size_t>(23) * 17 * 3);
    for (auto& b : img.bytes) b = static_cast<uint8_t>(rng.raw() & 0xff);
    write_png(dir / "t.png", img);
    const RgbImage back = read_png(dir / "t.png");
    CHECK(back.height == img.height);
    CHECK(back.width == img.width);
    CHECK(back.bytes == img.bytes);
}

TEST_CASE("png: quantization endpoints") {
    CHECK(quantize_u8(0.0) == 0);
    CHECK(quantize_u8(1.0) == 255);
    CHECK(quantize_u8(-2.0) == 0);
    CHECK(quantize_u8(2.0) == 255);
    CHECK(quantize_u8(127.0 / 255.0) == 127);
}

TEST_CASE("clip io: 8-bit round trip error bound") {
    const fs::path dir = temp_dir("clip");
    RngStream rng(9);
    Clip clip = Clip::video(3, 16, 16);
    for (auto& fr : clip.frames)
        for (double& v : fr) v = rng.uniform();
    const auto files = write_clip(dir / "c", clip);
    CHECK(files.size() == 3);
    const Clip back = read_clip(dir / "c", files, Modality::video);
    for (int f = 0; f < 3; ++f)
        for (size_t i = 0; i < clip.frames[static_cast<size_t>(f)].size(); ++i)
            CHECK(std::abs(back.frames[static_cast<size_t>(f)][i] -
                           clip.frames[static_cast<size_t>(f)][i]) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("strip: panel layout") {
    Clip a = Clip::image(8, 8);
    a.fill(1.0, 0.0, 0.0);
    Clip b = Clip::video(2, 8, 8);
    b.fill(0.0, 1.0, 0.0);
    const RgbImage strip = make_strip({&a, &b});
    CHECK(strip.height == 8);
    CHECK(strip.width == 8 + 2 + 16);  // image + separator + two video frames
    CHECK(strip.bytes[0] == 255);      // red panel first
}

TEST_CASE("checkpoint: forward outputs round trip bit-exactly") {
    const fs::path dir = temp_dir("ckpt");
    DiTModel model(io_model_config());
    model.inject_lora(LoRAConfig{});
    RngStream rng(3);
    for (auto& e : model.lora_state().entries) e.up.init_normal(rng, 0.01);

    const TokenGrid grid = io_grid(12);
    const PromptEmbedding prompt = model.prompt_embedding(TaskKind::depth_map);
    const Mat before = model.forward(grid, 0.37, prompt);

    save_checkpoint(dir / "m.ckpt", model);
    LoadedCheckpoint loaded = load_checkpoint(dir / "m.ckpt");
    const Mat after = loaded.model->forward(grid, 0.37,
                                            loaded.model->prompt_embedding(TaskKind::depth_map));
    REQUIRE(before.size() == after.size());
    CHECK(std::memcmp(before.data(), after.data(), sizeof(double) * before.size()) == 0);
}

TEST_CASE("checkpoint: trainer snapshot round trips") {
    const fs::path dir = temp_dir("ckpt_snap");
    DiTModel model(io_model_config());
    model.inject_lora(LoRAConfig{});

    TrainerSnapshot snap;
    snap.epoch = 3;
    snap.iteration = 600;
    snap.adam.step = 600;
    for (Tensor* t : model.trainable_parameters()) {
        snap.adam.m.emplace_back(t->count(), 0.25);
        snap.adam.v.emplace_back(t->count(), 0.5);
    }
    RngStream a(5), b(6);
    snap.data_rng = a.serialize();
    snap.noise_rng = b.serialize();

    save_checkpoint(dir / "m.ckpt", model, &snap);
    LoadedCheckpoint loaded = load_checkpoint(dir / "m.ckpt");
    REQUIRE(loaded.snapshot.has_value());
    CHECK(loaded.snapshot->epoch == 3);
    CHECK(loaded.snapshot->iteration == 600);
    CHECK(loaded.snapshot->adam.step == 600);
    CHECK(loaded.snapshot->adam.m.size() == model.trainable_parameters().size());
    CHECK(loaded.snapshot->data_rng == snap.data_rng);

    RngStream restored;
    restored.deserialize(loaded.snapshot->data_rng);
    RngStream fresh(5);
    for (int i = 0; i < 16; ++i) CHECK(restored.raw() == fresh.raw());
}

TEST_CASE("checkpoint: adapter-only container") {
    const fs::path dir = temp_dir("lora_only");
    DiTModel model(io_model_config());
    model.inject_lora(LoRAConfig{});
    RngStream rng(8);
    for (auto& e : model.lora_state().entries) e.up.init_normal(rng, 0.02);
    save_lora(dir / "task.lora", model);

    DiTModel fresh(io_model_config());
    load_lora_into(dir / "task.lora", fresh);
    REQUIRE(fresh.has_lora());
    const TokenGrid grid = io_grid(5);
    const Mat a = model.forward(grid, 0.5, model.prompt_embedding(TaskKind::depth_map));
    const Mat b = fresh.forward(grid, 0.5, fresh.prompt_embedding(TaskKind::depth_map));
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}

TEST_CASE("checkpoint: inspect lists blobs, bad files rejected") {
    const fs::path dir = temp_dir("inspect");
    DiTModel model(io_model_config());
    save_checkpoint(dir / "m.ckpt", model);
    std::string text;
    cmd_inspect(dir / "m.ckpt", &text);
    CHECK(text.find("base/in_proj.w") != std::string::npos);
    CHECK(text.find("meta/model_config") != std::string::npos);

    std::ofstream bad(dir / "junk.ckpt", std::ios::binary);
    bad << "not a checkpoint";
    bad.close();
    CHECK_THROWS_AS(CheckpointReader(dir / "junk.ckpt"), DataError);
}

TEST_CASE("dataset: write, manifest, reload") {
    const fs::path dir = temp_dir("dataset");
    GenDataArgs args;
    args.task = TaskKind::semantic_seg;
    args.context = ContextType::III;
    args.count = 3;
    args.seed = 44;
    args.out = dir / "d";
    cmd_gen_data(args);

    const DatasetManifest m = read_dataset_manifest(dir / "d");
    CHECK(m.task == TaskKind::semantic_seg);
    CHECK(m.context == ContextType::III);
    CHECK(m.count == 3);
    CHECK(m.sample_dirs.size() == 3);

    const TaskDataset data = load_dataset(dir / "d");
    CHECK(data.samples.size() == 3);
    CHECK(data.samples[0].a.modality == Modality::image);
    CHECK(data.samples[0].b.modality == Modality::video);
    CHECK(data.samples[0].b.frame_count() == 5);

    // a second load is bit-identical
    const TaskDataset again = load_dataset(dir / "d");
    CHECK(again.samples[1].b_prime == data.samples[1].b_prime);
}

TEST_CASE("run manifest: artifact hashes are enforced at finalize") {
    const fs::path dir = temp_dir("runman");
    std::ofstream(dir / "artifact.txt") << "payload";
    RunManifest rm("test", "test-123");
    rm.add_artifact(dir / "artifact.txt");
    rm.finalize(dir);
    CHECK(fs::exists(dir / "run_manifest.json"));

    RunManifest rm2("test", "test-456");
    rm2.add_artifact(dir / "artifact.txt");
    std::ofstream(dir / "artifact.txt") << "tampered";
    CHECK_THROWS_WITH_AS(rm2.finalize(dir), doctest::Contains("changed"), DataError);
}

TEST_CASE("train config: defaults are applied and logged") {
    const TrainRunConfig cfg = parse_train_config(R"({"datasets": ["x"], "seed": 4})");
    CHECK(cfg.train.lr == 1e-4);
    CHECK(cfg.train.batch_size == 1);
    CHECK(cfg.train.iters_per_epoch == 200);
    CHECK(cfg.train.epochs == 20);
    bool lr_logged = false;
    for (const auto& line : cfg.applied_defaults)
        if (line.find("lr") == 0) lr_logged = true;
    CHECK(lr_logged);
    CHECK(cfg.lora.rank == 16);
    CHECK(cfg.lora.alpha == 16.0);

    CHECK_THROWS_AS(parse_train_config(R"({"seed": 4})"), ConfigError);
    CHECK_THROWS_AS(parse_train_config(R"({"datasets": ["x"], "timestep": "bogus"})"), ConfigError);
}
