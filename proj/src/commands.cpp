#include "visent/commands.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "visent/checkpoint.hpp"
#include "visent/errors.hpp"
#include "visent/hash.hpp"
#include "visent/image_io.hpp"
#include "visent/sampler.hpp"

namespace visent {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read: " + path.string());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write: " + path.string());
    f << text;
}

std::string fmt_loss(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Direction default_direction(TaskKind task) {
    return is_camera_task(task) ? Direction::generation : Direction::understanding;
}

// Per-sample seeds for a dataset are a pure function of (dataset seed, index).
uint64_t sample_seed(uint64_t dataset_seed, int index) {
    return derive_seed(dataset_seed, 0x5eed0000ull + static_cast<uint64_t>(index));
}

uint64_t eval_seed(uint64_t split_seed, int sentence, int member) {
    return derive_seed(split_seed, 0xe7a10000ull + static_cast<uint64_t>(sentence) * 64 +
                                       static_cast<uint64_t>(member));
}

}  // namespace

uint64_t apply_seed_override(uint64_t seed) {
    const char* env = std::getenv("VISENT_SEED");
    if (env == nullptr || *env == '\0') return seed;
    return static_cast<uint64_t>(std::strtoull(env, nullptr, 10));
}

fs::path apply_out_root(const fs::path& path) {
    const char* env = std::getenv("VISENT_OUT_ROOT");
    if (env == nullptr || *env == '\0' || path.is_absolute()) return path;
    return fs::path(env) / path;
}

void cmd_gen_data(const GenDataArgs& args_in) {
    GenDataArgs args = args_in;
    args.seed = apply_seed_override(args.seed);
    args.out = apply_out_root(args.out);
    if (args.count < 1) throw ConfigError("gen-data: count must be >= 1");
    const Direction dir = args.direction.value_or(default_direction(args.task));
    const ModalityPlan plan = context_row(args.context);

    // Fail fast on unsupported (task, context) pairs before touching disk.
    make_task_sample(args.task, sample_seed(args.seed, 0), plan, dir, args.world);

    DatasetManifest m;
    m.task = args.task;
    m.context = args.context;
    m.direction = dir;
    m.count = args.count;
    m.seed = args.seed;
    m.height = args.world.height;
    m.width = args.world.width;
    m.video_frames = args.world.video_frames;

    fs::create_directories(args.out);
    for (int i = 0; i < args.count; ++i) {
        const TaskSample s = make_task_sample(args.task, sample_seed(args.seed, i), plan, dir,
                                              args.world);
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%03d", i);
        write_sample(args.out / name, s);
        m.sample_dirs.emplace_back(name);
    }
    write_dataset_manifest(args.out, m);

    ordered_json cfg;
    cfg["task"] = to_string(args.task);
    cfg["context"] = to_string(args.context);
    cfg["direction"] = to_string(dir);
    cfg["count"] = args.count;
    cfg["seed"] = args.seed;
    RunManifest rm("gen-data", make_run_id("gen-data", cfg.dump()));
    rm.set_config(cfg.dump());
    rm.set_seed(args.seed);
    rm.add_artifact(args.out / "manifest.json");
    rm.finalize(args.out);
}

TrainRunConfig parse_train_config(const std::string& json_text) {
    const auto j = json::parse(json_text);
    TrainRunConfig cfg;
    cfg.raw_json = json_text;

    auto note_default = [&](const std::string& key, const std::string& value) {
        cfg.applied_defaults.push_back(key + " not set; using default " + value);
    };

    if (j.contains("lr")) cfg.train.lr = j.at("lr").get<double>();
    else note_default("lr", "0.0001");
    if (j.contains("batch_size")) cfg.train.batch_size = j.at("batch_size").get<int>();
    else note_default("batch_size", "1");
    if (j.contains("iters_per_epoch")) cfg.train.iters_per_epoch = j.at("iters_per_epoch").get<int>();
    else note_default("iters_per_epoch", "200");
    if (j.contains("epochs")) cfg.train.epochs = j.at("epochs").get<int>();
    else note_default("epochs", "20");
    cfg.train.seed = j.value("seed", static_cast<uint64_t>(0));
    cfg.train.shots = j.value("shots", 4);
    cfg.train.regime = parse_regime(j.value("regime", "per-task-per-context"));
    const std::string tdist = j.value("timestep", "uniform");
    if (tdist == "uniform") cfg.train.timestep = TimestepDist::uniform;
    else if (tdist == "logit-normal") cfg.train.timestep = TimestepDist::logit_normal;
    else throw ConfigError("unknown timestep distribution: " + tdist);

    if (j.contains("model")) cfg.model = model_config_from_json(j.at("model").dump());
    if (j.contains("lora")) cfg.lora = lora_config_from_json(j.at("lora").dump());
    else note_default("lora", "rank 16, alpha 16, all attention projections");

    if (!j.contains("datasets")) throw ConfigError("train config needs a datasets list");
    for (const auto& d : j.at("datasets")) cfg.dataset_dirs.emplace_back(d.get<std::string>());
    if (j.contains("resume")) cfg.resume = fs::path(j.at("resume").get<std::string>());
    return cfg;
}

TrainResult cmd_train(const TrainArgs& args) {
    TrainRunConfig cfg = parse_train_config(read_file(args.config_path));
    cfg.train.seed = apply_seed_override(cfg.train.seed);
    const fs::path out_dir = apply_out_root(args.out_dir);
    fs::create_directories(out_dir);

    for (const auto& line : cfg.applied_defaults)
        if (!args.quiet) std::cout << "[train] " << line << "\n";

    TrainingData data;
    for (const auto& dir : cfg.dataset_dirs) data.sets.push_back(load_dataset(apply_out_root(dir)));

    std::unique_ptr<DiTModel> model;
    std::optional<TrainerSnapshot> resume_snap;
    if (cfg.resume) {
        LoadedCheckpoint loaded = load_checkpoint(apply_out_root(*cfg.resume));
        model = std::move(loaded.model);
        resume_snap = std::move(loaded.snapshot);
        if (!model->has_lora()) throw DataError("resume checkpoint carries no adapters");
    } else {
        model = std::make_unique<DiTModel>(cfg.model);
        model->inject_lora(cfg.lora);
    }

    Trainer trainer(*model, data, cfg.train);
    if (resume_snap) {
        trainer.adam() = resume_snap->adam;
        trainer.data_rng().deserialize(resume_snap->data_rng);
        trainer.noise_rng().deserialize(resume_snap->noise_rng);
        trainer.restore_counters(resume_snap->epoch, resume_snap->iteration);
    }

    std::string csv = "iteration,epoch,task,context,loss\n";
    const double t0 = now_seconds();
    auto run_guarded = [&](auto&& iter_hook, auto&& epoch_hook) {
        try {
            trainer.run(iter_hook, epoch_hook);
        } catch (const NumericalError& e) {
            ordered_json diag;
            diag["error"] = e.what();
            diag["iteration"] = trainer.iteration();
            diag["epoch"] = trainer.epoch();
            write_file(out_dir / "diagnostic.json", diag.dump(2));
            throw;
        }
    };
    run_guarded(
        [&](const IterationLog& row) {
            csv += std::to_string(row.iteration) + "," + std::to_string(row.epoch) + "," +
                   to_string(row.task) + "," + to_string(row.context) + "," + fmt_loss(row.loss) +
                   "\n";
        },
        [&](int epoch) {
            TrainerSnapshot snap;
            snap.epoch = epoch;
            snap.iteration = trainer.iteration();
            snap.adam = trainer.adam();
            snap.data_rng = trainer.data_rng().serialize();
            snap.noise_rng = trainer.noise_rng().serialize();
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
            save_checkpoint(out_dir / name, *model, &snap);
            if (!args.quiet)
                std::cout << "[train] epoch " << epoch << " loss "
                          << trainer.history().back().loss << "\n";
        });
    const double train_seconds = now_seconds() - t0;

    TrainResult result;
    result.curve_csv = out_dir / "curve.csv";
    write_file(result.curve_csv, csv);

    TrainerSnapshot snap;
    snap.epoch = trainer.epoch();
    snap.iteration = trainer.iteration();
    snap.adam = trainer.adam();
    snap.data_rng = trainer.data_rng().serialize();
    snap.noise_rng = trainer.noise_rng().serialize();
    result.final_checkpoint = out_dir / "final.ckpt";
    save_checkpoint(result.final_checkpoint, *model, &snap);
    result.final_adapter = out_dir / "final.lora";
    save_lora(result.final_adapter, *model);
    result.last_loss = trainer.history().empty() ? 0.0 : trainer.history().back().loss;

    write_file(out_dir / "config.json", cfg.raw_json);
    RunManifest rm("train", make_run_id("train", cfg.raw_json));
    rm.set_config(cfg.raw_json);
    rm.set_seed(cfg.train.seed);
    for (const auto& line : cfg.applied_defaults) rm.add_note("default", line);
    rm.add_artifact(result.curve_csv);
    rm.add_artifact(result.final_checkpoint);
    rm.add_artifact(result.final_adapter);
    rm.add_timing("train", train_seconds);
    rm.finalize(out_dir);
    return result;
}

VisualSentence make_eval_sentence(TaskKind task, ContextType context, int shots,
                                  Direction direction, uint64_t split_seed, int index,
                                  const WorldConfig& world) {
    const ModalityPlan plan = context_row(context);
    const int needed = std::max(shots / 2 - 1, 1);
    std::vector<TaskSample> samples;
    samples.reserve(static_cast<size_t>(needed));
    for (int k = 0; k < needed; ++k)
        samples.push_back(
            make_task_sample(task, eval_seed(split_seed, index, k), plan, direction, world));
    return compose(samples, context, ShotConfig{shots});
}

namespace {

// Scores one generated clip against the ground truth for the task.
void score_query(TaskKind task, Direction direction, const VisualSentence& sentence,
                 const Clip& generated, std::vector<EdgePair>* edge_pairs, MetricReport* sums,
                 int* count, double* rmse_acc, std::vector<double>* rmse_list) {
    const Clip& gt = sentence.target();
    const double r = rmse_255(generated, gt);
    *rmse_acc += r;
    if (rmse_list != nullptr) rmse_list->push_back(r);
    *count += 1;

    auto add = [&](const std::string& name, double v) {
        if (!sums->has(name)) sums->set(name, 0.0);
        sums->set(name, sums->get(name) + v);
    };

    if (direction == Direction::generation) return;  // conditional generation: RMSE only

    switch (task) {
        case TaskKind::depth_map: {
            std::vector<double> pv, gv;
            for (int f = 0; f < gt.frame_count(); ++f)
                for (int y = 0; y < gt.height; ++y)
                    for (int x = 0; x < gt.width; ++x) {
                        pv.push_back((generated.at(f, y, x, 0) + generated.at(f, y, x, 1) +
                                      generated.at(f, y, x, 2)) / 3.0);
                        gv.push_back((gt.at(f, y, x, 0) + gt.at(f, y, x, 1) + gt.at(f, y, x, 2)) /
                                     3.0);
                    }
            const DepthMetrics d = depth_metrics(pv, gv);
            add("delta1", d.delta1);
            add("delta2", d.delta2);
            add("delta3", d.delta3);
            add("abs_rel", d.abs_rel);
            add("sq_rel", d.sq_rel);
            add("rmse_log", d.rmse_log);
            add("silog", d.silog);
            break;
        }
        case TaskKind::semantic_seg: {
            const SegMetrics s = segmentation_metrics(generated, gt, seg_palette());
            add("miou", s.miou);
            add("pacc", s.pacc);
            break;
        }
        case TaskKind::salient_track: {
            const SegMetrics s = segmentation_metrics(generated, gt, binary_palette());
            add("miou", s.miou);
            add("pacc", s.pacc);
            break;
        }
        case TaskKind::scribble_map: {
            if (edge_pairs != nullptr)
                for (int f = 0; f < gt.frame_count(); ++f) {
                    EdgePair pair;
                    pair.pred = Mat(gt.height, gt.width);
                    pair.gt = Mat(gt.height, gt.width);
                    for (int y = 0; y < gt.height; ++y)
                        for (int x = 0; x < gt.width; ++x) {
                            pair.pred.at(y, x) = (generated.at(f, y, x, 0) +
                                                  generated.at(f, y, x, 1) +
                                                  generated.at(f, y, x, 2)) / 3.0;
                            pair.gt.at(y, x) =
                                (gt.at(f, y, x, 0) + gt.at(f, y, x, 1) + gt.at(f, y, x, 2)) / 3.0 >
                                        0.5
                                    ? 1.0
                                    : 0.0;
                        }
                    edge_pairs->push_back(std::move(pair));
                }
            break;
        }
        case TaskKind::vangogh_style: {
            // reference style is the example output clip A'
            add("style", style_proxy(generated, sentence.clips[1].clip));
            break;
        }
        case TaskKind::camera_move:
            break;
    }
}

}  // namespace

EvalResult cmd_eval(const EvalArgs& args_in) {
    EvalArgs args = args_in;
    args.split_seed = apply_seed_override(args.split_seed);
    args.out = apply_out_root(args.out);
    if (args.count < 1) throw ConfigError("eval: count must be >= 1");

    LoadedCheckpoint loaded = load_checkpoint(args.checkpoint);
    DiTModel& model = *loaded.model;

    Direction direction = default_direction(args.task);
    if (args.reversed) {
        if (is_camera_task(args.task))
            throw ConfigError("camera_move has no reversed evaluation");
        direction = Direction::generation;
    }

    EvalResult result;
    std::vector<fs::path> gallery_files;

    ordered_json cfg;
    cfg["checkpoint"] = args.checkpoint.string();
    cfg["task"] = to_string(args.task);
    cfg["split_seed"] = args.split_seed;
    cfg["count"] = args.count;
    cfg["steps"] = args.steps;
    cfg["reversed"] = args.reversed;
    const std::string run_id = make_run_id("eval", cfg.dump());

    for (const ContextType context : args.contexts) {
        for (const int shots : args.shots) {
            MetricReport report;
            report.task = to_string(args.task);
            report.context = to_string(context);
            report.shots = shots;
            report.run_id = run_id;

            std::vector<EdgePair> edge_pairs;
            MetricReport sums;
            int scored = 0;
            double rmse_acc = 0.0;
            std::vector<double> rmse_list;
            double gen_seconds = 0.0;

            // generation parallelizes over test sentences; the model is
            // read-shared and every query owns its seed and output slot
            struct QueryOut {
                VisualSentence sentence;
                Clip generated;
                double seconds = 0.0;
            };
            std::vector<QueryOut> queries(static_cast<size_t>(args.count));
            {
                std::atomic<int> cursor{0};
                auto worker = [&] {
                    for (int q = cursor.fetch_add(1); q < args.count; q = cursor.fetch_add(1)) {
                        QueryOut& slot = queries[static_cast<size_t>(q)];
                        slot.sentence = make_eval_sentence(args.task, context, shots, direction,
                                                           args.split_seed, q, args.world);
                        SampleConfig sc;
                        sc.steps = args.steps;
                        sc.seed = derive_seed(args.split_seed, 0x9a3bull + static_cast<uint64_t>(q));
                        const double g0 = now_seconds();
                        slot.generated = sample_target(model, slot.sentence, sc).clip;
                        slot.seconds = now_seconds() - g0;
                    }
                };
                const int threads =
                    std::max(1, std::min({args.count, 2, int(std::thread::hardware_concurrency())}));
                std::vector<std::thread> pool;
                for (int w = 0; w < threads - 1; ++w) pool.emplace_back(worker);
                worker();
                for (auto& th : pool) th.join();
            }

            for (int q = 0; q < args.count; ++q) {
                const QueryOut& slot = queries[static_cast<size_t>(q)];
                gen_seconds += slot.seconds;
                score_query(args.task, direction, slot.sentence, slot.generated, &edge_pairs,
                            &sums, &scored, &rmse_acc, &rmse_list);

                if (!args.out.empty() && q < args.gallery_count) {
                    std::vector<const Clip*> strip;
                    for (size_t i = 0; i + 1 < slot.sentence.clips.size(); ++i)
                        strip.push_back(&slot.sentence.clips[i].clip);
                    strip.push_back(&slot.generated);
                    strip.push_back(&slot.sentence.target());
                    char name[64];
                    std::snprintf(name, sizeof(name), "gallery_%s_%d_q%02d.png",
                                  to_string(context), shots, q);
                    const fs::path p = args.out / "galleries" / name;
                    write_png(p, make_strip(strip));
                    gallery_files.push_back(p);
                }
            }

            report.set("rmse", rmse_acc / scored);
            for (const auto& [name, total] : sums.values) report.set(name, total / scored);
            if (!edge_pairs.empty()) {
                const EdgeMetrics em = edge_metrics(edge_pairs);
                report.set("ods", em.ods);
                report.set("ois", em.ois);
                report.set("ap", em.ap);
            }
            report.validate();
            result.reports.push_back(report);
            result.generation_seconds.push_back(gen_seconds);
            result.per_query_rmse.push_back(rmse_list);

            if (!args.quiet)
                std::cout << "[eval] " << to_string(args.task) << " ctx " << to_string(context)
                          << " shots " << shots << " rmse " << report.get("rmse") << "\n";
        }
    }

    if (!args.out.empty()) {
        fs::create_directories(args.out);
        ordered_json arr = ordered_json::array();
        for (const auto& r : result.reports) arr.push_back(ordered_json::parse(r.to_json()));
        write_file(args.out / "report.json", arr.dump(2));
        write_file(args.out / "report.txt", report_table(result.reports));

        RunManifest rm("eval", run_id);
        rm.set_config(cfg.dump());
        rm.set_seed(args.split_seed);
        rm.add_artifact(args.out / "report.json");
        rm.add_artifact(args.out / "report.txt");
        for (const auto& g : gallery_files) rm.add_artifact(g);
        for (size_t i = 0; i < result.generation_seconds.size(); ++i)
            rm.add_timing("generate_row_" + std::to_string(i), result.generation_seconds[i]);
        rm.finalize(args.out);
    }
    return result;
}

void cmd_sample(const SampleArgs& args_in) {
    SampleArgs args = args_in;
    args.seed = apply_seed_override(args.seed);
    args.out = apply_out_root(args.out);

    LoadedCheckpoint loaded = load_checkpoint(args.checkpoint);
    Direction direction = default_direction(args.task);
    if (args.reversed) direction = Direction::generation;

    const VisualSentence sentence = make_eval_sentence(args.task, args.context, args.shots,
                                                       direction, args.seed, 0, args.world);
    SampleConfig sc;
    sc.steps = args.steps;
    sc.seed = derive_seed(args.seed, 0x5a3e11ull);
    sc.trace = args.trace;
    const SampleOutput out = sample_target(*loaded.model, sentence, sc);

    fs::create_directories(args.out);
    const auto files = write_clip(args.out / "generated", out.clip);

    // sentence manifest: ordered clip refs with roles
    ordered_json sentence_j;
    sentence_j["context_type"] = to_string(sentence.context_type);
    sentence_j["shots"] = sentence.shot_config.shots;
    sentence_j["direction"] = to_string(sentence.direction);
    sentence_j["task"] = to_string(sentence.kind);
    ordered_json clips_j = ordered_json::array();
    for (size_t i = 0; i < sentence.clips.size(); ++i) {
        const auto& rc = sentence.clips[i];
        char dir_name[32];
        std::snprintf(dir_name, sizeof(dir_name), "clip_%02zu_%s", i, to_string(rc.role));
        const auto clip_files = write_clip(args.out / dir_name, rc.clip);
        ordered_json c;
        c["role"] = to_string(rc.role);
        c["modality"] = rc.clip.modality == Modality::image ? "image" : "video";
        c["dir"] = dir_name;
        c["frames"] = clip_files;
        clips_j.push_back(c);
    }
    sentence_j["clips"] = clips_j;
    write_file(args.out / "sentence.json", sentence_j.dump(2));

    std::vector<const Clip*> strip;
    for (size_t i = 0; i + 1 < sentence.clips.size(); ++i) strip.push_back(&sentence.clips[i].clip);
    strip.push_back(&out.clip);
    strip.push_back(&sentence.target());
    write_png(args.out / "strip.png", make_strip(strip));

    if (args.trace && !out.trace.empty()) {
        // one row per traced step, rendered as the decoded target frames
        std::vector<Clip> decoded;
        TokenGrid grid = tokenize(sentence, loaded.model->config().patch,
                                  loaded.model->config().per_clip_time);
        const int begin = grid.target_begin();
        for (const auto& snap : out.trace) {
            std::memcpy(grid.row(begin), snap.data(), sizeof(double) * snap.size());
            decoded.push_back(detokenize_target(grid));
        }
        std::vector<const Clip*> ptrs;
        const size_t stride = std::max<size_t>(1, decoded.size() / 8);
        for (size_t i = 0; i < decoded.size(); i += stride) ptrs.push_back(&decoded[i]);
        write_png(args.out / "trace.png", make_strip(ptrs));
    }

    ordered_json j;
    j["task"] = to_string(args.task);
    j["context"] = to_string(args.context);
    j["shots"] = args.shots;
    j["seed"] = args.seed;
    j["steps"] = args.steps;
    j["frames"] = files;
    write_file(args.out / "sample.json", j.dump(2));
}

namespace {

struct ReproPaths {
    fs::path root, data, runs, tables;
};

ReproPaths repro_paths(const ReproArgs& args) {
    ReproPaths p;
    p.root = apply_out_root(args.out);
    p.data = p.root / "data";
    p.runs = p.root / "runs";
    p.tables = p.root;
    return p;
}

fs::path gen_dataset(const ReproArgs& args, const ReproPaths& paths, TaskKind task,
                     ContextType context, std::optional<Direction> direction = {}) {
    const std::string name = std::string(to_string(task)) + "__" + to_string(context) +
                             (direction && *direction == Direction::generation &&
                                      !is_camera_task(task)
                                  ? "__rev"
                                  : "");
    GenDataArgs g;
    g.task = task;
    g.context = context;
    g.direction = direction;
    g.count = args.count;
    g.seed = derive_seed(args.seed, std::hash<std::string>{}(name));
    g.out = paths.data / name;
    cmd_gen_data(g);
    return g.out;
}

std::string train_config_json(const ReproArgs& args, Regime regime,
                              const std::vector<fs::path>& datasets, uint64_t seed, int shots = 4) {
    ordered_json j;
    j["lr"] = 1e-3;
    j["batch_size"] = 1;
    j["iters_per_epoch"] = args.iters;
    j["epochs"] = args.epochs;
    j["seed"] = seed;
    j["shots"] = shots;
    j["regime"] = to_string(regime);
    ordered_json ds = ordered_json::array();
    for (const auto& d : datasets) ds.push_back(d.string());
    j["datasets"] = ds;
    return j.dump(2);
}

fs::path run_training(const ReproArgs& args, const ReproPaths& paths, const std::string& name,
                      const std::string& config_json) {
    const fs::path run_dir = paths.runs / name;
    write_file(run_dir / "train_config.json", config_json);
    TrainArgs t;
    t.config_path = run_dir / "train_config.json";
    t.out_dir = run_dir;
    t.quiet = args.quiet;
    return cmd_train(t).final_checkpoint;
}

MetricReport eval_one(const ReproArgs& args, const fs::path& ckpt, TaskKind task,
                      ContextType context, int shots, bool reversed, const fs::path& out,
                      double* gen_seconds = nullptr) {
    EvalArgs e;
    e.checkpoint = ckpt;
    e.task = task;
    e.contexts = {context};
    e.shots = {shots};
    e.count = args.eval_count;
    e.steps = args.steps;
    e.split_seed = derive_seed(args.seed, 0xe5a1ull);
    e.reversed = reversed;
    e.out = out;
    e.quiet = args.quiet;
    EvalResult r = cmd_eval(e);
    if (gen_seconds != nullptr) *gen_seconds = r.generation_seconds[0];
    return r.reports[0];
}

void repro_fig4(const ReproArgs& args, const ReproPaths& paths) {
    std::vector<MetricReport> rows;
    for (TaskKind task : {TaskKind::scribble_map, TaskKind::salient_track, TaskKind::camera_move}) {
        for (ContextType context : applicable_contexts(task)) {
            const fs::path data = gen_dataset(args, paths, task, context);
            const std::string name = std::string("fig4_") + to_string(task) + "_" +
                                     to_string(context);
            const fs::path ckpt = run_training(
                args, paths, name,
                train_config_json(args, Regime::per_task_per_context, {data},
                                  derive_seed(args.seed, std::hash<std::string>{}(name))));
            rows.push_back(eval_one(args, ckpt, task, context, 4, false, paths.runs / name / "eval"));
        }
    }
    write_file(paths.tables / "fig4_separate.txt", report_table(rows));
}

void repro_fig5(const ReproArgs& args, const ReproPaths& paths) {
    std::vector<MetricReport> rows;
    // forward: depth understanding; reversed: conditional generation
    const fs::path fwd_data = gen_dataset(args, paths, TaskKind::depth_map, ContextType::II);
    const fs::path fwd_ckpt = run_training(
        args, paths, "fig5_forward",
        train_config_json(args, Regime::per_task_per_context, {fwd_data},
                          derive_seed(args.seed, 51)));
    MetricReport fwd = eval_one(args, fwd_ckpt, TaskKind::depth_map, ContextType::II, 4, false,
                                paths.runs / "fig5_forward/eval");
    fwd.task = "depth_map(fwd)";
    rows.push_back(fwd);

    const fs::path rev_data =
        gen_dataset(args, paths, TaskKind::depth_map, ContextType::II, Direction::generation);
    const fs::path rev_ckpt = run_training(
        args, paths, "fig5_reversed",
        train_config_json(args, Regime::per_task_per_context, {rev_data},
                          derive_seed(args.seed, 52)));
    MetricReport rev = eval_one(args, rev_ckpt, TaskKind::depth_map, ContextType::II, 4, true,
                                paths.runs / "fig5_reversed/eval");
    rev.task = "depth_map(rev)";
    rows.push_back(rev);
    write_file(paths.tables / "fig5_reversal.txt", report_table(rows));
}

void repro_fig6(const ReproArgs& args, const ReproPaths& paths) {
    const TaskKind task = TaskKind::depth_map;
    std::vector<fs::path> datasets;
    for (ContextType c : applicable_contexts(task))
        datasets.push_back(gen_dataset(args, paths, task, c));
    const fs::path ckpt = run_training(
        args, paths, "fig6_mixed",
        train_config_json(args, Regime::per_task_mixed, datasets, derive_seed(args.seed, 61)));
    std::vector<MetricReport> rows;
    for (ContextType c : applicable_contexts(task))
        rows.push_back(eval_one(args, ckpt, task, c, 4, false,
                                paths.runs / ("fig6_eval_" + std::string(to_string(c)))));
    write_file(paths.tables / "fig6_mixed.txt", report_table(rows));
}

void repro_tab2(const ReproArgs& args, const ReproPaths& paths) {
    // separate = per-task mixed contexts; co-training = all tasks, all contexts
    std::vector<fs::path> all_data;
    std::vector<std::vector<fs::path>> per_task_data;
    for (TaskKind task : kAllTasks) {
        std::vector<fs::path> ds;
        for (ContextType c : applicable_contexts(task))
            ds.push_back(gen_dataset(args, paths, task, c));
        per_task_data.push_back(ds);
        all_data.insert(all_data.end(), ds.begin(), ds.end());
    }

    const fs::path co_ckpt = run_training(
        args, paths, "tab2_cotrain",
        train_config_json(args, Regime::co_train_all, all_data, derive_seed(args.seed, 21)));

    std::vector<MetricReport> rows;
    for (size_t ti = 0; ti < kAllTasks.size(); ++ti) {
        const TaskKind task = kAllTasks[ti];
        const ContextType eval_ctx = is_camera_task(task) ? ContextType::I : ContextType::II;
        const std::string name = std::string("tab2_sep_") + to_string(task);
        const fs::path sep_ckpt = run_training(
            args, paths, name,
            train_config_json(args, Regime::per_task_mixed, per_task_data[ti],
                              derive_seed(args.seed, 22 + ti)));
        MetricReport sep = eval_one(args, sep_ckpt, task, eval_ctx, 4, false,
                                    paths.runs / name / "eval");
        sep.task = std::string(to_string(task)) + "(separate)";
        rows.push_back(sep);
        MetricReport co = eval_one(args, co_ckpt, task, eval_ctx, 4, false,
                                   paths.runs / ("tab2_co_eval_" + std::string(to_string(task))));
        co.task = std::string(to_string(task)) + "(co-train)";
        rows.push_back(co);
    }
    write_file(paths.tables / "tab2_training_strategies.txt", report_table(rows));
}

void repro_tab3(const ReproArgs& args, const ReproPaths& paths) {
    const TaskKind task = TaskKind::depth_map;
    const ContextType context = ContextType::II;
    const fs::path data = gen_dataset(args, paths, task, context);

    std::ostringstream table;
    table << "ft_shots  test_shots  time_s      rmse\n";
    table << "--------------------------------------\n";
    for (int ft_shots : {4, 6, 8}) {
        const std::string name = "tab3_ft" + std::to_string(ft_shots);
        const fs::path ckpt = run_training(
            args, paths, name,
            train_config_json(args, Regime::per_task_per_context, {data},
                              derive_seed(args.seed, 30 + static_cast<uint64_t>(ft_shots)),
                              ft_shots));
        for (int test_shots : {4, 6, 8}) {
            double seconds = 0.0;
            const MetricReport r = eval_one(args, ckpt, task, context, test_shots, false,
                                            paths.runs / name /
                                                ("eval_" + std::to_string(test_shots)),
                                            &seconds);
            char line[128];
            std::snprintf(line, sizeof(line), "%-9d %-11d %-11.3f %.3f\n", ft_shots, test_shots,
                          seconds, r.get("rmse"));
            table << line;
        }
    }
    write_file(paths.tables / "tab3_shots.txt", table.str());
}

}  // namespace

void cmd_repro(const ReproArgs& args) {
    const ReproPaths paths = repro_paths(args);
    fs::create_directories(paths.root);
    if (args.recipe == "fig4-separate") repro_fig4(args, paths);
    else if (args.recipe == "fig5-reversal") repro_fig5(args, paths);
    else if (args.recipe == "fig6-mixed") repro_fig6(args, paths);
    else if (args.recipe == "tab2-training-strategies") repro_tab2(args, paths);
    else if (args.recipe == "tab3-shots") repro_tab3(args, paths);
    else
        throw ConfigError("unknown recipe: " + args.recipe +
                          " (expect fig4-separate, fig5-reversal, fig6-mixed, "
                          "tab2-training-strategies, tab3-shots)");
}

void cmd_inspect(const fs::path& checkpoint, std::string* out_text) {
    CheckpointReader r(checkpoint);
    std::ostringstream os;
    os << "checkpoint " << checkpoint.string() << " (version " << r.version() << ", "
       << r.blobs().size() << " blobs)\n";
    for (const auto& [name, blob] : r.blobs()) {
        os << "  " << name << "  dtype=" << static_cast<int>(blob.dtype) << " dims=[";
        for (size_t i = 0; i < blob.dims.size(); ++i)
            os << blob.dims[i] << (i + 1 < blob.dims.size() ? "," : "");
        os << "] bytes=" << blob.raw.size() << "\n";
    }
    if (out_text != nullptr) *out_text = os.str();
    else std::cout << os.str();
}

}  // namespace visent
