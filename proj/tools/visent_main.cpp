#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "visent/commands.hpp"
#include "visent/errors.hpp"

using namespace visent;

int main(int argc, char** argv) {
    CLI::App app{"visual-sentence training and evaluation toolkit"};
    app.require_subcommand(1);

    // ---- gen-data ----
    GenDataArgs gen;
    std::string gen_task = "depth_map", gen_context = "II", gen_direction;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic paired dataset");
    gen_cmd->add_option("--task", gen_task, "task name")->required();
    gen_cmd->add_option("--context", gen_context, "context type I/II/III/IV")->required();
    gen_cmd->add_option("--direction", gen_direction, "understanding|generation");
    gen_cmd->add_option("--count", gen.count, "samples to generate");
    gen_cmd->add_option("--seed", gen.seed, "dataset seed");
    gen_cmd->add_option("--out", gen.out, "output directory")->required();
    gen_cmd->add_option("--height", gen.world.height, "frame height");
    gen_cmd->add_option("--width", gen.world.width, "frame width");
    gen_cmd->add_option("--frames", gen.world.video_frames, "frames per video clip");

    // ---- train ----
    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "fine-tune adapters from a JSON config");
    train_cmd->add_option("--config", train.config_path, "train config JSON")->required();
    train_cmd->add_option("--out", train.out_dir, "run output directory")->required();
    train_cmd->add_flag("--quiet", train.quiet, "suppress progress lines");

    // ---- eval ----
    EvalArgs eval;
    std::string eval_task = "depth_map";
    std::vector<std::string> eval_contexts = {"II"};
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on held-out queries");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint path")->required();
    eval_cmd->add_option("--task", eval_task, "task name")->required();
    eval_cmd->add_option("--context", eval_contexts, "context rows to evaluate");
    eval_cmd->add_option("--shots", eval.shots, "shot counts, e.g. --shots 4 6 8");
    eval_cmd->add_option("--split-seed", eval.split_seed, "held-out split seed");
    eval_cmd->add_option("--count", eval.count, "queries per row");
    eval_cmd->add_option("--steps", eval.steps, "sampler steps");
    eval_cmd->add_flag("--reversed", eval.reversed, "conditional-generation evaluation");
    eval_cmd->add_option("--out", eval.out, "report directory")->required();
    eval_cmd->add_option("--height", eval.world.height, "frame height");
    eval_cmd->add_option("--width", eval.world.width, "frame width");
    eval_cmd->add_option("--frames", eval.world.video_frames, "frames per video clip");
    eval_cmd->add_flag("--quiet", eval.quiet, "suppress progress lines");

    // ---- sample ----
    SampleArgs sample;
    std::string sample_task = "depth_map", sample_context = "II";
    auto* sample_cmd = app.add_subcommand("sample", "generate one target clip");
    sample_cmd->add_option("--checkpoint", sample.checkpoint, "checkpoint path")->required();
    sample_cmd->add_option("--task", sample_task, "task name")->required();
    sample_cmd->add_option("--context", sample_context, "context type");
    sample_cmd->add_option("--shots", sample.shots, "shot count");
    sample_cmd->add_option("--seed", sample.seed, "sentence + sampler seed");
    sample_cmd->add_option("--steps", sample.steps, "sampler steps");
    sample_cmd->add_flag("--trace", sample.trace, "emit per-step trace strip");
    sample_cmd->add_flag("--reversed", sample.reversed, "conditional-generation direction");
    sample_cmd->add_option("--out", sample.out, "output directory")->required();

    // ---- repro ----
    ReproArgs repro;
    auto* repro_cmd = app.add_subcommand("repro", "run a full experiment recipe");
    repro_cmd->add_option("recipe", repro.recipe,
                          "fig4-separate|fig5-reversal|fig6-mixed|"
                          "tab2-training-strategies|tab3-shots")
        ->required();
    repro_cmd->add_option("--out", repro.out, "output directory")->required();
    repro_cmd->add_option("--seed", repro.seed, "recipe seed");
    repro_cmd->add_option("--epochs", repro.epochs, "training epochs per run");
    repro_cmd->add_option("--iters", repro.iters, "iterations per epoch");
    repro_cmd->add_option("--count", repro.count, "training samples per dataset");
    repro_cmd->add_option("--eval-count", repro.eval_count, "held-out queries per row");
    repro_cmd->add_option("--steps", repro.steps, "sampler steps");
    repro_cmd->add_flag("--quiet", repro.quiet, "suppress progress lines");

    // ---- inspect-checkpoint ----
    std::filesystem::path inspect_path;
    auto* inspect_cmd = app.add_subcommand("inspect-checkpoint", "list checkpoint contents");
    inspect_cmd->add_option("path", inspect_path, "checkpoint path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_cmd->parsed()) {
            gen.task = parse_task(gen_task);
            gen.context = parse_context(gen_context);
            if (!gen_direction.empty()) gen.direction = parse_direction(gen_direction);
            cmd_gen_data(gen);
        } else if (train_cmd->parsed()) {
            cmd_train(train);
        } else if (eval_cmd->parsed()) {
            eval.task = parse_task(eval_task);
            eval.contexts.clear();
            for (const auto& c : eval_contexts) eval.contexts.push_back(parse_context(c));
            cmd_eval(eval);
        } else if (sample_cmd->parsed()) {
            sample.task = parse_task(sample_task);
            sample.context = parse_context(sample_context);
            cmd_sample(sample);
        } else if (repro_cmd->parsed()) {
            cmd_repro(repro);
        } else if (inspect_cmd->parsed()) {
            cmd_inspect(inspect_path);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
