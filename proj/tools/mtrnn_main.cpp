#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mtrnn/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-task recurrent sequence classification"};
  app.require_subcommand(1);

  std::string config, checkpoint, text, out, split;
  int task = 0;

  CLI::App* train = app.add_subcommand("train", "Joint or single-task training");
  train->add_option("--config", config, "Run configuration JSON")->required();

  CLI::App* pretrain = app.add_subcommand(
      "pretrain", "Language-model pretraining of the shared layer");
  pretrain->add_option("--config", config, "Run configuration JSON")->required();

  CLI::App* finetune =
      app.add_subcommand("finetune", "Continue training one task from a checkpoint");
  finetune->add_option("--config", config, "Run configuration JSON")->required();
  finetune->add_option("--checkpoint", checkpoint, "Checkpoint to start from")
      ->required();
  finetune->add_option("--task", task, "Task id")->required();

  CLI::App* trace = app.add_subcommand(
      "trace", "Per-timestep prediction trajectories and gate activations");
  trace->add_option("--checkpoint", checkpoint, "Checkpoint to load")->required();
  trace->add_option("--task", task, "Task id")->required();
  trace->add_option("--text", text, "Input text, one example per line")
      ->required();
  trace->add_option("--out", out, "Output JSON-lines path (default stdout)");

  CLI::App* eval = app.add_subcommand("eval", "Split accuracy and predictions");
  eval->add_option("--config", config, "Run configuration JSON")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint to load")->required();
  eval->add_option("--task", task, "Task id")->required();
  eval->add_option("--split", split, "train, dev, or test")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return mtrnn::kExitConfig;
  }

  return mtrnn::run_guarded([&]() -> int {
    if (train->parsed()) return mtrnn::cmd_train(mtrnn::load_run_config(config));
    if (pretrain->parsed())
      return mtrnn::cmd_pretrain(mtrnn::load_run_config(config));
    if (finetune->parsed())
      return mtrnn::cmd_finetune(mtrnn::load_run_config(config), checkpoint,
                                 task);
    if (trace->parsed()) return mtrnn::cmd_trace(checkpoint, task, text, out);
    return mtrnn::cmd_eval(mtrnn::load_run_config(config), checkpoint, task,
                           split);
  });
}
