#pragma once

#include <functional>
#include <string>

#include "mtrnn/checkpoint.hpp"
#include "mtrnn/runconfig.hpp"

namespace mtrnn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Maps thrown errors to the exit-code contract (configuration and input
// problems -> 2, runtime/numeric failures -> 1) and prints the diagnostic
// on stderr.  The cmd_* functions below throw; they return kExitOk.
int run_guarded(const std::function<int()>& body);

// Joint (or single-task) training: metrics CSV + JSON-lines, a final
// checkpoint, and one best-dev checkpoint per task in the output directory.
// cv_folds > 0 switches to single-task cross-validation.
int cmd_train(const RunConfig& cfg);

// Language-model pretraining of the shared layer; writes the per-epoch
// perplexity table and a checkpoint consumable through the config's
// warm_start key.
int cmd_pretrain(const RunConfig& cfg);

// Continues training one task from a checkpoint; the emitted checkpoint
// holds the task's best-dev state (for max_epochs == 0 it is byte-identical
// to the input).
int cmd_finetune(const RunConfig& cfg, const std::string& checkpoint_path,
                 int task);

// Per input line: tokens, the per-timestep class-distribution trajectory,
// and for shared-architecture checkpoints the gate-activation matrix with
// neuron ordering, as JSON-lines (out_path empty -> stdout).
int cmd_trace(const std::string& checkpoint_path, int task,
              const std::string& text_file, const std::string& out_path);

// Prints the split accuracy and writes a per-example predictions CSV.
int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             int task, const std::string& split);

}  // namespace mtrnn
