#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtrnn/data.hpp"
#include "mtrnn/model.hpp"
#include "mtrnn/train.hpp"

namespace mtrnn {

inline constexpr int kRunConfigVersion = 1;

struct TaskDataConfig {
  std::string name;
  std::string train;  // TSV path, required
  std::string dev;    // optional TSV path
  std::string test;   // optional TSV path
  int classes = 0;    // 0 = infer from the labels
  double lambda = 1.0;
};

// One JSON file drives every command; the schema is documented in the
// README.  Unknown keys anywhere are rejected, so typos cannot silently
// fall back to defaults.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  // Exactly one of `tasks` / `synthetic` is set.
  std::vector<TaskDataConfig> tasks;
  std::optional<SyntheticConfig> synthetic;

  long min_freq = 1;
  double dev_fraction = 0.0;   // carve from train when no dev file is given
  double test_fraction = 0.0;  // likewise for test
  std::uint64_t split_seed = 1;

  std::string embeddings_file;  // optional word2vec-style text file
  int embeddings_dim = 0;       // required iff embeddings_file is set

  std::string warm_start;  // optional checkpoint path
  std::string output_dir = "out";
  bool emit_seconds = false;  // wall-clock in metrics breaks determinism
  int cv_folds = 0;           // > 0: single-task k-fold cross-validation
  double holdout_fraction = 0.1;  // pretraining perplexity split
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Everything cheap to check before data is touched: ranges, exclusive keys,
// dataset files present (reported by their config key), task-name hygiene.
void validate_run_config(const RunConfig& cfg);

// Loaded corpora in task order plus the vocabulary over all of them.
struct LoadedData {
  std::vector<Corpus> corpora;
  std::vector<TaskSpec> specs;
  Vocabulary vocab;
};

LoadedData load_task_data(const RunConfig& cfg);

}  // namespace mtrnn
