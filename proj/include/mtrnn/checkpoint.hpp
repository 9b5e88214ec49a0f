#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mtrnn/common.hpp"
#include "mtrnn/data.hpp"
#include "mtrnn/model.hpp"

namespace mtrnn {

inline constexpr int kCheckpointVersion = 1;

// Flat named-parameter snapshot of a model plus everything needed to rebuild
// it: architecture + dimensions, task specs, the vocabulary word list, and an
// RNG state string.  The text format is line-oriented, `%.17g` throughout, so
// save -> load -> save is byte-identical.
struct Checkpoint {
  int version = kCheckpointVersion;
  ModelConfig model;
  std::vector<TaskSpec> tasks;
  std::vector<std::string> words;  // vocabulary ids 1..N, in order
  long min_freq = 1;
  std::string rng_state;  // Rng::state_string() of the run's seed stream
  std::vector<std::pair<std::string, Matrix>> params;  // parameters() order
};

Checkpoint make_checkpoint(MultiTaskModel& model, const Vocabulary& vocab,
                           const std::string& rng_state);

void save_checkpoint(const Checkpoint& cp, const std::string& path);

// Version mismatch and any structural damage are rejected before a model is
// touched.
Checkpoint load_checkpoint(const std::string& path);

struct RestoredModel {
  MultiTaskModel model;
  Vocabulary vocab;
  std::string rng_state;
};

// Builds a fresh model from the stored config and overwrites every tensor
// with the stored values; bitwise-faithful for all architectures.
RestoredModel restore_model(const Checkpoint& cp);

// Copies stored tensors into an existing model by name, e.g. to seed joint
// training from a language-model run.  The vocabularies must agree word for
// word (embedding rows are vocabulary-indexed); a name that exists on both
// sides with different shapes is an error.  Returns the number of tensors
// copied.
int warm_start(MultiTaskModel& model, const Vocabulary& vocab,
               const Checkpoint& cp);

}  // namespace mtrnn
