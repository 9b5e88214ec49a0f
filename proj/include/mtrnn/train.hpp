#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtrnn/common.hpp"
#include "mtrnn/data.hpp"
#include "mtrnn/model.hpp"
#include "mtrnn/tape.hpp"

namespace mtrnn {

struct TrainConfig {
  double learning_rate = 0.1;
  double l2_weight = 1e-5;
  double adagrad_epsilon = 1e-8;
  int max_epochs = 10;
  int patience = 5;  // epochs without any dev improvement; <= 0 disables
  std::uint64_t seed = 1;
  bool freeze_shared = false;  // fine-tuning only
};

// -log(probabilities[gold]); probabilities must already sum to 1.
Var cross_entropy(Tape& t, Var probabilities, int gold);

double global_cost(const std::vector<double>& losses,
                   const std::vector<double>& lambdas);

// Pure Adagrad: acc += g^2, value -= lr * g / (sqrt(acc) + eps), grad zeroed.
// Any L2 term is added to the gradient by the caller beforehand.
void adagrad_step(Parameter& p, double lr, double eps);

struct EvalResult {
  double loss = 0.0;  // mean cross-entropy, unweighted
  double accuracy = 0.0;
};

EvalResult evaluate_split(MultiTaskModel& model, int task, const Corpus& corpus,
                          const std::vector<int>& indices,
                          const Vocabulary& vocab);

double evaluate(MultiTaskModel& model, int task, const Corpus& corpus,
                const std::vector<int>& indices, const Vocabulary& vocab);

struct Prediction {
  int predicted = 0;
  double probability = 0.0;  // of the predicted class
};

Prediction predict_one(MultiTaskModel& model, int task,
                       const std::vector<int>& ids);

struct ParamSnapshot {
  std::vector<Matrix> values;  // parameters() order
};

ParamSnapshot snapshot_parameters(MultiTaskModel& model);
void restore_parameters(MultiTaskModel& model, const ParamSnapshot& snap);

struct EpochTaskRow {
  int epoch = 0;  // 1-based
  int task = 0;
  std::string split;  // train / dev / test
  double loss = 0.0;
  double accuracy = 0.0;
  long steps = 0;  // cumulative updates for this task
};

struct TrainReport {
  std::vector<EpochTaskRow> rows;
  std::vector<long> update_counts;  // per task
  long total_steps = 0;
  std::vector<double> best_dev_accuracy;  // per task; initial state counts
  std::vector<int> best_epoch;            // 0 = the state before any update
  std::vector<ParamSnapshot> best_params;
  double wall_seconds = 0.0;  // reported on stderr, never in metrics files
};

// The stochastic loop: uniformly sample a task, then one of its training
// examples, take one weighted step.  An epoch is sum(|train_m|) steps.
TrainReport joint_train(MultiTaskModel& model, const std::vector<Corpus>& tasks,
                        const Vocabulary& vocab, const TrainConfig& cfg);

// Continues training one task only; resets Adagrad accumulators first.
// cfg.freeze_shared confines updates to the task's private parameters.
TrainReport fine_tune(MultiTaskModel& model, int task, const Corpus& corpus,
                      const Vocabulary& vocab, const TrainConfig& cfg);

struct LmReport {
  std::vector<double> perplexity;  // [0] = before training, then per epoch
  double wall_seconds = 0.0;
};

// Trains the shared embedding + bidirectional LSTM as a pair of next-token /
// previous-token predictors over the union of the tasks' training splits.
// The temporary output heads are discarded; everything task-private is
// untouched.
LmReport pretrain_lm(MultiTaskModel& model, const std::vector<Corpus>& corpora,
                     const Vocabulary& vocab, const TrainConfig& cfg,
                     double holdout_fraction = 0.1);

}  // namespace mtrnn
