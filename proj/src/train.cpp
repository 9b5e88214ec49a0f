#include "mtrnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "mtrnn/lstm.hpp"

namespace mtrnn {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void validate_common(const TrainConfig& cfg) {
  if (cfg.learning_rate <= 0.0) throw ConfigError("learning rate must be > 0");
  if (cfg.l2_weight < 0.0) throw ConfigError("l2 weight must be >= 0");
  if (cfg.adagrad_epsilon <= 0.0) throw ConfigError("epsilon must be > 0");
  if (cfg.max_epochs < 0) throw ConfigError("max epochs must be >= 0");
}

void validate_labels(const Corpus& c, int class_count) {
  for (const Example& ex : c.examples)
    if (ex.label < 0 || ex.label >= class_count)
      throw LabelError("corpus " + c.name + ": label " +
                       std::to_string(ex.label) + " outside [0, " +
                       std::to_string(class_count) + ")");
}

std::vector<std::vector<int>> encode_all(const Corpus& c,
                                         const Vocabulary& v) {
  std::vector<std::vector<int>> ids;
  ids.reserve(c.examples.size());
  for (const Example& ex : c.examples) ids.push_back(encode(v, ex.tokens));
  return ids;
}

Var example_loss(Tape& t, MultiTaskModel& model, int task,
                 const std::vector<int>& ids, int label, double lambda) {
  Var ce = cross_entropy(t, softmax(t, model.logits(t, task, ids)), label);
  return lambda == 1.0 ? ce : scale(t, ce, lambda);
}

int argmax_lowest(const Matrix& p) {
  int best = 0;
  for (int r = 1; r < p.rows(); ++r)
    if (p(r, 0) > p(best, 0)) best = r;
  return best;
}

EvalResult eval_encoded(MultiTaskModel& model, int task, const Corpus& corpus,
                        const std::vector<std::vector<int>>& ids,
                        const std::vector<int>& indices) {
  if (indices.empty()) throw InputError("cannot evaluate an empty split");
  double loss = 0.0;
  long hit = 0;
  for (int i : indices) {
    const Example& ex = corpus.examples.at(static_cast<std::size_t>(i));
    Tape t;
    const Matrix& p = t.value(
        softmax(t, model.logits(t, task, ids.at(static_cast<std::size_t>(i)))));
    hit += argmax_lowest(p) == ex.label;
    loss -= std::log(p(ex.label, 0));
  }
  double n = static_cast<double>(indices.size());
  return {loss / n, static_cast<double>(hit) / n};
}

// Shared bookkeeping for joint_train and fine_tune: per-task epoch rows,
// the best-dev snapshot (the pre-update state counts as epoch 0), and the
// any-task-improved patience clock.
struct BestTracker {
  explicit BestTracker(int tasks)
      : accuracy(static_cast<std::size_t>(tasks), -1.0),
        epoch(static_cast<std::size_t>(tasks), 0),
        params(static_cast<std::size_t>(tasks)) {}

  std::vector<double> accuracy;
  std::vector<int> epoch;
  std::vector<ParamSnapshot> params;
  int last_improvement = 0;
  bool any_dev = false;

  void offer(MultiTaskModel& model, int task, int at_epoch, double dev_acc) {
    any_dev = true;
    auto m = static_cast<std::size_t>(task);
    if (dev_acc > accuracy[m]) {
      accuracy[m] = dev_acc;
      epoch[m] = at_epoch;
      params[m] = snapshot_parameters(model);
      last_improvement = std::max(last_improvement, at_epoch);
    }
  }

  bool should_stop(int at_epoch, int patience) const {
    return any_dev && patience > 0 && at_epoch - last_improvement >= patience;
  }

  void finish(MultiTaskModel& model, TrainReport& rep) {
    for (std::size_t m = 0; m < params.size(); ++m)
      if (params[m].values.empty()) params[m] = snapshot_parameters(model);
    rep.best_dev_accuracy = std::move(accuracy);
    rep.best_epoch = std::move(epoch);
    rep.best_params = std::move(params);
  }
};

}  // namespace

Var cross_entropy(Tape& t, Var probabilities, int gold) {
  const Matrix& p = t.value(probabilities);
  if (p.cols() != 1)
    throw ContractError("cross_entropy expects a column distribution, got " +
                        shape_str(p));
  if (gold < 0 || gold >= p.rows())
    throw LabelError("gold class " + std::to_string(gold) +
                     " outside [0, " + std::to_string(p.rows()) + ")");
  if (std::abs(p.sum() - 1.0) > 1e-6)
    throw ContractError("cross_entropy input must sum to 1, sums to " +
                        std::to_string(p.sum()));
  return scale(t, log(t, pick(t, probabilities, gold)), -1.0);
}

double global_cost(const std::vector<double>& losses,
                   const std::vector<double>& lambdas) {
  if (losses.size() != lambdas.size())
    throw ContractError("global_cost: " + std::to_string(losses.size()) +
                        " losses vs " + std::to_string(lambdas.size()) +
                        " weights");
  double phi = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) phi += lambdas[i] * losses[i];
  return phi;
}

void adagrad_step(Parameter& p, double lr, double eps) {
  if (!p.grad.allFinite())
    throw NumericError("non-finite gradient in " + p.name);
  p.accumulator.array() += p.grad.array().square();
  p.value.array() -=
      lr * p.grad.array() / (p.accumulator.array().sqrt() + eps);
  p.grad.setZero();
}

EvalResult evaluate_split(MultiTaskModel& model, int task, const Corpus& corpus,
                          const std::vector<int>& indices,
                          const Vocabulary& vocab) {
  return eval_encoded(model, task, corpus, encode_all(corpus, vocab), indices);
}

double evaluate(MultiTaskModel& model, int task, const Corpus& corpus,
                const std::vector<int>& indices, const Vocabulary& vocab) {
  return evaluate_split(model, task, corpus, indices, vocab).accuracy;
}

Prediction predict_one(MultiTaskModel& model, int task,
                       const std::vector<int>& ids) {
  Tape t;
  const Matrix& p = t.value(softmax(t, model.logits(t, task, ids)));
  int cls = argmax_lowest(p);
  return {cls, p(cls, 0)};
}

ParamSnapshot snapshot_parameters(MultiTaskModel& model) {
  ParamSnapshot snap;
  for (Parameter* p : model.parameters()) snap.values.push_back(p->value);
  return snap;
}

void restore_parameters(MultiTaskModel& model, const ParamSnapshot& snap) {
  auto params = model.parameters();
  if (params.size() != snap.values.size())
    throw ContractError("snapshot holds " +
                        std::to_string(snap.values.size()) +
                        " tensors, model has " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.rows() != snap.values[i].rows() ||
        params[i]->value.cols() != snap.values[i].cols())
      throw ContractError("snapshot shape mismatch at " + params[i]->name);
    params[i]->value = snap.values[i];
  }
}

TrainReport joint_train(MultiTaskModel& model, const std::vector<Corpus>& tasks,
                        const Vocabulary& vocab, const TrainConfig& cfg) {
  validate_common(cfg);
  int M = model.task_count();
  if (static_cast<int>(tasks.size()) != M)
    throw ConfigError("model expects " + std::to_string(M) +
                      " tasks, got " + std::to_string(tasks.size()));
  long epoch_steps = 0;
  for (int m = 0; m < M; ++m) {
    const Corpus& c = tasks[static_cast<std::size_t>(m)];
    if (c.train.empty())
      throw ConfigError("task " + c.name + " has no training examples");
    validate_labels(c, model.task_specs()[static_cast<std::size_t>(m)].class_count);
    epoch_steps += static_cast<long>(c.train.size());
  }
  std::vector<std::vector<std::vector<int>>> ids;
  ids.reserve(static_cast<std::size_t>(M));
  for (const Corpus& c : tasks) ids.push_back(encode_all(c, vocab));

  auto t0 = Clock::now();
  TrainReport rep;
  rep.update_counts.assign(static_cast<std::size_t>(M), 0);
  BestTracker best(M);
  for (int m = 0; m < M; ++m)
    if (!tasks[static_cast<std::size_t>(m)].dev.empty())
      best.offer(model, m, 0,
                 eval_encoded(model, m, tasks[static_cast<std::size_t>(m)],
                              ids[static_cast<std::size_t>(m)],
                              tasks[static_cast<std::size_t>(m)].dev)
                     .accuracy);

  Rng rng(cfg.seed);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (long s = 0; s < epoch_steps; ++s) {
      int m = rng.uniform_int(M);
      const Corpus& c = tasks[static_cast<std::size_t>(m)];
      int j = c.train[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(c.train.size())))];
      Tape t;
      Var loss = example_loss(
          t, model, m, ids[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)],
          c.examples[static_cast<std::size_t>(j)].label,
          model.task_specs()[static_cast<std::size_t>(m)].lambda);
      t.backward(loss);
      for (Parameter* p : t.touched()) {
        if (cfg.l2_weight > 0.0) p->grad += cfg.l2_weight * p->value;
        adagrad_step(*p, cfg.learning_rate, cfg.adagrad_epsilon);
      }
      ++rep.update_counts[static_cast<std::size_t>(m)];
      ++rep.total_steps;
    }
    for (int m = 0; m < M; ++m) {
      const Corpus& c = tasks[static_cast<std::size_t>(m)];
      const auto& enc = ids[static_cast<std::size_t>(m)];
      long steps = rep.update_counts[static_cast<std::size_t>(m)];
      EvalResult tr = eval_encoded(model, m, c, enc, c.train);
      rep.rows.push_back({epoch, m, "train", tr.loss, tr.accuracy, steps});
      if (!c.dev.empty()) {
        EvalResult dv = eval_encoded(model, m, c, enc, c.dev);
        rep.rows.push_back({epoch, m, "dev", dv.loss, dv.accuracy, steps});
        best.offer(model, m, epoch, dv.accuracy);
      }
      if (!c.test.empty()) {
        EvalResult te = eval_encoded(model, m, c, enc, c.test);
        rep.rows.push_back({epoch, m, "test", te.loss, te.accuracy, steps});
      }
    }
    if (best.should_stop(epoch, cfg.patience)) break;
  }
  best.finish(model, rep);
  rep.wall_seconds = seconds_since(t0);
  return rep;
}

TrainReport fine_tune(MultiTaskModel& model, int task, const Corpus& corpus,
                      const Vocabulary& vocab, const TrainConfig& cfg) {
  validate_common(cfg);
  Architecture arch = model.config().architecture;
  if (arch != Architecture::UniformLayer && arch != Architecture::SharedLayer)
    throw UnsupportedError("fine-tuning requires a shared layer (" +
                           to_string(arch) + " has none to keep or freeze)");
  int M = model.task_count();
  if (task < 0 || task >= M)
    throw TaskError("task " + std::to_string(task) + " outside [0, " +
                    std::to_string(M) + ")");
  if (corpus.train.empty())
    throw ConfigError("task " + corpus.name + " has no training examples");
  validate_labels(corpus,
                  model.task_specs()[static_cast<std::size_t>(task)].class_count);
  auto ids = encode_all(corpus, vocab);

  std::set<Parameter*> allowed;
  for (Parameter* p : model.private_parameters(task)) allowed.insert(p);
  if (!cfg.freeze_shared)
    for (Parameter* p : model.shared_parameters()) allowed.insert(p);
  for (Parameter* p : model.parameters()) p->accumulator.setZero();

  auto t0 = Clock::now();
  TrainReport rep;
  rep.update_counts.assign(static_cast<std::size_t>(M), 0);
  BestTracker best(M);
  if (!corpus.dev.empty())
    best.offer(model, task, 0,
               eval_encoded(model, task, corpus, ids, corpus.dev).accuracy);

  Rng rng(cfg.seed);
  long n = static_cast<long>(corpus.train.size());
  double lambda = model.task_specs()[static_cast<std::size_t>(task)].lambda;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (long s = 0; s < n; ++s) {
      int j = corpus.train[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(n)))];
      Tape t;
      Var loss = example_loss(t, model, task,
                              ids[static_cast<std::size_t>(j)],
                              corpus.examples[static_cast<std::size_t>(j)].label,
                              lambda);
      t.backward(loss);
      for (Parameter* p : t.touched()) {
        if (!allowed.count(p)) {
          p->grad.setZero();
          continue;
        }
        if (cfg.l2_weight > 0.0) p->grad += cfg.l2_weight * p->value;
        adagrad_step(*p, cfg.learning_rate, cfg.adagrad_epsilon);
      }
      ++rep.update_counts[static_cast<std::size_t>(task)];
      ++rep.total_steps;
    }
    long steps = rep.update_counts[static_cast<std::size_t>(task)];
    EvalResult tr = eval_encoded(model, task, corpus, ids, corpus.train);
    rep.rows.push_back({epoch, task, "train", tr.loss, tr.accuracy, steps});
    if (!corpus.dev.empty()) {
      EvalResult dv = eval_encoded(model, task, corpus, ids, corpus.dev);
      rep.rows.push_back({epoch, task, "dev", dv.loss, dv.accuracy, steps});
      best.offer(model, task, epoch, dv.accuracy);
    }
    if (!corpus.test.empty()) {
      EvalResult te = eval_encoded(model, task, corpus, ids, corpus.test);
      rep.rows.push_back({epoch, task, "test", te.loss, te.accuracy, steps});
    }
    if (best.should_stop(epoch, cfg.patience)) break;
  }
  best.finish(model, rep);
  rep.wall_seconds = seconds_since(t0);
  return rep;
}

LmReport pretrain_lm(MultiTaskModel& model, const std::vector<Corpus>& corpora,
                     const Vocabulary& vocab, const TrainConfig& cfg,
                     double holdout_fraction) {
  validate_common(cfg);
  if (model.config().architecture != Architecture::SharedLayer)
    throw UnsupportedError(
        "language-model pretraining targets the shared bidirectional "
        "encoder; architecture is " + to_string(model.config().architecture));
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
    throw ConfigError("holdout fraction must lie in [0, 1)");

  std::vector<std::vector<int>> pool;
  for (const Corpus& c : corpora)
    for (int i : c.train) {
      auto ids = encode(vocab, c.examples.at(static_cast<std::size_t>(i)).tokens);
      if (ids.size() >= 2) pool.push_back(std::move(ids));
    }
  if (pool.empty())
    throw ConfigError("no sequences of length >= 2 to pretrain on");

  Rng rng(cfg.seed);
  rng.shuffle(pool);
  long n_hold = std::lround(static_cast<double>(pool.size()) * holdout_fraction);
  if (n_hold >= static_cast<long>(pool.size()))
    n_hold = static_cast<long>(pool.size()) - 1;
  std::vector<std::vector<int>> holdout(
      pool.begin(), pool.begin() + n_hold);
  pool.erase(pool.begin(), pool.begin() + n_hold);
  const auto& eval_set = holdout.empty() ? pool : holdout;

  int d = model.config().hidden_size;
  int V = vocab.size();
  Parameter head_fwd_W = Parameter::uniform("lm.fwd.W", V, d, rng);
  Parameter head_fwd_b = Parameter::zeros("lm.fwd.b", V, 1, 1);
  Parameter head_bwd_W = Parameter::uniform("lm.bwd.W", V, d, rng);
  Parameter head_bwd_b = Parameter::zeros("lm.bwd.b", V, 1, 1);

  // Next-token terms of one direction: state after x_1..x_k predicts x_{k+1}.
  // The previous-token direction is the same program on the reversed ids.
  auto direction_terms = [&](Tape& t, LstmParams& cell, Parameter& W,
                             Parameter& b, const std::vector<int>& ids,
                             std::vector<Var>& terms) {
    std::vector<Var> xs = embed(t, model.shared_embedding(), ids);
    Encoding enc = encode_sequence(t, cell, xs);
    for (std::size_t k = 0; k + 1 < ids.size(); ++k) {
      Var logits = add(t, matmul(t, t.use(W), enc.hidden[k]), t.use(b));
      terms.push_back(cross_entropy(t, softmax(t, logits),
                                    ids[k + 1]));
    }
  };
  auto sequence_terms = [&](Tape& t, const std::vector<int>& ids,
                            std::vector<Var>& terms) {
    direction_terms(t, model.shared_forward(), head_fwd_W, head_fwd_b, ids,
                    terms);
    std::vector<int> rev(ids.rbegin(), ids.rend());
    direction_terms(t, model.shared_backward(), head_bwd_W, head_bwd_b, rev,
                    terms);
  };
  auto perplexity = [&]() {
    double nll = 0.0;
    long count = 0;
    for (const auto& ids : eval_set) {
      Tape t;
      std::vector<Var> terms;
      sequence_terms(t, ids, terms);
      for (Var v : terms) nll += t.value(v)(0, 0);
      count += static_cast<long>(terms.size());
    }
    return std::exp(nll / static_cast<double>(count));
  };

  auto t0 = Clock::now();
  LmReport rep;
  rep.perplexity.push_back(perplexity());
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t s = 0; s < pool.size(); ++s) {
      const auto& ids = pool[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(pool.size())))];
      Tape t;
      std::vector<Var> terms;
      sequence_terms(t, ids, terms);
      Var total = terms[0];
      for (std::size_t k = 1; k < terms.size(); ++k)
        total = add(t, total, terms[k]);
      t.backward(scale(t, total, 1.0 / static_cast<double>(terms.size())));
      for (Parameter* p : t.touched()) {
        if (cfg.l2_weight > 0.0) p->grad += cfg.l2_weight * p->value;
        adagrad_step(*p, cfg.learning_rate, cfg.adagrad_epsilon);
      }
    }
    rep.perplexity.push_back(perplexity());
  }
  rep.wall_seconds = seconds_since(t0);
  return rep;
}

}  // namespace mtrnn
