// Acceptance gate: one binary, one pass/fail line per criterion, exit code
// equal to the number of failures.  Every threshold and seed is frozen here;
// the runs are deterministic on a given toolchain.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mtrnn/checkpoint.hpp"
#include "mtrnn/commands.hpp"
#include "mtrnn/data.hpp"
#include "mtrnn/model.hpp"
#include "mtrnn/runconfig.hpp"
#include "mtrnn/tape.hpp"
#include "mtrnn/train.hpp"
#include "testutil.hpp"

using namespace mtrnn;
using testutil::TempDir;

namespace {

int failures = 0;

void verdict(int n, bool ok, const std::string& what,
             const std::string& detail) {
  std::printf("criterion %d: %s — %s%s%s%s\n", n, ok ? "PASS" : "FAIL",
              what.c_str(), detail.empty() ? "" : " (", detail.c_str(),
              detail.empty() ? "" : ")");
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

/// Silences a cmd_* call; the acceptance log stays one line per criterion.
struct Quiet {
  std::streambuf *out, *err;
  std::ostringstream sink;
  Quiet() : out(std::cout.rdbuf(sink.rdbuf())), err(std::cerr.rdbuf(sink.rdbuf())) {}
  ~Quiet() {
    std::cout.rdbuf(out);
    std::cerr.rdbuf(err);
  }
};

ModelConfig model_cfg(Architecture a, int d, int emb, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.architecture = a;
  cfg.hidden_size = d;
  cfg.task_embedding_size = emb;
  cfg.shared_embedding_size = emb;
  cfg.seed = seed;
  return cfg;
}

std::vector<TaskSpec> specs_for(const std::vector<Corpus>& fam) {
  std::vector<TaskSpec> out;
  for (const Corpus& c : fam) out.push_back(TaskSpec{c.name, c.class_count, 1.0});
  return out;
}

double test_acc_at_best(MultiTaskModel& model, const TrainReport& rep, int task,
                        const Corpus& corpus, const Vocabulary& vocab) {
  ParamSnapshot now = snapshot_parameters(model);
  restore_parameters(model, rep.best_params[static_cast<std::size_t>(task)]);
  double acc = evaluate(model, task, corpus, corpus.test, vocab);
  restore_parameters(model, now);
  return acc;
}

const std::vector<Architecture> kAll{
    Architecture::SingleTask, Architecture::UniformLayer,
    Architecture::CoupledLayer, Architecture::SharedLayer};
const std::vector<Architecture> kJoint{Architecture::UniformLayer,
                                       Architecture::CoupledLayer,
                                       Architecture::SharedLayer};

// --------------------------------------------------------------------------

void criterion_1() {
  namespace fs = std::filesystem;
  const std::string root = MTRNN_SOURCE_DIR;
  std::string detail;
  bool ok = true;

  std::string readme = testutil::read_file(root + "/README.md");
  if (readme.empty()) {
    ok = false;
    detail = "README.md missing";
  } else if (readme.find("Running on real datasets") == std::string::npos) {
    ok = false;
    detail = "README.md lacks the real-dataset walkthrough";
  }
  if (ok && !fs::exists(root + "/scripts/train_real.sh")) {
    ok = false;
    detail = "scripts/train_real.sh missing";
  }
  int parsed = 0;
  if (ok) {
    for (const auto& entry : fs::directory_iterator(root + "/configs")) {
      if (entry.path().extension() != ".json") continue;
      try {
        parse_run_config(testutil::read_file(entry.path().string()));
        ++parsed;
      } catch (const std::exception& e) {
        ok = false;
        detail = entry.path().filename().string() + ": " + e.what();
        break;
      }
    }
    if (ok && parsed == 0) {
      ok = false;
      detail = "no example configs";
    }
  }
  if (ok) detail = std::to_string(parsed) + " example configs parse";
  verdict(1, ok,
          "full-scale results substituted by property suites plus a "
          "documented real-dataset path",
          detail);
}

void criterion_2() {
  auto t0 = std::chrono::steady_clock::now();
  const std::vector<int> seq0{1, 3, 2, 5, 4};
  const std::vector<int> seq1{2, 4, 1, 3, 5};
  double worst = 0.0;
  std::string worst_at;
  int checked = 0;
  for (Architecture a : kAll) {
    const bool multi = a != Architecture::SingleTask;
    std::vector<TaskSpec> tasks{TaskSpec{"t0", 2, 1.0}};
    if (multi) tasks.push_back(TaskSpec{"t1", 3, 1.0});
    MultiTaskModel model(model_cfg(a, 8, 6, 3), tasks, 10);

    auto build = [&](Tape& t) {
      Var loss = cross_entropy(t, softmax(t, model.logits(t, 0, seq0)), 1);
      if (multi)
        loss = add(t, loss,
                   cross_entropy(t, softmax(t, model.logits(t, 1, seq1)), 2));
      return loss;
    };
    auto loss_value = [&] {
      Tape t;
      return t.value(build(t))(0, 0);
    };
    auto loss_backward = [&] {
      Tape t;
      t.backward(build(t));
    };
    testutil::FdReport rep =
        testutil::check_gradients(model.parameters(), loss_value, loss_backward);
    checked += rep.checked;
    if (rep.max_rel_err > worst) {
      worst = rep.max_rel_err;
      worst_at = to_string(a) + " " + rep.worst;
    }
  }
  double dt = seconds_since(t0);
  bool ok = worst < 1e-5 && dt < 60.0;
  verdict(2, ok,
          "analytic gradients match central differences in every architecture",
          std::to_string(checked) + " entries, max rel err " +
              fmt("%.2e", worst) + " at " + worst_at + ", " +
              fmt("%.1f", dt) + "s");
}

void criterion_3() {
  bool ok = true;
  std::string detail;
  double slowest = 0.0;
  for (Architecture a : kAll) {
    auto t0 = std::chrono::steady_clock::now();
    SyntheticConfig syn;
    syn.seed = 9;
    syn.task_count = a == Architecture::SingleTask ? 1 : 2;
    syn.train_size = 100;
    syn.dev_size = 0;
    syn.test_size = 0;
    syn.vocab_size = 12;
    syn.min_length = 3;
    syn.max_length = 6;
    syn.signal_strength = 1.0;  // labels are a function of the tokens
    auto fam = make_synthetic_family(syn);
    Vocabulary vocab = build_vocab(fam);
    MultiTaskModel model(model_cfg(a, 16, 8, 13), specs_for(fam), vocab.size());
    TrainConfig tc;
    tc.max_epochs = 50;
    tc.patience = 0;  // no dev split, no early stop
    tc.seed = 17;
    TrainReport rep = joint_train(model, fam, vocab, tc);

    std::vector<double> best(fam.size(), 0.0);
    for (const EpochTaskRow& r : rep.rows)
      if (r.split == "train")
        best[static_cast<std::size_t>(r.task)] =
            std::max(best[static_cast<std::size_t>(r.task)], r.accuracy);
    double lo = 1.0;
    for (double b : best) lo = std::min(lo, b);
    double dt = seconds_since(t0);
    slowest = std::max(slowest, dt);
    if (lo < 1.0 || dt >= 120.0) {
      ok = false;
      detail = to_string(a) + " peaked at " + fmt("%.3f", lo) + " in " +
               fmt("%.0f", dt) + "s";
      break;
    }
  }
  if (ok) detail = "all reach 1.0, slowest arch " + fmt("%.1f", slowest) + "s";
  verdict(3, ok, "every architecture memorizes a 100-example corpus", detail);
}

void criterion_4() {
  auto t0 = std::chrono::steady_clock::now();
  // Regime: estimating per-word polarity is the bottleneck (vocab large
  // relative to the training tokens), so pooling the tasks' data through the
  // shared parts genuinely helps.  All accuracies are test-set at the
  // best-dev snapshot.
  const int kSeedBase = 500;
  std::vector<std::vector<double>> imp(kJoint.size());
  double single_sum = 0.0, shared_sum = 0.0;

  for (int s = 1; s <= 5; ++s) {
    SyntheticConfig syn;
    syn.seed = static_cast<std::uint64_t>(kSeedBase + s);
    syn.task_count = 2;
    syn.train_size = 200;
    syn.dev_size = 300;
    syn.test_size = 1000;
    syn.vocab_size = 120;
    syn.signal_strength = 0.5;
    syn.polar_density = 0.5;
    auto fam = make_synthetic_family(syn);
    Vocabulary vocab = build_vocab(fam);

    TrainConfig tc;
    tc.learning_rate = 0.1;
    tc.max_epochs = 25;
    tc.patience = 8;
    tc.seed = static_cast<std::uint64_t>(kSeedBase + 200 + s);

    const std::uint64_t model_seed = static_cast<std::uint64_t>(kSeedBase + 100 + s);
    std::vector<double> single_acc(2);
    for (int m = 0; m < 2; ++m) {
      std::vector<TaskSpec> one{TaskSpec{fam[m].name, 2, 1.0}};
      MultiTaskModel model(model_cfg(Architecture::SingleTask, 16, 8, model_seed),
                           one, vocab.size());
      std::vector<Corpus> data{fam[static_cast<std::size_t>(m)]};
      TrainReport rep = joint_train(model, data, vocab, tc);
      single_acc[static_cast<std::size_t>(m)] =
          test_acc_at_best(model, rep, 0, fam[static_cast<std::size_t>(m)], vocab);
    }
    double single_mean = (single_acc[0] + single_acc[1]) / 2;
    single_sum += single_mean;
    std::printf("  seed %d: single %.3f/%.3f", s, single_acc[0], single_acc[1]);

    for (std::size_t a = 0; a < kJoint.size(); ++a) {
      MultiTaskModel model(model_cfg(kJoint[a], 16, 8, model_seed),
                           specs_for(fam), vocab.size());
      TrainReport rep = joint_train(model, fam, vocab, tc);
      double a0 = test_acc_at_best(model, rep, 0, fam[0], vocab);
      double a1 = test_acc_at_best(model, rep, 1, fam[1], vocab);
      double mean = (a0 + a1) / 2;
      imp[a].push_back(mean - single_mean);
      if (kJoint[a] == Architecture::SharedLayer) shared_sum += mean;
      std::printf(" %s %.3f/%.3f", to_string(kJoint[a]).c_str(), a0, a1);
    }
    std::printf("\n");
  }

  std::vector<double> mean_imp(kJoint.size(), 0.0);
  for (std::size_t a = 0; a < kJoint.size(); ++a) {
    for (double x : imp[a]) mean_imp[a] += x;
    mean_imp[a] /= 5.0;
  }
  double dt = seconds_since(t0);
  bool ok = shared_sum / 5 >= single_sum / 5 && dt < 600.0;
  for (double m : mean_imp) ok = ok && m >= 0.0;
  verdict(4, ok, "joint training transfers across the task family",
          "mean improvement uniform " + fmt("%+.4f", mean_imp[0]) +
              ", coupled " + fmt("%+.4f", mean_imp[1]) + ", shared " +
              fmt("%+.4f", mean_imp[2]) + "; single " +
              fmt("%.4f", single_sum / 5) + " vs shared " +
              fmt("%.4f", shared_sum / 5) + "; " + fmt("%.0f", dt) + "s");
}

void criterion_5() {
  bool ok = true;
  double worst_delta = 1.0;
  std::string where;
  for (Architecture a : {Architecture::UniformLayer, Architecture::SharedLayer}) {
    for (int s = 1; s <= 5 && ok; ++s) {
      SyntheticConfig syn;
      syn.seed = static_cast<std::uint64_t>(40 + s);
      syn.task_count = 2;
      syn.train_size = 100;
      syn.dev_size = 100;
      syn.test_size = 0;
      auto fam = make_synthetic_family(syn);
      Vocabulary vocab = build_vocab(fam);
      MultiTaskModel model(model_cfg(a, 16, 8, static_cast<std::uint64_t>(50 + s)),
                           specs_for(fam), vocab.size());
      TrainConfig tc;
      tc.max_epochs = 8;
      tc.patience = 3;
      tc.seed = static_cast<std::uint64_t>(60 + s);
      joint_train(model, fam, vocab, tc);
      ParamSnapshot post = snapshot_parameters(model);

      for (int m = 0; m < 2; ++m) {
        restore_parameters(model, post);
        const Corpus& c = fam[static_cast<std::size_t>(m)];
        double before = evaluate(model, m, c, c.dev, vocab);
        TrainConfig ft;
        ft.max_epochs = 5;
        ft.patience = 2;
        ft.seed = static_cast<std::uint64_t>(70 + s);
        TrainReport rep = fine_tune(model, m, c, vocab, ft);
        restore_parameters(model, rep.best_params[static_cast<std::size_t>(m)]);
        double after = evaluate(model, m, c, c.dev, vocab);
        double delta = after - before;
        if (delta < worst_delta) {
          worst_delta = delta;
          where = to_string(a) + " seed " + std::to_string(s) + " task " +
                  std::to_string(m);
        }
        if (delta < -0.005) ok = false;
      }
    }
  }
  verdict(5, ok, "per-task fine-tuning never costs more than half a point of dev accuracy",
          "worst dev delta " + fmt("%+.4f", worst_delta) + " at " + where);
}

void criterion_6() {
  SyntheticConfig syn;
  syn.seed = 41;
  syn.task_count = 2;
  syn.train_size = 40;
  syn.dev_size = 0;
  syn.test_size = 0;
  syn.vocab_size = 10;
  syn.min_length = 3;
  syn.max_length = 7;
  syn.signal_strength = 1.0;
  auto fam = make_synthetic_family(syn);
  Vocabulary vocab = build_vocab(fam);
  MultiTaskModel model(model_cfg(Architecture::SharedLayer, 6, 4, 41),
                       specs_for(fam), vocab.size());
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.seed = 41;
  LmReport lm = pretrain_lm(model, fam, vocab, tc);

  bool ok = lm.perplexity.size() == 4;
  for (std::size_t i = 1; ok && i < lm.perplexity.size(); ++i)
    ok = std::isfinite(lm.perplexity[i]) && lm.perplexity[i] < lm.perplexity[i - 1];
  std::string detail = "perplexity";
  for (double p : lm.perplexity) detail += " " + fmt("%.3f", p);

  if (ok) {  // pretrained-then-joint completes and its checkpoint round-trips
    TrainConfig jc;
    jc.max_epochs = 2;
    jc.seed = 43;
    joint_train(model, fam, vocab, jc);
    TempDir dir("accept-lm");
    Checkpoint cp = make_checkpoint(model, vocab, Rng(jc.seed).state_string());
    save_checkpoint(cp, dir.file("a.ckpt"));
    RestoredModel back = restore_model(load_checkpoint(dir.file("a.ckpt")));
    save_checkpoint(
        make_checkpoint(back.model, back.vocab, back.rng_state),
        dir.file("b.ckpt"));
    ok = testutil::read_file(dir.file("a.ckpt")) ==
         testutil::read_file(dir.file("b.ckpt"));
    if (!ok)
      detail += "; round-trip not byte-identical";
    auto orig = model.parameters();
    auto rest = back.model.parameters();
    for (std::size_t i = 0; ok && i < orig.size(); ++i)
      ok = (orig[i]->value.array() == rest[i]->value.array()).all();
    if (ok) detail += "; pretrained-then-joint checkpoint round-trips";
  }
  verdict(6, ok, "language-model pre-training lowers held-out perplexity each epoch", detail);
}

void criterion_7() {
  MultiTaskModel model(model_cfg(Architecture::SharedLayer, 12, 8, 31),
                       {TaskSpec{"t0", 2, 1.0}, TaskSpec{"t1", 2, 1.0}}, 15);
  bool ok = true;
  std::string detail;

  Rng rng(33);
  for (int rep = 0; rep < 6 && ok; ++rep) {
    int task = rep % 2;
    std::vector<int> ids;
    std::vector<std::string> words;
    int len = 5 + rng.uniform_int(5);
    for (int i = 0; i < len; ++i) {
      ids.push_back(1 + rng.uniform_int(14));
      words.push_back("w" + std::to_string(ids.back()));
    }
    GateTrace g = model.trace(task, ids, words);
    ok = g.activations.rows() == len && g.activations.cols() == 12 &&
         g.activations.minCoeff() > 0.0 && g.activations.maxCoeff() < 1.0;
    if (!ok) detail = "gate activations leave (0,1)";
    std::vector<int> order = g.neuron_order;
    std::sort(order.begin(), order.end());
    for (int i = 0; ok && i < 12; ++i) ok = order[static_cast<std::size_t>(i)] == i;
    if (!ok && detail.empty()) detail = "neuron_order is not a permutation";
  }

  if (ok) {
    // Sever the shared-to-task connections, then the task losses must not
    // reach the shared layer at all.
    for (Parameter* p : model.parameters())
      if (p->name == "shared.Uc_s" || p->name.rfind("gate.cross.W.", 0) == 0 ||
          p->name.rfind("gate.cross.U.", 0) == 0)
        p->value.setZero();
    for (Parameter* p : model.parameters()) p->grad.setZero();
    Tape t;
    Var loss =
        add(t, cross_entropy(t, softmax(t, model.logits(t, 0, {1, 4, 2, 7})), 1),
            cross_entropy(t, softmax(t, model.logits(t, 1, {3, 5, 9})), 0));
    t.backward(loss);
    double shared_grad = 0.0;
    for (Parameter* p : model.shared_layer_parameters())
      shared_grad = std::max(shared_grad, p->grad.cwiseAbs().maxCoeff());
    double private_grad = 0.0;
    for (Parameter* p : model.private_parameters(0))
      private_grad = std::max(private_grad, p->grad.cwiseAbs().maxCoeff());
    ok = shared_grad <= 1e-15 && private_grad > 0.0;
    detail = "severed shared-layer gradient " + fmt("%.1e", shared_grad);
  }
  verdict(7, ok, "gates stay in (0,1) and severing the cross connections isolates the shared layer", detail);
}

void criterion_8() {
  TempDir dir("accept-det");
  RunConfig rc;
  rc.model = model_cfg(Architecture::SharedLayer, 10, 6, 11);
  rc.train.max_epochs = 3;
  rc.train.patience = 2;
  rc.train.seed = 7;
  SyntheticConfig syn;
  syn.seed = 5;
  syn.task_count = 2;
  syn.train_size = 40;
  syn.dev_size = 20;
  syn.test_size = 20;
  syn.vocab_size = 12;
  syn.min_length = 3;
  syn.max_length = 6;
  syn.signal_strength = 1.0;
  rc.synthetic = syn;

  bool ok = true;
  std::string detail;
  const std::vector<std::string> names{"metrics.csv", "metrics.jsonl",
                                       "final.ckpt", "best.task0.ckpt",
                                       "best.task1.ckpt"};
  try {
    for (const char* run : {"a", "b"}) {
      rc.output_dir = dir.file(run);
      Quiet q;
      cmd_train(rc);
    }
    for (const std::string& n : names) {
      std::string a = testutil::read_file(dir.file("a") + "/" + n);
      std::string b = testutil::read_file(dir.file("b") + "/" + n);
      if (a.empty() || a != b) {
        ok = false;
        detail = n + (a.empty() ? " missing" : " differs");
        break;
      }
    }
  } catch (const std::exception& e) {
    ok = false;
    detail = e.what();
  }
  if (ok)
    detail = std::to_string(names.size()) + " files byte-identical across runs";
  verdict(8, ok, "repeated training runs are bitwise deterministic", detail);
}

void criterion_9() {
  bool ok = true;
  std::string detail;
  int tensors = 0;
  for (Architecture a : kJoint) {
    for (int s = 1; s <= 20 && ok; ++s) {
      MultiTaskModel model(
          model_cfg(a, 8, 6, static_cast<std::uint64_t>(100 + s)),
          {TaskSpec{"t0", 2, 1.0}, TaskSpec{"t1", 2, 1.0}}, 12);
      Rng rng(static_cast<std::uint64_t>(200 + s));
      std::vector<int> ids;
      int len = 4 + rng.uniform_int(5);
      for (int i = 0; i < len; ++i) ids.push_back(1 + rng.uniform_int(11));
      int m = s % 2;
      int gold = rng.uniform_int(2);
      for (Parameter* p : model.parameters()) p->grad.setZero();
      Tape t;
      t.backward(cross_entropy(t, softmax(t, model.logits(t, m, ids)), gold));
      for (Parameter* p : model.private_parameters(1 - m)) {
        ++tensors;
        if (!(p->grad.array() == 0.0).all()) {
          ok = false;
          detail = to_string(a) + " seed " + std::to_string(s) + ": " +
                   p->name + " received gradient";
          break;
        }
      }
    }
  }
  if (ok)
    detail = std::to_string(tensors) + " private tensors stayed at exactly zero";
  verdict(9, ok, "one task's loss never touches another task's private parameters", detail);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  return failures;
}
