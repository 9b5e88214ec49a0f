#include "mtrnn/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "mtrnn/train.hpp"

namespace mtrnn {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Empty stays the working directory; everything else is created up front so
// a bad path fails before any training time is spent.
std::string ensure_dir(const std::string& dir) {
  if (dir.empty()) return ".";
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw ConfigError("cannot create output directory '" + dir +
                      "': " + ec.message());
  return dir;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write output file '" + path + "'");
  return out;
}

// CSV and JSON-lines carry the same values; the seconds column is 0 unless
// the config opts in, keeping default metrics bitwise reproducible.
void write_metrics(const std::string& stem,
                   const std::vector<EpochTaskRow>& rows, double seconds) {
  std::ofstream csv = open_out(stem + ".csv");
  csv << "# mtrnn-metrics 1\n";
  csv << "epoch,task,split,loss,accuracy,steps,seconds\n";
  for (const EpochTaskRow& r : rows)
    csv << r.epoch << ',' << r.task << ',' << r.split << ',' << g17(r.loss)
        << ',' << g17(r.accuracy) << ',' << r.steps << ',' << g17(seconds)
        << "\n";

  std::ofstream jl = open_out(stem + ".jsonl");
  jl << R"({"format":"mtrnn-metrics","version":1})" << "\n";
  for (const EpochTaskRow& r : rows) {
    ordered_json d{{"epoch", r.epoch},       {"task", r.task},
                   {"split", r.split},       {"loss", r.loss},
                   {"accuracy", r.accuracy}, {"steps", r.steps},
                   {"seconds", seconds}};
    jl << d.dump() << "\n";
  }
}

void apply_embeddings(const RunConfig& cfg, const Vocabulary& vocab,
                      MultiTaskModel& model) {
  if (cfg.embeddings_file.empty()) return;
  Rng rng(cfg.model.seed);
  PretrainedEmbeddings pe =
      load_embeddings(cfg.embeddings_file, vocab, cfg.embeddings_dim, rng);
  int applied = 0;
  for (Parameter* p : model.parameters())
    if (p->name.rfind("emb.", 0) == 0 && p->value.rows() == pe.table.rows() &&
        p->value.cols() == pe.table.cols()) {
      p->value = pe.table;
      ++applied;
    }
  std::cerr << "embeddings: coverage " << g17(pe.coverage) << ", applied to "
            << applied << " tables\n";
}

std::string run_rng_state(const RunConfig& cfg) {
  return Rng(cfg.train.seed).state_string();
}

double split_accuracy(MultiTaskModel& model, int task, const Corpus& corpus,
                      const std::vector<int>& idx, const Vocabulary& vocab) {
  return evaluate_split(model, task, corpus, idx, vocab).accuracy;
}

int train_cv(const RunConfig& cfg, const LoadedData& data,
             const std::string& dir) {
  const Corpus& base = data.corpora[0];
  auto folds = kfold_splits(base, cfg.cv_folds, cfg.split_seed);
  std::vector<double> accs;
  double wall = 0.0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    Corpus fold = base;
    fold.train = folds[f].first;
    fold.dev.clear();
    fold.test = folds[f].second;
    ModelConfig mc = cfg.model;
    mc.seed = cfg.model.seed + f;
    TrainConfig tc = cfg.train;
    tc.seed = cfg.train.seed + f;
    MultiTaskModel model(mc, data.specs, data.vocab.size());
    apply_embeddings(cfg, data.vocab, model);
    std::vector<Corpus> one{fold};
    TrainReport rep = joint_train(model, one, data.vocab, tc);
    wall += rep.wall_seconds;
    write_metrics(dir + "/metrics.fold" + std::to_string(f), rep.rows,
                  cfg.emit_seconds ? rep.wall_seconds : 0.0);
    accs.push_back(split_accuracy(model, 0, fold, fold.test, data.vocab));
  }
  std::ofstream sum = open_out(dir + "/cv_summary.csv");
  sum << "# mtrnn-cv 1\n" << "fold,accuracy\n";
  double mean = 0.0;
  for (std::size_t f = 0; f < accs.size(); ++f) {
    sum << f << ',' << g17(accs[f]) << "\n";
    mean += accs[f];
  }
  mean /= static_cast<double>(accs.size());
  sum << "mean," << g17(mean) << "\n";
  std::cout << "cv mean accuracy " << g17(mean) << "\n";
  std::cerr << "wall seconds " << g17(wall) << "\n";
  return kExitOk;
}

// Structural fields only: a checkpoint may be fine-tuned or evaluated under
// a config with different seeds or training knobs, but never a different
// architecture.
void check_compatible(const RunConfig& cfg, const Checkpoint& cp) {
  const ModelConfig& a = cfg.model;
  const ModelConfig& b = cp.model;
  if (a.architecture != b.architecture)
    throw ConfigError("config architecture '" + to_string(a.architecture) +
                      "' does not match checkpoint '" +
                      to_string(b.architecture) + "'");
  if (a.hidden_size != b.hidden_size ||
      a.task_embedding_size != b.task_embedding_size ||
      a.shared_embedding_size != b.shared_embedding_size ||
      a.share_gate_input_weights != b.share_gate_input_weights ||
      a.trainable_embeddings != b.trainable_embeddings)
    throw ConfigError("config model dimensions do not match the checkpoint");
}

void check_tasks_match(const std::vector<TaskSpec>& cfg_specs,
                       const std::vector<TaskSpec>& cp_specs) {
  if (cfg_specs.size() != cp_specs.size())
    throw ConfigError("config declares " + std::to_string(cfg_specs.size()) +
                      " tasks but the checkpoint has " +
                      std::to_string(cp_specs.size()));
  for (std::size_t m = 0; m < cp_specs.size(); ++m) {
    if (cfg_specs[m].name != cp_specs[m].name)
      throw ConfigError("task " + std::to_string(m) + " is '" +
                        cfg_specs[m].name + "' in the config but '" +
                        cp_specs[m].name + "' in the checkpoint");
    if (cfg_specs[m].class_count > cp_specs[m].class_count)
      throw ConfigError("task '" + cfg_specs[m].name + "' needs " +
                        std::to_string(cfg_specs[m].class_count) +
                        " classes but the checkpoint head has " +
                        std::to_string(cp_specs[m].class_count));
  }
}

int checked_task(int task, int task_count) {
  if (task < 0 || task >= task_count)
    throw TaskError("task id " + std::to_string(task) +
                    " out of range [0, " + std::to_string(task_count) + ")");
  return task;
}

std::vector<double> column(const Matrix& m) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    v[static_cast<std::size_t>(i)] = m(i, 0);
  return v;
}

}  // namespace

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
  } catch (const TaskError& e) {
    std::cerr << "config error: " << e.what() << "\n";
  } catch (const LabelError& e) {
    std::cerr << "config error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

int cmd_train(const RunConfig& cfg) {
  validate_run_config(cfg);
  const std::string dir = ensure_dir(cfg.output_dir);
  LoadedData data = load_task_data(cfg);
  if (cfg.cv_folds > 0) return train_cv(cfg, data, dir);

  MultiTaskModel model(cfg.model, data.specs, data.vocab.size());
  apply_embeddings(cfg, data.vocab, model);
  if (!cfg.warm_start.empty()) {
    Checkpoint cp = load_checkpoint(cfg.warm_start);
    int n = warm_start(model, data.vocab, cp);
    std::cerr << "warm start: copied " << n << " tensors from '"
              << cfg.warm_start << "'\n";
  }

  TrainReport rep = joint_train(model, data.corpora, data.vocab, cfg.train);
  write_metrics(dir + "/metrics", rep.rows,
                cfg.emit_seconds ? rep.wall_seconds : 0.0);

  const std::string rng_state = run_rng_state(cfg);
  ParamSnapshot final_state = snapshot_parameters(model);
  save_checkpoint(make_checkpoint(model, data.vocab, rng_state),
                  dir + "/final.ckpt");
  for (int m = 0; m < model.task_count(); ++m) {
    const TaskSpec& spec = data.specs[static_cast<std::size_t>(m)];
    restore_parameters(model, rep.best_params[static_cast<std::size_t>(m)]);
    save_checkpoint(make_checkpoint(model, data.vocab, rng_state),
                    dir + "/best." + spec.name + ".ckpt");
    const Corpus& c = data.corpora[static_cast<std::size_t>(m)];
    std::cout << "task " << spec.name << " best_epoch "
              << rep.best_epoch[static_cast<std::size_t>(m)];
    double dev = rep.best_dev_accuracy[static_cast<std::size_t>(m)];
    std::cout << " dev " << (dev < 0.0 ? std::string("n/a") : g17(dev));
    std::cout << " test "
              << (c.test.empty()
                      ? std::string("n/a")
                      : g17(split_accuracy(model, m, c, c.test, data.vocab)))
              << "\n";
  }
  restore_parameters(model, final_state);
  std::cerr << "wall seconds " << g17(rep.wall_seconds) << "\n";
  return kExitOk;
}

int cmd_pretrain(const RunConfig& cfg) {
  validate_run_config(cfg);
  if (cfg.model.architecture != Architecture::SharedLayer)
    throw ConfigError(
        "pretraining trains the shared bidirectional layer; set "
        "model.architecture to 'shared'");
  const std::string dir = ensure_dir(cfg.output_dir);
  LoadedData data = load_task_data(cfg);
  MultiTaskModel model(cfg.model, data.specs, data.vocab.size());
  apply_embeddings(cfg, data.vocab, model);

  LmReport rep = pretrain_lm(model, data.corpora, data.vocab, cfg.train,
                             cfg.holdout_fraction);
  std::ofstream ppl = open_out(dir + "/lm_perplexity.csv");
  ppl << "# mtrnn-lm 1\n" << "epoch,perplexity\n";
  for (std::size_t e = 0; e < rep.perplexity.size(); ++e)
    ppl << e << ',' << g17(rep.perplexity[e]) << "\n";

  save_checkpoint(make_checkpoint(model, data.vocab, run_rng_state(cfg)),
                  dir + "/pretrained.ckpt");
  std::cout << "perplexity " << g17(rep.perplexity.front()) << " -> "
            << g17(rep.perplexity.back()) << "\n";
  std::cerr << "wall seconds " << g17(rep.wall_seconds) << "\n";
  return kExitOk;
}

int cmd_finetune(const RunConfig& cfg, const std::string& checkpoint_path,
                 int task) {
  validate_run_config(cfg);
  const std::string dir = ensure_dir(cfg.output_dir);
  Checkpoint cp = load_checkpoint(checkpoint_path);
  check_compatible(cfg, cp);
  LoadedData data = load_task_data(cfg);
  check_tasks_match(data.specs, cp.tasks);
  RestoredModel rm = restore_model(cp);
  checked_task(task, rm.model.task_count());

  // The checkpoint vocabulary is authoritative: embedding rows are indexed
  // by it, so the corpora are re-encoded against it.
  TrainReport rep = fine_tune(rm.model, task,
                              data.corpora[static_cast<std::size_t>(task)],
                              rm.vocab, cfg.train);
  const std::string name = cp.tasks[static_cast<std::size_t>(task)].name;
  write_metrics(dir + "/finetune." + name, rep.rows,
                cfg.emit_seconds ? rep.wall_seconds : 0.0);

  restore_parameters(rm.model, rep.best_params[static_cast<std::size_t>(task)]);
  save_checkpoint(make_checkpoint(rm.model, rm.vocab, cp.rng_state),
                  dir + "/finetuned." + name + ".ckpt");
  double dev = rep.best_dev_accuracy[static_cast<std::size_t>(task)];
  std::cout << "task " << name << " best_epoch "
            << rep.best_epoch[static_cast<std::size_t>(task)] << " dev "
            << (dev < 0.0 ? std::string("n/a") : g17(dev)) << "\n";
  std::cerr << "wall seconds " << g17(rep.wall_seconds) << "\n";
  return kExitOk;
}

int cmd_trace(const std::string& checkpoint_path, int task,
              const std::string& text_file, const std::string& out_path) {
  Checkpoint cp = load_checkpoint(checkpoint_path);
  RestoredModel rm = restore_model(cp);
  checked_task(task, rm.model.task_count());
  std::ifstream in(text_file);
  if (!in) throw ConfigError("cannot open text file '" + text_file + "'");

  std::ofstream file_out;
  if (!out_path.empty()) file_out = open_out(out_path);
  std::ostream& out = out_path.empty() ? std::cout : file_out;

  const bool has_gates =
      cp.model.architecture == Architecture::SharedLayer;
  if (!has_gates)
    std::cerr << "warning: gate traces need the 'shared' architecture; '"
              << to_string(cp.model.architecture)
              << "' emits trajectories only\n";

  out << R"({"format":"mtrnn-trace","version":1})" << "\n";
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> tokens = tokenize(line);
    ordered_json doc;
    doc["line"] = line_no;
    doc["tokens"] = tokens;
    doc["trajectory"] = ordered_json::array();
    if (!tokens.empty()) {
      std::vector<int> ids = encode(rm.vocab, tokens);
      for (const Matrix& dist : rm.model.predict_per_timestep(task, ids))
        doc["trajectory"].push_back(column(dist));
      if (has_gates) {
        GateTrace g = rm.model.trace(task, ids, tokens);
        ordered_json rows = ordered_json::array();
        for (Eigen::Index t = 0; t < g.activations.rows(); ++t)
          rows.push_back(column(g.activations.row(t).transpose()));
        doc["gate"] =
            ordered_json{{"activations", rows}, {"neuron_order", g.neuron_order}};
      }
    }
    out << doc.dump() << "\n";
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             int task, const std::string& split) {
  validate_run_config(cfg);
  const std::string dir = ensure_dir(cfg.output_dir);
  Checkpoint cp = load_checkpoint(checkpoint_path);
  check_compatible(cfg, cp);
  LoadedData data = load_task_data(cfg);
  check_tasks_match(data.specs, cp.tasks);
  RestoredModel rm = restore_model(cp);
  checked_task(task, rm.model.task_count());

  const Corpus& corpus = data.corpora[static_cast<std::size_t>(task)];
  const std::vector<int>* idx = nullptr;
  if (split == "train") idx = &corpus.train;
  else if (split == "dev") idx = &corpus.dev;
  else if (split == "test") idx = &corpus.test;
  else
    throw ConfigError("split must be one of train|dev|test, got '" + split +
                      "'");
  if (idx->empty())
    throw ConfigError("task '" + corpus.name + "' has no " + split +
                      " split");

  const std::string name = cp.tasks[static_cast<std::size_t>(task)].name;
  std::ofstream csv =
      open_out(dir + "/predictions." + name + "." + split + ".csv");
  csv << "# mtrnn-predictions 1\n" << "id,gold,predicted,probability\n";
  long correct = 0;
  for (int i : *idx) {
    const Example& ex = corpus.examples[static_cast<std::size_t>(i)];
    Prediction p =
        predict_one(rm.model, task, encode(rm.vocab, ex.tokens));
    csv << i << ',' << ex.label << ',' << p.predicted << ','
        << g17(p.probability) << "\n";
    if (p.predicted == ex.label) ++correct;
  }
  double acc = static_cast<double>(correct) / static_cast<double>(idx->size());
  std::cout << "accuracy " << g17(acc) << "\n";
  return kExitOk;
}

}  // namespace mtrnn
