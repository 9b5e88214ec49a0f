#include "mtrnn/runconfig.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mtrnn {
namespace {

using nlohmann::json;

// Wraps one JSON object; every key must be claimed by a getter before
// finish(), so unknown keys surface with their dotted path.
struct Section {
  const json& obj;
  std::string path;
  std::set<std::string> seen;

  Section(const json& o, std::string p) : obj(o), path(std::move(p)) {
    if (!obj.is_object())
      throw ConfigError("config key '" + path + "' must be an object");
  }

  std::string dotted(const std::string& key) const {
    return path.empty() ? key : path + "." + key;
  }

  const json* find(const std::string& key) {
    seen.insert(key);
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  void get_long(const std::string& key, long& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer())
        throw ConfigError("config key '" + dotted(key) +
                          "' must be an integer");
      out = v->get<long>();
    }
  }

  void get_int(const std::string& key, int& out) {
    long wide = out;
    get_long(key, wide);
    out = static_cast<int>(wide);
  }

  void get_seed(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!(v->is_number_unsigned() ||
            (v->is_number_integer() && v->get<long long>() >= 0)))
        throw ConfigError("config key '" + dotted(key) +
                          "' must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void get_double(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number())
        throw ConfigError("config key '" + dotted(key) + "' must be a number");
      out = v->get<double>();
    }
  }

  void get_bool(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean())
        throw ConfigError("config key '" + dotted(key) + "' must be a boolean");
      out = v->get<bool>();
    }
  }

  void get_string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string())
        throw ConfigError("config key '" + dotted(key) + "' must be a string");
      out = v->get<std::string>();
    }
  }

  void finish() {
    for (const auto& item : obj.items())
      if (!seen.count(item.key()))
        throw ConfigError("unknown config key '" + dotted(item.key()) + "'");
  }
};

void read_model(const json& j, ModelConfig& m) {
  Section s(j, "model");
  std::string arch;
  s.get_string("architecture", arch);
  if (arch.empty())
    throw ConfigError("config key 'model.architecture' is required");
  m.architecture = architecture_from_string(arch);
  s.get_int("hidden_size", m.hidden_size);
  s.get_int("task_embedding_size", m.task_embedding_size);
  s.get_int("shared_embedding_size", m.shared_embedding_size);
  s.get_bool("share_gate_input_weights", m.share_gate_input_weights);
  s.get_bool("trainable_embeddings", m.trainable_embeddings);
  s.get_seed("seed", m.seed);
  s.finish();
}

void read_train(const json& j, TrainConfig& t) {
  Section s(j, "train");
  s.get_double("learning_rate", t.learning_rate);
  s.get_double("l2_weight", t.l2_weight);
  s.get_double("adagrad_epsilon", t.adagrad_epsilon);
  s.get_int("max_epochs", t.max_epochs);
  s.get_int("patience", t.patience);
  s.get_seed("seed", t.seed);
  s.get_bool("freeze_shared", t.freeze_shared);
  s.finish();
}

void read_synthetic(const json& j, SyntheticConfig& c) {
  Section s(j, "data.synthetic");
  s.get_seed("seed", c.seed);
  s.get_int("task_count", c.task_count);
  s.get_int("train_size", c.train_size);
  s.get_int("dev_size", c.dev_size);
  s.get_int("test_size", c.test_size);
  s.get_int("vocab_size", c.vocab_size);
  s.get_int("min_length", c.min_length);
  s.get_int("max_length", c.max_length);
  s.get_double("polar_density", c.polar_density);
  s.get_double("signal_strength", c.signal_strength);
  s.get_double("label_noise", c.label_noise);
  s.finish();
}

void read_task(const json& j, std::size_t i, TaskDataConfig& t) {
  Section s(j, "data.tasks[" + std::to_string(i) + "]");
  s.get_string("name", t.name);
  s.get_string("train", t.train);
  s.get_string("dev", t.dev);
  s.get_string("test", t.test);
  s.get_int("classes", t.classes);
  s.get_double("lambda", t.lambda);
  s.finish();
}

void read_data(const json& j, RunConfig& cfg) {
  Section s(j, "data");
  s.get_long("min_freq", cfg.min_freq);
  s.get_double("dev_fraction", cfg.dev_fraction);
  s.get_double("test_fraction", cfg.test_fraction);
  s.get_seed("split_seed", cfg.split_seed);
  if (const json* tasks = s.find("tasks")) {
    if (!tasks->is_array())
      throw ConfigError("config key 'data.tasks' must be an array");
    for (std::size_t i = 0; i < tasks->size(); ++i) {
      TaskDataConfig t;
      read_task((*tasks)[i], i, t);
      cfg.tasks.push_back(std::move(t));
    }
    if (cfg.tasks.empty())
      throw ConfigError("config key 'data.tasks' must not be empty");
  }
  if (const json* syn = s.find("synthetic")) {
    SyntheticConfig c;
    read_synthetic(*syn, c);
    cfg.synthetic = c;
  }
  s.finish();
}

void read_embeddings(const json& j, RunConfig& cfg) {
  Section s(j, "embeddings");
  s.get_string("file", cfg.embeddings_file);
  s.get_int("dim", cfg.embeddings_dim);
  s.finish();
  if (cfg.embeddings_file.empty())
    throw ConfigError("config key 'embeddings.file' is required");
  if (cfg.embeddings_dim <= 0)
    throw ConfigError("config key 'embeddings.dim' must be > 0");
}

void require_file(const std::string& path, const std::string& key) {
  if (path.empty())
    throw ConfigError("missing dataset path for key '" + key + "'");
  if (!std::filesystem::exists(path))
    throw ConfigError("dataset path for key '" + key + "' does not exist: '" +
                      path + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  Section root(j, "");

  long version = -1;
  root.get_long("version", version);
  if (version == -1) throw ConfigError("config key 'version' is required");
  if (version != kRunConfigVersion)
    throw ConfigError("unsupported config version " + std::to_string(version) +
                      " (expected " + std::to_string(kRunConfigVersion) + ")");

  RunConfig cfg;
  if (const json* m = root.find("model")) read_model(*m, cfg.model);
  else throw ConfigError("config key 'model' is required");
  if (const json* t = root.find("train")) read_train(*t, cfg.train);
  if (const json* d = root.find("data")) read_data(*d, cfg);
  else throw ConfigError("config key 'data' is required");
  if (const json* e = root.find("embeddings")) read_embeddings(*e, cfg);
  root.get_string("warm_start", cfg.warm_start);
  root.get_string("output_dir", cfg.output_dir);
  root.get_bool("emit_seconds", cfg.emit_seconds);
  root.get_int("cv_folds", cfg.cv_folds);
  root.get_double("holdout_fraction", cfg.holdout_fraction);
  root.finish();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

void validate_run_config(const RunConfig& cfg) {
  const bool has_tasks = !cfg.tasks.empty();
  const bool has_syn = cfg.synthetic.has_value();
  if (has_tasks && has_syn)
    throw ConfigError("'data.tasks' and 'data.synthetic' are mutually exclusive");
  if (!has_tasks && !has_syn)
    throw ConfigError("one of 'data.tasks' or 'data.synthetic' is required");

  if (cfg.min_freq < 1) throw ConfigError("'data.min_freq' must be >= 1");
  if (cfg.dev_fraction < 0.0 || cfg.test_fraction < 0.0 ||
      cfg.dev_fraction + cfg.test_fraction >= 1.0)
    throw ConfigError(
        "'data.dev_fraction'/'data.test_fraction' must be >= 0 and sum below 1");
  if (cfg.holdout_fraction < 0.0 || cfg.holdout_fraction >= 1.0)
    throw ConfigError("'holdout_fraction' must be in [0, 1)");
  if (cfg.cv_folds < 0) throw ConfigError("'cv_folds' must be >= 0");

  std::set<std::string> names;
  for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
    const TaskDataConfig& t = cfg.tasks[i];
    const std::string key = "data.tasks[" + std::to_string(i) + "]";
    if (t.name.empty() || t.name.find_first_of(" \t\r\n") != std::string::npos)
      throw ConfigError("'" + key + ".name' is empty or contains whitespace");
    if (!names.insert(t.name).second)
      throw ConfigError("duplicate task name '" + t.name + "'");
    require_file(t.train, key + ".train");
    if (!t.dev.empty()) require_file(t.dev, key + ".dev");
    if (!t.test.empty()) require_file(t.test, key + ".test");
    if (t.classes < 0) throw ConfigError("'" + key + ".classes' must be >= 0");
    if (!(t.lambda > 0.0))
      throw ConfigError("'" + key + ".lambda' must be > 0");
    const bool declared = !t.dev.empty() || !t.test.empty();
    const bool carved = cfg.dev_fraction > 0.0 || cfg.test_fraction > 0.0;
    if (declared && carved)
      throw ConfigError("task '" + t.name +
                        "': declared split files and split fractions cannot "
                        "be combined");
  }

  if (cfg.cv_folds > 0) {
    if (has_syn)
      throw ConfigError("'cv_folds' requires file-backed tasks, not "
                        "'data.synthetic'");
    if (cfg.tasks.size() != 1)
      throw ConfigError("'cv_folds' supports exactly one task");
    const TaskDataConfig& t = cfg.tasks[0];
    if (!t.dev.empty() || !t.test.empty() || cfg.dev_fraction > 0.0 ||
        cfg.test_fraction > 0.0)
      throw ConfigError("'cv_folds' uses every example; drop declared splits "
                        "and split fractions");
  }

  if (!cfg.embeddings_file.empty()) {
    require_file(cfg.embeddings_file, "embeddings.file");
    if (cfg.embeddings_dim != cfg.model.task_embedding_size &&
        cfg.embeddings_dim != cfg.model.shared_embedding_size)
      throw ConfigError("'embeddings.dim' matches neither "
                        "'model.task_embedding_size' nor "
                        "'model.shared_embedding_size'");
  }

  if (!cfg.warm_start.empty()) require_file(cfg.warm_start, "warm_start");
}

LoadedData load_task_data(const RunConfig& cfg) {
  LoadedData out;
  if (cfg.synthetic) {
    out.corpora = make_synthetic_family(*cfg.synthetic);
    for (const Corpus& c : out.corpora)
      out.specs.push_back(TaskSpec{c.name, c.class_count, 1.0});
  } else {
    for (const TaskDataConfig& t : cfg.tasks) {
      Corpus c = load_corpus_splits(t.name, t.train, t.dev, t.test);
      if (t.dev.empty() && t.test.empty() &&
          (cfg.dev_fraction > 0.0 || cfg.test_fraction > 0.0))
        seeded_split(c, cfg.dev_fraction, cfg.test_fraction, cfg.split_seed);
      if (t.classes > 0) {
        if (c.class_count > t.classes)
          throw ConfigError("task '" + t.name + "' declares " +
                            std::to_string(t.classes) + " classes but labels reach " +
                            std::to_string(c.class_count));
        c.class_count = t.classes;
      }
      out.specs.push_back(TaskSpec{t.name, c.class_count, t.lambda});
      out.corpora.push_back(std::move(c));
    }
  }
  out.vocab = build_vocab(out.corpora, cfg.min_freq);
  return out;
}

}  // namespace mtrnn
