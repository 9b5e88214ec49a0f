#include "mtrnn/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace mtrnn {
namespace {

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Strict line reader: every line of the format is mandatory and ordered, so
// a miss is always reported with its line number.
struct LineReader {
  std::istream& in;
  std::string path;
  long line_no = 0;

  std::string next(const char* what) {
    std::string line;
    if (!std::getline(in, line))
      throw ParseError(path + ": unexpected end of checkpoint, expected " +
                       std::string(what));
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(path + " line " + std::to_string(line_no) + ": " + msg);
  }

  // "key value..." with the leading key fixed; returns the remainder.
  std::string keyed(const std::string& key) {
    std::string line = next(key.c_str());
    if (line.size() < key.size() || line.compare(0, key.size(), key) != 0 ||
        (line.size() > key.size() && line[key.size()] != ' '))
      fail("expected '" + key + " ...', got '" + line + "'");
    return line.size() > key.size() ? line.substr(key.size() + 1)
                                    : std::string();
  }

  long keyed_long(const std::string& key) {
    std::string rest = keyed(key);
    char* end = nullptr;
    long v = std::strtol(rest.c_str(), &end, 10);
    if (end == rest.c_str() || *end != '\0')
      fail("expected an integer after '" + key + "'");
    return v;
  }
};

double parse_double(LineReader& r, std::istringstream& in, const char* what) {
  double v;
  if (!(in >> v)) r.fail(std::string("expected ") + what);
  return v;
}

}  // namespace

Checkpoint make_checkpoint(MultiTaskModel& model, const Vocabulary& vocab,
                           const std::string& rng_state) {
  Checkpoint cp;
  cp.model = model.config();
  cp.tasks = model.task_specs();
  if (vocab.size() != model.vocab_size())
    throw ContractError("vocabulary size does not match the model");
  cp.words.reserve(static_cast<std::size_t>(vocab.size()) - 1);
  for (int id = 1; id < vocab.size(); ++id) cp.words.push_back(vocab.word(id));
  cp.min_freq = vocab.min_frequency();
  cp.rng_state = rng_state;
  for (Parameter* p : model.parameters()) cp.params.emplace_back(p->name, p->value);
  return cp;
}

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  if (cp.version != kCheckpointVersion)
    throw ConfigError("can only write checkpoint version " +
                      std::to_string(kCheckpointVersion));
  for (const TaskSpec& t : cp.tasks)
    if (t.name.empty() || t.name.find_first_of(" \t\r\n") != std::string::npos)
      throw ConfigError("task name '" + t.name +
                        "' is empty or contains whitespace");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint file '" + path + "'");
  out << "mtrnn-checkpoint " << cp.version << "\n";
  out << "architecture " << to_string(cp.model.architecture) << "\n";
  out << "hidden_size " << cp.model.hidden_size << "\n";
  out << "task_embedding_size " << cp.model.task_embedding_size << "\n";
  out << "shared_embedding_size " << cp.model.shared_embedding_size << "\n";
  out << "share_gate_input_weights " << int(cp.model.share_gate_input_weights)
      << "\n";
  out << "trainable_embeddings " << int(cp.model.trainable_embeddings) << "\n";
  out << "model_seed " << cp.model.seed << "\n";
  out << "min_freq " << cp.min_freq << "\n";
  out << "rng " << cp.rng_state << "\n";
  out << "tasks " << cp.tasks.size() << "\n";
  for (const TaskSpec& t : cp.tasks)
    out << "task " << t.name << " " << t.class_count << " " << g17(t.lambda)
        << "\n";
  out << "vocab " << cp.words.size() << "\n";
  for (const std::string& w : cp.words) out << w << "\n";
  out << "params " << cp.params.size() << "\n";
  for (const auto& [name, value] : cp.params) {
    out << "param " << name << " " << value.rows() << " " << value.cols()
        << "\n";
    for (Eigen::Index i = 0; i < value.rows(); ++i) {
      for (Eigen::Index j = 0; j < value.cols(); ++j) {
        if (j) out << ' ';
        out << g17(value(i, j));
      }
      out << "\n";
    }
  }
  out << "end\n";
  if (!out) throw ConfigError("failed writing checkpoint file '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint file '" + path + "'");
  LineReader r{in, path};

  {
    std::string head = r.next("'mtrnn-checkpoint <version>'");
    std::istringstream hs(head);
    std::string magic;
    int version = -1;
    if (!(hs >> magic >> version) || magic != "mtrnn-checkpoint")
      r.fail("not a checkpoint file (bad magic line '" + head + "')");
    if (version != kCheckpointVersion)
      throw ConfigError(path + ": unsupported checkpoint version " +
                        std::to_string(version) + " (expected " +
                        std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint cp;
  cp.model.architecture = architecture_from_string(r.keyed("architecture"));
  cp.model.hidden_size = static_cast<int>(r.keyed_long("hidden_size"));
  cp.model.task_embedding_size =
      static_cast<int>(r.keyed_long("task_embedding_size"));
  cp.model.shared_embedding_size =
      static_cast<int>(r.keyed_long("shared_embedding_size"));
  cp.model.share_gate_input_weights =
      r.keyed_long("share_gate_input_weights") != 0;
  cp.model.trainable_embeddings = r.keyed_long("trainable_embeddings") != 0;
  cp.model.seed =
      static_cast<std::uint64_t>(r.keyed_long("model_seed"));
  cp.min_freq = r.keyed_long("min_freq");
  cp.rng_state = r.keyed("rng");
  if (cp.rng_state.empty()) r.fail("empty rng state");

  long n_tasks = r.keyed_long("tasks");
  if (n_tasks < 1) r.fail("task count must be >= 1");
  for (long k = 0; k < n_tasks; ++k) {
    std::istringstream ts(r.keyed("task"));
    TaskSpec t;
    if (!(ts >> t.name >> t.class_count >> t.lambda))
      r.fail("expected 'task <name> <classes> <lambda>'");
    cp.tasks.push_back(std::move(t));
  }

  long n_words = r.keyed_long("vocab");
  if (n_words < 0) r.fail("negative vocabulary size");
  cp.words.reserve(static_cast<std::size_t>(n_words));
  for (long k = 0; k < n_words; ++k) {
    std::string w = r.next("a vocabulary word");
    if (w.empty() || w.find_first_of(" \t") != std::string::npos)
      r.fail("bad vocabulary word '" + w + "'");
    cp.words.push_back(std::move(w));
  }

  long n_params = r.keyed_long("params");
  if (n_params < 0) r.fail("negative parameter count");
  cp.params.reserve(static_cast<std::size_t>(n_params));
  for (long k = 0; k < n_params; ++k) {
    std::istringstream ps(r.keyed("param"));
    std::string name;
    long rows = -1, cols = -1;
    if (!(ps >> name >> rows >> cols) || rows < 0 || cols < 0)
      r.fail("expected 'param <name> <rows> <cols>'");
    Matrix value(rows, cols);
    for (long i = 0; i < rows; ++i) {
      std::istringstream vs(r.next("a parameter row"));
      for (long j = 0; j < cols; ++j)
        value(i, j) = parse_double(r, vs, "a value");
      double extra;
      if (vs >> extra) r.fail("too many values in parameter row");
    }
    cp.params.emplace_back(std::move(name), std::move(value));
  }

  if (r.next("'end'") != "end") r.fail("expected 'end'");
  return cp;
}

RestoredModel restore_model(const Checkpoint& cp) {
  Vocabulary vocab = vocabulary_from_words(cp.words, cp.min_freq);
  MultiTaskModel model(cp.model, cp.tasks, vocab.size());
  std::vector<Parameter*> live = model.parameters();
  if (live.size() != cp.params.size())
    throw ParseError("checkpoint holds " + std::to_string(cp.params.size()) +
                     " tensors but the architecture has " +
                     std::to_string(live.size()));
  for (std::size_t k = 0; k < live.size(); ++k) {
    const auto& [name, value] = cp.params[k];
    Parameter* p = live[k];
    if (p->name != name)
      throw ParseError("checkpoint tensor '" + name + "' where '" + p->name +
                       "' was expected");
    if (p->value.rows() != value.rows() || p->value.cols() != value.cols())
      throw ParseError("checkpoint tensor '" + name + "' has shape " +
                       std::to_string(value.rows()) + "x" +
                       std::to_string(value.cols()) + ", expected " +
                       std::to_string(p->value.rows()) + "x" +
                       std::to_string(p->value.cols()));
    p->value = value;
  }
  return RestoredModel{std::move(model), std::move(vocab), cp.rng_state};
}

int warm_start(MultiTaskModel& model, const Vocabulary& vocab,
               const Checkpoint& cp) {
  if (vocab.size() != static_cast<int>(cp.words.size()) + 1)
    throw ConfigError("warm-start vocabulary size mismatch: checkpoint has " +
                      std::to_string(cp.words.size() + 1) + " ids, run has " +
                      std::to_string(vocab.size()));
  for (std::size_t k = 0; k < cp.words.size(); ++k)
    if (vocab.word(static_cast<int>(k) + 1) != cp.words[k])
      throw ConfigError("warm-start vocabulary differs at id " +
                        std::to_string(k + 1) + ": checkpoint '" +
                        cp.words[k] + "' vs run '" +
                        vocab.word(static_cast<int>(k) + 1) + "'");
  std::unordered_map<std::string, Parameter*> live;
  for (Parameter* p : model.parameters()) live[p->name] = p;
  int copied = 0;
  for (const auto& [name, value] : cp.params) {
    auto it = live.find(name);
    if (it == live.end()) continue;
    Parameter* p = it->second;
    if (p->value.rows() != value.rows() || p->value.cols() != value.cols())
      throw ConfigError("warm-start tensor '" + name + "' has shape " +
                        std::to_string(value.rows()) + "x" +
                        std::to_string(value.cols()) + ", model expects " +
                        std::to_string(p->value.rows()) + "x" +
                        std::to_string(p->value.cols()));
    p->value = value;
    ++copied;
  }
  return copied;
}

}  // namespace mtrnn
