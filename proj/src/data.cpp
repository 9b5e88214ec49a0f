#include "mtrnn/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mtrnn {

namespace {

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

int parse_label(const std::string& field, long line_no,
                const std::string& where) {
  int label = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, label);
  if (ec != std::errc{} || ptr != end)
    throw ParseError(where + " line " + std::to_string(line_no) +
                     ": label is not an integer: '" + field + "'");
  if (label < 0)
    throw LabelError(where + " line " + std::to_string(line_no) +
                     ": negative label " + std::to_string(label));
  return label;
}

void parse_tsv(const std::string& path, Corpus& out) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus file: " + path);
  std::string line;
  long line_no = 0;
  std::size_t before = out.examples.size();
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(path + " line " + std::to_string(line_no) +
                       ": expected 'label<TAB>text'");
    Example ex;
    ex.label = parse_label(line.substr(0, tab), line_no, path);
    ex.tokens = tokenize(line.substr(tab + 1));
    if (ex.tokens.empty())
      throw ParseError(path + " line " + std::to_string(line_no) +
                       ": no tokens after preprocessing");
    out.class_count = std::max(out.class_count, ex.label + 1);
    out.examples.push_back(std::move(ex));
  }
  if (out.examples.size() == before)
    throw ConfigError("corpus file has no examples: " + path);
}

std::string stem_of(const std::string& path) {
  std::size_t slash = path.find_last_of("/\\");
  std::string base =
      slash == std::string::npos ? path : path.substr(slash + 1);
  std::size_t dot = base.find_last_of('.');
  return dot == std::string::npos || dot == 0 ? base : base.substr(0, dot);
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

Corpus load_corpus(const std::string& path, const std::string& format) {
  if (format != "tsv")
    throw ConfigError("unsupported corpus format: " + format);
  Corpus c;
  c.name = stem_of(path);
  parse_tsv(path, c);
  c.train.resize(c.examples.size());
  for (std::size_t i = 0; i < c.examples.size(); ++i)
    c.train[i] = static_cast<int>(i);
  return c;
}

Corpus load_corpus_splits(const std::string& name,
                          const std::string& train_path,
                          const std::string& dev_path,
                          const std::string& test_path) {
  if (train_path.empty()) throw ConfigError("train path is required");
  Corpus c;
  c.name = name;
  auto take = [&](const std::string& path, std::vector<int>& split) {
    if (path.empty()) return;
    std::size_t before = c.examples.size();
    parse_tsv(path, c);
    for (std::size_t i = before; i < c.examples.size(); ++i)
      split.push_back(static_cast<int>(i));
  };
  take(train_path, c.train);
  take(dev_path, c.dev);
  take(test_path, c.test);
  return c;
}

void seeded_split(Corpus& corpus, double dev_fraction, double test_fraction,
                  std::uint64_t seed) {
  if (dev_fraction < 0.0 || test_fraction < 0.0 ||
      dev_fraction + test_fraction >= 1.0)
    throw ConfigError("split fractions must be non-negative and sum below 1");
  long n = static_cast<long>(corpus.examples.size());
  if (n == 0) throw ConfigError("cannot split an empty corpus");
  std::vector<int> order(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);
  Rng rng(seed);
  rng.shuffle(order);
  long n_test = std::lround(static_cast<double>(n) * test_fraction);
  long n_dev = std::lround(static_cast<double>(n) * dev_fraction);
  if (n_test + n_dev >= n) {  // rounding may eat the train set
    long excess = n_test + n_dev - n + 1;
    n_dev = std::max(0L, n_dev - excess);
    if (n_test + n_dev >= n) n_test = n - 1 - n_dev;
  }
  corpus.test.assign(order.begin(), order.begin() + n_test);
  corpus.dev.assign(order.begin() + n_test, order.begin() + n_test + n_dev);
  corpus.train.assign(order.begin() + n_test + n_dev, order.end());
  std::sort(corpus.test.begin(), corpus.test.end());
  std::sort(corpus.dev.begin(), corpus.dev.end());
  std::sort(corpus.train.begin(), corpus.train.end());
}

double average_length(const Corpus& corpus) {
  if (corpus.examples.empty()) return 0.0;
  double total = 0.0;
  for (const Example& ex : corpus.examples)
    total += static_cast<double>(ex.tokens.size());
  return total / static_cast<double>(corpus.examples.size());
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size())
    throw IndexError("word id " + std::to_string(id) + " out of range [0, " +
                     std::to_string(size()) + ")");
  return words_[static_cast<std::size_t>(id)];
}

Vocabulary build_vocab(const std::vector<Corpus>& corpora, long min_freq) {
  Vocabulary v;
  v.min_freq_ = min_freq;
  for (const Corpus& c : corpora)
    for (const Example& ex : c.examples)
      for (const std::string& tok : ex.tokens) ++v.freq_[tok];
  if (v.freq_.empty()) throw ConfigError("cannot build a vocabulary from empty corpora");
  std::vector<std::pair<long, std::string>> order;
  order.reserve(v.freq_.size());
  for (const auto& [tok, n] : v.freq_)
    if (n >= min_freq) order.emplace_back(n, tok);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  v.words_.reserve(order.size() + 1);
  v.words_.push_back("<unk>");
  for (const auto& [n, tok] : order) {
    v.ids_[tok] = static_cast<int>(v.words_.size());
    v.words_.push_back(tok);
  }
  return v;
}

Vocabulary vocabulary_from_words(const std::vector<std::string>& words,
                                 long min_freq) {
  Vocabulary v;
  v.min_freq_ = min_freq;
  v.words_.reserve(words.size() + 1);
  v.words_.push_back("<unk>");
  for (const std::string& w : words) {
    if (w.empty()) throw ParseError("vocabulary word must not be empty");
    if (v.ids_.count(w))
      throw ParseError("duplicate vocabulary word '" + w + "'");
    v.ids_[w] = static_cast<int>(v.words_.size());
    v.words_.push_back(w);
  }
  return v;
}

std::vector<int> encode(const Vocabulary& vocab,
                        const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& tok : tokens) ids.push_back(vocab.id(tok));
  return ids;
}

PretrainedEmbeddings load_embeddings(const std::string& path,
                                     const Vocabulary& vocab, int dim,
                                     Rng& rng) {
  if (dim < 1) throw ConfigError("embedding dimension must be positive");
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embedding file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(path + ": missing 'count dim' header");
  strip_cr(line);
  long declared = 0;
  int file_dim = 0;
  {
    std::istringstream h(line);
    std::string rest;
    if (!(h >> declared >> file_dim) || (h >> rest))
      throw ParseError(path + " line 1: header must be 'count dim'");
  }
  if (file_dim != dim)
    throw ConfigError(path + ": embedding dimension " +
                      std::to_string(file_dim) + " does not match configured " +
                      std::to_string(dim));

  PretrainedEmbeddings out;
  out.table = Matrix::Zero(vocab.size(), dim);
  std::vector<char> filled(static_cast<std::size_t>(vocab.size()), 0);
  long rows = 0, found = 0;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    ++rows;
    std::istringstream row(line);
    std::string word;
    row >> word;
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(dim));
    double x = 0.0;
    while (row >> x) values.push_back(x);
    if (!row.eof() || static_cast<int>(values.size()) != dim)
      throw ParseError(path + " line " + std::to_string(line_no) +
                       ": expected a word followed by " + std::to_string(dim) +
                       " numbers");
    int id = vocab.id(word);
    if (id >= 1 && !filled[static_cast<std::size_t>(id)]) {
      filled[static_cast<std::size_t>(id)] = 1;
      ++found;
      for (int j = 0; j < dim; ++j)
        out.table(id, j) = values[static_cast<std::size_t>(j)];
    }
  }
  if (rows != declared)
    throw ParseError(path + ": header declares " + std::to_string(declared) +
                     " rows but file has " + std::to_string(rows));
  for (int id = 1; id < vocab.size(); ++id)
    if (!filled[static_cast<std::size_t>(id)])
      for (int j = 0; j < dim; ++j)
        out.table(id, j) = rng.uniform() * 0.2 - 0.1;
  out.coverage = vocab.size() <= 1
                     ? 1.0
                     : static_cast<double>(found) /
                           static_cast<double>(vocab.size() - 1);
  return out;
}

namespace {

// Exact accuracy of the Bayes-optimal predictor against the clean rule
// "latent sum >= threshold".  Dynamic program over (latent sum, observed sum)
// for each (length, polar count); everything else is a finite mixture.
double clean_bayes_accuracy(const SyntheticConfig& cfg, int threshold) {
  double q = 0.5 * (1.0 + cfg.signal_strength);  // token matches latent
  double rho = cfg.polar_density;
  double acc = 0.0;
  for (int len = cfg.min_length; len <= cfg.max_length; ++len) {
    for (int n = 0; n <= len; ++n) {
      double binom;  // C(len, n) rho^n (1-rho)^(len-n)
      if (rho <= 0.0) {
        binom = n == 0 ? 1.0 : 0.0;
      } else if (rho >= 1.0) {
        binom = n == len ? 1.0 : 0.0;
      } else {
        double comb = 1.0;
        for (int i = 1; i <= n; ++i)
          comb *= static_cast<double>(len - n + i) / static_cast<double>(i);
        binom = comb * std::pow(rho, n) * std::pow(1.0 - rho, len - n);
      }
      if (binom == 0.0) continue;
      // joint[(st + n) * width + (so + n)] = P(latent sum st, observed sum so)
      int width = 2 * n + 1;
      std::vector<double> joint(static_cast<std::size_t>(width * width), 0.0);
      joint[static_cast<std::size_t>(n * width + n)] = 1.0;  // zero slots so far
      for (int slot = 0; slot < n; ++slot) {
        std::vector<double> next(joint.size(), 0.0);
        for (int st = -slot; st <= slot; ++st)
          for (int so = -slot; so <= slot; ++so) {
            double p = joint[static_cast<std::size_t>((st + n) * width + so + n)];
            if (p == 0.0) continue;
            auto bump = [&](int dt, int dobs, double w) {
              next[static_cast<std::size_t>((st + dt + n) * width + so + dobs +
                                            n)] += p * w;
            };
            bump(+1, +1, 0.5 * q);
            bump(+1, -1, 0.5 * (1.0 - q));
            bump(-1, -1, 0.5 * q);
            bump(-1, +1, 0.5 * (1.0 - q));
          }
        joint.swap(next);
      }
      double part = 0.0;
      for (int so = -n; so <= n; ++so) {
        double p1 = 0.0, p0 = 0.0;
        for (int st = -n; st <= n; ++st) {
          double p = joint[static_cast<std::size_t>((st + n) * width + so + n)];
          (st >= threshold ? p1 : p0) += p;
        }
        part += std::max(p0, p1);
      }
      acc += binom * part;
    }
  }
  return acc / static_cast<double>(cfg.max_length - cfg.min_length + 1);
}

}  // namespace

std::vector<Corpus> make_synthetic_family(const SyntheticConfig& cfg) {
  if (cfg.task_count < 1 || cfg.train_size < 1 || cfg.dev_size < 0 ||
      cfg.test_size < 0)
    throw ConfigError("synthetic family sizes must be positive");
  if (cfg.vocab_size < 3)
    throw ConfigError("synthetic vocabulary needs at least 3 tokens");
  if (cfg.min_length < 1 || cfg.max_length < cfg.min_length)
    throw ConfigError("synthetic lengths must satisfy 1 <= min <= max");
  if (cfg.signal_strength < 0.0 || cfg.signal_strength > 1.0)
    throw ConfigError("signal strength must lie in [0, 1]");
  if (cfg.polar_density < 0.0 || cfg.polar_density > 1.0)
    throw ConfigError("polar density must lie in [0, 1]");
  if (cfg.label_noise < 0.0 || cfg.label_noise >= 0.5)
    throw ConfigError("label noise must lie in [0, 0.5)");

  int n_pos = std::max(1, cfg.vocab_size / 4);
  int n_neg = n_pos;
  int n_neu = cfg.vocab_size - n_pos - n_neg;
  auto name_of = [](const char* kind, int i) {
    return std::string(kind) + std::to_string(i);
  };

  Rng rng(cfg.seed);
  std::vector<Corpus> tasks;
  tasks.reserve(static_cast<std::size_t>(cfg.task_count));
  int total = cfg.train_size + cfg.dev_size + cfg.test_size;
  double faithful = 0.5 * (1.0 + cfg.signal_strength);
  for (int m = 0; m < cfg.task_count; ++m) {
    Corpus c;
    c.name = "task" + std::to_string(m);
    c.class_count = 2;
    int threshold = m + 1;
    double clean = clean_bayes_accuracy(cfg, threshold);
    c.bayes_accuracy =
        (1.0 - cfg.label_noise) * clean + cfg.label_noise * (1.0 - clean);
    for (int i = 0; i < total; ++i) {
      Example ex;
      int span = cfg.max_length - cfg.min_length + 1;
      int len = rng.uniform_int(span) + cfg.min_length;
      long polarity = 0;
      for (int t = 0; t < len; ++t) {
        if (rng.uniform() < cfg.polar_density) {
          int latent = rng.uniform() < 0.5 ? 1 : -1;
          polarity += latent;
          int shown = rng.uniform() < faithful ? latent : -latent;
          if (shown > 0)
            ex.tokens.push_back(name_of("pos", rng.uniform_int(n_pos)));
          else
            ex.tokens.push_back(name_of("neg", rng.uniform_int(n_neg)));
        } else {
          ex.tokens.push_back(name_of("neu", rng.uniform_int(n_neu)));
        }
      }
      ex.label = polarity >= threshold ? 1 : 0;
      if (cfg.label_noise > 0.0 && rng.uniform() < cfg.label_noise)
        ex.label = 1 - ex.label;
      int idx = static_cast<int>(c.examples.size());
      if (i < cfg.train_size)
        c.train.push_back(idx);
      else if (i < cfg.train_size + cfg.dev_size)
        c.dev.push_back(idx);
      else
        c.test.push_back(idx);
      c.examples.push_back(std::move(ex));
    }
    tasks.push_back(std::move(c));
  }
  return tasks;
}

std::vector<std::pair<std::vector<int>, std::vector<int>>> kfold_splits(
    const Corpus& corpus, int k, std::uint64_t seed) {
  long n = static_cast<long>(corpus.examples.size());
  if (k < 1 || static_cast<long>(k) > n)
    throw ConfigError("fold count " + std::to_string(k) +
                      " must lie in [1, " + std::to_string(n) + "]");
  std::vector<int> order(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i)
    order[static_cast<std::size_t>(i)] = static_cast<int>(i);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::pair<std::vector<int>, std::vector<int>>> folds;
  folds.reserve(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    long lo = n * f / k, hi = n * (f + 1) / k;
    std::pair<std::vector<int>, std::vector<int>> fold;
    for (long i = 0; i < n; ++i) {
      (i >= lo && i < hi ? fold.second : fold.first)
          .push_back(order[static_cast<std::size_t>(i)]);
    }
    std::sort(fold.first.begin(), fold.first.end());
    std::sort(fold.second.begin(), fold.second.end());
    folds.push_back(std::move(fold));
  }
  return folds;
}

}  // namespace mtrnn
