#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mtrnn/common.hpp"

namespace mtrnn {

struct Example {
  std::vector<std::string> tokens;
  int label = 0;
};

// Split index sets are disjoint; an example missing from all three is legal
// only transiently (fresh load before seeded_split).
struct Corpus {
  std::string name;
  std::vector<Example> examples;
  int class_count = 0;
  std::vector<int> train, dev, test;
  double bayes_accuracy = 0.0;  // > 0 only for generated corpora
};

// id 0 is the unknown/padding id and never maps back to a word.
class Vocabulary {
 public:
  int id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? 0 : it->second;
  }
  const std::string& word(int id) const;
  int size() const { return static_cast<int>(words_.size()); }
  long frequency(const std::string& token) const {
    auto it = freq_.find(token);
    return it == freq_.end() ? 0 : it->second;
  }
  long min_frequency() const { return min_freq_; }

 private:
  friend Vocabulary build_vocab(const std::vector<Corpus>&, long);
  friend Vocabulary vocabulary_from_words(const std::vector<std::string>&,
                                          long);
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> words_;  // words_[0] = "<unk>"
  std::unordered_map<std::string, long> freq_;
  long min_freq_ = 1;
};

std::vector<std::string> tokenize(const std::string& text);

Corpus load_corpus(const std::string& path, const std::string& format = "tsv");

// Declared-splits variant: dev/test paths may be empty.
Corpus load_corpus_splits(const std::string& name,
                          const std::string& train_path,
                          const std::string& dev_path,
                          const std::string& test_path);

// Carves train/dev/test out of all examples, shuffled by seed.
void seeded_split(Corpus& corpus, double dev_fraction, double test_fraction,
                  std::uint64_t seed);

double average_length(const Corpus& corpus);

Vocabulary build_vocab(const std::vector<Corpus>& corpora, long min_freq = 1);

// Rebuilds a vocabulary from the words for ids 1..N in order, e.g. out of a
// checkpoint.  Occurrence counts are not recoverable: frequency() reports 0.
Vocabulary vocabulary_from_words(const std::vector<std::string>& words,
                                 long min_freq);

std::vector<int> encode(const Vocabulary& vocab,
                        const std::vector<std::string>& tokens);

struct PretrainedEmbeddings {
  Matrix table;     // vocab.size() x dim, row 0 zero
  double coverage;  // fraction of ids >= 1 present in the file
};

PretrainedEmbeddings load_embeddings(const std::string& path,
                                     const Vocabulary& vocab, int dim,
                                     Rng& rng);

// Sequences over a shared alphabet of positive / negative / neutral tokens.
// Each position is polar with probability polar_density; a polar position has
// a latent polarity (uniform +-1) and emits a token of the matching kind with
// probability (1 + signal_strength) / 2, the opposite kind otherwise.  Task m
// labels 1 iff the latent polarity sum reaches m+1, then flips with
// probability label_noise.  bayes_accuracy is computed exactly: the emission
// channel makes it strictly increasing in signal_strength.
struct SyntheticConfig {
  std::uint64_t seed = 1;
  int task_count = 2;
  int train_size = 200;  // per task
  int dev_size = 50;
  int test_size = 50;
  int vocab_size = 20;
  int min_length = 4;
  int max_length = 12;
  double polar_density = 0.5;    // chance a position carries latent polarity
  double signal_strength = 0.6;  // token/polarity agreement, 1 = faithful
  double label_noise = 0.0;
};

std::vector<Corpus> make_synthetic_family(const SyntheticConfig& cfg);

std::vector<std::pair<std::vector<int>, std::vector<int>>> kfold_splits(
    const Corpus& corpus, int k, std::uint64_t seed);

}  // namespace mtrnn
