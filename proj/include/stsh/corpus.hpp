#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace stsh::corpus {

using TokenSequence = std::vector<int>;

// Reserved ids shared by every vocabulary.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kNumReserved = 4;

class Vocabulary {
 public:
  Vocabulary();

  // Adds a token if absent; returns its id. Reserved names are rejected.
  int add(const std::string &token);
  int id(const std::string &token) const;           // kUnk when absent
  const std::string &token(int id) const;
  bool contains(const std::string &token) const;
  int size() const { return static_cast<int>(tokens_.size()); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct Example {
  TokenSequence tokens;
  int label = -1;
};

struct LabeledCorpus {
  std::vector<Example> train;
  std::vector<Example> valid;
  std::vector<Example> test;
  std::vector<std::string> labels;   // ordered; Example::label indexes this

  int num_labels() const { return static_cast<int>(labels.size()); }
};

struct NoiseConfig {
  double word_drop_prob = 0.1;  // in [0, 1)
  int shuffle_window = 3;       // max displacement, >= 0
};

struct SynthSpec {
  int num_labels = 8;
  int content_vocab_size = 150;
  int markers_per_label = 5;
  double marker_purity = 0.9;      // in (0.5, 1]
  int min_length = 5;
  int max_length = 12;
  int train_per_label = 6000;
  int valid_per_label = 300;
  int test_per_label = 300;
  std::vector<std::string> label_names;  // optional; generated when empty
  // Content tokens are w<offset>..w<offset+size-1>; a nonzero offset lets a
  // second corpus share only part of its content vocabulary with the first.
  int content_token_offset = 0;
  // Marker tokens are <prefix>_<label>_<i>; a different prefix keeps marker
  // sets disjoint even when label names repeat across corpora.
  std::string marker_prefix = "mk";
};

// Lowercased whitespace tokenization; unknown tokens map to kUnk.
TokenSequence tokenize(const std::string &text, const Vocabulary &vocab);
std::string detokenize(const TokenSequence &seq, const Vocabulary &vocab);

// Most frequent tokens first, ties broken lexicographically.
Vocabulary build_vocab(const std::vector<std::string> &texts, int max_size,
                       int min_count = 1);
Vocabulary build_vocab_from_examples(const std::vector<Example> &examples,
                                     const Vocabulary &source_vocab, int max_size);

// Word drop (at least one token survives) followed by a local shuffle that
// moves no token more than shuffle_window positions.
TokenSequence corrupt(const TokenSequence &x, const NoiseConfig &cfg,
                      std::mt19937_64 &rng);

struct SyntheticCorpus {
  LabeledCorpus corpus;
  Vocabulary vocab;
  std::vector<std::vector<std::string>> marker_sets;  // per label, disjoint
  // Generative oracle: argmax label by marker counts, lowest id on ties.
  int oracle_label(const TokenSequence &tokens) const;

 private:
  friend SyntheticCorpus generate_synthetic_corpus(const SynthSpec &, std::mt19937_64 &);
  std::unordered_map<int, int> marker_token_to_label_;
};

SyntheticCorpus generate_synthetic_corpus(const SynthSpec &spec, std::mt19937_64 &rng);

// Endless balanced sample stream: every consecutive block of num_labels draws
// holds each label exactly once, so any window of L*batch_size samples is
// balanced to within one example per label.
class BalancedSampler {
 public:
  BalancedSampler(const std::vector<Example> &examples, int num_labels,
                  std::uint64_t seed);
  const Example &next();
  std::vector<const Example *> next_batch(int batch_size);

 private:
  const Example &next_of_label(int label);
  const std::vector<Example> *examples_;
  std::vector<std::vector<int>> by_label_;
  std::vector<std::size_t> cursor_;
  std::vector<int> label_order_;
  std::size_t label_pos_ = 0;
  std::mt19937_64 rng_;
};

// `label<TAB>text` lines; labels become ids in first-seen order.
struct LoadedCorpus {
  std::vector<std::pair<std::string, std::string>> rows;  // (label, text)
  std::vector<std::string> labels;
};
LoadedCorpus load_labeled_file(const std::string &path);

void save_labeled_file(const std::string &path,
                       const std::vector<Example> &examples,
                       const std::vector<std::string> &labels,
                       const Vocabulary &vocab);

}  // namespace stsh::corpus
