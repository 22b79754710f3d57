#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "stsh/corpus.hpp"
#include "stsh/tensor.hpp"

namespace stsh::attr {

// Hashed 1- and 2-gram feature ids for a token sequence.
std::vector<int> ngram_features(const corpus::TokenSequence &tokens, int buckets);

struct ClassifierConfig {
  int ngram_buckets = 1 << 16;
  int table_dim = 32;
  int hidden_dim = 8;   // bottleneck d_a; the evaluation classifier uses 64
  int steps = 4000;
  int batch_size = 32;
  double learning_rate = 0.5;
  double gradient_clip_norm = 5.0;
  std::uint64_t seed = 1;
};

// Bag-of-n-grams feedforward classifier. The tanh hidden layer doubles as the
// attribute embedding space; class scores are plain dot products with the
// score-layer columns, so each column is exactly the class embedding.
class NgramClassifier {
 public:
  NgramClassifier(ClassifierConfig cfg, std::vector<std::string> labels);

  const ClassifierConfig &config() const { return cfg_; }
  const std::vector<std::string> &labels() const { return labels_; }
  int num_labels() const { return static_cast<int>(labels_.size()); }
  int label_id(const std::string &name) const;  // throws on unknown label

  // Pre-normalization hidden vector, 1 x hidden_dim. Traced when a tape is active.
  ad::Tensor hidden(const corpus::TokenSequence &tokens) const;
  ad::Tensor hidden_batch(const std::vector<const corpus::TokenSequence *> &batch) const;

  // Unit-norm attribute embedding of a text (last hidden layer, scaled).
  ad::Tensor embed(const corpus::TokenSequence &tokens) const;
  // Unit-norm class embedding (score-layer column of the label).
  ad::Tensor class_embedding(int label) const;
  ad::Tensor class_embedding(const std::string &label) const;

  std::vector<double> classify(const corpus::TokenSequence &tokens) const;
  int predict(const corpus::TokenSequence &tokens) const;

  std::vector<ad::Tensor> params() const;
  // Named tensors for checkpointing, stable order.
  std::vector<std::pair<std::string, ad::Tensor>> named_tensors() const;

  ad::Tensor table, w_hidden, b_hidden, score_layer;  // score_layer: hidden x L

 private:
  ClassifierConfig cfg_;
  std::vector<std::string> labels_;
};

struct TrainedClassifier {
  NgramClassifier classifier;
  double valid_accuracy = 0.0;
};

TrainedClassifier train_classifier(const corpus::LabeledCorpus &data,
                                   const ClassifierConfig &cfg);

double accuracy(const NgramClassifier &clf, const std::vector<corpus::Example> &examples);

// Logistic map from an old attribute-embedding space to a new label space.
// Normalized weight columns double as new-space attribute targets.
class LabelMap {
 public:
  LabelMap(int embed_dim, std::vector<std::string> labels);

  const std::vector<std::string> &labels() const { return labels_; }
  int label_id(const std::string &name) const;
  // Unit-norm target embedding for a new-space label, 1 x embed_dim.
  ad::Tensor target(int label) const;
  int predict(const ad::Tensor &embedding) const;

  ad::Tensor weights;  // embed_dim x L_new

 private:
  std::vector<std::string> labels_;
};

struct FittedLabelMap {
  LabelMap map;
  double test_accuracy = 0.0;
};

struct LabelMapConfig {
  int steps = 3000;
  int batch_size = 32;
  double learning_rate = 0.5;
  std::uint64_t seed = 1;
};

FittedLabelMap fit_label_map(const NgramClassifier &old_clf,
                             const corpus::LabeledCorpus &new_corpus,
                             const LabelMapConfig &cfg);

}  // namespace stsh::attr
