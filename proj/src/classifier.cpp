#include "stsh/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stsh::attr {
namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

int bucket_of(std::uint64_t h, int buckets) {
  return static_cast<int>(h % static_cast<std::uint64_t>(buckets));
}

}  // namespace

std::vector<int> ngram_features(const corpus::TokenSequence &tokens, int buckets) {
  std::vector<int> out;
  out.reserve(tokens.size() * 2);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.push_back(bucket_of(mix64(static_cast<std::uint64_t>(tokens[i]) + 1), buckets));
    if (i + 1 < tokens.size()) {
      const std::uint64_t pair =
          (static_cast<std::uint64_t>(tokens[i]) + 1) * 0x100000001b3ULL +
          static_cast<std::uint64_t>(tokens[i + 1]) + 1;
      out.push_back(bucket_of(mix64(pair), buckets));
    }
  }
  return out;
}

NgramClassifier::NgramClassifier(ClassifierConfig cfg, std::vector<std::string> labels)
    : cfg_(cfg), labels_(std::move(labels)) {
  if (labels_.size() < 2)
    throw std::invalid_argument("NgramClassifier: need at least 2 labels");
  std::mt19937_64 rng(cfg_.seed);
  table = ad::param(cfg_.ngram_buckets, cfg_.table_dim, 0.05, rng);
  w_hidden = ad::param(cfg_.table_dim, cfg_.hidden_dim, 0.2, rng);
  b_hidden = ad::param_zeros(1, cfg_.hidden_dim);
  score_layer = ad::param(cfg_.hidden_dim, num_labels(), 0.2, rng);
}

int NgramClassifier::label_id(const std::string &name) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("NgramClassifier: unknown label " + name);
}

ad::Tensor NgramClassifier::hidden(const corpus::TokenSequence &tokens) const {
  std::vector<const corpus::TokenSequence *> one{&tokens};
  return hidden_batch(one);
}

ad::Tensor NgramClassifier::hidden_batch(
    const std::vector<const corpus::TokenSequence *> &batch) const {
  std::vector<ad::Tensor> rows;
  rows.reserve(batch.size());
  for (const auto *tokens : batch) {
    if (tokens->empty()) throw std::invalid_argument("NgramClassifier: empty text");
    const auto feats = ngram_features(*tokens, cfg_.ngram_buckets);
    rows.push_back(ad::mean_rows(ad::embedding_rows(table, feats)));
  }
  const ad::Tensor pooled = ad::concat_rows(rows);
  return ad::tanh_op(ad::add_rowvec(ad::matmul(pooled, w_hidden), b_hidden));
}

ad::Tensor NgramClassifier::embed(const corpus::TokenSequence &tokens) const {
  return ad::l2_normalize(hidden(tokens));
}

ad::Tensor NgramClassifier::class_embedding(int label) const {
  if (label < 0 || label >= num_labels())
    throw std::invalid_argument("class_embedding: unknown label id " +
                                std::to_string(label));
  ad::Tensor col = ad::zeros(1, cfg_.hidden_dim);
  for (int i = 0; i < cfg_.hidden_dim; ++i)
    col->v[i] = score_layer->at(i, label);
  return ad::l2_normalize(col);
}

ad::Tensor NgramClassifier::class_embedding(const std::string &label) const {
  return class_embedding(label_id(label));
}

std::vector<double> NgramClassifier::classify(const corpus::TokenSequence &tokens) const {
  const ad::Tensor h = hidden(tokens);
  const ad::Tensor probs = ad::softmax_rows(ad::matmul(h, score_layer));
  return probs->v;
}

int NgramClassifier::predict(const corpus::TokenSequence &tokens) const {
  const ad::Tensor h = hidden(tokens);
  const ad::Tensor scores = ad::matmul(h, score_layer);
  return static_cast<int>(std::max_element(scores->v.begin(), scores->v.end()) -
                          scores->v.begin());
}

std::vector<ad::Tensor> NgramClassifier::params() const {
  return {table, w_hidden, b_hidden, score_layer};
}

std::vector<std::pair<std::string, ad::Tensor>> NgramClassifier::named_tensors() const {
  return {{"ngram_table", table},
          {"w_hidden", w_hidden},
          {"b_hidden", b_hidden},
          {"class_emb", score_layer}};
}

double accuracy(const NgramClassifier &clf, const std::vector<corpus::Example> &examples) {
  if (examples.empty()) throw std::invalid_argument("accuracy: empty example set");
  long hits = 0;
  for (const auto &ex : examples)
    if (clf.predict(ex.tokens) == ex.label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

TrainedClassifier train_classifier(const corpus::LabeledCorpus &data,
                                   const ClassifierConfig &cfg) {
  if (data.num_labels() < 2)
    throw std::invalid_argument("train_classifier: need at least 2 labels");
  NgramClassifier clf(cfg, data.labels);
  const auto params = clf.params();
  corpus::BalancedSampler sampler(data.train, data.num_labels(), cfg.seed ^ 0x5ba1a9ceULL);
  const ad::SgdConfig sgd{cfg.learning_rate, cfg.gradient_clip_norm};

  for (int step = 0; step < cfg.steps; ++step) {
    const auto batch = sampler.next_batch(cfg.batch_size);
    std::vector<const corpus::TokenSequence *> texts;
    std::vector<int> targets;
    texts.reserve(batch.size());
    for (const auto *ex : batch) {
      texts.push_back(&ex->tokens);
      targets.push_back(ex->label);
    }
    ad::Tape tape;
    ad::TapeScope scope(tape);
    const ad::Tensor h = clf.hidden_batch(texts);
    const ad::Tensor logits = ad::matmul(h, clf.score_layer);
    const ad::Tensor loss = ad::softmax_cross_entropy(logits, targets);
    tape.backward(loss);
    ad::sgd_step(params, sgd);
  }

  TrainedClassifier out{std::move(clf), 0.0};
  if (!data.valid.empty()) out.valid_accuracy = accuracy(out.classifier, data.valid);
  return out;
}

LabelMap::LabelMap(int embed_dim, std::vector<std::string> labels)
    : labels_(std::move(labels)) {
  weights = ad::param_zeros(embed_dim, static_cast<int>(labels_.size()));
}

int LabelMap::label_id(const std::string &name) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("LabelMap: unknown label " + name);
}

ad::Tensor LabelMap::target(int label) const {
  if (label < 0 || label >= static_cast<int>(labels_.size()))
    throw std::invalid_argument("LabelMap::target: unknown label id");
  ad::Tensor col = ad::zeros(1, weights->rows());
  for (int i = 0; i < weights->rows(); ++i) col->v[i] = weights->at(i, label);
  return ad::l2_normalize(col);
}

int LabelMap::predict(const ad::Tensor &embedding) const {
  const ad::Tensor scores = ad::matmul(embedding, weights);
  return static_cast<int>(std::max_element(scores->v.begin(), scores->v.end()) -
                          scores->v.begin());
}

FittedLabelMap fit_label_map(const NgramClassifier &old_clf,
                             const corpus::LabeledCorpus &new_corpus,
                             const LabelMapConfig &cfg) {
  if (new_corpus.train.empty())
    throw std::invalid_argument("fit_label_map: empty corpus");
  const int d = old_clf.config().hidden_dim;
  LabelMap map(d, new_corpus.labels);

  // Embeddings are fixed inputs; cache them once.
  auto embed_all = [&](const std::vector<corpus::Example> &exs) {
    std::vector<ad::Tensor> out;
    out.reserve(exs.size());
    for (const auto &ex : exs) out.push_back(old_clf.embed(ex.tokens));
    return out;
  };
  const auto train_emb = embed_all(new_corpus.train);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, new_corpus.train.size() - 1);
  const ad::SgdConfig sgd{cfg.learning_rate, 0.0};
  const std::vector<ad::Tensor> params{map.weights};

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<ad::Tensor> rows;
    std::vector<int> targets;
    for (int i = 0; i < cfg.batch_size; ++i) {
      const std::size_t idx = pick(rng);
      rows.push_back(train_emb[idx]);
      targets.push_back(new_corpus.train[idx].label);
    }
    ad::Tape tape;
    ad::TapeScope scope(tape);
    const ad::Tensor x = ad::concat_rows(rows);
    const ad::Tensor loss =
        ad::softmax_cross_entropy(ad::matmul(x, map.weights), targets);
    tape.backward(loss);
    ad::sgd_step(params, sgd);
  }

  FittedLabelMap out{std::move(map), 0.0};
  const auto &eval_set = new_corpus.test.empty() ? new_corpus.train : new_corpus.test;
  long hits = 0;
  for (const auto &ex : eval_set)
    if (out.map.predict(old_clf.embed(ex.tokens)) == ex.label) ++hits;
  out.test_accuracy = static_cast<double>(hits) / static_cast<double>(eval_set.size());
  return out;
}

}  // namespace stsh::attr
