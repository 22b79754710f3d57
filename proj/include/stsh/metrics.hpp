#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stsh/classifier.hpp"
#include "stsh/corpus.hpp"
#include "stsh/seq2seq.hpp"
#include "stsh/tensor.hpp"

namespace stsh::eval {

// Sentence BLEU-4, uniform weights, brevity penalty. Smoothing: clipped-match
// numerator and denominator get +1 for n >= 2; unigram precision unsmoothed.
// Empty candidate scores 0. Range [0, 100].
double sentence_bleu(const corpus::TokenSequence &candidate,
                     const corpus::TokenSequence &reference);

// Mean of per-pair sentence BLEU over aligned lists.
double self_bleu(const std::vector<corpus::TokenSequence> &generations,
                 const std::vector<corpus::TokenSequence> &sources);

struct LmConfig {
  int d_h = 64;
  int steps = 2000;
  int batch_size = 32;
  double learning_rate = 0.3;
  double gradient_clip_norm = 5.0;
  std::uint64_t seed = 1;
};

// 2-layer recurrent next-token model over a fixed vocabulary.
class LanguageModel {
 public:
  LanguageModel(int vocab_size, int d_h, std::uint64_t seed);
  static LanguageModel uniform(int vocab_size);  // zero weights, uniform p

  int vocab_size() const { return vocab_size_; }
  // Per-token -log p summed over tokens + EOS; tokens must be in-vocab ids.
  double sequence_nll(const corpus::TokenSequence &seq, int *token_count) const;

  std::vector<ad::Tensor> params() const;
  std::vector<std::pair<std::string, ad::Tensor>> named_tensors() const;

  ad::Tensor emb, w_out, b_out;
  model::LstmCell cells[2];

 private:
  int vocab_size_ = 0;
  int d_h_ = 0;
};

LanguageModel train_lm(const std::vector<corpus::Example> &train, int vocab_size,
                       const LmConfig &cfg);

// exp(mean over all predicted tokens, EOS included, of -log p).
double perplexity(const LanguageModel &lm,
                  const std::vector<corpus::TokenSequence> &sequences);

// (target_pct, source_pct): percentage of generations whose argmax class is
// the target (resp. source) label. Empty generations classify as a lone UNK.
std::pair<double, double> attribute_control(
    const attr::NgramClassifier &eval_clf,
    const std::vector<corpus::TokenSequence> &generations, int target_label,
    int source_label);

struct EvalRow {
  std::string name;
  double target_pct = 0.0;
  double source_pct = 0.0;
  double self_bleu = 0.0;
  double ppl = 0.0;
  long n = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;        // baselines first, then model rows
  std::vector<EvalRow> directions;  // per-direction detail of the last model row
  std::string to_tsv() const;       // per-direction table + AVG footer
  static std::string rows_tsv(const std::vector<EvalRow> &rows);
};

EvalRow average_rows(const std::vector<EvalRow> &rows, const std::string &name);

struct DirectionEvalOptions {
  int cap = 900;                 // source sequences per source label
  std::vector<int> target_labels;  // empty = all labels in the eval space
  std::vector<int> source_labels;  // empty = all labels
  std::uint64_t sample_seed = 7;   // for the target-attribute-sample baseline
};

// Batched generation callback: given source sequences (eval-vocab tokens) of
// one source label and a target label, produce aligned generations in
// eval-vocab tokens.
using TransferFn = std::function<std::vector<corpus::TokenSequence>(
    const std::vector<corpus::TokenSequence> &, int source_label, int target_label)>;

// Runs every ordered (source, target) pair with source != target over the test
// split, computing attribute control, self-BLEU, and perplexity per direction.
EvalReport evaluate_directions(const TransferFn &transfer,
                               const attr::NgramClassifier &eval_clf,
                               const LanguageModel &lm,
                               const corpus::LabeledCorpus &data,
                               const DirectionEvalOptions &opts,
                               const std::string &row_name);

// The two trivial baseline rows (Identity, TargetAttrSample).
std::vector<EvalRow> baseline_rows(const attr::NgramClassifier &eval_clf,
                                   const LanguageModel &lm,
                                   const corpus::LabeledCorpus &data,
                                   const DirectionEvalOptions &opts);

// A model's transfer wrapped as a TransferFn. Sequences cross vocabularies by
// detokenizing with model_vocab and retokenizing with eval_vocab.
TransferFn model_transfer_fn(const model::TransferModel &model,
                             const corpus::Vocabulary &eval_vocab,
                             const std::function<ad::Tensor(int)> &target_embedding);

}  // namespace stsh::eval
