#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "stsh/classifier.hpp"
#include "stsh/corpus.hpp"
#include "stsh/tensor.hpp"

namespace stsh::model {

struct LstmCell {
  ad::Tensor wx;  // input_dim x 4*hidden
  ad::Tensor wh;  // hidden x 4*hidden
  ad::Tensor b;   // 1 x 4*hidden
  int hidden = 0;

  void init(int input_dim, int hidden_dim, std::mt19937_64 &rng);
  // Gate order i, f, g, o. Returns (h, c).
  std::pair<ad::Tensor, ad::Tensor> step(const ad::Tensor &x, const ad::Tensor &h_prev,
                                         const ad::Tensor &c_prev) const;
  // Rows with mask 0 keep their previous state (padding positions).
  std::pair<ad::Tensor, ad::Tensor> step_masked(const ad::Tensor &x,
                                                const ad::Tensor &h_prev,
                                                const ad::Tensor &c_prev,
                                                const ad::Tensor &mask,
                                                const ad::Tensor &inv_mask) const;
  void collect_params(std::vector<ad::Tensor> &out) const;
};

struct ModelConfig {
  int d_h = 64;              // hidden/embedding width; the paper preset uses 512
  int d_a = 8;               // attribute embedding dimension
  int d_att = 32;            // additive-attention width
  int max_len = 40;          // hard cap on encoder input length
};

struct PaddedBatch {
  std::vector<corpus::TokenSequence> seqs;
  int max_len = 0;
  std::vector<int> ids_at(int t) const;          // PAD beyond each length
  std::vector<double> mask_at(int t) const;      // 1 real, 0 pad
};
PaddedBatch pad_batch(const std::vector<const corpus::TokenSequence *> &seqs);

struct Encoded {
  std::vector<ad::Tensor> states;       // per position, B x d_h
  std::vector<std::vector<double>> mask;  // [T][B], 1 real / 0 pad
  int batch = 0;
};

struct DecodeResult {
  std::vector<corpus::TokenSequence> seqs;
  std::vector<bool> truncated;
};

class TransferModel {
 public:
  struct DecState {
    ad::Tensor h[2], c[2];
  };

  TransferModel(ModelConfig cfg, corpus::Vocabulary vocab,
                std::vector<std::string> labels, std::uint64_t seed);

  const ModelConfig &config() const { return cfg_; }
  const corpus::Vocabulary &vocab() const { return vocab_; }
  corpus::Vocabulary &mutable_vocab() { return vocab_; }
  const std::vector<std::string> &labels() const { return labels_; }

  Encoded encode(const std::vector<const corpus::TokenSequence *> &batch) const;

  // y = W * y_d; rows of y_d must be unit norm (the scaling contract).
  ad::Tensor project_attribute(const ad::Tensor &y_d) const;

  // Batched greedy decoding, no gradients. y is B x d_h.
  // logit_jitter perturbs decoder logits during generation only (probe hook).
  DecodeResult greedy_decode(const Encoded &enc, const ad::Tensor &y,
                             int max_decode_len, double logit_jitter = 0.0) const;

  // Mean token-level NLL of teacher-forced reconstruction of `targets`,
  // conditioned on attribute rows y_d (B x d_a, unit-norm rows).
  ad::Tensor teacher_forced_nll(const Encoded &enc, const ad::Tensor &y_d,
                                const std::vector<const corpus::TokenSequence *> &targets) const;

  corpus::TokenSequence transfer(const corpus::TokenSequence &x,
                                 const ad::Tensor &target_y_d,
                                 bool *truncated = nullptr) const;

  // Adds embedding/output rows for tokens added to the vocabulary since
  // construction (fine-tuning on a corpus with new tokens).
  void extend_vocab_params(std::mt19937_64 &rng);

  std::vector<ad::Tensor> params() const;
  std::vector<std::pair<std::string, ad::Tensor>> named_tensors() const;

  int vocab_size_built() const { return built_vocab_size_; }

  ad::Tensor enc_emb, dec_emb;                  // V x d_h
  LstmCell enc_fwd[2], enc_bwd[2];              // hidden d_h/2 each direction
  LstmCell dec[2];                              // hidden d_h
  ad::Tensor att_enc, att_dec, att_v;           // additive attention
  ad::Tensor w_out, b_out;                      // (2*d_h) x V, 1 x V
  ad::Tensor attr_proj;                         // d_a x d_h (W with d_h*d_a entries)
  // Frozen unit-norm class embeddings per label, kept with the model so a
  // transfer checkpoint is self-contained for inference. Not trained.
  ad::Tensor label_targets;                     // L x d_a

  ad::Tensor label_target(int label) const;     // 1 x d_a row
  ad::Tensor label_target(const std::string &label) const;
  void set_label_targets(const attr::NgramClassifier &clf);
  void set_labels(std::vector<std::string> labels) { labels_ = std::move(labels); }

 private:
  ModelConfig cfg_;
  corpus::Vocabulary vocab_;
  std::vector<std::string> labels_;
  int built_vocab_size_ = 0;
};

int max_decode_len_for(int input_len);  // 2 * input_len + 5

struct TrainConfig {
  double lambda = 0.5;            // final mixture of L_AE and L_BT
  // lambda stays at lambda_start for the first lambda_hold_frac of the mixed
  // phase, then ramps linearly down to `lambda`: reconstruction dominates
  // while the model learns to rewrite, style pressure grows afterwards.
  double lambda_start = 0.8;
  double lambda_hold_frac = 0.4;
  int steps = 2000;
  int warmup_ae_steps = 0;        // pure-denoising phase before the mixed phase
  int batch_size = 32;
  corpus::NoiseConfig noise;
  // When >= 0, word drop ramps linearly from noise.word_drop_prob to this
  // value across the mixed phase, so corruption strengthens with style
  // pressure; negative keeps it constant.
  double word_drop_final = -1.0;
  ad::SgdConfig sgd{0.2, 5.0};
  std::uint64_t seed = 1;
  bool bt_exclude_source_label = true;
  int log_every = 100;
  std::vector<double> checkpoint_fractions{0.25, 0.5, 0.75, 1.0};
};

struct BatchLosses {
  ad::Tensor total, ae, bt;
};

// One Eq.-style combined loss over a batch: lambda * L_AE + (1 - lambda) * L_BT.
// Attribute inputs are computed with the (frozen) classifier outside the tape.
class TransferTrainer {
 public:
  TransferTrainer(TransferModel &model, const corpus::LabeledCorpus &data,
                  const attr::NgramClassifier &clf, const TrainConfig &cfg,
                  const std::vector<int> &exclude_labels = {});

  // Losses for one sampled batch; records on the active tape.
  BatchLosses batch_losses(double lambda);

  struct Snapshot {
    int step = 0;
    std::vector<std::pair<std::string, std::vector<double>>> tensors;
  };

  // Full training loop; returns parameter snapshots at checkpoint fractions.
  // Aborts on non-finite loss, restoring the last good snapshot.
  std::vector<Snapshot> run(std::ostream *metrics_log = nullptr);

  static void restore(TransferModel &model, const Snapshot &snap);
  static Snapshot snapshot(const TransferModel &model, int step);

  // Perturbs decoder logits during back-translation generation only; the
  // detachment probe checks that an infinitesimal value leaves gradients
  // bit-identical.
  double generation_jitter = 0.0;

 private:
  struct Prepared;
  Prepared prepare_batch();

  TransferModel &model_;
  const corpus::LabeledCorpus &data_;
  const attr::NgramClassifier &clf_;
  TrainConfig cfg_;
  std::vector<corpus::Example> train_pool_;   // exclusions applied
  std::vector<std::vector<int>> bt_pool_;     // train-pool indices per label
  std::vector<corpus::Example> sampler_store_;  // train_pool_ with compact labels
  std::unique_ptr<corpus::BalancedSampler> sampler_;
  std::vector<ad::Tensor> class_emb_rows_;    // cached per-label unit-norm rows
  std::vector<std::vector<double>> embed_cache_;  // per train-pool index
  std::vector<int> active_labels_;
  corpus::NoiseConfig noise_now_;
  double current_lambda_ = 0.5;
  std::mt19937_64 rng_;
};

void fine_tune(TransferModel &model, const corpus::LabeledCorpus &new_corpus,
               const attr::NgramClassifier &new_clf, const TrainConfig &cfg,
               std::ostream *metrics_log = nullptr);

}  // namespace stsh::model
