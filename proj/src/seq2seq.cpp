#include "stsh/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace stsh::model {
namespace {

using ad::Tensor;

Tensor const_tensor(int rows, int cols, const std::vector<double> &values) {
  return ad::from_values(rows, cols, std::vector<double>(values));
}

// Deterministic jitter in [-1, 1] for the generation-detachment probe.
double jitter_hash(int step, int row, int col) {
  std::uint64_t x = 0x9e3779b97f4a7c15ULL * (step + 1) + 0x85ebca77ULL * (row + 1) +
                    0xc2b2ae3dULL * (col + 1);
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  return static_cast<double>(x % 2000001) / 1000000.0 - 1.0;
}

}  // namespace

void LstmCell::init(int input_dim, int hidden_dim, std::mt19937_64 &rng) {
  hidden = hidden_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  wx = ad::param(input_dim, 4 * hidden_dim, scale, rng);
  wh = ad::param(hidden_dim, 4 * hidden_dim, scale, rng);
  b = ad::param_zeros(1, 4 * hidden_dim);
  // forget-gate bias 1.0
  for (int j = hidden_dim; j < 2 * hidden_dim; ++j) b->v[j] = 1.0;
}

std::pair<Tensor, Tensor> LstmCell::step(const Tensor &x, const Tensor &h_prev,
                                         const Tensor &c_prev) const {
  const Tensor gates = ad::add_rowvec(
      ad::add(ad::matmul(x, wx), ad::matmul(h_prev, wh)), b);
  const Tensor i = ad::sigmoid(ad::slice_cols(gates, 0, hidden));
  const Tensor f = ad::sigmoid(ad::slice_cols(gates, hidden, hidden));
  const Tensor g = ad::tanh_op(ad::slice_cols(gates, 2 * hidden, hidden));
  const Tensor o = ad::sigmoid(ad::slice_cols(gates, 3 * hidden, hidden));
  const Tensor c = ad::add(ad::mul(f, c_prev), ad::mul(i, g));
  const Tensor h = ad::mul(o, ad::tanh_op(c));
  return {h, c};
}

std::pair<Tensor, Tensor> LstmCell::step_masked(const Tensor &x, const Tensor &h_prev,
                                                const Tensor &c_prev, const Tensor &mask,
                                                const Tensor &inv_mask) const {
  auto [h, c] = step(x, h_prev, c_prev);
  const Tensor h_blend = ad::add(ad::mul_col(h, mask), ad::mul_col(h_prev, inv_mask));
  const Tensor c_blend = ad::add(ad::mul_col(c, mask), ad::mul_col(c_prev, inv_mask));
  return {h_blend, c_blend};
}

void LstmCell::collect_params(std::vector<Tensor> &out) const {
  out.push_back(wx);
  out.push_back(wh);
  out.push_back(b);
}

std::vector<int> PaddedBatch::ids_at(int t) const {
  std::vector<int> out(seqs.size(), corpus::kPad);
  for (std::size_t i = 0; i < seqs.size(); ++i)
    if (t < static_cast<int>(seqs[i].size())) out[i] = seqs[i][t];
  return out;
}

std::vector<double> PaddedBatch::mask_at(int t) const {
  std::vector<double> out(seqs.size(), 0.0);
  for (std::size_t i = 0; i < seqs.size(); ++i)
    if (t < static_cast<int>(seqs[i].size())) out[i] = 1.0;
  return out;
}

PaddedBatch pad_batch(const std::vector<const corpus::TokenSequence *> &seqs) {
  PaddedBatch out;
  for (const auto *s : seqs) {
    out.seqs.push_back(*s);
    out.max_len = std::max(out.max_len, static_cast<int>(s->size()));
  }
  return out;
}

int max_decode_len_for(int input_len) { return 2 * input_len + 5; }

TransferModel::TransferModel(ModelConfig cfg, corpus::Vocabulary vocab,
                             std::vector<std::string> labels, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)), labels_(std::move(labels)) {
  if (cfg_.d_h % 2 != 0)
    throw std::invalid_argument("TransferModel: d_h must be even");
  std::mt19937_64 rng(seed);
  const int V = vocab_.size();
  built_vocab_size_ = V;
  const double es = 0.5;
  enc_emb = ad::param(V, cfg_.d_h, es, rng);
  dec_emb = ad::param(V, cfg_.d_h, es, rng);
  const int half = cfg_.d_h / 2;
  enc_fwd[0].init(cfg_.d_h, half, rng);
  enc_fwd[1].init(half, half, rng);
  enc_bwd[0].init(cfg_.d_h, half, rng);
  enc_bwd[1].init(half, half, rng);
  dec[0].init(cfg_.d_h, cfg_.d_h, rng);
  dec[1].init(cfg_.d_h, cfg_.d_h, rng);
  const double as = 1.0 / std::sqrt(static_cast<double>(cfg_.d_att));
  att_enc = ad::param(cfg_.d_h, cfg_.d_att, as, rng);
  att_dec = ad::param(cfg_.d_h, cfg_.d_att, as, rng);
  att_v = ad::param(cfg_.d_att, 1, as, rng);
  w_out = ad::param(2 * cfg_.d_h, V, 0.3, rng);
  b_out = ad::param_zeros(1, V);
  attr_proj = ad::param(cfg_.d_a, cfg_.d_h, 0.3, rng);
  label_targets = ad::zeros(static_cast<int>(labels_.size()), cfg_.d_a);
}

Tensor TransferModel::label_target(int label) const {
  if (label < 0 || label >= static_cast<int>(labels_.size()))
    throw std::invalid_argument("label_target: label out of range");
  std::vector<double> row(cfg_.d_a);
  for (int j = 0; j < cfg_.d_a; ++j) row[j] = label_targets->at(label, j);
  return ad::from_values(1, cfg_.d_a, std::move(row));
}

Tensor TransferModel::label_target(const std::string &label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) return label_target(static_cast<int>(i));
  throw std::invalid_argument("label_target: unknown label " + label);
}

void TransferModel::set_label_targets(const attr::NgramClassifier &clf) {
  if (label_targets->rows() != static_cast<int>(labels_.size()))
    label_targets = ad::zeros(static_cast<int>(labels_.size()), cfg_.d_a);
  for (std::size_t l = 0; l < labels_.size(); ++l) {
    const Tensor row = clf.class_embedding(static_cast<int>(l));
    for (int j = 0; j < cfg_.d_a; ++j) label_targets->at(static_cast<int>(l), j) = row->v[j];
  }
}

Encoded TransferModel::encode(
    const std::vector<const corpus::TokenSequence *> &batch) const {
  if (batch.empty()) throw std::invalid_argument("encode: empty batch");
  for (const auto *s : batch) {
    if (s->empty()) throw std::invalid_argument("encode: empty input sequence");
    if (static_cast<int>(s->size()) > cfg_.max_len)
      throw std::invalid_argument("encode: input longer than max_len");
  }
  const PaddedBatch padded = pad_batch(batch);
  const int B = static_cast<int>(batch.size());
  const int T = padded.max_len;
  const int half = cfg_.d_h / 2;

  std::vector<Tensor> inputs(T), masks(T), inv_masks(T);
  Encoded out;
  out.batch = B;
  for (int t = 0; t < T; ++t) {
    inputs[t] = ad::embedding_rows(enc_emb, padded.ids_at(t));
    auto m = padded.mask_at(t);
    out.mask.push_back(m);
    std::vector<double> inv(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) inv[i] = 1.0 - m[i];
    masks[t] = const_tensor(B, 1, m);
    inv_masks[t] = const_tensor(B, 1, inv);
  }

  auto run_dir = [&](const LstmCell *cells, bool reverse) {
    std::vector<Tensor> layer_in = inputs;
    for (int layer = 0; layer < 2; ++layer) {
      std::vector<Tensor> layer_out(T);
      Tensor h = ad::zeros(B, half), c = ad::zeros(B, half);
      for (int s = 0; s < T; ++s) {
        const int t = reverse ? T - 1 - s : s;
        std::tie(h, c) = cells[layer].step_masked(layer_in[t], h, c, masks[t], inv_masks[t]);
        layer_out[t] = h;
      }
      layer_in = std::move(layer_out);
    }
    return layer_in;
  };

  const auto fwd = run_dir(enc_fwd, false);
  const auto bwd = run_dir(enc_bwd, true);
  for (int t = 0; t < T; ++t) {
    Tensor parts[2] = {fwd[t], bwd[t]};
    out.states.push_back(ad::concat_cols(parts));
  }
  return out;
}

Tensor TransferModel::project_attribute(const Tensor &y_d) const {
  if (y_d->cols() != cfg_.d_a)
    throw std::invalid_argument("project_attribute: expected width d_a");
  for (int i = 0; i < y_d->rows(); ++i) {
    double sq = 0.0;
    for (int j = 0; j < cfg_.d_a; ++j) sq += y_d->at(i, j) * y_d->at(i, j);
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6)
      throw std::invalid_argument("project_attribute: attribute embedding not unit norm");
  }
  return ad::matmul(y_d, attr_proj);
}

namespace {

// One decoder step shared by teacher forcing and greedy decoding.
Tensor decoder_step(const TransferModel &m, const Tensor &x,
                    TransferModel::DecState &state, const Encoded &enc,
                    const std::vector<Tensor> &att_keys, const Tensor &att_bias) {
  std::tie(state.h[0], state.c[0]) = m.dec[0].step(x, state.h[0], state.c[0]);
  std::tie(state.h[1], state.c[1]) = m.dec[1].step(state.h[0], state.h[1], state.c[1]);
  const Tensor q = ad::matmul(state.h[1], m.att_dec);
  std::vector<Tensor> score_cols;
  score_cols.reserve(att_keys.size());
  for (const auto &k : att_keys)
    score_cols.push_back(ad::matmul(ad::tanh_op(ad::add(k, q)), m.att_v));
  Tensor scores = ad::concat_cols(score_cols);
  scores = ad::add(scores, att_bias);
  const Tensor alpha = ad::softmax_rows(scores);
  Tensor ctx;
  for (std::size_t i = 0; i < enc.states.size(); ++i) {
    const Tensor term = ad::mul_col(enc.states[i],
                                    ad::slice_cols(alpha, static_cast<int>(i), 1));
    ctx = i == 0 ? term : ad::add(ctx, term);
  }
  Tensor feats[2] = {state.h[1], ctx};
  return ad::add_rowvec(ad::matmul(ad::concat_cols(feats), m.w_out), m.b_out);
}

std::vector<Tensor> attention_keys(const TransferModel &m, const Encoded &enc) {
  std::vector<Tensor> keys;
  keys.reserve(enc.states.size());
  for (const auto &z : enc.states) keys.push_back(ad::matmul(z, m.att_enc));
  return keys;
}

Tensor attention_bias(const Encoded &enc) {
  const int B = enc.batch;
  const int T = static_cast<int>(enc.states.size());
  std::vector<double> bias(static_cast<std::size_t>(B) * T, 0.0);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < B; ++i)
      if (enc.mask[t][i] == 0.0) bias[static_cast<std::size_t>(i) * T + t] = -1e9;
  return ad::from_values(B, T, std::move(bias));
}

}  // namespace

DecodeResult TransferModel::greedy_decode(const Encoded &enc, const Tensor &y,
                                          int max_decode_len, double logit_jitter) const {
  if (y->cols() != cfg_.d_h)
    throw std::invalid_argument("greedy_decode: conditioning width must be d_h");
  if (ad::Tape::active() != nullptr)
    throw std::logic_error("greedy_decode: must not run under an active tape");
  const int B = enc.batch;
  DecState state;
  for (int l = 0; l < 2; ++l) {
    state.h[l] = ad::zeros(B, cfg_.d_h);
    state.c[l] = ad::zeros(B, cfg_.d_h);
  }
  const auto keys = attention_keys(*this, enc);
  const Tensor bias = attention_bias(enc);

  DecodeResult out;
  out.seqs.assign(B, {});
  out.truncated.assign(B, false);
  std::vector<bool> done(B, false);
  Tensor x = y;
  for (int step = 0; step < max_decode_len; ++step) {
    Tensor logits = decoder_step(*this, x, state, enc, keys, bias);
    if (logit_jitter != 0.0)
      for (int i = 0; i < logits->rows(); ++i)
        for (int j = 0; j < logits->cols(); ++j)
          logits->at(i, j) += logit_jitter * jitter_hash(step, i, j);
    std::vector<int> next(B, corpus::kPad);
    bool all_done = true;
    for (int i = 0; i < B; ++i) {
      if (done[i]) continue;
      const double *row = logits->v.data() + static_cast<std::size_t>(i) * logits->cols();
      int best = 0;
      for (int j = 1; j < logits->cols(); ++j)
        if (row[j] > row[best]) best = j;
      if (best == corpus::kEos) {
        done[i] = true;
      } else {
        out.seqs[i].push_back(best);
        next[i] = best;
        all_done = false;
      }
    }
    if (all_done) break;
    x = ad::embedding_rows(dec_emb, next);
  }
  for (int i = 0; i < B; ++i)
    if (!done[i]) out.truncated[i] = true;
  return out;
}

Tensor TransferModel::teacher_forced_nll(
    const Encoded &enc, const Tensor &y_d,
    const std::vector<const corpus::TokenSequence *> &targets) const {
  const int B = static_cast<int>(targets.size());
  if (y_d->rows() != B)
    throw std::invalid_argument("teacher_forced_nll: one attribute row per example");
  int T = 0;  // predicted positions: each token plus EOS
  for (const auto *s : targets) T = std::max(T, static_cast<int>(s->size()) + 1);

  DecState state;
  for (int l = 0; l < 2; ++l) {
    state.h[l] = ad::zeros(B, cfg_.d_h);
    state.c[l] = ad::zeros(B, cfg_.d_h);
  }
  const auto keys = attention_keys(*this, enc);
  const Tensor bias = attention_bias(enc);

  Tensor x = project_attribute(y_d);
  Tensor total;
  double total_count = 0.0;
  std::vector<Tensor> step_losses;
  std::vector<double> step_counts;
  for (int t = 0; t < T; ++t) {
    const Tensor logits = decoder_step(*this, x, state, enc, keys, bias);
    std::vector<int> tgt(B, corpus::kPad);
    std::vector<double> mask(B, 0.0);
    double count = 0.0;
    for (int i = 0; i < B; ++i) {
      const int len = static_cast<int>(targets[i]->size());
      if (t < len) {
        tgt[i] = (*targets[i])[t];
        mask[i] = 1.0;
      } else if (t == len) {
        tgt[i] = corpus::kEos;
        mask[i] = 1.0;
      }
      count += mask[i];
    }
    if (count > 0.0) {
      step_losses.push_back(ad::softmax_cross_entropy(logits, tgt, mask));
      step_counts.push_back(count);
      total_count += count;
    }
    if (t + 1 < T) {
      // teacher forcing: feed the clean target token
      std::vector<int> feed(B, corpus::kPad);
      for (int i = 0; i < B; ++i)
        if (t < static_cast<int>(targets[i]->size())) feed[i] = (*targets[i])[t];
      x = ad::embedding_rows(dec_emb, feed);
    }
  }
  for (std::size_t s = 0; s < step_losses.size(); ++s) {
    const Tensor term = ad::scale(step_losses[s], step_counts[s] / total_count);
    total = s == 0 ? term : ad::add(total, term);
  }
  return total;
}

corpus::TokenSequence TransferModel::transfer(const corpus::TokenSequence &x,
                                              const Tensor &target_y_d,
                                              bool *truncated) const {
  std::vector<const corpus::TokenSequence *> one{&x};
  const Encoded enc = encode(one);
  const Tensor y = project_attribute(target_y_d);
  const DecodeResult res =
      greedy_decode(enc, y, max_decode_len_for(static_cast<int>(x.size())));
  if (truncated != nullptr) *truncated = res.truncated[0];
  return res.seqs[0];
}

void TransferModel::extend_vocab_params(std::mt19937_64 &rng) {
  const int V_new = vocab_.size();
  if (V_new == built_vocab_size_) return;
  const int added = V_new - built_vocab_size_;
  std::uniform_real_distribution<double> dist(-0.01, 0.01);
  auto extend_rows = [&](Tensor &t) {
    Tensor bigger = ad::zeros(V_new, t->cols());
    std::copy(t->v.begin(), t->v.end(), bigger->v.begin());
    for (std::size_t i = t->v.size(); i < bigger->v.size(); ++i) bigger->v[i] = dist(rng);
    bigger->requires_grad = true;
    ad::ensure_grad(bigger);
    t = bigger;
  };
  extend_rows(enc_emb);
  extend_rows(dec_emb);
  // output layer gains one column per new token
  Tensor w_new = ad::zeros(w_out->rows(), V_new);
  for (int i = 0; i < w_out->rows(); ++i) {
    for (int j = 0; j < built_vocab_size_; ++j) w_new->at(i, j) = w_out->at(i, j);
    for (int j = built_vocab_size_; j < V_new; ++j) w_new->at(i, j) = dist(rng);
  }
  w_new->requires_grad = true;
  ad::ensure_grad(w_new);
  w_out = w_new;
  Tensor b_new = ad::zeros(1, V_new);
  std::copy(b_out->v.begin(), b_out->v.end(), b_new->v.begin());
  b_new->requires_grad = true;
  ad::ensure_grad(b_new);
  b_out = b_new;
  built_vocab_size_ = V_new;
  (void)added;
}

std::vector<Tensor> TransferModel::params() const {
  std::vector<Tensor> out{enc_emb, dec_emb};
  for (const auto &c : enc_fwd) c.collect_params(out);
  for (const auto &c : enc_bwd) c.collect_params(out);
  for (const auto &c : dec) c.collect_params(out);
  out.push_back(att_enc);
  out.push_back(att_dec);
  out.push_back(att_v);
  out.push_back(w_out);
  out.push_back(b_out);
  out.push_back(attr_proj);
  return out;
}

std::vector<std::pair<std::string, Tensor>> TransferModel::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("enc_emb", enc_emb);
  out.emplace_back("dec_emb", dec_emb);
  const char *dirs[2] = {"enc_fwd", "enc_bwd"};
  for (int d = 0; d < 2; ++d) {
    const LstmCell *cells = d == 0 ? enc_fwd : enc_bwd;
    for (int l = 0; l < 2; ++l) {
      const std::string base = std::string(dirs[d]) + std::to_string(l) + "_";
      out.emplace_back(base + "wx", cells[l].wx);
      out.emplace_back(base + "wh", cells[l].wh);
      out.emplace_back(base + "b", cells[l].b);
    }
  }
  for (int l = 0; l < 2; ++l) {
    const std::string base = "dec" + std::to_string(l) + "_";
    out.emplace_back(base + "wx", dec[l].wx);
    out.emplace_back(base + "wh", dec[l].wh);
    out.emplace_back(base + "b", dec[l].b);
  }
  out.emplace_back("att_enc", att_enc);
  out.emplace_back("att_dec", att_dec);
  out.emplace_back("att_v", att_v);
  out.emplace_back("w_out", w_out);
  out.emplace_back("b_out", b_out);
  out.emplace_back("attr_proj", attr_proj);
  out.emplace_back("label_targets", label_targets);
  return out;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct TransferTrainer::Prepared {
  std::vector<const corpus::TokenSequence *> sources;
  std::vector<corpus::TokenSequence> corrupted_store;
  std::vector<const corpus::TokenSequence *> corrupted;
  std::vector<corpus::TokenSequence> generated_store;
  std::vector<const corpus::TokenSequence *> generated;
  Tensor y_src;   // B x d_a
};

TransferTrainer::TransferTrainer(TransferModel &model, const corpus::LabeledCorpus &data,
                                 const attr::NgramClassifier &clf, const TrainConfig &cfg,
                                 const std::vector<int> &exclude_labels)
    : model_(model), data_(data), clf_(clf), cfg_(cfg), noise_now_(cfg.noise),
      rng_(cfg.seed) {
  if (clf_.config().hidden_dim != model_.config().d_a)
    throw std::invalid_argument("TransferTrainer: classifier embedding dim != d_a");
  std::vector<bool> excluded(data.num_labels(), false);
  for (int l : exclude_labels) {
    if (l < 0 || l >= data.num_labels())
      throw std::invalid_argument("TransferTrainer: bad excluded label");
    excluded[l] = true;
  }
  for (int l = 0; l < data.num_labels(); ++l)
    if (!excluded[l]) active_labels_.push_back(l);
  if (active_labels_.size() < 2)
    throw std::invalid_argument("TransferTrainer: need at least 2 active labels");

  // the transfer-training pool provably contains no excluded-label example
  bt_pool_.resize(data.num_labels());
  for (const auto &ex : data.train) {
    if (excluded[ex.label]) continue;
    bt_pool_[ex.label].push_back(static_cast<int>(train_pool_.size()));
    train_pool_.push_back(ex);
  }
  for (int l : active_labels_)
    if (bt_pool_[l].empty())
      throw std::invalid_argument("TransferTrainer: active label has no examples");

  // remap labels to a compact range for the balanced sampler only
  std::vector<int> compact(data.num_labels(), -1);
  for (std::size_t i = 0; i < active_labels_.size(); ++i)
    compact[active_labels_[i]] = static_cast<int>(i);
  std::vector<corpus::Example> remapped = train_pool_;
  for (auto &ex : remapped) ex.label = compact[ex.label];
  sampler_store_ = std::move(remapped);
  sampler_ = std::make_unique<corpus::BalancedSampler>(
      sampler_store_, static_cast<int>(active_labels_.size()), cfg.seed ^ 0xba1a9cedULL);

  class_emb_rows_.resize(data.num_labels());
  for (int l = 0; l < data.num_labels(); ++l)
    class_emb_rows_[l] = clf_.class_embedding(l);
  embed_cache_.resize(train_pool_.size());
}

TransferTrainer::Prepared TransferTrainer::prepare_batch() {
  Prepared prep;
  const int B = cfg_.batch_size;
  std::vector<int> src_labels(B);
  prep.corrupted_store.reserve(B);
  prep.generated_store.reserve(B);

  std::vector<const corpus::Example *> batch;
  for (int i = 0; i < B; ++i) {
    const corpus::Example &remapped = sampler_->next();
    batch.push_back(&remapped);
  }

  std::vector<double> y_src_vals;
  for (int i = 0; i < B; ++i) {
    const int orig_label = active_labels_[batch[i]->label];
    src_labels[i] = orig_label;
    prep.sources.push_back(&batch[i]->tokens);
    prep.corrupted_store.push_back(corpus::corrupt(batch[i]->tokens, noise_now_, rng_));
    const auto &row = class_emb_rows_[orig_label];
    y_src_vals.insert(y_src_vals.end(), row->v.begin(), row->v.end());
  }
  for (auto &c : prep.corrupted_store) prep.corrupted.push_back(&c);
  prep.y_src = ad::from_values(B, model_.config().d_a, std::move(y_src_vals));

  if (current_lambda_ < 1.0) {
    // sample per-example target embeddings, excluding the source label
    std::vector<double> y_bt_vals;
    int max_src_len = 0;
    for (int i = 0; i < B; ++i) {
      int tl;
      if (cfg_.bt_exclude_source_label) {
        std::vector<int> others;
        for (int l : active_labels_)
          if (l != src_labels[i]) others.push_back(l);
        std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
        tl = others[pick(rng_)];
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, active_labels_.size() - 1);
        tl = active_labels_[pick(rng_)];
      }
      const auto &pool = bt_pool_[tl];
      std::uniform_int_distribution<std::size_t> pex(0, pool.size() - 1);
      const int idx = pool[pex(rng_)];
      if (embed_cache_[idx].empty())
        embed_cache_[idx] = clf_.embed(train_pool_[idx].tokens)->v;
      y_bt_vals.insert(y_bt_vals.end(), embed_cache_[idx].begin(), embed_cache_[idx].end());
      max_src_len = std::max(max_src_len, static_cast<int>(prep.sources[i]->size()));
    }
    const Tensor y_bt_d = ad::from_values(B, model_.config().d_a, std::move(y_bt_vals));
    // generation is detached: nothing here runs under a tape
    const Encoded enc = model_.encode(prep.sources);
    const Tensor y_bt = model_.project_attribute(y_bt_d);
    DecodeResult gen = model_.greedy_decode(enc, y_bt, max_decode_len_for(max_src_len),
                                            generation_jitter);
    for (int i = 0; i < B; ++i) {
      if (gen.seqs[i].empty()) gen.seqs[i].push_back(corpus::kUnk);  // logged upstream
      prep.generated_store.push_back(std::move(gen.seqs[i]));
    }
    for (auto &g : prep.generated_store) prep.generated.push_back(&g);
  }
  return prep;
}

BatchLosses TransferTrainer::batch_losses(double lambda) {
  current_lambda_ = lambda;
  Prepared prep = [this] {
    ad::TapeSuspend detach;  // generation and attribute embeddings stay off-tape
    return prepare_batch();
  }();
  BatchLosses out;
  ad::Tape *tape = ad::Tape::active();
  if (tape == nullptr)
    throw std::logic_error("batch_losses: requires an active tape");
  const Encoded enc_c = model_.encode(prep.corrupted);
  out.ae = model_.teacher_forced_nll(enc_c, prep.y_src, prep.sources);
  if (lambda < 1.0) {
    const Encoded enc_bt = model_.encode(prep.generated);
    out.bt = model_.teacher_forced_nll(enc_bt, prep.y_src, prep.sources);
  } else {
    out.bt = ad::zeros(1, 1);
  }
  out.total = ad::add(ad::scale(out.ae, lambda), ad::scale(out.bt, 1.0 - lambda));
  return out;
}

TransferTrainer::Snapshot TransferTrainer::snapshot(const TransferModel &model, int step) {
  Snapshot snap;
  snap.step = step;
  for (const auto &[name, t] : model.named_tensors())
    snap.tensors.emplace_back(name, t->v);
  return snap;
}

void TransferTrainer::restore(TransferModel &model, const Snapshot &snap) {
  auto named = model.named_tensors();
  if (named.size() != snap.tensors.size())
    throw std::runtime_error("restore: tensor count mismatch");
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != snap.tensors[i].first ||
        named[i].second->v.size() != snap.tensors[i].second.size())
      throw std::runtime_error("restore: tensor mismatch at " + named[i].first);
    named[i].second->v = snap.tensors[i].second;
  }
}

std::vector<TransferTrainer::Snapshot> TransferTrainer::run(std::ostream *metrics_log) {
  const auto params = model_.params();
  std::vector<Snapshot> checkpoints;
  std::vector<int> ckpt_steps;
  for (double f : cfg_.checkpoint_fractions)
    ckpt_steps.push_back(
        std::max(1, static_cast<int>(std::lround(f * cfg_.steps))));

  Snapshot last_good = snapshot(model_, 0);
  const int total_steps = cfg_.warmup_ae_steps + cfg_.steps;
  for (int step = 1; step <= total_steps; ++step) {
    const bool warmup = step <= cfg_.warmup_ae_steps;
    double lambda = 1.0;
    noise_now_ = cfg_.noise;
    if (!warmup) {
      const int mixed_step = step - cfg_.warmup_ae_steps;
      if (cfg_.word_drop_final >= 0.0) {
        const double p = static_cast<double>(mixed_step) / cfg_.steps;
        noise_now_.word_drop_prob =
            cfg_.noise.word_drop_prob +
            (cfg_.word_drop_final - cfg_.noise.word_drop_prob) * p;
      }
      const int hold =
          static_cast<int>(std::lround(cfg_.lambda_hold_frac * cfg_.steps));
      if (mixed_step <= hold) {
        lambda = cfg_.lambda_start;
      } else {
        // ramp linearly so style pressure grows and reaches the configured
        // final mix exactly at the last step
        const double frac = static_cast<double>(mixed_step - hold) /
                            static_cast<double>(std::max(1, cfg_.steps - hold));
        lambda = cfg_.lambda_start - (cfg_.lambda_start - cfg_.lambda) * frac;
      }
    }
    double ae_v = 0.0, bt_v = 0.0, total_v = 0.0;
    {
      ad::Tape tape;
      ad::TapeScope scope(tape);
      BatchLosses losses = batch_losses(lambda);
      ae_v = losses.ae->v[0];
      bt_v = losses.bt->v[0];
      total_v = losses.total->v[0];
      if (!std::isfinite(total_v)) {
        restore(model_, last_good);
        if (metrics_log)
          *metrics_log << "step=" << step << " aborted=non_finite_loss\n";
        break;
      }
      tape.backward(losses.total);
    }
    ad::sgd_step(params, cfg_.sgd);
    if (metrics_log && (step % cfg_.log_every == 0 || step == total_steps)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "step=%d loss_ae=%.6f loss_bt=%.6f lambda=%.3f\n",
                    step, ae_v, bt_v, lambda);
      *metrics_log << buf;
    }
    if (step % 50 == 0) last_good = snapshot(model_, step);
    if (!warmup) {
      const int mixed_step = step - cfg_.warmup_ae_steps;
      for (std::size_t k = 0; k < ckpt_steps.size(); ++k)
        if (mixed_step == ckpt_steps[k] && checkpoints.size() == k)
          checkpoints.push_back(snapshot(model_, step));
    }
  }
  while (checkpoints.size() < cfg_.checkpoint_fractions.size())
    checkpoints.push_back(snapshot(model_, total_steps));
  return checkpoints;
}

void fine_tune(TransferModel &model, const corpus::LabeledCorpus &new_corpus,
               const attr::NgramClassifier &new_clf, const TrainConfig &cfg,
               std::ostream *metrics_log) {
  if (new_clf.config().hidden_dim != model.config().d_a)
    throw std::invalid_argument("fine_tune: attribute dimension mismatch");
  if (cfg.steps == 0) return;  // identity
  TransferTrainer trainer(model, new_corpus, new_clf, cfg);
  trainer.run(metrics_log);
}

}  // namespace stsh::model
