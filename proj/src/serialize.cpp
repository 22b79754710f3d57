#include "stsh/serialize.hpp"

#include <stdexcept>

#include "stsh/config.hpp"

namespace stsh::io {
namespace {

void fill_tensors(const std::vector<std::pair<std::string, ad::Tensor>> &dst,
                  const Checkpoint &ckpt) {
  if (dst.size() != ckpt.tensors.size())
    throw std::runtime_error("checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const auto &[name, src] = ckpt.tensors[i];
    if (name != dst[i].first)
      throw std::runtime_error("checkpoint: expected tensor " + dst[i].first +
                               " but found " + name);
    if (src->shape != dst[i].second->shape)
      throw std::runtime_error("checkpoint: shape mismatch for tensor " + name);
    dst[i].second->v = src->v;
  }
}

}  // namespace

std::vector<std::string> vocab_tokens(const corpus::Vocabulary &vocab) {
  std::vector<std::string> out;
  for (int id = corpus::kNumReserved; id < vocab.size(); ++id)
    out.push_back(vocab.token(id));
  return out;
}

corpus::Vocabulary vocab_from_tokens(const std::vector<std::string> &tokens) {
  corpus::Vocabulary vocab;
  for (const auto &t : tokens) vocab.add(t);
  return vocab;
}

Checkpoint to_checkpoint(const attr::NgramClassifier &clf,
                         const corpus::Vocabulary &vocab) {
  Checkpoint ckpt;
  ckpt.kind = "classifier";
  ckpt.tensors = clf.named_tensors();
  ckpt.vocab_tokens = vocab_tokens(vocab);
  ckpt.labels = clf.labels();
  Config cfg;
  const auto &c = clf.config();
  cfg.set("ngram_buckets", std::to_string(c.ngram_buckets));
  cfg.set("table_dim", std::to_string(c.table_dim));
  cfg.set("hidden_dim", std::to_string(c.hidden_dim));
  ckpt.config_text = cfg.to_text();
  return ckpt;
}

LoadedClassifier classifier_from_checkpoint(const Checkpoint &ckpt) {
  if (ckpt.kind != "classifier")
    throw std::runtime_error("checkpoint: kind mismatch, expected classifier but found " +
                             ckpt.kind);
  const Config cfg = Config::parse(ckpt.config_text);
  attr::ClassifierConfig c;
  c.ngram_buckets = static_cast<int>(cfg.get_int("ngram_buckets", c.ngram_buckets));
  c.table_dim = static_cast<int>(cfg.get_int("table_dim", c.table_dim));
  c.hidden_dim = static_cast<int>(cfg.get_int("hidden_dim", c.hidden_dim));
  LoadedClassifier out{attr::NgramClassifier(c, ckpt.labels),
                       vocab_from_tokens(ckpt.vocab_tokens)};
  fill_tensors(out.clf.named_tensors(), ckpt);
  return out;
}

Checkpoint to_checkpoint(const model::TransferModel &m) {
  Checkpoint ckpt;
  ckpt.kind = "transfer";
  ckpt.tensors = m.named_tensors();
  ckpt.vocab_tokens = vocab_tokens(m.vocab());
  ckpt.labels = m.labels();
  Config cfg;
  cfg.set("d_h", std::to_string(m.config().d_h));
  cfg.set("d_a", std::to_string(m.config().d_a));
  cfg.set("d_att", std::to_string(m.config().d_att));
  cfg.set("max_len", std::to_string(m.config().max_len));
  ckpt.config_text = cfg.to_text();
  return ckpt;
}

model::TransferModel transfer_from_checkpoint(const Checkpoint &ckpt) {
  if (ckpt.kind != "transfer")
    throw std::runtime_error("checkpoint: kind mismatch, expected transfer but found " +
                             ckpt.kind);
  const Config cfg = Config::parse(ckpt.config_text);
  model::ModelConfig mc;
  mc.d_h = static_cast<int>(cfg.get_int("d_h", mc.d_h));
  mc.d_a = static_cast<int>(cfg.get_int("d_a", mc.d_a));
  mc.d_att = static_cast<int>(cfg.get_int("d_att", mc.d_att));
  mc.max_len = static_cast<int>(cfg.get_int("max_len", mc.max_len));
  model::TransferModel m(mc, vocab_from_tokens(ckpt.vocab_tokens), ckpt.labels, 0);
  fill_tensors(m.named_tensors(), ckpt);
  return m;
}

Checkpoint to_checkpoint(const eval::LanguageModel &lm,
                         const corpus::Vocabulary &vocab) {
  Checkpoint ckpt;
  ckpt.kind = "lm";
  ckpt.tensors = lm.named_tensors();
  ckpt.vocab_tokens = vocab_tokens(vocab);
  Config cfg;
  cfg.set("vocab_size", std::to_string(lm.vocab_size()));
  cfg.set("d_h", std::to_string(lm.emb->cols()));
  ckpt.config_text = cfg.to_text();
  return ckpt;
}

LoadedLm lm_from_checkpoint(const Checkpoint &ckpt) {
  if (ckpt.kind != "lm")
    throw std::runtime_error("checkpoint: kind mismatch, expected lm but found " +
                             ckpt.kind);
  const Config cfg = Config::parse(ckpt.config_text);
  const int vocab_size = static_cast<int>(cfg.get_int("vocab_size", 0));
  const int d_h = static_cast<int>(cfg.get_int("d_h", 64));
  LoadedLm out{eval::LanguageModel(vocab_size, d_h, 0),
               vocab_from_tokens(ckpt.vocab_tokens)};
  fill_tensors(out.lm.named_tensors(), ckpt);
  return out;
}

Checkpoint to_checkpoint(const attr::LabelMap &map) {
  Checkpoint ckpt;
  ckpt.kind = "labelmap";
  ckpt.tensors.emplace_back("weights", map.weights);
  ckpt.labels = map.labels();
  Config cfg;
  cfg.set("embed_dim", std::to_string(map.weights->rows()));
  ckpt.config_text = cfg.to_text();
  return ckpt;
}

attr::LabelMap labelmap_from_checkpoint(const Checkpoint &ckpt) {
  if (ckpt.kind != "labelmap")
    throw std::runtime_error("checkpoint: kind mismatch, expected labelmap but found " +
                             ckpt.kind);
  const Config cfg = Config::parse(ckpt.config_text);
  const int embed_dim = static_cast<int>(cfg.get_int("embed_dim", 0));
  attr::LabelMap map(embed_dim, ckpt.labels);
  fill_tensors({{"weights", map.weights}}, ckpt);
  return map;
}

}  // namespace stsh::io
