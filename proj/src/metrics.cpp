#include "stsh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace stsh::eval {
namespace {

using corpus::TokenSequence;

std::map<std::vector<int>, int> ngram_counts(const TokenSequence &seq, int n) {
  std::map<std::vector<int>, int> counts;
  if (static_cast<int>(seq.size()) >= n)
    for (std::size_t i = 0; i + n <= seq.size(); ++i)
      ++counts[std::vector<int>(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

}  // namespace

double sentence_bleu(const TokenSequence &candidate, const TokenSequence &reference) {
  if (candidate.empty()) return 0.0;
  const int c = static_cast<int>(candidate.size());
  const int r = static_cast<int>(reference.size());
  double log_prec_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    long matched = 0, total = 0;
    for (const auto &[gram, count] : cand) {
      total += count;
      auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(count, it->second);
    }
    double p;
    if (n == 1) {
      if (matched == 0) return 0.0;  // unigram precision unsmoothed
      p = static_cast<double>(matched) / static_cast<double>(total);
    } else {
      p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    }
    log_prec_sum += std::log(p);
  }
  const double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / c);
  return 100.0 * bp * std::exp(log_prec_sum / 4.0);
}

double self_bleu(const std::vector<TokenSequence> &generations,
                 const std::vector<TokenSequence> &sources) {
  if (generations.size() != sources.size())
    throw std::invalid_argument("self_bleu: aligned lists required");
  if (generations.empty()) throw std::invalid_argument("self_bleu: empty lists");
  double sum = 0.0;
  for (std::size_t i = 0; i < generations.size(); ++i)
    sum += sentence_bleu(generations[i], sources[i]);
  return sum / static_cast<double>(generations.size());
}

LanguageModel::LanguageModel(int vocab_size, int d_h, std::uint64_t seed)
    : vocab_size_(vocab_size), d_h_(d_h) {
  std::mt19937_64 rng(seed);
  emb = ad::param(vocab_size, d_h, 0.1, rng);
  cells[0].init(d_h, d_h, rng);
  cells[1].init(d_h, d_h, rng);
  w_out = ad::param(d_h, vocab_size, 0.1, rng);
  b_out = ad::param_zeros(1, vocab_size);
}

LanguageModel LanguageModel::uniform(int vocab_size) {
  LanguageModel lm(vocab_size, 8, 0);
  for (auto &p : lm.params()) std::fill(p->v.begin(), p->v.end(), 0.0);
  return lm;
}

std::vector<ad::Tensor> LanguageModel::params() const {
  std::vector<ad::Tensor> out{emb};
  cells[0].collect_params(out);
  cells[1].collect_params(out);
  out.push_back(w_out);
  out.push_back(b_out);
  return out;
}

std::vector<std::pair<std::string, ad::Tensor>> LanguageModel::named_tensors() const {
  std::vector<std::pair<std::string, ad::Tensor>> out;
  out.emplace_back("emb", emb);
  for (int l = 0; l < 2; ++l) {
    const std::string base = "lstm" + std::to_string(l) + "_";
    out.emplace_back(base + "wx", cells[l].wx);
    out.emplace_back(base + "wh", cells[l].wh);
    out.emplace_back(base + "b", cells[l].b);
  }
  out.emplace_back("w_out", w_out);
  out.emplace_back("b_out", b_out);
  return out;
}

double LanguageModel::sequence_nll(const TokenSequence &seq, int *token_count) const {
  ad::Tensor h0 = ad::zeros(1, d_h_), c0 = ad::zeros(1, d_h_);
  ad::Tensor h1 = ad::zeros(1, d_h_), c1 = ad::zeros(1, d_h_);
  double nll = 0.0;
  int count = 0;
  int prev = corpus::kBos;
  for (std::size_t t = 0; t <= seq.size(); ++t) {
    const int target = t < seq.size() ? seq[t] : corpus::kEos;
    if (target < 0 || target >= vocab_size_)
      throw std::invalid_argument("sequence_nll: token id out of vocabulary");
    int ids[1] = {prev};
    ad::Tensor x = ad::embedding_rows(emb, std::span<const int>(ids, 1));
    std::tie(h0, c0) = cells[0].step(x, h0, c0);
    std::tie(h1, c1) = cells[1].step(h0, h1, c1);
    const ad::Tensor logits = ad::add_rowvec(ad::matmul(h1, w_out), b_out);
    double mx = logits->v[0];
    for (double v : logits->v) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits->v) z += std::exp(v - mx);
    nll += -(logits->v[target] - mx - std::log(z));
    ++count;
    prev = target;
  }
  if (token_count != nullptr) *token_count = count;
  return nll;
}

LanguageModel train_lm(const std::vector<corpus::Example> &train, int vocab_size,
                       const LmConfig &cfg) {
  if (train.empty()) throw std::invalid_argument("train_lm: empty corpus");
  LanguageModel lm(vocab_size, cfg.d_h, cfg.seed);
  const auto params = lm.params();
  const ad::SgdConfig sgd{cfg.learning_rate, cfg.gradient_clip_norm};
  std::mt19937_64 rng(cfg.seed ^ 0x1a2b3c4dULL);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<const TokenSequence *> batch;
    int T = 0;
    for (int i = 0; i < cfg.batch_size; ++i) {
      batch.push_back(&train[pick(rng)].tokens);
      T = std::max(T, static_cast<int>(batch.back()->size()) + 1);
    }
    const int B = static_cast<int>(batch.size());
    ad::Tape tape;
    ad::TapeScope scope(tape);
    ad::Tensor h0 = ad::zeros(B, cfg.d_h), c0 = ad::zeros(B, cfg.d_h);
    ad::Tensor h1 = ad::zeros(B, cfg.d_h), c1 = ad::zeros(B, cfg.d_h);
    std::vector<ad::Tensor> losses;
    std::vector<double> counts;
    double total_count = 0.0;
    for (int t = 0; t < T; ++t) {
      std::vector<int> inputs(B, corpus::kPad), targets(B, corpus::kPad);
      std::vector<double> mask(B, 0.0);
      double count = 0.0;
      for (int i = 0; i < B; ++i) {
        const int len = static_cast<int>(batch[i]->size());
        if (t > len) continue;
        inputs[i] = t == 0 ? corpus::kBos : (*batch[i])[t - 1];
        targets[i] = t == len ? corpus::kEos : (*batch[i])[t];
        mask[i] = 1.0;
        count += 1.0;
      }
      if (count == 0.0) continue;
      ad::Tensor x = ad::embedding_rows(lm.emb, inputs);
      std::tie(h0, c0) = lm.cells[0].step(x, h0, c0);
      std::tie(h1, c1) = lm.cells[1].step(h0, h1, c1);
      const ad::Tensor logits = ad::add_rowvec(ad::matmul(h1, lm.w_out), lm.b_out);
      losses.push_back(ad::softmax_cross_entropy(logits, targets, mask));
      counts.push_back(count);
      total_count += count;
    }
    ad::Tensor loss;
    for (std::size_t s = 0; s < losses.size(); ++s) {
      const ad::Tensor term = ad::scale(losses[s], counts[s] / total_count);
      loss = s == 0 ? term : ad::add(loss, term);
    }
    tape.backward(loss);
    ad::sgd_step(params, sgd);
  }
  return lm;
}

double perplexity(const LanguageModel &lm, const std::vector<TokenSequence> &sequences) {
  if (sequences.empty()) throw std::invalid_argument("perplexity: empty evaluation set");
  double nll = 0.0;
  long tokens = 0;
  for (const auto &seq : sequences) {
    int count = 0;
    nll += lm.sequence_nll(seq, &count);
    tokens += count;
  }
  return std::exp(nll / static_cast<double>(tokens));
}

std::pair<double, double> attribute_control(
    const attr::NgramClassifier &eval_clf,
    const std::vector<TokenSequence> &generations, int target_label, int source_label) {
  if (target_label < 0 || target_label >= eval_clf.num_labels() || source_label < 0 ||
      source_label >= eval_clf.num_labels())
    throw std::invalid_argument("attribute_control: unknown label");
  if (generations.empty())
    throw std::invalid_argument("attribute_control: no generations");
  const TokenSequence unk{corpus::kUnk};
  long hits_t = 0, hits_s = 0;
  for (const auto &g : generations) {
    const int pred = eval_clf.predict(g.empty() ? unk : g);
    if (pred == target_label) ++hits_t;
    if (pred == source_label) ++hits_s;
  }
  const double denom = static_cast<double>(generations.size());
  return {100.0 * hits_t / denom, 100.0 * hits_s / denom};
}

EvalRow average_rows(const std::vector<EvalRow> &rows, const std::string &name) {
  EvalRow avg;
  avg.name = name;
  long used = 0;
  for (const auto &r : rows) {
    if (r.n == 0) continue;
    avg.target_pct += r.target_pct;
    avg.source_pct += r.source_pct;
    avg.self_bleu += r.self_bleu;
    avg.ppl += r.ppl;
    avg.n += r.n;
    ++used;
  }
  if (used > 0) {
    avg.target_pct /= used;
    avg.source_pct /= used;
    avg.self_bleu /= used;
    avg.ppl /= used;
  }
  return avg;
}

std::string EvalReport::rows_tsv(const std::vector<EvalRow> &rows) {
  std::string out = "direction\ttarget_pct\tsource_pct\tself_bleu\tppl\tn\n";
  char buf[256];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof buf, "%s\t%.2f\t%.2f\t%.2f\t%.2f\t%ld\n", r.name.c_str(),
                  r.target_pct, r.source_pct, r.self_bleu, r.ppl, r.n);
    out += buf;
  }
  return out;
}

std::string EvalReport::to_tsv() const {
  std::string out = rows_tsv(rows);
  if (!directions.empty()) {
    out += "\n";
    out += rows_tsv(directions);
  }
  return out;
}

EvalReport evaluate_directions(const TransferFn &transfer,
                               const attr::NgramClassifier &eval_clf,
                               const LanguageModel &lm,
                               const corpus::LabeledCorpus &data,
                               const DirectionEvalOptions &opts,
                               const std::string &row_name) {
  const int K = data.num_labels();
  std::vector<int> targets = opts.target_labels;
  std::vector<int> sources = opts.source_labels;
  if (targets.empty())
    for (int l = 0; l < K; ++l) targets.push_back(l);
  if (sources.empty())
    for (int l = 0; l < K; ++l) sources.push_back(l);

  std::vector<std::vector<TokenSequence>> test_by_label(K);
  for (const auto &ex : data.test)
    if (static_cast<int>(test_by_label[ex.label].size()) < opts.cap)
      test_by_label[ex.label].push_back(ex.tokens);

  EvalReport report;
  for (int t : targets) {
    for (int s : sources) {
      if (s == t) continue;
      EvalRow row;
      row.name = data.labels[s] + "->" + data.labels[t];
      const auto &src_seqs = test_by_label[s];
      if (src_seqs.empty()) {
        row.name += " (skipped: no test examples)";
        report.directions.push_back(row);
        continue;
      }
      const auto gens = transfer(src_seqs, s, t);
      if (gens.size() != src_seqs.size())
        throw std::runtime_error("evaluate_directions: generation count mismatch");
      auto [tp, sp] = attribute_control(eval_clf, gens, t, s);
      row.target_pct = tp;
      row.source_pct = sp;
      row.self_bleu = self_bleu(gens, src_seqs);
      row.ppl = perplexity(lm, gens);
      row.n = static_cast<long>(gens.size());
      report.directions.push_back(row);
    }
  }
  report.rows.push_back(average_rows(report.directions, row_name));
  return report;
}

std::vector<EvalRow> baseline_rows(const attr::NgramClassifier &eval_clf,
                                   const LanguageModel &lm,
                                   const corpus::LabeledCorpus &data,
                                   const DirectionEvalOptions &opts) {
  TransferFn identity = [](const std::vector<TokenSequence> &src, int, int) {
    return src;
  };

  std::vector<std::vector<const TokenSequence *>> train_by_label(data.num_labels());
  for (const auto &ex : data.train) train_by_label[ex.label].push_back(&ex.tokens);
  auto rng = std::make_shared<std::mt19937_64>(opts.sample_seed);
  TransferFn target_sample = [&data, train_by_label, rng](
                                 const std::vector<TokenSequence> &src, int,
                                 int target) {
    std::vector<TokenSequence> out;
    const auto &pool = train_by_label[target];
    if (pool.empty()) throw std::runtime_error("baseline: no training data for target");
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < src.size(); ++i) out.push_back(*pool[pick(*rng)]);
    return out;
  };

  std::vector<EvalRow> rows;
  rows.push_back(
      evaluate_directions(identity, eval_clf, lm, data, opts, "Identity").rows[0]);
  rows.push_back(
      evaluate_directions(target_sample, eval_clf, lm, data, opts, "TargetAttrSample")
          .rows[0]);
  return rows;
}

TransferFn model_transfer_fn(const model::TransferModel &model,
                             const corpus::Vocabulary &eval_vocab,
                             const std::function<ad::Tensor(int)> &target_embedding) {
  return [&model, &eval_vocab, target_embedding](
             const std::vector<TokenSequence> &src_eval, int /*source*/, int target) {
    // cross vocabularies through text
    std::vector<TokenSequence> src_model;
    src_model.reserve(src_eval.size());
    int max_len = 0;
    for (const auto &s : src_eval) {
      src_model.push_back(
          corpus::tokenize(corpus::detokenize(s, eval_vocab), model.vocab()));
      max_len = std::max(max_len, static_cast<int>(src_model.back().size()));
    }
    std::vector<const TokenSequence *> ptrs;
    for (const auto &s : src_model) ptrs.push_back(&s);
    const model::Encoded enc = model.encode(ptrs);
    const ad::Tensor y_d = target_embedding(target);
    std::vector<double> rows;
    for (std::size_t i = 0; i < src_model.size(); ++i)
      rows.insert(rows.end(), y_d->v.begin(), y_d->v.end());
    const ad::Tensor y_mat =
        ad::from_values(static_cast<int>(src_model.size()), y_d->cols(), std::move(rows));
    const ad::Tensor y = model.project_attribute(y_mat);
    const auto decoded =
        model.greedy_decode(enc, y, model::max_decode_len_for(max_len));
    std::vector<TokenSequence> out;
    out.reserve(decoded.seqs.size());
    for (const auto &g : decoded.seqs)
      out.push_back(corpus::tokenize(corpus::detokenize(g, model.vocab()), eval_vocab));
    return out;
  };
}

}  // namespace stsh::eval
