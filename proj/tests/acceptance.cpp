// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Heavier than the unit tests: the
// mid-range criteria train full models through the experiment drivers.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stsh/classifier.hpp"
#include "stsh/config.hpp"
#include "stsh/corpus.hpp"
#include "stsh/experiments.hpp"
#include "stsh/metrics.hpp"
#include "stsh/seq2seq.hpp"
#include "stsh/serialize.hpp"
#include "test_util.hpp"

using namespace stsh;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, const std::string &name, bool ok, const std::string &detail) {
  std::printf("%s criterion-%d %s%s%s\n", ok ? "PASS" : "FAIL", idx, name.c_str(),
              detail.empty() ? "" : ": ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(const char *f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

std::string slurp(const fs::path &p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// criterion 1: finite-difference gradient checks for every forward op
// ---------------------------------------------------------------------------

struct FdSuite {
  double max_rel = 0.0;
  long checked = 0;
  std::string worst_op;

  void run(const char *op, const testutil::ScalarGraph &f,
           std::vector<ad::Tensor> inputs) {
    const testutil::FdResult r = testutil::fd_check(f, std::move(inputs));
    checked += r.checked;
    if (r.max_rel_err > max_rel) {
      max_rel = r.max_rel_err;
      worst_op = op;
    }
  }
};

void fd_all_ops(FdSuite &suite) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 4);
  auto ws = [](const ad::Tensor &t, std::uint64_t salt) {
    return testutil::weighted_sum(t, salt);
  };
  for (int i = 0; i < 100; ++i) {
    const int r = dim(rng), k = dim(rng), c = dim(rng);
    const std::uint64_t salt = 7000 + i;
    auto rt = [&](int rr, int cc, double s = 1.0) {
      return testutil::random_tensor(rr, cc, rng, s);
    };
    suite.run("matmul",
              [&](const std::vector<ad::Tensor> &in) {
                return ws(ad::matmul(in[0], in[1]), salt);
              },
              {rt(r, k), rt(k, c)});
    suite.run("add",
              [&](const std::vector<ad::Tensor> &in) {
                return ws(ad::add(in[0], in[1]), salt);
              },
              {rt(r, c), rt(r, c)});
    suite.run("add_rowvec",
              [&](const std::vector<ad::Tensor> &in) {
                return ws(ad::add_rowvec(in[0], in[1]), salt);
              },
              {rt(r, c), rt(1, c)});
    suite.run("mul",
              [&](const std::vector<ad::Tensor> &in) {
                return ws(ad::mul(in[0], in[1]), salt);
              },
              {rt(r, c), rt(r, c)});
    suite.run("mul_col",
              [&](const std::vector<ad::Tensor> &in) {
                return ws(ad::mul_col(in[0], in[1]), salt);
              },
              {rt(r, c), rt(r, 1)});
    suite.run("scale",
              [&](const std::vector<ad::Tensor> &in) {
                return ws(ad::scale(in[0], 0.37), salt);
              },
              {rt(r, c)});
    suite.run("sigmoid",
              [&](const std::vector<ad::Tensor> &in) {
                return ws(ad::sigmoid(in[0]), salt);
              },
              {rt(r, c, 2.0)});
    suite.run("tanh",
              [&](const std::vector<ad::Tensor> &in) {
                return ws(ad::tanh_op(in[0]), salt);
              },
              {rt(r, c, 2.0)});
    suite.run("softmax_rows",
              [&](const std::vector<ad::Tensor> &in) {
                return ws(ad::softmax_rows(in[0]), salt);
              },
              {rt(r, c, 2.0)});
    suite.run("concat_cols",
              [&](const std::vector<ad::Tensor> &in) {
                ad::Tensor parts[2] = {in[0], in[1]};
                return ws(ad::concat_cols(parts), salt);
              },
              {rt(r, c), rt(r, k)});
    suite.run("concat_rows",
              [&](const std::vector<ad::Tensor> &in) {
                ad::Tensor parts[2] = {in[0], in[1]};
                return ws(ad::concat_rows(parts), salt);
              },
              {rt(r, c), rt(k, c)});
    suite.run("slice_cols",
              [&](const std::vector<ad::Tensor> &in) {
                return ws(ad::slice_cols(in[0], 1, c), salt);
              },
              {rt(r, c + 2)});
    {
      std::uniform_int_distribution<int> pick(0, r);  // rows of a (r+1)-row table
      std::vector<int> ids(c + 1);
      for (auto &id : ids) id = pick(rng);
      ids.back() = ids.front();  // force a repeated row
      suite.run("embedding_rows",
                [&, ids](const std::vector<ad::Tensor> &in) {
                  return ws(ad::embedding_rows(in[0], ids), salt);
                },
                {rt(r + 1, k)});
    }
    suite.run("mean_all",
              [&](const std::vector<ad::Tensor> &in) { return ad::mean_all(in[0]); },
              {rt(r, c)});
    suite.run("sum_all",
              [&](const std::vector<ad::Tensor> &in) { return ad::sum_all(in[0]); },
              {rt(r, c)});
    suite.run("mean_rows",
              [&](const std::vector<ad::Tensor> &in) {
                return ws(ad::mean_rows(in[0]), salt);
              },
              {rt(r, c)});
    {
      const int classes = c + 1;
      std::uniform_int_distribution<int> pick(0, classes - 1);
      std::vector<int> tgt(r);
      std::vector<double> mask(r, 1.0);
      for (auto &t : tgt) t = pick(rng);
      if (r > 1) mask[0] = 0.0;
      suite.run("softmax_cross_entropy",
                [&, tgt, mask](const std::vector<ad::Tensor> &in) {
                  return ad::softmax_cross_entropy(in[0], tgt, mask);
                },
                {rt(r, classes, 2.0)});
    }
    {
      // keep rows away from the origin where the norm is non-differentiable
      ad::Tensor t = testutil::random_tensor(r, c + 1, rng);
      for (int ri = 0; ri < r; ++ri) t->at(ri, 0) += t->at(ri, 0) >= 0 ? 1.5 : -1.5;
      suite.run("l2_normalize",
                [&](const std::vector<ad::Tensor> &in) {
                  return ws(ad::l2_normalize(in[0]), salt);
                },
                {t});
    }
  }
}

// ---------------------------------------------------------------------------
// shared experiment configuration (kept small enough for the time budget,
// large enough to clear the quality bars)
// ---------------------------------------------------------------------------

io::Config quality_config() {
  io::Config cfg;  // parse_settings defaults, trimmed for wall-clock
  cfg.set("synth_train_per_label", "2000");
  cfg.set("clf_steps", "2000");
  cfg.set("lm_steps", "1000");
  cfg.set("eval_cap", "25");
  return cfg;
}

io::Config tiny_config() {
  io::Config cfg;
  cfg.set("synth_labels", "3");
  cfg.set("synth_content_vocab", "30");
  cfg.set("synth_train_per_label", "150");
  cfg.set("synth_valid_per_label", "25");
  cfg.set("synth_test_per_label", "25");
  cfg.set("d_h", "16");
  cfg.set("d_att", "8");
  cfg.set("steps", "16");
  cfg.set("warmup_ae_steps", "8");
  cfg.set("batch_size", "8");
  cfg.set("clf_steps", "150");
  cfg.set("eval_clf_steps", "150");
  cfg.set("clf_buckets", "1024");
  cfg.set("lm_steps", "30");
  cfg.set("lm_d_h", "12");
  cfg.set("eval_cap", "5");
  return cfg;
}

std::string work_dir(const char *leaf) {
  const fs::path p = fs::temp_directory_path() / "stsh_acceptance" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

const eval::EvalRow *find_row(const eval::EvalReport &rep, const std::string &name) {
  for (const auto &r : rep.rows)
    if (r.name == name) return &r;
  return nullptr;
}

}  // namespace

int main() {
  // --- criterion 1: gradient checks ----------------------------------------
  try {
    const double t0 = now_s();
    FdSuite suite;
    fd_all_ops(suite);
    const double dt = now_s() - t0;
    const bool ok = suite.max_rel < 1e-4 && dt < 60.0;
    report(1, "gradient-checks", ok,
           fmt("max_rel_err=%.2e over %.0f checks in %.1fs", suite.max_rel,
               double(suite.checked), dt) +
               (suite.max_rel >= 1e-4 ? " worst=" + suite.worst_op : ""));
  } catch (const std::exception &e) {
    report(1, "gradient-checks", false, e.what());
  }

  // --- criterion 2: BLEU vs oracle -----------------------------------------
  try {
    const auto seqs = testutil::all_sequences(3, 5);
    double worst = 0.0;
    for (const auto &cand : seqs)
      for (const auto &ref : seqs)
        worst = std::max(worst, std::abs(eval::sentence_bleu(cand, ref) -
                                         testutil::oracle_bleu(cand, ref)));
    bool self_ok = true;
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> len(1, 20), tok(0, 40);
    for (int i = 0; i < 1000; ++i) {
      corpus::TokenSequence x(len(rng));
      for (auto &t : x) t = tok(rng);
      self_ok = self_ok && eval::sentence_bleu(x, x) == 100.0;
    }
    report(2, "bleu-oracle", worst < 1e-9 && self_ok,
           fmt("max_abs_diff=%.2e over %.0f pairs", worst, 363.0 * 363.0) +
               (self_ok ? "" : " self-BLEU != 100"));
  } catch (const std::exception &e) {
    report(2, "bleu-oracle", false, e.what());
  }

  // --- criterion 3: uniform LM perplexity ----------------------------------
  try {
    double worst = 0.0;
    std::mt19937_64 rng(11);
    for (int V : {3, 10, 57, 250}) {
      const auto lm = eval::LanguageModel::uniform(V);
      std::uniform_int_distribution<int> tok(0, V - 1), len(1, 15);
      std::vector<corpus::TokenSequence> seqs;
      for (int i = 0; i < 30; ++i) {
        corpus::TokenSequence s(len(rng));
        for (auto &t : s) t = tok(rng);
        seqs.push_back(s);
      }
      worst = std::max(worst,
                       std::abs(std::log(eval::perplexity(lm, seqs)) - std::log(double(V))));
    }
    report(3, "uniform-perplexity", worst < 1e-9, fmt("max_log_err=%.2e", worst));
  } catch (const std::exception &e) {
    report(3, "uniform-perplexity", false, e.what());
  }

  // --- criteria 4 + 5: fine-grained run + baseline rows ---------------------
  exp::DriverResult fg;
  bool fg_ok = false;
  try {
    const double t0 = now_s();
    fg = exp::exp_finegrained(quality_config(), work_dir("finegrained"));
    const double dt = now_s() - t0;
    fg_ok = true;

    const eval::EvalRow *m[4] = {find_row(fg.report, "Model1"), find_row(fg.report, "Model2"),
                                 find_row(fg.report, "Model3"), find_row(fg.report, "Model4")};
    bool have = m[0] && m[1] && m[2] && m[3];
    bool quality = have && m[3]->target_pct >= 80.0 && m[3]->self_bleu >= 10.0;
    int tp_up = 0, sb_down = 0;
    if (have)
      for (int i = 0; i < 3; ++i) {
        if (m[i + 1]->target_pct >= m[i]->target_pct) ++tp_up;
        if (m[i + 1]->self_bleu <= m[i]->self_bleu) ++sb_down;
      }
    const bool trend = tp_up == 3 && sb_down == 3;
    report(4, "finegrained-transfer", quality && trend && dt <= 1800.0,
           (have ? fmt("final target_pct=%.1f self_bleu=%.1f time=%.0fs",
                       m[3]->target_pct, m[3]->self_bleu, dt) +
                       fmt(" trend(up=%.0f/3, down=%.0f/3)", double(tp_up), double(sb_down))
                 : std::string("model rows missing")));
  } catch (const std::exception &e) {
    report(4, "finegrained-transfer", false, e.what());
  }

  try {
    if (!fg_ok) throw std::runtime_error("fine-grained run unavailable");
    const eval::EvalRow *id = find_row(fg.report, "Identity");
    const eval::EvalRow *ts = find_row(fg.report, "TargetAttrSample");
    if (!id || !ts) throw std::runtime_error("baseline rows missing");
    const double chance = 100.0 / 8.0;
    const bool id_ok = id->self_bleu == 100.0 && id->target_pct <= 2.0 * chance;
    const bool ts_ok = ts->self_bleu <= 2.0 &&
                       ts->target_pct >= 0.8 * (100.0 * fg.eval_clf_accuracy);
    report(5, "baseline-rows", id_ok && ts_ok,
           fmt("identity(self_bleu=%.1f target=%.1f)", id->self_bleu, id->target_pct) +
               fmt(" sample(self_bleu=%.2f target=%.1f, clf=%.1f)", ts->self_bleu,
                   ts->target_pct, 100.0 * fg.eval_clf_accuracy));
  } catch (const std::exception &e) {
    report(5, "baseline-rows", false, e.what());
  }

  // --- criterion 6: held-out labels ----------------------------------------
  try {
    const exp::DriverResult ho = exp::exp_heldout(quality_config(), work_dir("heldout"));
    const eval::EvalRow *seen = find_row(ho.report, "Model-seen");
    const eval::EvalRow *held = find_row(ho.report, "Model-heldout");
    if (!seen || !held) throw std::runtime_error("seen/held-out rows missing");
    const bool ok = held->target_pct >= 37.5 && held->target_pct < seen->target_pct;
    report(6, "heldout-generalization", ok,
           fmt("heldout target_pct=%.1f vs seen=%.1f (chance 12.5)", held->target_pct,
               seen->target_pct));
  } catch (const std::exception &e) {
    report(6, "heldout-generalization", false, e.what());
  }

  // --- criterion 7: new attribute space ------------------------------------
  try {
    const exp::DriverResult ns = exp::exp_newspace(quality_config(), work_dir("newspace"));
    const eval::EvalRow *sc = find_row(ns.report, "Scratch");
    const eval::EvalRow *zs = find_row(ns.report, "Zero-shot");
    const eval::EvalRow *ft = find_row(ns.report, "Fine-tuned");
    if (!sc || !zs || !ft) throw std::runtime_error("adaptation rows missing");
    const bool ok = sc->self_bleu < 5.0 && zs->target_pct < sc->target_pct &&
                    zs->target_pct < ft->target_pct && zs->self_bleu > sc->self_bleu &&
                    zs->self_bleu > ft->self_bleu && ft->target_pct > zs->target_pct &&
                    ft->self_bleu > sc->self_bleu;
    report(7, "newspace-adaptation", ok,
           fmt("scratch(t=%.1f b=%.1f)", sc->target_pct, sc->self_bleu) +
               fmt(" zeroshot(t=%.1f b=%.1f)", zs->target_pct, zs->self_bleu) +
               fmt(" finetuned(t=%.1f b=%.1f)", ft->target_pct, ft->self_bleu));
  } catch (const std::exception &e) {
    report(7, "newspace-adaptation", false, e.what());
  }

  // --- criteria 8 + 9: loss decomposition and generation detachment ---------
  corpus::SynthSpec small_spec;
  small_spec.num_labels = 3;
  small_spec.content_vocab_size = 30;
  small_spec.train_per_label = 120;
  small_spec.valid_per_label = 20;
  small_spec.test_per_label = 20;
  small_spec.min_length = 3;
  small_spec.max_length = 6;
  try {
    std::mt19937_64 rng(8);
    const auto synth = corpus::generate_synthetic_corpus(small_spec, rng);
    attr::ClassifierConfig ccfg;
    ccfg.ngram_buckets = 1 << 10;
    ccfg.hidden_dim = 4;
    ccfg.steps = 300;
    const auto clf = attr::train_classifier(synth.corpus, ccfg);
    model::ModelConfig mc;
    mc.d_h = 16;
    mc.d_a = 4;
    mc.d_att = 8;
    model::TrainConfig tcfg;
    tcfg.steps = 10;
    tcfg.warmup_ae_steps = 0;
    tcfg.batch_size = 8;

    {
      model::TransferModel m(mc, synth.vocab, synth.corpus.labels, 13);
      m.set_label_targets(clf.classifier);
      model::TransferTrainer trainer(m, synth.corpus, clf.classifier, tcfg);
      double worst = 0.0;
      for (int i = 0; i < 50; ++i) {
        const double lambda = i % 2 == 0 ? 0.5 : 0.2;
        ad::Tape tape;
        ad::TapeScope scope(tape);
        const model::BatchLosses l = trainer.batch_losses(lambda);
        worst = std::max(worst, std::abs(l.total->v[0] - (lambda * l.ae->v[0] +
                                                          (1.0 - lambda) * l.bt->v[0])));
        tape.backward(l.total);
        ad::sgd_step(m.params(), tcfg.sgd);
      }
      report(8, "loss-decomposition", worst < 1e-9, fmt("max_abs_err=%.2e", worst));
    }

    {
      auto grads = [&](double jitter) {
        model::TransferModel m(mc, synth.vocab, synth.corpus.labels, 99);
        m.set_label_targets(clf.classifier);
        model::TrainConfig cfg = tcfg;
        cfg.seed = 23;
        model::TransferTrainer trainer(m, synth.corpus, clf.classifier, cfg);
        trainer.generation_jitter = jitter;
        ad::Tape tape;
        ad::TapeScope scope(tape);
        const model::BatchLosses l = trainer.batch_losses(0.5);
        tape.backward(l.total);
        std::vector<std::vector<double>> out;
        for (const auto &p : m.params()) out.push_back(p->g);
        return out;
      };
      const auto clean = grads(0.0);
      const auto probed = grads(1e-9);
      bool same = clean.size() == probed.size();
      for (std::size_t i = 0; same && i < clean.size(); ++i) same = clean[i] == probed[i];
      report(9, "generation-detachment", same,
             same ? "all parameter gradients bit-identical under logit perturbation"
                  : "gradients changed when generation logits were perturbed");
    }
  } catch (const std::exception &e) {
    report(8, "loss-decomposition", false, e.what());
    report(9, "generation-detachment", false, e.what());
  }

  // --- criterion 10: determinism -------------------------------------------
  try {
    const std::string d1 = work_dir("det1"), d2 = work_dir("det2");
    exp::exp_finegrained(tiny_config(), d1);
    exp::exp_finegrained(tiny_config(), d2);
    bool same = true;
    std::string diff;
    for (const char *p : {"reports/finegrained.tsv", "reports/finegrained_summary.tsv",
                          "reports/train_log.txt", "ckpt/transfer_model4.stsh"})
      if (slurp(fs::path(d1) / p) != slurp(fs::path(d2) / p)) {
        same = false;
        diff = p;
        break;
      }
    // checkpoint round trip: load -> save -> byte-identical
    const fs::path ck = fs::path(d1) / "ckpt/transfer_model4.stsh";
    const fs::path ck2 = fs::path(d1) / "ckpt/roundtrip.stsh";
    io::save_checkpoint(ck2.string(), io::load_checkpoint(ck.string()));
    const bool rt = slurp(ck) == slurp(ck2);
    report(10, "determinism", same && rt,
           same ? (rt ? "reports and checkpoints byte-identical; round trip exact"
                      : "checkpoint round trip not byte-identical")
                : "runs differ in " + diff);
  } catch (const std::exception &e) {
    report(10, "determinism", false, e.what());
  }

  std::printf("%s: %d/10 criteria passed\n", g_failures == 0 ? "OK" : "FAILURES",
              10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
