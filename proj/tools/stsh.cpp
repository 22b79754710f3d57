// Command-line front end: corpus generation, component training, transfer
// inference, evaluation, and the three experiment drivers.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stsh/experiments.hpp"
#include "stsh/serialize.hpp"

namespace {

using namespace stsh;

struct CommonFlags {
  std::string config_path;
  std::string out_dir = "out";
  std::string ckpt_path;
  std::string input_path;
  std::string target_label;
  std::string holdout;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int cap = 0;
};

void add_common(CLI::App *cmd, CommonFlags &f, bool needs_out = true) {
  cmd->add_option("--config", f.config_path, "flat key = value config file");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&f](std::uint64_t v) { f.seed = v; f.seed_set = true; },
      "master seed (overrides the config)");
  if (needs_out) cmd->add_option("--out", f.out_dir, "artifact directory");
}

io::Config effective_config(const CommonFlags &f) {
  io::Config cfg;
  if (!f.config_path.empty()) cfg = io::Config::load(f.config_path);
  if (f.seed_set) cfg.set("seed", std::to_string(f.seed));
  if (!f.holdout.empty()) cfg.set("holdout", f.holdout);
  if (f.cap > 0) cfg.set("eval_cap", std::to_string(f.cap));
  return cfg;
}

struct ToolCorpus {
  corpus::LabeledCorpus data;
  corpus::Vocabulary vocab;
};

corpus::Example to_example(const std::string &text, int label,
                           const corpus::Vocabulary &vocab) {
  corpus::Example ex;
  ex.label = label;
  ex.tokens = corpus::tokenize(text, vocab);
  return ex;
}

// Corpus source: labeled-text files when `train_file` is configured,
// otherwise the synthetic generator.
ToolCorpus load_corpus(const io::Config &cfg) {
  const exp::Settings s = exp::parse_settings(cfg);
  ToolCorpus out;
  if (!cfg.has("train_file")) {
    std::mt19937_64 rng(s.seed ^ 0xc0ffee01ULL);
    corpus::SyntheticCorpus synth = corpus::generate_synthetic_corpus(s.synth, rng);
    out.data = std::move(synth.corpus);
    out.vocab = std::move(synth.vocab);
    return out;
  }
  const corpus::LoadedCorpus train = corpus::load_labeled_file(cfg.get_string("train_file", ""));
  std::vector<std::string> texts;
  for (const auto &[label, text] : train.rows) texts.push_back(text);
  const int vocab_max = static_cast<int>(cfg.get_int("vocab_max", 10000));
  out.vocab = corpus::build_vocab(texts, vocab_max);
  out.data.labels = train.labels;
  auto label_id = [&out](const std::string &name) {
    for (std::size_t i = 0; i < out.data.labels.size(); ++i)
      if (out.data.labels[i] == name) return static_cast<int>(i);
    out.data.labels.push_back(name);
    return static_cast<int>(out.data.labels.size()) - 1;
  };
  for (const auto &[label, text] : train.rows)
    out.data.train.push_back(to_example(text, label_id(label), out.vocab));
  auto load_split = [&](const char *key, std::vector<corpus::Example> &dst) {
    const std::string path = cfg.get_string(key, "");
    if (path.empty()) return;
    for (const auto &[label, text] : corpus::load_labeled_file(path).rows)
      dst.push_back(to_example(text, label_id(label), out.vocab));
  };
  load_split("valid_file", out.data.valid);
  load_split("test_file", out.data.test);
  return out;
}

int cmd_gen_corpus(const CommonFlags &f, const std::string &spec_name) {
  const io::Config cfg = effective_config(f);
  const exp::Settings s = exp::parse_settings(cfg);
  corpus::SynthSpec spec = s.synth;
  if (spec_name == "newspace") {
    std::vector<std::string> base_labels;
    {
      std::mt19937_64 rng(s.seed ^ 0xc0ffee01ULL);
      base_labels = corpus::generate_synthetic_corpus(s.synth, rng).corpus.labels;
    }
    spec = exp::newspace_spec(s, base_labels);
  } else if (spec_name != "default") {
    throw CLI::ValidationError("--spec must be 'default' or 'newspace'");
  }
  std::mt19937_64 rng(s.seed ^ (spec_name == "newspace" ? 0xc0ffee07ULL : 0xc0ffee01ULL));
  const corpus::SyntheticCorpus synth = corpus::generate_synthetic_corpus(spec, rng);
  exp::ensure_artifact_dirs(f.out_dir);
  const std::string dir = f.out_dir + "/corpus";
  corpus::save_labeled_file(dir + "/train.tsv", synth.corpus.train,
                            synth.corpus.labels, synth.vocab);
  corpus::save_labeled_file(dir + "/valid.tsv", synth.corpus.valid,
                            synth.corpus.labels, synth.vocab);
  corpus::save_labeled_file(dir + "/test.tsv", synth.corpus.test,
                            synth.corpus.labels, synth.vocab);
  std::cout << "wrote train/valid/test under " << dir << "\n";
  return 0;
}

int cmd_train_classifier(const CommonFlags &f) {
  const io::Config cfg = effective_config(f);
  const exp::Settings s = exp::parse_settings(cfg);
  const ToolCorpus tc = load_corpus(cfg);
  attr::ClassifierConfig clf_cfg =
      cfg.get_string("clf_role", "bottleneck") == "eval" ? s.eval_clf : s.clf;
  clf_cfg.seed = s.seed ^ 0xc0ffee02ULL;
  const attr::TrainedClassifier trained = attr::train_classifier(tc.data, clf_cfg);
  exp::ensure_artifact_dirs(f.out_dir);
  const std::string path = f.out_dir + "/ckpt/classifier.stsh";
  io::save_checkpoint(path, io::to_checkpoint(trained.classifier, tc.vocab));
  std::cout << "valid_accuracy=" << trained.valid_accuracy << " ckpt=" << path << "\n";
  return 0;
}

int cmd_train_lm(const CommonFlags &f) {
  const io::Config cfg = effective_config(f);
  const exp::Settings s = exp::parse_settings(cfg);
  const ToolCorpus tc = load_corpus(cfg);
  eval::LmConfig lm_cfg = s.lm;
  lm_cfg.seed = s.seed ^ 0xc0ffee04ULL;
  const eval::LanguageModel lm = eval::train_lm(tc.data.train, tc.vocab.size(), lm_cfg);
  exp::ensure_artifact_dirs(f.out_dir);
  const std::string path = f.out_dir + "/ckpt/lm.stsh";
  io::save_checkpoint(path, io::to_checkpoint(lm, tc.vocab));
  std::vector<corpus::TokenSequence> valid_seqs;
  for (const auto &ex : tc.data.valid.empty() ? tc.data.train : tc.data.valid)
    valid_seqs.push_back(ex.tokens);
  std::cout << "valid_ppl=" << eval::perplexity(lm, valid_seqs) << " ckpt=" << path << "\n";
  return 0;
}

int cmd_train_transfer(const CommonFlags &f) {
  const io::Config cfg = effective_config(f);
  const exp::Settings s = exp::parse_settings(cfg);
  if (f.ckpt_path.empty())
    throw CLI::ValidationError("train-transfer requires --ckpt (bottleneck classifier)");
  io::LoadedClassifier loaded =
      io::classifier_from_checkpoint(io::load_checkpoint(f.ckpt_path, "classifier"));
  ToolCorpus tc = load_corpus(cfg);
  // align the corpus with the classifier's vocabulary
  const corpus::LabeledCorpus data = exp::retokenize(tc.data, tc.vocab, loaded.vocab);

  model::TransferModel m(s.model, loaded.vocab, data.labels, s.seed ^ 0xc0ffee05ULL);
  m.set_label_targets(loaded.clf);
  model::TrainConfig train_cfg = s.train;
  train_cfg.seed = s.seed ^ 0xc0ffee06ULL;
  std::ostringstream log;
  model::TransferTrainer trainer(m, data, loaded.clf, train_cfg);
  trainer.run(&log);
  exp::ensure_artifact_dirs(f.out_dir);
  exp::write_text_file(f.out_dir + "/reports/train_log.txt", log.str());
  const std::string path = f.out_dir + "/ckpt/transfer_model.stsh";
  io::save_checkpoint(path, io::to_checkpoint(m));
  std::cout << "ckpt=" << path << "\n";
  return 0;
}

int cmd_transfer(const CommonFlags &f) {
  if (f.ckpt_path.empty() || f.input_path.empty() || f.target_label.empty())
    throw CLI::ValidationError("transfer requires --ckpt, --input, and --target");
  const model::TransferModel m =
      io::transfer_from_checkpoint(io::load_checkpoint(f.ckpt_path, "transfer"));
  const ad::Tensor y_d = m.label_target(f.target_label);
  std::ifstream in(f.input_path);
  if (!in) throw std::runtime_error("cannot open " + f.input_path);
  std::string line;
  while (std::getline(in, line)) {
    const corpus::TokenSequence x = corpus::tokenize(line, m.vocab());
    if (x.empty()) {
      std::cout << "\n";
      continue;
    }
    std::cout << corpus::detokenize(m.transfer(x, y_d), m.vocab()) << "\n";
  }
  return 0;
}

int cmd_evaluate(const CommonFlags &f) {
  const io::Config cfg = effective_config(f);
  const exp::Settings s = exp::parse_settings(cfg);
  const std::string eval_clf_path = cfg.get_string("eval_classifier_ckpt", "");
  const std::string lm_path = cfg.get_string("lm_ckpt", "");
  if (eval_clf_path.empty() || lm_path.empty())
    throw std::runtime_error("evaluate needs eval_classifier_ckpt and lm_ckpt in the config");
  io::LoadedClassifier eval_clf =
      io::classifier_from_checkpoint(io::load_checkpoint(eval_clf_path, "classifier"));
  io::LoadedLm lm = io::lm_from_checkpoint(io::load_checkpoint(lm_path, "lm"));
  ToolCorpus tc = load_corpus(cfg);
  const corpus::LabeledCorpus data = exp::retokenize(tc.data, tc.vocab, eval_clf.vocab);

  eval::DirectionEvalOptions opts;
  opts.cap = s.eval_cap;
  eval::EvalReport report;
  report.rows = eval::baseline_rows(eval_clf.clf, lm.lm, data, opts);
  if (!f.ckpt_path.empty() && f.ckpt_path != "identity") {
    const model::TransferModel m =
        io::transfer_from_checkpoint(io::load_checkpoint(f.ckpt_path, "transfer"));
    const auto fn = eval::model_transfer_fn(
        m, eval_clf.vocab, [&m](int label) { return m.label_target(label); });
    eval::EvalReport rep =
        eval::evaluate_directions(fn, eval_clf.clf, lm.lm, data, opts, "Model");
    report.rows.push_back(rep.rows[0]);
    report.directions = std::move(rep.directions);
  }
  exp::ensure_artifact_dirs(f.out_dir);
  exp::write_text_file(f.out_dir + "/reports/evaluate.tsv", report.to_tsv());
  std::cout << report.to_tsv();
  return 0;
}

int cmd_map_labels(const CommonFlags &f) {
  const io::Config cfg = effective_config(f);
  const exp::Settings s = exp::parse_settings(cfg);
  if (f.ckpt_path.empty())
    throw CLI::ValidationError("map-labels requires --ckpt (old-space classifier)");
  io::LoadedClassifier old_clf =
      io::classifier_from_checkpoint(io::load_checkpoint(f.ckpt_path, "classifier"));
  ToolCorpus tc = load_corpus(cfg);
  const corpus::LabeledCorpus data = exp::retokenize(tc.data, tc.vocab, old_clf.vocab);
  attr::LabelMapConfig map_cfg = s.labelmap;
  map_cfg.seed = s.seed ^ 0xc0ffee0aULL;
  const attr::FittedLabelMap fitted = attr::fit_label_map(old_clf.clf, data, map_cfg);
  exp::ensure_artifact_dirs(f.out_dir);
  const std::string path = f.out_dir + "/ckpt/labelmap.stsh";
  io::save_checkpoint(path, io::to_checkpoint(fitted.map));
  std::cout << "map_test_accuracy=" << fitted.test_accuracy << " ckpt=" << path << "\n";
  return 0;
}

void print_rows(const eval::EvalReport &report) { std::cout << report.to_tsv(); }

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"fine-grained text style transfer experiments"};
  app.require_subcommand(1);
  CommonFlags f;
  std::string spec_name = "default";

  auto *gen = app.add_subcommand("gen-corpus", "write a synthetic labeled corpus");
  add_common(gen, f);
  gen->add_option("--spec", spec_name, "default | newspace");

  auto *tclf = app.add_subcommand("train-classifier", "train an attribute classifier");
  add_common(tclf, f);

  auto *tlm = app.add_subcommand("train-lm", "train the evaluation language model");
  add_common(tlm, f);

  auto *ttr = app.add_subcommand("train-transfer", "train the transfer model");
  add_common(ttr, f);
  ttr->add_option("--ckpt", f.ckpt_path, "bottleneck classifier checkpoint");

  auto *tr = app.add_subcommand("transfer", "rewrite input lines toward a target label");
  add_common(tr, f, /*needs_out=*/false);
  tr->add_option("--ckpt", f.ckpt_path, "transfer-model checkpoint");
  tr->add_option("--input", f.input_path, "input text file, one example per line");
  tr->add_option("--target", f.target_label, "target label name");

  auto *ev = app.add_subcommand("evaluate", "full direction-matrix evaluation");
  add_common(ev, f);
  ev->add_option("--ckpt", f.ckpt_path, "transfer checkpoint, or 'identity'");
  ev->add_option("--cap", f.cap, "max source sequences per source label");

  auto *fg = app.add_subcommand("exp-finegrained", "fine-grained transfer experiment");
  add_common(fg, f);
  fg->add_option("--cap", f.cap, "max source sequences per source label");

  auto *ho = app.add_subcommand("exp-heldout", "zero-shot held-out-label experiment");
  add_common(ho, f);
  ho->add_option("--holdout", f.holdout, "comma-separated held-out label names");
  ho->add_option("--cap", f.cap, "max source sequences per source label");

  auto *ns = app.add_subcommand("exp-newspace", "new-attribute-space experiment");
  add_common(ns, f);
  ns->add_option("--cap", f.cap, "max source sequences per source label");

  auto *ml = app.add_subcommand("map-labels", "fit a logistic label map");
  add_common(ml, f);
  ml->add_option("--ckpt", f.ckpt_path, "old-space classifier checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(f, spec_name);
    if (tclf->parsed()) return cmd_train_classifier(f);
    if (tlm->parsed()) return cmd_train_lm(f);
    if (ttr->parsed()) return cmd_train_transfer(f);
    if (tr->parsed()) return cmd_transfer(f);
    if (ev->parsed()) return cmd_evaluate(f);
    if (ml->parsed()) return cmd_map_labels(f);
    if (fg->parsed()) {
      print_rows(exp::exp_finegrained(effective_config(f), f.out_dir).report);
      return 0;
    }
    if (ho->parsed()) {
      print_rows(exp::exp_heldout(effective_config(f), f.out_dir).report);
      return 0;
    }
    if (ns->parsed()) {
      print_rows(exp::exp_newspace(effective_config(f), f.out_dir).report);
      return 0;
    }
  } catch (const CLI::ValidationError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
