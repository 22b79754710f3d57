#include "stsh/experiments.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "stsh/serialize.hpp"

namespace stsh::exp {
namespace {

namespace fs = std::filesystem;

// fixed seed offsets so every stage draws from an independent stream
constexpr std::uint64_t kCorpusSeed = 0xc0ffee01ULL;
constexpr std::uint64_t kClfSeed = 0xc0ffee02ULL;
constexpr std::uint64_t kEvalClfSeed = 0xc0ffee03ULL;
constexpr std::uint64_t kLmSeed = 0xc0ffee04ULL;
constexpr std::uint64_t kModelSeed = 0xc0ffee05ULL;
constexpr std::uint64_t kTrainSeed = 0xc0ffee06ULL;
constexpr std::uint64_t kNewCorpusSeed = 0xc0ffee07ULL;
constexpr std::uint64_t kScratchSeed = 0xc0ffee08ULL;
constexpr std::uint64_t kFinetuneSeed = 0xc0ffee09ULL;
constexpr std::uint64_t kLabelMapSeed = 0xc0ffee0aULL;

std::string join(const std::string &a, const std::string &b) {
  return (fs::path(a) / b).string();
}

void save_corpus_files(const std::string &dir, const std::string &prefix,
                       const corpus::LabeledCorpus &data,
                       const corpus::Vocabulary &vocab) {
  corpus::save_labeled_file(join(dir, prefix + "train.tsv"), data.train, data.labels, vocab);
  corpus::save_labeled_file(join(dir, prefix + "valid.tsv"), data.valid, data.labels, vocab);
  corpus::save_labeled_file(join(dir, prefix + "test.tsv"), data.test, data.labels, vocab);
}

std::vector<int> label_ids(const std::vector<std::string> &names,
                           const std::vector<std::string> &labels) {
  std::vector<int> out;
  for (const auto &name : names) {
    auto it = std::find(labels.begin(), labels.end(), name);
    if (it == labels.end())
      throw std::runtime_error("unknown label in holdout list: " + name);
    out.push_back(static_cast<int>(it - labels.begin()));
  }
  return out;
}

std::function<ad::Tensor(int)> class_targets(const model::TransferModel &m) {
  return [&m](int label) { return m.label_target(label); };
}

struct SummaryWriter {
  std::string text;
  void line(const std::string &s) { text += s + "\n"; }
};

}  // namespace

void ensure_artifact_dirs(const std::string &out_dir) {
  fs::create_directories(fs::path(out_dir) / "corpus");
  fs::create_directories(fs::path(out_dir) / "ckpt");
  fs::create_directories(fs::path(out_dir) / "reports");
}

void write_text_file(const std::string &path, const std::string &text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
}

corpus::LabeledCorpus retokenize(const corpus::LabeledCorpus &data,
                                 const corpus::Vocabulary &from,
                                 const corpus::Vocabulary &to) {
  corpus::LabeledCorpus out;
  out.labels = data.labels;
  auto convert = [&](const std::vector<corpus::Example> &src) {
    std::vector<corpus::Example> dst;
    dst.reserve(src.size());
    for (const auto &ex : src) {
      corpus::Example e;
      e.label = ex.label;
      e.tokens = corpus::tokenize(corpus::detokenize(ex.tokens, from), to);
      dst.push_back(std::move(e));
    }
    return dst;
  };
  out.train = convert(data.train);
  out.valid = convert(data.valid);
  out.test = convert(data.test);
  return out;
}

Settings parse_settings(const io::Config &cfg) {
  Settings s;
  s.seed = cfg.get_seed("seed", 1);

  s.model.d_h = static_cast<int>(cfg.get_int("d_h", 64));
  s.model.d_a = static_cast<int>(cfg.get_int("d_a", 8));
  s.model.d_att = static_cast<int>(cfg.get_int("d_att", 32));
  s.model.max_len = static_cast<int>(cfg.get_int("max_len", 40));

  s.train.lambda = cfg.get_double("lambda", 0.1);
  s.train.steps = static_cast<int>(cfg.get_int("steps", 8000));
  s.train.warmup_ae_steps = static_cast<int>(cfg.get_int("warmup_ae_steps", 1000));
  s.train.batch_size = static_cast<int>(cfg.get_int("batch_size", 32));
  s.train.lambda_start = cfg.get_double("lambda_start", 0.6);
  s.train.lambda_hold_frac = cfg.get_double("lambda_hold", 0.15);
  s.train.checkpoint_fractions = {0.25, 0.5, 0.75, 1.0};
  if (cfg.has("checkpoint_fractions")) {
    s.train.checkpoint_fractions.clear();
    for (const auto &v : cfg.get_list("checkpoint_fractions"))
      s.train.checkpoint_fractions.push_back(std::stod(v));
  }
  s.train.sgd.learning_rate = cfg.get_double("learning_rate", 2.0);
  s.train.sgd.gradient_clip_norm = cfg.get_double("clip_norm", 5.0);
  s.train.noise.word_drop_prob = cfg.get_double("word_drop_prob", 0.1);
  s.train.word_drop_final = cfg.get_double("word_drop_final", -1.0);
  s.train.noise.shuffle_window = static_cast<int>(cfg.get_int("shuffle_window", 3));
  s.train.log_every = static_cast<int>(cfg.get_int("log_every", 100));

  s.clf.hidden_dim = s.model.d_a;
  s.clf.table_dim = static_cast<int>(cfg.get_int("clf_table_dim", 32));
  s.clf.ngram_buckets = static_cast<int>(cfg.get_int("clf_buckets", 1 << 16));
  s.clf.steps = static_cast<int>(cfg.get_int("clf_steps", 3000));
  s.clf.batch_size = static_cast<int>(cfg.get_int("clf_batch", 32));
  s.clf.learning_rate = cfg.get_double("clf_lr", 0.5);

  s.eval_clf = s.clf;
  s.eval_clf.hidden_dim = static_cast<int>(cfg.get_int("eval_clf_hidden", 64));
  s.eval_clf.steps = static_cast<int>(cfg.get_int("eval_clf_steps", s.clf.steps));

  s.lm.d_h = static_cast<int>(cfg.get_int("lm_d_h", 64));
  s.lm.steps = static_cast<int>(cfg.get_int("lm_steps", 1200));
  s.lm.batch_size = static_cast<int>(cfg.get_int("lm_batch", 32));
  s.lm.learning_rate = cfg.get_double("lm_lr", 0.3);

  s.eval_cap = static_cast<int>(cfg.get_int("eval_cap", 900));
  s.holdout = cfg.get_list("holdout");

  s.synth.num_labels = static_cast<int>(cfg.get_int("synth_labels", 8));
  s.synth.content_vocab_size = static_cast<int>(cfg.get_int("synth_content_vocab", 200));
  s.synth.markers_per_label = static_cast<int>(cfg.get_int("synth_markers_per_label", 20));
  s.synth.marker_purity = cfg.get_double("synth_purity", 0.9);
  s.synth.min_length = static_cast<int>(cfg.get_int("synth_min_len", 3));
  s.synth.max_length = static_cast<int>(cfg.get_int("synth_max_len", 6));
  s.synth.train_per_label = static_cast<int>(cfg.get_int("synth_train_per_label", 6000));
  s.synth.valid_per_label = static_cast<int>(cfg.get_int("synth_valid_per_label", 300));
  s.synth.test_per_label = static_cast<int>(cfg.get_int("synth_test_per_label", 300));
  s.synth.label_names = cfg.get_list("synth_label_names");

  s.ns_labels = static_cast<int>(cfg.get_int("newspace_labels", 10));
  s.ns_aliased = static_cast<int>(cfg.get_int("newspace_aliased", 3));
  s.ns_train_per_label = static_cast<int>(cfg.get_int("newspace_train_per_label", 0));
  s.ns_valid_per_label = static_cast<int>(cfg.get_int("newspace_valid_per_label", 100));
  s.ns_test_per_label = static_cast<int>(cfg.get_int("newspace_test_per_label", 150));
  s.ns_content_offset = static_cast<int>(cfg.get_int(
      "newspace_content_offset", (s.synth.content_vocab_size * 2) / 5));

  s.scratch_train = s.train;
  s.scratch_train.steps = static_cast<int>(cfg.get_int("newspace_scratch_steps", 150));
  s.scratch_train.warmup_ae_steps =
      static_cast<int>(cfg.get_int("newspace_scratch_warmup", 0));
  s.finetune_train = s.train;
  s.finetune_train.steps = static_cast<int>(cfg.get_int("newspace_finetune_steps", 250));
  s.finetune_train.warmup_ae_steps =
      static_cast<int>(cfg.get_int("newspace_finetune_warmup", 100));

  s.labelmap.steps = static_cast<int>(cfg.get_int("labelmap_steps", 3000));
  return s;
}

corpus::SynthSpec newspace_spec(const Settings &s,
                                const std::vector<std::string> &base_labels) {
  static const char *kFreshNames[] = {"proud", "bored",  "calm",  "tense", "gloomy",
                                      "eager", "weary",  "brave", "lonely", "giddy"};
  if (s.ns_aliased < 0 || s.ns_aliased > static_cast<int>(base_labels.size()))
    throw std::runtime_error("newspace: aliased label count out of range");
  corpus::SynthSpec spec = s.synth;
  spec.num_labels = s.ns_labels;
  spec.train_per_label = s.ns_train_per_label > 0
                             ? s.ns_train_per_label
                             : std::max(50, s.synth.train_per_label / 25);
  spec.valid_per_label = s.ns_valid_per_label;
  spec.test_per_label = s.ns_test_per_label;
  spec.content_token_offset = s.ns_content_offset;
  spec.marker_prefix = "nk";
  spec.label_names.clear();
  for (int l = 0; l < s.ns_labels; ++l) {
    if (l < s.ns_aliased) {
      spec.label_names.push_back(base_labels[l]);
    } else {
      const int f = l - s.ns_aliased;
      if (f >= static_cast<int>(std::size(kFreshNames)))
        throw std::runtime_error("newspace: too many labels for the fresh-name list");
      spec.label_names.push_back(kFreshNames[f]);
    }
  }
  return spec;
}

DriverResult exp_finegrained(const io::Config &cfg, const std::string &out_dir) {
  const Settings s = parse_settings(cfg);
  ensure_artifact_dirs(out_dir);
  const std::string corpus_dir = join(out_dir, "corpus");
  const std::string ckpt_dir = join(out_dir, "ckpt");
  const std::string reports_dir = join(out_dir, "reports");

  std::mt19937_64 corpus_rng(s.seed ^ kCorpusSeed);
  const corpus::SyntheticCorpus synth = corpus::generate_synthetic_corpus(s.synth, corpus_rng);
  save_corpus_files(corpus_dir, "", synth.corpus, synth.vocab);

  attr::ClassifierConfig clf_cfg = s.clf;
  clf_cfg.seed = s.seed ^ kClfSeed;
  const attr::TrainedClassifier tc = attr::train_classifier(synth.corpus, clf_cfg);
  io::save_checkpoint(join(ckpt_dir, "classifier.stsh"),
                      io::to_checkpoint(tc.classifier, synth.vocab));

  attr::ClassifierConfig eval_cfg = s.eval_clf;
  eval_cfg.seed = s.seed ^ kEvalClfSeed;
  const attr::TrainedClassifier te = attr::train_classifier(synth.corpus, eval_cfg);
  io::save_checkpoint(join(ckpt_dir, "eval_classifier.stsh"),
                      io::to_checkpoint(te.classifier, synth.vocab));
  double eval_test_acc = attr::accuracy(te.classifier, synth.corpus.test);

  eval::LmConfig lm_cfg = s.lm;
  lm_cfg.seed = s.seed ^ kLmSeed;
  const eval::LanguageModel lm =
      eval::train_lm(synth.corpus.train, synth.vocab.size(), lm_cfg);
  io::save_checkpoint(join(ckpt_dir, "lm.stsh"), io::to_checkpoint(lm, synth.vocab));

  model::TransferModel m(s.model, synth.vocab, synth.corpus.labels, s.seed ^ kModelSeed);
  m.set_label_targets(tc.classifier);
  model::TrainConfig train_cfg = s.train;
  train_cfg.seed = s.seed ^ kTrainSeed;
  std::ostringstream train_log;
  model::TransferTrainer trainer(m, synth.corpus, tc.classifier, train_cfg);
  const auto snapshots = trainer.run(&train_log);
  write_text_file(join(reports_dir, "train_log.txt"), train_log.str());

  eval::DirectionEvalOptions opts;
  opts.cap = s.eval_cap;
  DriverResult result;
  result.clf_accuracy = tc.valid_accuracy;
  result.eval_clf_accuracy = eval_test_acc;
  result.report.rows = eval::baseline_rows(te.classifier, lm, synth.corpus, opts);
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    model::TransferTrainer::restore(m, snapshots[k]);
    io::save_checkpoint(
        join(ckpt_dir, "transfer_model" + std::to_string(k + 1) + ".stsh"),
        io::to_checkpoint(m));
    const auto fn = eval::model_transfer_fn(m, synth.vocab, class_targets(m));
    eval::EvalReport rep = eval::evaluate_directions(
        fn, te.classifier, lm, synth.corpus, opts, "Model" + std::to_string(k + 1));
    result.report.rows.push_back(rep.rows[0]);
    if (k + 1 == snapshots.size()) result.report.directions = std::move(rep.directions);
  }

  result.report_path = join(reports_dir, "finegrained.tsv");
  write_text_file(result.report_path, result.report.to_tsv());
  SummaryWriter sum;
  char buf[128];
  std::snprintf(buf, sizeof buf, "bottleneck_valid_accuracy\t%.4f", result.clf_accuracy);
  sum.line(buf);
  std::snprintf(buf, sizeof buf, "eval_clf_test_accuracy\t%.4f", result.eval_clf_accuracy);
  sum.line(buf);
  write_text_file(join(reports_dir, "finegrained_summary.tsv"), sum.text);
  return result;
}

DriverResult exp_heldout(const io::Config &cfg, const std::string &out_dir) {
  const Settings s = parse_settings(cfg);
  ensure_artifact_dirs(out_dir);
  const std::string corpus_dir = join(out_dir, "corpus");
  const std::string ckpt_dir = join(out_dir, "ckpt");
  const std::string reports_dir = join(out_dir, "reports");

  std::mt19937_64 corpus_rng(s.seed ^ kCorpusSeed);
  const corpus::SyntheticCorpus synth = corpus::generate_synthetic_corpus(s.synth, corpus_rng);
  save_corpus_files(corpus_dir, "", synth.corpus, synth.vocab);
  const int K = synth.corpus.num_labels();

  std::vector<std::string> holdout = s.holdout;
  if (holdout.empty())
    holdout = {synth.corpus.labels[K - 2], synth.corpus.labels[K - 1]};
  const std::vector<int> holdout_ids = label_ids(holdout, synth.corpus.labels);
  if (static_cast<int>(holdout_ids.size()) >= K)
    throw std::runtime_error("holdout must be a proper subset of the label set");
  std::vector<int> seen_ids;
  for (int l = 0; l < K; ++l)
    if (std::find(holdout_ids.begin(), holdout_ids.end(), l) == holdout_ids.end())
      seen_ids.push_back(l);

  // classifier and evaluation stack see all K labels
  attr::ClassifierConfig clf_cfg = s.clf;
  clf_cfg.seed = s.seed ^ kClfSeed;
  const attr::TrainedClassifier tc = attr::train_classifier(synth.corpus, clf_cfg);
  io::save_checkpoint(join(ckpt_dir, "classifier.stsh"),
                      io::to_checkpoint(tc.classifier, synth.vocab));
  attr::ClassifierConfig eval_cfg = s.eval_clf;
  eval_cfg.seed = s.seed ^ kEvalClfSeed;
  const attr::TrainedClassifier te = attr::train_classifier(synth.corpus, eval_cfg);
  eval::LmConfig lm_cfg = s.lm;
  lm_cfg.seed = s.seed ^ kLmSeed;
  const eval::LanguageModel lm =
      eval::train_lm(synth.corpus.train, synth.vocab.size(), lm_cfg);

  model::TransferModel m(s.model, synth.vocab, synth.corpus.labels, s.seed ^ kModelSeed);
  m.set_label_targets(tc.classifier);
  model::TrainConfig train_cfg = s.train;
  train_cfg.seed = s.seed ^ kTrainSeed;
  std::ostringstream train_log;
  model::TransferTrainer trainer(m, synth.corpus, tc.classifier, train_cfg, holdout_ids);
  trainer.run(&train_log);
  write_text_file(join(reports_dir, "train_log.txt"), train_log.str());
  io::save_checkpoint(join(ckpt_dir, "transfer_model.stsh"), io::to_checkpoint(m));

  eval::DirectionEvalOptions opts;
  opts.cap = s.eval_cap;
  DriverResult result;
  result.clf_accuracy = tc.valid_accuracy;
  result.eval_clf_accuracy = attr::accuracy(te.classifier, synth.corpus.test);
  result.report.rows = eval::baseline_rows(te.classifier, lm, synth.corpus, opts);

  const auto fn = eval::model_transfer_fn(m, synth.vocab, class_targets(m));
  eval::DirectionEvalOptions seen_opts = opts;
  seen_opts.target_labels = seen_ids;
  seen_opts.source_labels = seen_ids;
  eval::EvalReport seen_rep =
      eval::evaluate_directions(fn, te.classifier, lm, synth.corpus, seen_opts, "Model-seen");
  eval::DirectionEvalOptions held_opts = opts;
  held_opts.target_labels = holdout_ids;
  held_opts.source_labels = seen_ids;  // sources the model was trained on
  eval::EvalReport held_rep = eval::evaluate_directions(fn, te.classifier, lm, synth.corpus,
                                                        held_opts, "Model-heldout");
  result.report.rows.push_back(seen_rep.rows[0]);
  result.report.rows.push_back(held_rep.rows[0]);
  result.report.directions = seen_rep.directions;
  result.report.directions.insert(result.report.directions.end(),
                                  held_rep.directions.begin(), held_rep.directions.end());

  result.report_path = join(reports_dir, "heldout.tsv");
  write_text_file(result.report_path, result.report.to_tsv());
  return result;
}

DriverResult exp_newspace(const io::Config &cfg, const std::string &out_dir) {
  const Settings s = parse_settings(cfg);
  ensure_artifact_dirs(out_dir);
  const std::string corpus_dir = join(out_dir, "corpus");
  const std::string ckpt_dir = join(out_dir, "ckpt");
  const std::string reports_dir = join(out_dir, "reports");

  // base space: corpus, bottleneck classifier, pretrained transfer model
  std::mt19937_64 corpus_rng(s.seed ^ kCorpusSeed);
  const corpus::SyntheticCorpus base = corpus::generate_synthetic_corpus(s.synth, corpus_rng);
  save_corpus_files(corpus_dir, "base_", base.corpus, base.vocab);

  attr::ClassifierConfig clf_cfg = s.clf;
  clf_cfg.seed = s.seed ^ kClfSeed;
  const attr::TrainedClassifier base_clf = attr::train_classifier(base.corpus, clf_cfg);

  model::TransferModel m(s.model, base.vocab, base.corpus.labels, s.seed ^ kModelSeed);
  m.set_label_targets(base_clf.classifier);
  model::TrainConfig train_cfg = s.train;
  train_cfg.seed = s.seed ^ kTrainSeed;
  std::ostringstream train_log;
  {
    model::TransferTrainer trainer(m, base.corpus, base_clf.classifier, train_cfg);
    trainer.run(&train_log);
  }
  io::save_checkpoint(join(ckpt_dir, "base_transfer.stsh"), io::to_checkpoint(m));

  // new space: small corpus with aliased labels and fresh markers
  const corpus::SynthSpec ns = newspace_spec(s, base.corpus.labels);
  std::mt19937_64 new_rng(s.seed ^ kNewCorpusSeed);
  const corpus::SyntheticCorpus fresh = corpus::generate_synthetic_corpus(ns, new_rng);
  save_corpus_files(corpus_dir, "new_", fresh.corpus, fresh.vocab);

  attr::ClassifierConfig eval_cfg = s.eval_clf;
  eval_cfg.seed = s.seed ^ kEvalClfSeed;
  const attr::TrainedClassifier new_eval = attr::train_classifier(fresh.corpus, eval_cfg);
  eval::LmConfig lm_cfg = s.lm;
  lm_cfg.seed = s.seed ^ kLmSeed;
  const eval::LanguageModel new_lm =
      eval::train_lm(fresh.corpus.train, fresh.vocab.size(), lm_cfg);

  eval::DirectionEvalOptions opts;
  opts.cap = s.eval_cap;
  DriverResult result;
  result.clf_accuracy = base_clf.valid_accuracy;
  result.eval_clf_accuracy = attr::accuracy(new_eval.classifier, fresh.corpus.test);
  result.report.rows = eval::baseline_rows(new_eval.classifier, new_lm, fresh.corpus, opts);

  // (a) Scratch: everything trained on the small corpus only
  {
    attr::ClassifierConfig sc_cfg = s.clf;
    sc_cfg.seed = s.seed ^ kScratchSeed;
    const attr::TrainedClassifier sc_clf = attr::train_classifier(fresh.corpus, sc_cfg);
    model::TransferModel scratch(s.model, fresh.vocab, fresh.corpus.labels,
                                 s.seed ^ kScratchSeed);
    scratch.set_label_targets(sc_clf.classifier);
    model::TrainConfig sc_train = s.scratch_train;
    sc_train.seed = s.seed ^ kScratchSeed;
    model::TransferTrainer trainer(scratch, fresh.corpus, sc_clf.classifier, sc_train);
    trainer.run(&train_log);
    io::save_checkpoint(join(ckpt_dir, "scratch_transfer.stsh"), io::to_checkpoint(scratch));
    const auto fn = eval::model_transfer_fn(scratch, fresh.vocab, class_targets(scratch));
    eval::EvalReport rep = eval::evaluate_directions(fn, new_eval.classifier, new_lm,
                                                     fresh.corpus, opts, "Scratch");
    result.report.rows.push_back(rep.rows[0]);
  }

  // (b) Zero-shot: frozen base model, targets from a logistic label map
  {
    const corpus::LabeledCorpus new_in_base = retokenize(fresh.corpus, fresh.vocab, base.vocab);
    attr::LabelMapConfig map_cfg = s.labelmap;
    map_cfg.seed = s.seed ^ kLabelMapSeed;
    const attr::FittedLabelMap fitted =
        attr::fit_label_map(base_clf.classifier, new_in_base, map_cfg);
    result.labelmap_accuracy = fitted.test_accuracy;
    io::save_checkpoint(join(ckpt_dir, "labelmap.stsh"), io::to_checkpoint(fitted.map));
    const auto fn = eval::model_transfer_fn(
        m, fresh.vocab, [&fitted](int label) { return fitted.map.target(label); });
    eval::EvalReport rep = eval::evaluate_directions(fn, new_eval.classifier, new_lm,
                                                     fresh.corpus, opts, "Zero-shot");
    result.report.rows.push_back(rep.rows[0]);
  }

  // (c) Fine-tuned: extend the base model's vocabulary and keep training on
  // the small corpus (mutates m, so this runs after the zero-shot pass)
  {
    for (const auto &tok : io::vocab_tokens(fresh.vocab)) m.mutable_vocab().add(tok);
    std::mt19937_64 ext_rng(s.seed ^ kFinetuneSeed);
    m.extend_vocab_params(ext_rng);
    const corpus::LabeledCorpus new_in_ext = retokenize(fresh.corpus, fresh.vocab, m.vocab());
    attr::ClassifierConfig ft_cfg = s.clf;
    ft_cfg.seed = s.seed ^ kFinetuneSeed;
    const attr::TrainedClassifier ft_clf = attr::train_classifier(new_in_ext, ft_cfg);
    model::TrainConfig ft_train = s.finetune_train;
    ft_train.seed = s.seed ^ kFinetuneSeed;
    model::fine_tune(m, new_in_ext, ft_clf.classifier, ft_train, &train_log);
    m.set_labels(fresh.corpus.labels);
    m.set_label_targets(ft_clf.classifier);
    io::save_checkpoint(join(ckpt_dir, "finetuned_transfer.stsh"), io::to_checkpoint(m));
    const auto fn = eval::model_transfer_fn(m, fresh.vocab, class_targets(m));
    eval::EvalReport rep = eval::evaluate_directions(fn, new_eval.classifier, new_lm,
                                                     fresh.corpus, opts, "Fine-tuned");
    result.report.rows.push_back(rep.rows[0]);
    result.report.directions = std::move(rep.directions);
  }

  write_text_file(join(reports_dir, "train_log.txt"), train_log.str());
  result.report_path = join(reports_dir, "newspace.tsv");
  write_text_file(result.report_path, result.report.to_tsv());
  SummaryWriter sum;
  char buf[128];
  std::snprintf(buf, sizeof buf, "labelmap_test_accuracy\t%.4f", result.labelmap_accuracy);
  sum.line(buf);
  write_text_file(join(reports_dir, "newspace_summary.tsv"), sum.text);
  return result;
}

}  // namespace stsh::exp
