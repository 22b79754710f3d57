#pragma once

#include <string>
#include <vector>

#include "stsh/classifier.hpp"
#include "stsh/config.hpp"
#include "stsh/corpus.hpp"
#include "stsh/metrics.hpp"
#include "stsh/seq2seq.hpp"

namespace stsh::exp {

// Everything the experiment drivers read from the flat config file, with
// desk-scale defaults. Unknown keys are ignored; malformed values throw.
struct Settings {
  std::uint64_t seed = 1;
  corpus::SynthSpec synth;
  attr::ClassifierConfig clf;        // bottleneck (hidden = d_a)
  attr::ClassifierConfig eval_clf;   // evaluation classifier (hidden 64)
  eval::LmConfig lm;
  model::ModelConfig model;
  model::TrainConfig train;
  int eval_cap = 900;
  std::vector<std::string> holdout;  // label names excluded from transfer training

  // second attribute space (exp-newspace)
  int ns_labels = 10;
  int ns_aliased = 3;                // label names shared with the base space
  int ns_train_per_label = 0;        // 0 = base train_per_label / 25
  int ns_valid_per_label = 100;
  int ns_test_per_label = 150;
  int ns_content_offset = 60;        // 60% content-vocab overlap with the base
  model::TrainConfig scratch_train;
  model::TrainConfig finetune_train;
  attr::LabelMapConfig labelmap;
};

Settings parse_settings(const io::Config &cfg);

// Builds the second-space synthetic spec (aliased labels, fresh markers,
// partially shared content vocabulary, ~25x less data).
corpus::SynthSpec newspace_spec(const Settings &s,
                                const std::vector<std::string> &base_labels);

struct DriverResult {
  eval::EvalReport report;            // baseline rows first, then model rows
  std::string report_path;            // main TSV under <out>/reports/
  double clf_accuracy = 0.0;          // bottleneck classifier, valid split
  double eval_clf_accuracy = 0.0;     // evaluation classifier, test split
  double labelmap_accuracy = 0.0;     // exp-newspace only
};

DriverResult exp_finegrained(const io::Config &cfg, const std::string &out_dir);
DriverResult exp_heldout(const io::Config &cfg, const std::string &out_dir);
DriverResult exp_newspace(const io::Config &cfg, const std::string &out_dir);

// Re-encodes a corpus from one vocabulary into another through text.
corpus::LabeledCorpus retokenize(const corpus::LabeledCorpus &data,
                                 const corpus::Vocabulary &from,
                                 const corpus::Vocabulary &to);

void ensure_artifact_dirs(const std::string &out_dir);
void write_text_file(const std::string &path, const std::string &text);

}  // namespace stsh::exp
