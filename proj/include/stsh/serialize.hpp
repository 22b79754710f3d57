#pragma once

#include "stsh/checkpoint.hpp"
#include "stsh/classifier.hpp"
#include "stsh/corpus.hpp"
#include "stsh/metrics.hpp"
#include "stsh/seq2seq.hpp"

namespace stsh::io {

std::vector<std::string> vocab_tokens(const corpus::Vocabulary &vocab);
corpus::Vocabulary vocab_from_tokens(const std::vector<std::string> &tokens);

Checkpoint to_checkpoint(const attr::NgramClassifier &clf,
                         const corpus::Vocabulary &vocab);
struct LoadedClassifier {
  attr::NgramClassifier clf;
  corpus::Vocabulary vocab;
};
LoadedClassifier classifier_from_checkpoint(const Checkpoint &ckpt);

Checkpoint to_checkpoint(const model::TransferModel &model);
model::TransferModel transfer_from_checkpoint(const Checkpoint &ckpt);

Checkpoint to_checkpoint(const eval::LanguageModel &lm,
                         const corpus::Vocabulary &vocab);
struct LoadedLm {
  eval::LanguageModel lm;
  corpus::Vocabulary vocab;
};
LoadedLm lm_from_checkpoint(const Checkpoint &ckpt);

Checkpoint to_checkpoint(const attr::LabelMap &map);
attr::LabelMap labelmap_from_checkpoint(const Checkpoint &ckpt);

}  // namespace stsh::io
