#include "stsh/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace stsh::corpus {
namespace {

const char *kReservedNames[kNumReserved] = {"<pad>", "<bos>", "<eos>", "<unk>"};

const char *kDefaultLabelNames[] = {
    "happy",   "sad",     "angry",    "curious", "hopeful", "thankful",
    "shocked", "sleepy",  "grateful", "annoyed", "pumped",  "confused",
    "joyful",  "ecstatic", "frustrated", "heartbroken"};

std::vector<std::string> split_ws_lower(const std::string &text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string seq_key(const TokenSequence &seq, int label) {
  std::string key = std::to_string(label) + "|";
  for (int id : seq) {
    key += std::to_string(id);
    key += ',';
  }
  return key;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const char *name : kReservedNames) {
    ids_[name] = static_cast<int>(tokens_.size());
    tokens_.push_back(name);
  }
}

int Vocabulary::add(const std::string &token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) {
    if (it->second < kNumReserved)
      throw std::invalid_argument("Vocabulary::add: reserved token " + token);
    return it->second;
  }
  const int id = static_cast<int>(tokens_.size());
  ids_[token] = id;
  tokens_.push_back(token);
  return id;
}

int Vocabulary::id(const std::string &token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string &Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary::token: bad id");
  return tokens_[id];
}

bool Vocabulary::contains(const std::string &token) const {
  return ids_.count(token) != 0;
}

TokenSequence tokenize(const std::string &text, const Vocabulary &vocab) {
  TokenSequence out;
  for (const auto &tok : split_ws_lower(text)) out.push_back(vocab.id(tok));
  return out;
}

std::string detokenize(const TokenSequence &seq, const Vocabulary &vocab) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(seq[i]);
  }
  return out;
}

Vocabulary build_vocab(const std::vector<std::string> &texts, int max_size,
                       int min_count) {
  if (texts.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::map<std::string, long> counts;  // ordered map gives the lexicographic tie-break
  for (const auto &t : texts)
    for (const auto &tok : split_ws_lower(t)) ++counts[tok];
  std::vector<std::pair<std::string, long>> entries(counts.begin(), counts.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto &a, const auto &b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto &[tok, count] : entries) {
    if (vocab.size() - kNumReserved >= max_size) break;
    if (count < min_count) continue;
    vocab.add(tok);
  }
  return vocab;
}

TokenSequence corrupt(const TokenSequence &x, const NoiseConfig &cfg,
                      std::mt19937_64 &rng) {
  if (x.empty()) throw std::invalid_argument("corrupt: empty input");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TokenSequence kept;
  for (int tok : x)
    if (unit(rng) >= cfg.word_drop_prob) kept.push_back(tok);
  if (kept.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
    kept.push_back(x[pick(rng)]);
  }
  if (cfg.shuffle_window > 0 && kept.size() > 1) {
    // sort by index + U[0,k]; bounds displacement by k
    std::vector<std::pair<double, int>> keyed(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i)
      keyed[i] = {static_cast<double>(i) + unit(rng) * cfg.shuffle_window, kept[i]};
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto &a, const auto &b) { return a.first < b.first; });
    for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = keyed[i].second;
  }
  return kept;
}

int SyntheticCorpus::oracle_label(const TokenSequence &tokens) const {
  std::vector<int> counts(corpus.labels.size(), 0);
  for (int tok : tokens) {
    auto it = marker_token_to_label_.find(tok);
    if (it != marker_token_to_label_.end()) ++counts[it->second];
  }
  int best = 0;
  for (std::size_t l = 1; l < counts.size(); ++l)
    if (counts[l] > counts[best]) best = static_cast<int>(l);
  return best;
}

SyntheticCorpus generate_synthetic_corpus(const SynthSpec &spec, std::mt19937_64 &rng) {
  if (spec.num_labels < 2 || spec.content_vocab_size < 1 ||
      spec.markers_per_label < 1 || spec.marker_purity <= 0.5 ||
      spec.marker_purity > 1.0 || spec.min_length < 1 ||
      spec.max_length < spec.min_length || spec.train_per_label < 1)
    throw std::invalid_argument("generate_synthetic_corpus: invalid spec");

  SyntheticCorpus out;
  auto &labels = out.corpus.labels;
  if (!spec.label_names.empty()) {
    if (static_cast<int>(spec.label_names.size()) != spec.num_labels)
      throw std::invalid_argument("generate_synthetic_corpus: label name count mismatch");
    labels = spec.label_names;
  } else {
    const int named = static_cast<int>(std::size(kDefaultLabelNames));
    for (int l = 0; l < spec.num_labels; ++l)
      labels.push_back(l < named ? kDefaultLabelNames[l] : "label" + std::to_string(l));
  }

  std::vector<int> content_ids;
  for (int i = 0; i < spec.content_vocab_size; ++i)
    content_ids.push_back(
        out.vocab.add("w" + std::to_string(spec.content_token_offset + i)));

  out.marker_sets.resize(spec.num_labels);
  std::vector<std::vector<int>> marker_ids(spec.num_labels);
  for (int l = 0; l < spec.num_labels; ++l)
    for (int m = 0; m < spec.markers_per_label; ++m) {
      const std::string tok = spec.marker_prefix + "_" + labels[l] + "_" + std::to_string(m);
      const int id = out.vocab.add(tok);
      out.marker_sets[l].push_back(tok);
      marker_ids[l].push_back(id);
      out.marker_token_to_label_[id] = l;
    }

  std::uniform_int_distribution<int> len_dist(spec.min_length, spec.max_length);
  std::uniform_int_distribution<int> nmark_dist(1, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> content_dist(0, spec.content_vocab_size - 1);
  std::uniform_int_distribution<int> marker_dist(0, spec.markers_per_label - 1);

  auto make_example = [&](int label) {
    Example ex;
    ex.label = label;
    const int len = len_dist(rng);
    for (int i = 0; i < len; ++i) ex.tokens.push_back(content_ids[content_dist(rng)]);
    const int nmark = nmark_dist(rng);
    for (int m = 0; m < nmark; ++m) {
      int src = label;
      if (unit(rng) >= spec.marker_purity) {
        std::uniform_int_distribution<int> other(0, spec.num_labels - 2);
        src = other(rng);
        if (src >= label) ++src;
      }
      const int tok = marker_ids[src][marker_dist(rng)];
      std::uniform_int_distribution<std::size_t> pos(0, ex.tokens.size());
      ex.tokens.insert(ex.tokens.begin() + pos(rng), tok);
    }
    return ex;
  };

  std::set<std::string> train_keys;
  for (int l = 0; l < spec.num_labels; ++l)
    for (int i = 0; i < spec.train_per_label; ++i) {
      Example ex = make_example(l);
      train_keys.insert(seq_key(ex.tokens, l));
      out.corpus.train.push_back(std::move(ex));
    }
  // valid/test resample on collision with train so the splits stay disjoint
  std::set<std::string> held_keys;
  auto fill_split = [&](std::vector<Example> &split, int per_label) {
    for (int l = 0; l < spec.num_labels; ++l)
      for (int i = 0; i < per_label; ++i) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
          Example ex = make_example(l);
          const std::string key = seq_key(ex.tokens, l);
          if (train_keys.count(key) || held_keys.count(key)) continue;
          held_keys.insert(key);
          split.push_back(std::move(ex));
          break;
        }
      }
  };
  fill_split(out.corpus.valid, spec.valid_per_label);
  fill_split(out.corpus.test, spec.test_per_label);
  return out;
}

BalancedSampler::BalancedSampler(const std::vector<Example> &examples, int num_labels,
                                 std::uint64_t seed)
    : examples_(&examples), rng_(seed) {
  by_label_.resize(num_labels);
  cursor_.assign(num_labels, 0);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const int l = examples[i].label;
    if (l < 0 || l >= num_labels)
      throw std::invalid_argument("BalancedSampler: label out of range");
    by_label_[l].push_back(static_cast<int>(i));
  }
  for (int l = 0; l < num_labels; ++l) {
    if (by_label_[l].empty())
      throw std::invalid_argument("BalancedSampler: label " + std::to_string(l) +
                                  " has no examples");
    std::shuffle(by_label_[l].begin(), by_label_[l].end(), rng_);
  }
  label_order_.resize(num_labels);
  for (int l = 0; l < num_labels; ++l) label_order_[l] = l;
  std::shuffle(label_order_.begin(), label_order_.end(), rng_);
}

const Example &BalancedSampler::next_of_label(int label) {
  auto &ids = by_label_[label];
  if (cursor_[label] >= ids.size()) {
    std::shuffle(ids.begin(), ids.end(), rng_);
    cursor_[label] = 0;
  }
  return (*examples_)[ids[cursor_[label]++]];
}

const Example &BalancedSampler::next() {
  if (label_pos_ >= label_order_.size()) {
    std::shuffle(label_order_.begin(), label_order_.end(), rng_);
    label_pos_ = 0;
  }
  return next_of_label(label_order_[label_pos_++]);
}

std::vector<const Example *> BalancedSampler::next_batch(int batch_size) {
  std::vector<const Example *> batch;
  batch.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) batch.push_back(&next());
  return batch;
}

LoadedCorpus load_labeled_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_labeled_file: cannot open " + path);
  LoadedCorpus out;
  std::unordered_map<std::string, int> label_ids;
  std::vector<long> bad_lines;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      bad_lines.push_back(line_no);
      continue;
    }
    std::string label = line.substr(0, tab);
    std::string text = line.substr(tab + 1);  // later tabs belong to the text
    if (!label_ids.count(label)) {
      label_ids[label] = static_cast<int>(out.labels.size());
      out.labels.push_back(label);
    }
    out.rows.emplace_back(std::move(label), std::move(text));
  }
  if (!bad_lines.empty()) {
    std::ostringstream os;
    os << "load_labeled_file: " << path << ": malformed lines (no tab):";
    for (long n : bad_lines) os << " " << n;
    throw std::runtime_error(os.str());
  }
  if (out.rows.empty())
    throw std::runtime_error("load_labeled_file: " + path + " has no examples");
  return out;
}

void save_labeled_file(const std::string &path,
                       const std::vector<Example> &examples,
                       const std::vector<std::string> &labels,
                       const Vocabulary &vocab) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw std::runtime_error("save_labeled_file: cannot open " + path);
  for (const auto &ex : examples)
    outf << labels.at(ex.label) << '\t' << detokenize(ex.tokens, vocab) << '\n';
}

}  // namespace stsh::corpus
