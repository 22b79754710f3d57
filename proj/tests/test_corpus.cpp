#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>

#include "stsh/corpus.hpp"

using namespace stsh::corpus;

TEST_CASE("vocabulary reserves special ids and rejects reserved names") {
  Vocabulary v;
  CHECK(v.size() == kNumReserved);
  CHECK(v.token(kPad) == "<pad>");
  CHECK(v.token(kBos) == "<bos>");
  CHECK(v.token(kEos) == "<eos>");
  CHECK(v.token(kUnk) == "<unk>");
  const int a = v.add("alpha");
  CHECK(a == kNumReserved);
  CHECK(v.add("alpha") == a);  // idempotent
  CHECK(v.id("missing") == kUnk);
  CHECK_THROWS(v.add("<pad>"));
  CHECK_THROWS(v.token(-1));
}

TEST_CASE("tokenize lowercases, splits on whitespace, maps unknowns to UNK") {
  Vocabulary v;
  v.add("hello");
  v.add("world");
  const TokenSequence seq = tokenize("  Hello\tWORLD zap ", v);
  REQUIRE(seq.size() == 3);
  CHECK(seq[0] == v.id("hello"));
  CHECK(seq[1] == v.id("world"));
  CHECK(seq[2] == kUnk);
  CHECK(detokenize({seq[0], seq[1]}, v) == "hello world");
  CHECK(tokenize("", v).empty());
}

TEST_CASE("build_vocab orders by count then lexicographically and caps size") {
  const std::vector<std::string> texts{"b b b a a c", "a d d", "e"};
  // counts: a3 b3 d2 c1 e1
  Vocabulary v = build_vocab(texts, 10);
  CHECK(v.id("a") == kNumReserved + 0);  // ties break lexicographically
  CHECK(v.id("b") == kNumReserved + 1);
  CHECK(v.id("d") == kNumReserved + 2);
  CHECK(v.id("c") == kNumReserved + 3);
  CHECK(v.id("e") == kNumReserved + 4);
  Vocabulary capped = build_vocab(texts, 2);
  CHECK(capped.size() == kNumReserved + 2);
  Vocabulary min2 = build_vocab(texts, 10, 2);
  CHECK(min2.id("c") == kUnk);
  CHECK(min2.id("d") != kUnk);
  CHECK_THROWS(build_vocab({}, 10));
}

TEST_CASE("corrupt keeps at least one token and preserves the multiset subset") {
  std::mt19937_64 rng(3);
  NoiseConfig heavy{0.99, 0};
  for (int i = 0; i < 200; ++i) {
    const TokenSequence x{5, 6, 7};
    const TokenSequence out = corrupt(x, heavy, rng);
    CHECK(!out.empty());
    for (int tok : out) CHECK(std::count(x.begin(), x.end(), tok) > 0);
  }
  CHECK_THROWS(corrupt({}, heavy, rng));
}

TEST_CASE("corrupt word-drop rate matches the configured probability") {
  std::mt19937_64 rng(11);
  NoiseConfig cfg{0.1, 0};
  long kept = 0, total = 0;
  const TokenSequence x(50, 9);
  for (int i = 0; i < 4000; ++i) {
    kept += static_cast<long>(corrupt(x, cfg, rng).size());
    total += static_cast<long>(x.size());
  }
  const double keep_rate = static_cast<double>(kept) / static_cast<double>(total);
  CHECK(keep_rate == doctest::Approx(0.9).epsilon(0.012));
}

TEST_CASE("shuffle displaces no token more than the window") {
  std::mt19937_64 rng(17);
  for (int len = 1; len <= 6; ++len) {
    for (int k = 0; k <= 2; ++k) {
      NoiseConfig cfg{0.0, k};
      TokenSequence x(len);
      for (int i = 0; i < len; ++i) x[i] = 100 + i;  // distinct -> positions traceable
      for (int trial = 0; trial < 500; ++trial) {
        const TokenSequence out = corrupt(x, cfg, rng);
        REQUIRE(out.size() == x.size());  // no drop at p = 0
        TokenSequence sorted = out;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == x);  // permutation
        for (int j = 0; j < len; ++j) {
          const int orig = out[j] - 100;
          CHECK(std::abs(orig - j) <= k);
        }
        if (k == 0) CHECK(out == x);
      }
    }
  }
}

TEST_CASE("synthetic corpus structure and generative oracle") {
  SynthSpec spec;
  spec.num_labels = 4;
  spec.train_per_label = 200;
  spec.valid_per_label = 40;
  spec.test_per_label = 40;
  std::mt19937_64 rng(5);
  const SyntheticCorpus synth = generate_synthetic_corpus(spec, rng);
  const auto &c = synth.corpus;
  CHECK(c.num_labels() == 4);
  CHECK(c.train.size() == 4 * 200);
  CHECK(c.valid.size() == 4 * 40);
  CHECK(c.test.size() == 4 * 40);

  // marker sets are disjoint across labels
  std::set<std::string> all_markers;
  for (const auto &set : synth.marker_sets)
    for (const auto &m : set) {
      CHECK(all_markers.insert(m).second);
      CHECK(m.rfind("mk_", 0) == 0);
    }
  CHECK(all_markers.size() == 4u * 5u);

  // lengths: 5..12 content tokens plus 1..3 markers
  for (const auto &ex : c.train) {
    CHECK(ex.tokens.size() >= 6);
    CHECK(ex.tokens.size() <= 15);
  }

  // the oracle recovers the generating label on the vast majority of examples
  long agree = 0;
  for (const auto &ex : c.train)
    if (synth.oracle_label(ex.tokens) == ex.label) ++agree;
  CHECK(static_cast<double>(agree) / c.train.size() > 0.85);

  // splits are disjoint from train (rejection-resampled)
  std::set<TokenSequence> train_seqs;
  for (const auto &ex : c.train) train_seqs.insert(ex.tokens);
  for (const auto &ex : c.valid) CHECK(train_seqs.count(ex.tokens) == 0);
  for (const auto &ex : c.test) CHECK(train_seqs.count(ex.tokens) == 0);
}

TEST_CASE("synthetic corpus honors content offset and marker prefix") {
  SynthSpec a;
  a.num_labels = 2;
  a.content_vocab_size = 10;
  a.train_per_label = 20;
  a.valid_per_label = 5;
  a.test_per_label = 5;
  SynthSpec b = a;
  b.content_token_offset = 4;
  b.marker_prefix = "nk";
  std::mt19937_64 r1(9), r2(9);
  const SyntheticCorpus ca = generate_synthetic_corpus(a, r1);
  const SyntheticCorpus cb = generate_synthetic_corpus(b, r2);
  // content overlap: w4..w9 shared, w0..w3 / w10..w13 not
  CHECK(ca.vocab.contains("w0"));
  CHECK(!cb.vocab.contains("w0"));
  CHECK(ca.vocab.contains("w9"));
  CHECK(cb.vocab.contains("w9"));
  CHECK(cb.vocab.contains("w13"));
  CHECK(!ca.vocab.contains("w13"));
  for (const auto &set : cb.marker_sets)
    for (const auto &m : set) CHECK(m.rfind("nk_", 0) == 0);
}

TEST_CASE("generator rejects invalid specs") {
  std::mt19937_64 rng(1);
  SynthSpec bad;
  bad.num_labels = 1;
  CHECK_THROWS(generate_synthetic_corpus(bad, rng));
  bad = SynthSpec{};
  bad.marker_purity = 0.4;
  CHECK_THROWS(generate_synthetic_corpus(bad, rng));
  bad = SynthSpec{};
  bad.label_names = {"one"};
  CHECK_THROWS(generate_synthetic_corpus(bad, rng));
}

TEST_CASE("balanced sampler covers every label once per block") {
  std::vector<Example> pool;
  for (int l = 0; l < 3; ++l)
    for (int i = 0; i < 7; ++i) pool.push_back({{l * 10 + i}, l});
  BalancedSampler sampler(pool, 3, 42);
  for (int block = 0; block < 20; ++block) {
    std::set<int> seen;
    for (int i = 0; i < 3; ++i) seen.insert(sampler.next().label);
    CHECK(seen.size() == 3u);
  }
  CHECK_THROWS(BalancedSampler(pool, 4, 1));  // label 3 has no examples
}

TEST_CASE("labeled-file round trip") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "stsh_corpus_rt.tsv").string();
  Vocabulary v;
  v.add("red");
  v.add("blue");
  std::vector<Example> examples{{{v.id("red"), v.id("blue")}, 0}, {{v.id("blue")}, 1}};
  save_labeled_file(path, examples, {"warm", "cold"}, v);
  const LoadedCorpus loaded = load_labeled_file(path);
  REQUIRE(loaded.rows.size() == 2);
  CHECK(loaded.labels == std::vector<std::string>{"warm", "cold"});
  CHECK(loaded.rows[0].first == "warm");
  CHECK(loaded.rows[0].second == "red blue");
  CHECK(loaded.rows[1].second == "blue");
  fs::remove(path);
  CHECK_THROWS(load_labeled_file(path));
}
