#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stsh/tensor.hpp"

namespace stsh::io {

// On-disk model container. Layout: magic "STSH", u32 version, kind string,
// length-prefixed (name, dtype=f32, shape, payload) tensor entries, vocabulary
// token list, label list, config snapshot. All integers little-endian;
// payloads are f32 (in-memory compute stays f64).
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string kind;  // "classifier" | "transfer" | "lm" | "labelmap"
  std::vector<std::pair<std::string, ad::Tensor>> tensors;
  std::vector<std::string> vocab_tokens;  // non-reserved tokens, id order
  std::vector<std::string> labels;
  std::string config_text;
};

void save_checkpoint(const std::string &path, const Checkpoint &ckpt);
Checkpoint load_checkpoint(const std::string &path);
Checkpoint load_checkpoint(const std::string &path, const std::string &expected_kind);

// Round-trips a value through the stored f32 precision.
double to_stored_precision(double v);

}  // namespace stsh::io
