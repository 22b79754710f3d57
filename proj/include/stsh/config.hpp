#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace stsh::io {

// Flat `key = value` config with `#` comments. Values are strings; getters
// parse on demand and fall back to the given default when a key is absent.
class Config {
 public:
  Config() = default;
  static Config parse(const std::string &text);
  static Config load(const std::string &path);

  bool has(const std::string &key) const;
  void set(const std::string &key, const std::string &value);

  std::string get_string(const std::string &key, const std::string &fallback = "") const;
  long get_int(const std::string &key, long fallback) const;
  double get_double(const std::string &key, double fallback) const;
  std::uint64_t get_seed(const std::string &key, std::uint64_t fallback) const;
  // comma-separated list
  std::vector<std::string> get_list(const std::string &key) const;

  std::string to_text() const;  // sorted keys, one per line

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace stsh::io
