#include "stsh/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace stsh::io {
namespace {

constexpr char kMagic[4] = {'S', 'T', 'S', 'H'};

void put_u32(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string &out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::string &out, const std::string &s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

void put_f32(std::string &out, float f) {
  char buf[4];
  std::memcpy(buf, &f, 4);
  out.append(buf, 4);
}

class Reader {
 public:
  Reader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string out = data_.substr(pos_, len);
    pos_ += len;
    return out;
  }

  float f32() {
    need(4);
    float f;
    std::memcpy(&f, data_.data() + pos_, 4);
    pos_ += 4;
    return f;
  }

  void expect_magic() {
    need(4);
    if (std::memcmp(data_.data(), kMagic, 4) != 0)
      throw std::runtime_error("load_checkpoint: " + path_ + ": bad magic bytes");
    pos_ = 4;
  }

  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > data_.size())
      throw std::runtime_error("load_checkpoint: " + path_ + ": truncated file");
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

double to_stored_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

void save_checkpoint(const std::string &path, const Checkpoint &ckpt) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, Checkpoint::kVersion);
  put_string(out, ckpt.kind);
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto &[name, t] : ckpt.tensors) {
    put_string(out, name);
    put_string(out, "f32");
    put_u32(out, 2);
    put_u64(out, static_cast<std::uint64_t>(t->rows()));
    put_u64(out, static_cast<std::uint64_t>(t->cols()));
    for (double v : t->v) put_f32(out, static_cast<float>(v));
  }
  put_u32(out, static_cast<std::uint32_t>(ckpt.vocab_tokens.size()));
  for (const auto &tok : ckpt.vocab_tokens) put_string(out, tok);
  put_u32(out, static_cast<std::uint32_t>(ckpt.labels.size()));
  for (const auto &l : ckpt.labels) put_string(out, l);
  put_string(out, ckpt.config_text);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);
  r.expect_magic();
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion)
    throw std::runtime_error("load_checkpoint: " + path + ": unsupported version " +
                             std::to_string(version));
  Checkpoint ckpt;
  ckpt.kind = r.str();
  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    const std::string dtype = r.str();
    if (dtype != "f32")
      throw std::runtime_error("load_checkpoint: " + path + ": unknown dtype " + dtype);
    const std::uint32_t ndim = r.u32();
    if (ndim != 2)
      throw std::runtime_error("load_checkpoint: " + path + ": expected 2-d tensor");
    const auto rows = static_cast<int>(r.u64());
    const auto cols = static_cast<int>(r.u64());
    if (rows <= 0 || cols <= 0)
      throw std::runtime_error("load_checkpoint: " + path + ": bad shape for " + name);
    ad::Tensor t = ad::zeros(rows, cols);
    for (auto &v : t->v) v = static_cast<double>(r.f32());
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  const std::uint32_t n_vocab = r.u32();
  for (std::uint32_t i = 0; i < n_vocab; ++i) ckpt.vocab_tokens.push_back(r.str());
  const std::uint32_t n_labels = r.u32();
  for (std::uint32_t i = 0; i < n_labels; ++i) ckpt.labels.push_back(r.str());
  ckpt.config_text = r.str();
  if (!r.at_end())
    throw std::runtime_error("load_checkpoint: " + path + ": trailing bytes");
  return ckpt;
}

Checkpoint load_checkpoint(const std::string &path, const std::string &expected_kind) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != expected_kind)
    throw std::runtime_error("load_checkpoint: " + path + ": kind mismatch, expected " +
                             expected_kind + " but found " + ckpt.kind);
  return ckpt;
}

}  // namespace stsh::io
