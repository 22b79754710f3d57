#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace stsh::ad {

// Row-major 2-D tensor (vectors are 1xN or Nx1). All in-memory compute is
// 64-bit; checkpoints downcast to 32-bit on disk.
struct TensorData {
  std::vector<int> shape;          // [rows, cols]
  std::vector<double> v;           // rows*cols values
  std::vector<double> g;           // same size as v when traced, else empty
  bool requires_grad = false;

  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }
  std::size_t size() const { return v.size(); }
  double &at(int r, int c) { return v[static_cast<std::size_t>(r) * shape[1] + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * shape[1] + c]; }
};

using Tensor = std::shared_ptr<TensorData>;

Tensor zeros(int rows, int cols);
Tensor full(int rows, int cols, double value);
Tensor from_values(int rows, int cols, std::vector<double> values);
// Trainable parameter, uniform init in [-scale, scale].
Tensor param(int rows, int cols, double scale, std::mt19937_64 &rng);
Tensor param_zeros(int rows, int cols);

void ensure_grad(const Tensor &t);
void zero_grad(std::span<const Tensor> params);

// Execution-ordered record of backward closures. One active tape at a time;
// ops record themselves only while a TapeScope is alive.
class Tape {
 public:
  void record(std::function<void()> fn) { entries_.push_back(std::move(fn)); }
  std::size_t size() const { return entries_.size(); }
  // Seeds d(loss)/d(loss) = 1 and replays entries in reverse. Gradients
  // accumulate into every traced tensor until zeroed.
  void backward(const Tensor &loss);

  static Tape *active();

 private:
  friend class TapeScope;
  std::vector<std::function<void()>> entries_;
};

class TapeScope {
 public:
  explicit TapeScope(Tape &tape);
  ~TapeScope();
  TapeScope(const TapeScope &) = delete;
  TapeScope &operator=(const TapeScope &) = delete;

 private:
  Tape *prev_;
};

// Detaches everything computed inside from any active tape.
class TapeSuspend {
 public:
  TapeSuspend();
  ~TapeSuspend();
  TapeSuspend(const TapeSuspend &) = delete;
  TapeSuspend &operator=(const TapeSuspend &) = delete;

 private:
  Tape *prev_;
};

// ---- forward ops (traced when a tape is active and an input is traced) ----

Tensor matmul(const Tensor &a, const Tensor &b);
Tensor add(const Tensor &a, const Tensor &b);           // same shape
Tensor add_rowvec(const Tensor &a, const Tensor &bias); // bias is 1 x cols
Tensor mul(const Tensor &a, const Tensor &b);           // elementwise
Tensor mul_col(const Tensor &a, const Tensor &col);     // col is rows x 1
Tensor scale(const Tensor &a, double c);
Tensor sigmoid(const Tensor &a);
Tensor tanh_op(const Tensor &a);
Tensor softmax_rows(const Tensor &a);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor &a, int start, int len);
Tensor embedding_rows(const Tensor &table, std::span<const int> ids);
Tensor mean_all(const Tensor &a);
Tensor sum_all(const Tensor &a);
Tensor mean_rows(const Tensor &a);  // [n x d] -> [1 x d] column means

// Mean over unmasked rows of -log softmax(logits_row)[target]. mask may be
// empty (all rows count) or hold 0/1 weights per row.
Tensor softmax_cross_entropy(const Tensor &logits, std::span<const int> targets,
                             std::span<const double> mask = {});
// Single-distribution form per the op contract.
Tensor softmax_cross_entropy(const Tensor &logits, int target_index);

Tensor l2_normalize(const Tensor &v, double eps = 1e-12);

// ---- optimizer ----

struct SgdConfig {
  double learning_rate = 0.1;
  double gradient_clip_norm = 5.0;  // <= 0 disables clipping
};

// p <- p - lr * g after optional global-norm clipping; zeroes grads.
void sgd_step(std::span<const Tensor> params, const SgdConfig &config);

double global_grad_norm(std::span<const Tensor> params);

}  // namespace stsh::ad
