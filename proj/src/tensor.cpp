#include "stsh/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace stsh::ad {
namespace {

Tape *g_active_tape = nullptr;

std::string shape_str(const TensorData &t) {
  std::ostringstream os;
  os << "[" << t.shape[0] << "x" << t.shape[1] << "]";
  return os.str();
}

[[noreturn]] void shape_error(const char *op, const Tensor &a, const Tensor &b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(*a) +
                              " vs " + shape_str(*b));
}

bool traced(const Tensor &t) { return t->requires_grad; }

// Marks out as traced and records fn if tracing is on for any input.
template <typename Fn>
void maybe_record(bool any_traced, const Tensor &out, Fn &&fn) {
  Tape *tape = Tape::active();
  if (tape == nullptr || !any_traced) return;
  out->requires_grad = true;
  ensure_grad(out);
  tape->record(std::forward<Fn>(fn));
}

}  // namespace

Tensor zeros(int rows, int cols) {
  auto t = std::make_shared<TensorData>();
  t->shape = {rows, cols};
  t->v.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  return t;
}

Tensor full(int rows, int cols, double value) {
  auto t = zeros(rows, cols);
  std::fill(t->v.begin(), t->v.end(), value);
  return t;
}

Tensor from_values(int rows, int cols, std::vector<double> values) {
  if (values.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("from_values: value count does not match shape");
  auto t = std::make_shared<TensorData>();
  t->shape = {rows, cols};
  t->v = std::move(values);
  return t;
}

Tensor param(int rows, int cols, double scale, std::mt19937_64 &rng) {
  auto t = zeros(rows, cols);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto &x : t->v) x = dist(rng);
  t->requires_grad = true;
  ensure_grad(t);
  return t;
}

Tensor param_zeros(int rows, int cols) {
  auto t = zeros(rows, cols);
  t->requires_grad = true;
  ensure_grad(t);
  return t;
}

void ensure_grad(const Tensor &t) {
  if (t->g.size() != t->v.size()) t->g.assign(t->v.size(), 0.0);
}

void zero_grad(std::span<const Tensor> params) {
  for (const auto &p : params) std::fill(p->g.begin(), p->g.end(), 0.0);
}

Tape *Tape::active() { return g_active_tape; }

void Tape::backward(const Tensor &loss) {
  if (loss->rows() != 1 || loss->cols() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(*loss));
  if (!loss->requires_grad)
    throw std::invalid_argument("backward: loss was not produced under this tape");
  ensure_grad(loss);
  loss->g[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

TapeScope::TapeScope(Tape &tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

TapeSuspend::TapeSuspend() : prev_(g_active_tape) { g_active_tape = nullptr; }
TapeSuspend::~TapeSuspend() { g_active_tape = prev_; }

Tensor matmul(const Tensor &a, const Tensor &b) {
  if (a->cols() != b->rows()) shape_error("matmul", a, b);
  const int m = a->rows(), k = a->cols(), n = b->cols();
  Tensor out = zeros(m, n);
  const double *av = a->v.data();
  const double *bv = b->v.data();
  double *ov = out->v.data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double *brow = bv + p * n;
      double *orow = ov + i * n;
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  maybe_record(traced(a) || traced(b), out, [a, b, out, m, k, n] {
    const double *og = out->g.data();
    if (a->requires_grad) {
      ensure_grad(a);
      // dA = dO * B^T
      double *ag = a->g.data();
      const double *bv = b->v.data();
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          const double *orow = og + i * n;
          const double *brow = bv + p * n;
          for (int j = 0; j < n; ++j) s += orow[j] * brow[j];
          ag[i * k + p] += s;
        }
    }
    if (b->requires_grad) {
      ensure_grad(b);
      // dB = A^T * dO
      double *bg = b->g.data();
      const double *av = a->v.data();
      for (int i = 0; i < m; ++i) {
        const double *orow = og + i * n;
        for (int p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          double *brow = bg + p * n;
          for (int j = 0; j < n; ++j) brow[j] += aip * orow[j];
        }
      }
    }
  });
  return out;
}

Tensor add(const Tensor &a, const Tensor &b) {
  if (a->shape != b->shape) shape_error("add", a, b);
  Tensor out = zeros(a->rows(), a->cols());
  for (std::size_t i = 0; i < a->size(); ++i) out->v[i] = a->v[i] + b->v[i];
  maybe_record(traced(a) || traced(b), out, [a, b, out] {
    if (a->requires_grad) {
      ensure_grad(a);
      for (std::size_t i = 0; i < a->size(); ++i) a->g[i] += out->g[i];
    }
    if (b->requires_grad) {
      ensure_grad(b);
      for (std::size_t i = 0; i < b->size(); ++i) b->g[i] += out->g[i];
    }
  });
  return out;
}

Tensor add_rowvec(const Tensor &a, const Tensor &bias) {
  if (bias->rows() != 1 || bias->cols() != a->cols()) shape_error("add_rowvec", a, bias);
  Tensor out = zeros(a->rows(), a->cols());
  const int n = a->cols();
  for (int i = 0; i < a->rows(); ++i)
    for (int j = 0; j < n; ++j) out->v[i * n + j] = a->v[i * n + j] + bias->v[j];
  maybe_record(traced(a) || traced(bias), out, [a, bias, out, n] {
    if (a->requires_grad) {
      ensure_grad(a);
      for (std::size_t i = 0; i < a->size(); ++i) a->g[i] += out->g[i];
    }
    if (bias->requires_grad) {
      ensure_grad(bias);
      for (int i = 0; i < a->rows(); ++i)
        for (int j = 0; j < n; ++j) bias->g[j] += out->g[i * n + j];
    }
  });
  return out;
}

Tensor mul(const Tensor &a, const Tensor &b) {
  if (a->shape != b->shape) shape_error("mul", a, b);
  Tensor out = zeros(a->rows(), a->cols());
  for (std::size_t i = 0; i < a->size(); ++i) out->v[i] = a->v[i] * b->v[i];
  maybe_record(traced(a) || traced(b), out, [a, b, out] {
    if (a->requires_grad) {
      ensure_grad(a);
      for (std::size_t i = 0; i < a->size(); ++i) a->g[i] += out->g[i] * b->v[i];
    }
    if (b->requires_grad) {
      ensure_grad(b);
      for (std::size_t i = 0; i < b->size(); ++i) b->g[i] += out->g[i] * a->v[i];
    }
  });
  return out;
}

Tensor mul_col(const Tensor &a, const Tensor &col) {
  if (col->rows() != a->rows() || col->cols() != 1) shape_error("mul_col", a, col);
  Tensor out = zeros(a->rows(), a->cols());
  const int n = a->cols();
  for (int i = 0; i < a->rows(); ++i)
    for (int j = 0; j < n; ++j) out->v[i * n + j] = a->v[i * n + j] * col->v[i];
  maybe_record(traced(a) || traced(col), out, [a, col, out, n] {
    if (a->requires_grad) {
      ensure_grad(a);
      for (int i = 0; i < a->rows(); ++i)
        for (int j = 0; j < n; ++j) a->g[i * n + j] += out->g[i * n + j] * col->v[i];
    }
    if (col->requires_grad) {
      ensure_grad(col);
      for (int i = 0; i < a->rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += out->g[i * n + j] * a->v[i * n + j];
        col->g[i] += s;
      }
    }
  });
  return out;
}

Tensor scale(const Tensor &a, double c) {
  Tensor out = zeros(a->rows(), a->cols());
  for (std::size_t i = 0; i < a->size(); ++i) out->v[i] = a->v[i] * c;
  maybe_record(traced(a), out, [a, out, c] {
    ensure_grad(a);
    for (std::size_t i = 0; i < a->size(); ++i) a->g[i] += out->g[i] * c;
  });
  return out;
}

Tensor sigmoid(const Tensor &a) {
  Tensor out = zeros(a->rows(), a->cols());
  for (std::size_t i = 0; i < a->size(); ++i) {
    const double x = a->v[i];
    out->v[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  maybe_record(traced(a), out, [a, out] {
    ensure_grad(a);
    for (std::size_t i = 0; i < a->size(); ++i) {
      const double s = out->v[i];
      a->g[i] += out->g[i] * s * (1.0 - s);
    }
  });
  return out;
}

Tensor tanh_op(const Tensor &a) {
  Tensor out = zeros(a->rows(), a->cols());
  for (std::size_t i = 0; i < a->size(); ++i) out->v[i] = std::tanh(a->v[i]);
  maybe_record(traced(a), out, [a, out] {
    ensure_grad(a);
    for (std::size_t i = 0; i < a->size(); ++i) {
      const double t = out->v[i];
      a->g[i] += out->g[i] * (1.0 - t * t);
    }
  });
  return out;
}

Tensor softmax_rows(const Tensor &a) {
  Tensor out = zeros(a->rows(), a->cols());
  const int n = a->cols();
  for (int i = 0; i < a->rows(); ++i) {
    const double *row = a->v.data() + static_cast<std::size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    double *orow = out->v.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (int j = 0; j < n; ++j) orow[j] /= z;
  }
  maybe_record(traced(a), out, [a, out, n] {
    ensure_grad(a);
    for (int i = 0; i < a->rows(); ++i) {
      const double *s = out->v.data() + static_cast<std::size_t>(i) * n;
      const double *og = out->g.data() + static_cast<std::size_t>(i) * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += og[j] * s[j];
      double *ag = a->g.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ag[j] += s[j] * (og[j] - dot);
    }
  });
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int m = parts[0]->rows();
  int total = 0;
  bool any = false;
  for (const auto &p : parts) {
    if (p->rows() != m) shape_error("concat_cols", parts[0], p);
    total += p->cols();
    any = any || traced(p);
  }
  Tensor out = zeros(m, total);
  int off = 0;
  for (const auto &p : parts) {
    const int n = p->cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out->v[i * total + off + j] = p->v[i * n + j];
    off += n;
  }
  std::vector<Tensor> held(parts.begin(), parts.end());
  maybe_record(any, out, [held, out, m, total] {
    int off = 0;
    for (const auto &p : held) {
      const int n = p->cols();
      if (p->requires_grad) {
        ensure_grad(p);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) p->g[i * n + j] += out->g[i * total + off + j];
      }
      off += n;
    }
  });
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const int n = parts[0]->cols();
  int total = 0;
  bool any = false;
  for (const auto &p : parts) {
    if (p->cols() != n) shape_error("concat_rows", parts[0], p);
    total += p->rows();
    any = any || traced(p);
  }
  Tensor out = zeros(total, n);
  int off = 0;
  for (const auto &p : parts) {
    std::copy(p->v.begin(), p->v.end(), out->v.begin() + static_cast<std::size_t>(off) * n);
    off += p->rows();
  }
  std::vector<Tensor> held(parts.begin(), parts.end());
  maybe_record(any, out, [held, out, n] {
    int off = 0;
    for (const auto &p : held) {
      if (p->requires_grad) {
        ensure_grad(p);
        for (std::size_t i = 0; i < p->size(); ++i)
          p->g[i] += out->g[static_cast<std::size_t>(off) * n + i];
      }
      off += p->rows();
    }
  });
  return out;
}

Tensor slice_cols(const Tensor &a, int start, int len) {
  if (start < 0 || len <= 0 || start + len > a->cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  const int m = a->rows(), n = a->cols();
  Tensor out = zeros(m, len);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < len; ++j) out->v[i * len + j] = a->v[i * n + start + j];
  maybe_record(traced(a), out, [a, out, start, len, m, n] {
    ensure_grad(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < len; ++j) a->g[i * n + start + j] += out->g[i * len + j];
  });
  return out;
}

Tensor embedding_rows(const Tensor &table, std::span<const int> ids) {
  const int n = table->cols();
  Tensor out = zeros(static_cast<int>(ids.size()), n);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= table->rows())
      throw std::invalid_argument("embedding_rows: id out of range");
    std::copy(table->v.begin() + static_cast<std::size_t>(id) * n,
              table->v.begin() + static_cast<std::size_t>(id + 1) * n,
              out->v.begin() + i * n);
  }
  std::vector<int> held(ids.begin(), ids.end());
  maybe_record(traced(table), out, [table, out, held, n] {
    ensure_grad(table);
    for (std::size_t i = 0; i < held.size(); ++i)
      for (int j = 0; j < n; ++j)
        table->g[static_cast<std::size_t>(held[i]) * n + j] += out->g[i * n + j];
  });
  return out;
}

Tensor mean_all(const Tensor &a) {
  Tensor out = zeros(1, 1);
  double s = 0.0;
  for (double x : a->v) s += x;
  const double inv = 1.0 / static_cast<double>(a->size());
  out->v[0] = s * inv;
  maybe_record(traced(a), out, [a, out, inv] {
    ensure_grad(a);
    const double go = out->g[0] * inv;
    for (auto &gi : a->g) gi += go;
  });
  return out;
}

Tensor sum_all(const Tensor &a) {
  Tensor out = zeros(1, 1);
  double s = 0.0;
  for (double x : a->v) s += x;
  out->v[0] = s;
  maybe_record(traced(a), out, [a, out] {
    ensure_grad(a);
    for (auto &gi : a->g) gi += out->g[0];
  });
  return out;
}

Tensor mean_rows(const Tensor &a) {
  const int m = a->rows(), n = a->cols();
  Tensor out = zeros(1, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out->v[j] += a->v[i * n + j];
  const double inv = 1.0 / m;
  for (int j = 0; j < n; ++j) out->v[j] *= inv;
  maybe_record(traced(a), out, [a, out, m, n, inv] {
    ensure_grad(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) a->g[i * n + j] += out->g[j] * inv;
  });
  return out;
}

Tensor softmax_cross_entropy(const Tensor &logits, std::span<const int> targets,
                             std::span<const double> mask) {
  const int m = logits->rows(), n = logits->cols();
  if (static_cast<int>(targets.size()) != m)
    throw std::invalid_argument("softmax_cross_entropy: one target per row required");
  if (!mask.empty() && static_cast<int>(mask.size()) != m)
    throw std::invalid_argument("softmax_cross_entropy: mask size mismatch");
  for (int t : targets)
    if (t < 0 || t >= n)
      throw std::invalid_argument("softmax_cross_entropy: target index out of range");

  // softmax rows cached for backward
  auto probs = std::make_shared<std::vector<double>>(logits->v.size());
  double total = 0.0, weight = 0.0;
  for (int i = 0; i < m; ++i) {
    const double w = mask.empty() ? 1.0 : mask[i];
    const double *row = logits->v.data() + static_cast<std::size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    double *prow = probs->data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      prow[j] = std::exp(row[j] - mx);
      z += prow[j];
    }
    for (int j = 0; j < n; ++j) prow[j] /= z;
    if (w != 0.0) {
      total += -w * (row[targets[i]] - mx - std::log(z));
      weight += w;
    }
  }
  if (weight == 0.0) throw std::invalid_argument("softmax_cross_entropy: empty mask");
  Tensor out = zeros(1, 1);
  out->v[0] = total / weight;
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<double> msk(mask.begin(), mask.end());
  maybe_record(traced(logits), out, [logits, out, probs, tgt, msk, m, n, weight] {
    ensure_grad(logits);
    const double go = out->g[0] / weight;
    for (int i = 0; i < m; ++i) {
      const double w = msk.empty() ? 1.0 : msk[i];
      if (w == 0.0) continue;
      const double *prow = probs->data() + static_cast<std::size_t>(i) * n;
      double *grow = logits->g.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) grow[j] += go * w * prow[j];
      grow[tgt[i]] -= go * w;
    }
  });
  return out;
}

Tensor softmax_cross_entropy(const Tensor &logits, int target_index) {
  if (logits->rows() != 1)
    throw std::invalid_argument("softmax_cross_entropy: expected a single logit row");
  int t[1] = {target_index};
  return softmax_cross_entropy(logits, std::span<const int>(t, 1));
}

Tensor l2_normalize(const Tensor &v, double eps) {
  double sq = 0.0;
  for (double x : v->v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm < eps)
    throw std::invalid_argument("l2_normalize: degenerate vector with norm " +
                                std::to_string(norm));
  Tensor out = zeros(v->rows(), v->cols());
  const double inv = 1.0 / norm;
  for (std::size_t i = 0; i < v->size(); ++i) out->v[i] = v->v[i] * inv;
  maybe_record(traced(v), out, [v, out, inv] {
    ensure_grad(v);
    // d/dx (x/|x|) = (I - u u^T)/|x| with u = x/|x|
    double dot = 0.0;
    for (std::size_t i = 0; i < v->size(); ++i) dot += out->g[i] * out->v[i];
    for (std::size_t i = 0; i < v->size(); ++i)
      v->g[i] += inv * (out->g[i] - dot * out->v[i]);
  });
  return out;
}

double global_grad_norm(std::span<const Tensor> params) {
  double sq = 0.0;
  for (const auto &p : params)
    for (double g : p->g) sq += g * g;
  return std::sqrt(sq);
}

void sgd_step(std::span<const Tensor> params, const SgdConfig &config) {
  if (config.learning_rate <= 0.0)
    throw std::invalid_argument("sgd_step: learning_rate must be positive");
  double factor = 1.0;
  if (config.gradient_clip_norm > 0.0) {
    const double norm = global_grad_norm(params);
    if (norm > config.gradient_clip_norm) factor = config.gradient_clip_norm / norm;
  }
  const double step = config.learning_rate * factor;
  for (const auto &p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) p->v[i] -= step * p->g[i];
    std::fill(p->g.begin(), p->g.end(), 0.0);
  }
}

}  // namespace stsh::ad
