#include "xlit/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "xlit/io.hpp"
#include "xlit/rng.hpp"

namespace xlit::numcore {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

void check(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

int64_t numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = a[static_cast<size_t>(i) * k + p];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<size_t>(p) * n;
      double* crow = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const double* arow = a + static_cast<size_t>(i) * k;
      const double* brow = b + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[static_cast<size_t>(i) * n + j] += s;
    }
}

// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int p = 0; p < k; ++p) {
    const double* arow = a + static_cast<size_t>(p) * m;
    const double* brow = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

double Tensor::item() const {
  check(size() == 1, "item() requires a scalar tensor");
  return value[0];
}

void Tensor::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(value.size(), 0.0); }

TensorPtr make_tensor(std::vector<int> shape, std::vector<double> value,
                      bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  check(numel(shape) == static_cast<int64_t>(value.size()),
        "tensor data length does not match shape");
  t->shape = std::move(shape);
  t->value = std::move(value);
  t->requires_grad = requires_grad;
  if (requires_grad) t->ensure_grad();
  return t;
}

TensorPtr make_zeros(std::vector<int> shape, bool requires_grad) {
  const auto n = static_cast<size_t>(numel(shape));
  return make_tensor(std::move(shape), std::vector<double>(n, 0.0),
                     requires_grad);
}

TensorPtr make_scalar(double v) { return make_tensor({1}, {v}); }

TensorPtr Graph::out_like(std::vector<int> shape,
                          std::initializer_list<TensorPtr> inputs) {
  auto t = make_zeros(std::move(shape));
  if (recording_) {
    for (const auto& in : inputs)
      if (in && in->requires_grad) {
        t->requires_grad = true;
        t->ensure_grad();
        break;
      }
  }
  return t;
}

TensorPtr Graph::matmul(const TensorPtr& a, const TensorPtr& b) {
  check(a->shape.size() == 2 && b->shape.size() == 2, "matmul needs rank-2");
  check(a->shape[1] == b->shape[0], "matmul inner dimensions disagree");
  const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto out = out_like({m, n}, {a, b});
  gemm_nn(m, n, k, a->value.data(), b->value.data(), out->value.data());
  if (out->requires_grad)
    record([a, b, out, m, n, k] {
      if (a->requires_grad)
        gemm_nt(m, k, n, out->grad.data(), b->value.data(), a->grad.data());
      if (b->requires_grad)
        gemm_tn(k, n, m, a->value.data(), out->grad.data(), b->grad.data());
    });
  return out;
}

TensorPtr Graph::matmul_nt(const TensorPtr& a, const TensorPtr& b) {
  check(a->shape.size() == 2 && b->shape.size() == 2, "matmul_nt needs rank-2");
  check(a->shape[1] == b->shape[1], "matmul_nt inner dimensions disagree");
  const int m = a->shape[0], k = a->shape[1], n = b->shape[0];
  auto out = out_like({m, n}, {a, b});
  gemm_nt(m, n, k, a->value.data(), b->value.data(), out->value.data());
  if (out->requires_grad)
    record([a, b, out, m, n, k] {
      if (a->requires_grad)
        gemm_nn(m, k, n, out->grad.data(), b->value.data(), a->grad.data());
      if (b->requires_grad)
        gemm_tn(n, k, m, out->grad.data(), a->value.data(), b->grad.data());
    });
  return out;
}

TensorPtr Graph::add(const TensorPtr& a, const TensorPtr& b) {
  check(a->shape == b->shape, "add shape mismatch");
  auto out = out_like(a->shape, {a, b});
  for (int64_t i = 0; i < a->size(); ++i)
    out->value[i] = a->value[i] + b->value[i];
  if (out->requires_grad)
    record([a, b, out] {
      for (int64_t i = 0; i < out->size(); ++i) {
        if (a->requires_grad) a->grad[i] += out->grad[i];
        if (b->requires_grad) b->grad[i] += out->grad[i];
      }
    });
  return out;
}

TensorPtr Graph::sub(const TensorPtr& a, const TensorPtr& b) {
  check(a->shape == b->shape, "sub shape mismatch");
  auto out = out_like(a->shape, {a, b});
  for (int64_t i = 0; i < a->size(); ++i)
    out->value[i] = a->value[i] - b->value[i];
  if (out->requires_grad)
    record([a, b, out] {
      for (int64_t i = 0; i < out->size(); ++i) {
        if (a->requires_grad) a->grad[i] += out->grad[i];
        if (b->requires_grad) b->grad[i] -= out->grad[i];
      }
    });
  return out;
}

TensorPtr Graph::mul(const TensorPtr& a, const TensorPtr& b) {
  check(a->shape == b->shape, "mul shape mismatch");
  auto out = out_like(a->shape, {a, b});
  for (int64_t i = 0; i < a->size(); ++i)
    out->value[i] = a->value[i] * b->value[i];
  if (out->requires_grad)
    record([a, b, out] {
      for (int64_t i = 0; i < out->size(); ++i) {
        if (a->requires_grad) a->grad[i] += out->grad[i] * b->value[i];
        if (b->requires_grad) b->grad[i] += out->grad[i] * a->value[i];
      }
    });
  return out;
}

TensorPtr Graph::add_rowvec(const TensorPtr& a, const TensorPtr& bias) {
  check(a->shape.size() == 2, "add_rowvec needs rank-2 input");
  check(bias->size() == a->shape[1], "bias length mismatch");
  const int m = a->shape[0], n = a->shape[1];
  auto out = out_like(a->shape, {a, bias});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out->at(i, j) = a->at(i, j) + bias->value[static_cast<size_t>(j)];
  if (out->requires_grad)
    record([a, bias, out, m, n] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double g = out->grad[static_cast<size_t>(i) * n + j];
          if (a->requires_grad) a->grad[static_cast<size_t>(i) * n + j] += g;
          if (bias->requires_grad) bias->grad[static_cast<size_t>(j)] += g;
        }
    });
  return out;
}

TensorPtr Graph::mul_scalar(const TensorPtr& a, double c) {
  auto out = out_like(a->shape, {a});
  for (int64_t i = 0; i < a->size(); ++i) out->value[i] = a->value[i] * c;
  if (out->requires_grad)
    record([a, out, c] {
      for (int64_t i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i] * c;
    });
  return out;
}

TensorPtr Graph::softmax_rows(const TensorPtr& a) {
  const int m = a->rows(), n = a->cols();
  auto out = out_like(a->shape, {a});
  for (int i = 0; i < m; ++i) {
    double mx = a->at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, a->at(i, j));
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      const double e = std::exp(a->at(i, j) - mx);
      out->at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < n; ++j) out->at(i, j) /= sum;
  }
  if (out->requires_grad)
    record([a, out, m, n] {
      for (int i = 0; i < m; ++i) {
        double dot = 0.0;
        for (int j = 0; j < n; ++j)
          dot += out->grad[static_cast<size_t>(i) * n + j] * out->at(i, j);
        for (int j = 0; j < n; ++j)
          a->grad[static_cast<size_t>(i) * n + j] +=
              out->at(i, j) *
              (out->grad[static_cast<size_t>(i) * n + j] - dot);
      }
    });
  return out;
}

TensorPtr Graph::logsumexp_rows(const TensorPtr& a) {
  check(a->shape.size() == 2, "logsumexp_rows needs rank-2");
  const int m = a->shape[0], n = a->shape[1];
  auto out = out_like({m, 1}, {a});
  for (int i = 0; i < m; ++i) {
    double mx = a->at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, a->at(i, j));
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += std::exp(a->at(i, j) - mx);
    out->value[static_cast<size_t>(i)] = mx + std::log(sum);
  }
  if (out->requires_grad)
    record([a, out, m, n] {
      for (int i = 0; i < m; ++i) {
        const double g = out->grad[static_cast<size_t>(i)];
        if (g == 0.0) continue;
        const double lse = out->value[static_cast<size_t>(i)];
        for (int j = 0; j < n; ++j)
          a->grad[static_cast<size_t>(i) * n + j] +=
              g * std::exp(a->at(i, j) - lse);
      }
    });
  return out;
}

TensorPtr Graph::layernorm_rows(const TensorPtr& a, const TensorPtr& gain,
                                const TensorPtr& bias, double eps) {
  check(a->shape.size() == 2, "layernorm needs rank-2 input");
  const int m = a->shape[0], n = a->shape[1];
  check(gain->size() == n && bias->size() == n, "layernorm affine size");
  auto out = out_like(a->shape, {a, gain, bias});
  // Cache per-row mean and inverse stddev for the backward pass.
  auto stats = std::make_shared<std::vector<double>>(
      static_cast<size_t>(m) * 2);
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += a->at(i, j);
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = a->at(i, j) - mu;
      var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*stats)[static_cast<size_t>(i) * 2] = mu;
    (*stats)[static_cast<size_t>(i) * 2 + 1] = inv;
    for (int j = 0; j < n; ++j)
      out->at(i, j) = (a->at(i, j) - mu) * inv * gain->value[static_cast<size_t>(j)] +
                      bias->value[static_cast<size_t>(j)];
  }
  if (out->requires_grad)
    record([a, gain, bias, out, stats, m, n] {
      for (int i = 0; i < m; ++i) {
        const double mu = (*stats)[static_cast<size_t>(i) * 2];
        const double inv = (*stats)[static_cast<size_t>(i) * 2 + 1];
        double gdot = 0.0;   // sum of gxhat
        double gxdot = 0.0;  // sum of gxhat * xhat
        for (int j = 0; j < n; ++j) {
          const double xhat = (a->at(i, j) - mu) * inv;
          const double go = out->grad[static_cast<size_t>(i) * n + j];
          const double gxhat = go * gain->value[static_cast<size_t>(j)];
          gdot += gxhat;
          gxdot += gxhat * xhat;
          if (gain->requires_grad)
            gain->grad[static_cast<size_t>(j)] += go * xhat;
          if (bias->requires_grad) bias->grad[static_cast<size_t>(j)] += go;
        }
        if (a->requires_grad) {
          for (int j = 0; j < n; ++j) {
            const double xhat = (a->at(i, j) - mu) * inv;
            const double go = out->grad[static_cast<size_t>(i) * n + j];
            const double gxhat = go * gain->value[static_cast<size_t>(j)];
            a->grad[static_cast<size_t>(i) * n + j] +=
                inv * (gxhat - (gdot + xhat * gxdot) / n);
          }
        }
      }
    });
  return out;
}

TensorPtr Graph::gelu(const TensorPtr& a) {
  auto out = out_like(a->shape, {a});
  for (int64_t i = 0; i < a->size(); ++i) {
    const double x = a->value[i];
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    out->value[i] = 0.5 * x * (1.0 + t);
  }
  if (out->requires_grad)
    record([a, out] {
      for (int64_t i = 0; i < a->size(); ++i) {
        const double x = a->value[i];
        const double u = kGeluC * (x + kGeluA * x * x * x);
        const double t = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        a->grad[i] += out->grad[i] * d;
      }
    });
  return out;
}

TensorPtr Graph::embed_lookup(const TensorPtr& table,
                              const std::vector<int>& ids) {
  check(table->shape.size() == 2, "embedding table must be rank-2");
  const int v = table->shape[0], d = table->shape[1];
  const int n = static_cast<int>(ids.size());
  for (int id : ids)
    check(id >= 0 && id < v, "embedding id out of range");
  auto out = out_like({n, d}, {table});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out->at(i, j) = table->at(ids[static_cast<size_t>(i)], j);
  if (out->requires_grad)
    record([table, out, ids, n, d] {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
          table->grad[static_cast<size_t>(ids[static_cast<size_t>(i)]) * d + j] +=
              out->grad[static_cast<size_t>(i) * d + j];
    });
  return out;
}

TensorPtr Graph::concat_rows(const std::vector<TensorPtr>& parts) {
  check(!parts.empty(), "concat_rows of nothing");
  const int n = parts[0]->cols();
  int m = 0;
  bool rg = false;
  for (const auto& p : parts) {
    check(p->cols() == n, "concat_rows column mismatch");
    m += p->rows();
    rg = rg || p->requires_grad;
  }
  auto out = out_like({m, n}, {});
  if (recording_ && rg) {
    out->requires_grad = true;
    out->ensure_grad();
  }
  int row = 0;
  for (const auto& p : parts) {
    std::copy(p->value.begin(), p->value.end(),
              out->value.begin() + static_cast<int64_t>(row) * n);
    row += p->rows();
  }
  if (out->requires_grad)
    record([parts, out, n] {
      int row = 0;
      for (const auto& p : parts) {
        if (p->requires_grad)
          for (int64_t i = 0; i < p->size(); ++i)
            p->grad[i] += out->grad[static_cast<int64_t>(row) * n + i];
        row += p->rows();
      }
    });
  return out;
}

TensorPtr Graph::concat_cols(const std::vector<TensorPtr>& parts) {
  check(!parts.empty(), "concat_cols of nothing");
  const int m = parts[0]->rows();
  int n = 0;
  bool rg = false;
  for (const auto& p : parts) {
    check(p->rows() == m, "concat_cols row mismatch");
    n += p->cols();
    rg = rg || p->requires_grad;
  }
  auto out = out_like({m, n}, {});
  if (recording_ && rg) {
    out->requires_grad = true;
    out->ensure_grad();
  }
  int col = 0;
  for (const auto& p : parts) {
    const int pc = p->cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < pc; ++j) out->at(i, col + j) = p->at(i, j);
    col += pc;
  }
  if (out->requires_grad)
    record([parts, out, m, n] {
      int col = 0;
      for (const auto& p : parts) {
        const int pc = p->cols();
        if (p->requires_grad)
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < pc; ++j)
              p->grad[static_cast<size_t>(i) * pc + j] +=
                  out->grad[static_cast<size_t>(i) * n + col + j];
        col += pc;
      }
    });
  return out;
}

TensorPtr Graph::slice_cols(const TensorPtr& a, int start, int len) {
  check(a->shape.size() == 2, "slice_cols needs rank-2");
  const int m = a->shape[0], n = a->shape[1];
  check(start >= 0 && len > 0 && start + len <= n, "slice_cols out of range");
  auto out = out_like({m, len}, {a});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < len; ++j) out->at(i, j) = a->at(i, start + j);
  if (out->requires_grad)
    record([a, out, m, n, start, len] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < len; ++j)
          a->grad[static_cast<size_t>(i) * n + start + j] +=
              out->grad[static_cast<size_t>(i) * len + j];
    });
  return out;
}

TensorPtr Graph::mean_rows_subset(const TensorPtr& a,
                                  const std::vector<int>& rows) {
  check(a->shape.size() == 2, "mean_rows_subset needs rank-2");
  check(!rows.empty(), "mean over empty row subset");
  const int m = a->shape[0], n = a->shape[1];
  for (int r : rows)
    check(r >= 0 && r < m, "row index out of range");
  auto out = out_like({1, n}, {a});
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (int r : rows)
    for (int j = 0; j < n; ++j) out->value[static_cast<size_t>(j)] += a->at(r, j);
  for (int j = 0; j < n; ++j) out->value[static_cast<size_t>(j)] *= inv;
  if (out->requires_grad)
    record([a, out, rows, n, inv] {
      for (int r : rows)
        for (int j = 0; j < n; ++j)
          a->grad[static_cast<size_t>(r) * n + j] +=
              out->grad[static_cast<size_t>(j)] * inv;
    });
  return out;
}

TensorPtr Graph::mean_all(const TensorPtr& a) {
  auto out = out_like({1}, {a});
  double s = 0.0;
  for (double v : a->value) s += v;
  const double inv = 1.0 / static_cast<double>(a->size());
  out->value[0] = s * inv;
  if (out->requires_grad)
    record([a, out, inv] {
      for (int64_t i = 0; i < a->size(); ++i)
        a->grad[i] += out->grad[0] * inv;
    });
  return out;
}

TensorPtr Graph::sum_all(const TensorPtr& a) {
  auto out = out_like({1}, {a});
  double s = 0.0;
  for (double v : a->value) s += v;
  out->value[0] = s;
  if (out->requires_grad)
    record([a, out] {
      for (int64_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[0];
    });
  return out;
}

TensorPtr Graph::gather(const TensorPtr& a,
                        const std::vector<std::pair<int, int>>& rc) {
  check(a->shape.size() == 2, "gather needs rank-2");
  const int m = a->shape[0], n = a->shape[1];
  for (const auto& [r, c] : rc)
    check(r >= 0 && r < m && c >= 0 && c < n, "gather index out of range");
  auto out = out_like({static_cast<int>(rc.size()), 1}, {a});
  for (size_t i = 0; i < rc.size(); ++i)
    out->value[i] = a->at(rc[i].first, rc[i].second);
  if (out->requires_grad)
    record([a, out, rc, n] {
      for (size_t i = 0; i < rc.size(); ++i)
        a->grad[static_cast<size_t>(rc[i].first) * n + rc[i].second] +=
            out->grad[i];
    });
  return out;
}

TensorPtr Graph::cross_entropy(const TensorPtr& logits,
                               const std::vector<int>& targets) {
  check(logits->shape.size() == 2, "cross_entropy needs rank-2 logits");
  const int m = logits->shape[0], v = logits->shape[1];
  check(static_cast<int>(targets.size()) == m,
        "cross_entropy targets length mismatch");
  int cnt = 0;
  for (int t : targets) {
    check(t < v, "cross_entropy target id >= vocab size");
    if (t >= 0) ++cnt;
  }
  if (cnt == 0) return make_scalar(0.0);  // constant: zero gradient
  auto out = out_like({1}, {logits});
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    if (targets[static_cast<size_t>(i)] < 0) continue;
    double mx = logits->at(i, 0);
    for (int j = 1; j < v; ++j) mx = std::max(mx, logits->at(i, j));
    double sum = 0.0;
    for (int j = 0; j < v; ++j) sum += std::exp(logits->at(i, j) - mx);
    total += mx + std::log(sum) - logits->at(i, targets[static_cast<size_t>(i)]);
  }
  out->value[0] = total / cnt;
  if (out->requires_grad)
    record([logits, out, targets, m, v, cnt] {
      const double g = out->grad[0] / cnt;
      if (g == 0.0) return;
      for (int i = 0; i < m; ++i) {
        const int t = targets[static_cast<size_t>(i)];
        if (t < 0) continue;
        double mx = logits->at(i, 0);
        for (int j = 1; j < v; ++j) mx = std::max(mx, logits->at(i, j));
        double sum = 0.0;
        for (int j = 0; j < v; ++j) sum += std::exp(logits->at(i, j) - mx);
        for (int j = 0; j < v; ++j) {
          const double p = std::exp(logits->at(i, j) - mx) / sum;
          logits->grad[static_cast<size_t>(i) * v + j] +=
              g * (p - (j == t ? 1.0 : 0.0));
        }
      }
    });
  return out;
}

void Graph::backward(const TensorPtr& root) {
  check(root->size() == 1, "backward root must be scalar");
  if (!root->requires_grad) return;  // constant: nothing reachable
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
}

FiniteDiffReport finite_diff_check(const std::function<double()>& loss_fn,
                                   const std::vector<TensorPtr>& params,
                                   double h, int64_t min_coords,
                                   uint64_t seed) {
  check(h > 0.0, "finite difference step must be positive");
  for (const auto& p : params) p->zero_grad();
  loss_fn();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  int64_t total = 0;
  for (const auto& p : params) {
    analytic.push_back(p->grad);
    total += p->size();
  }

  std::vector<std::pair<size_t, int64_t>> coords;
  if (total <= min_coords) {
    for (size_t pi = 0; pi < params.size(); ++pi)
      for (int64_t i = 0; i < params[pi]->size(); ++i) coords.push_back({pi, i});
  } else {
    Rng rng(seed);
    std::vector<int64_t> chosen;
    while (static_cast<int64_t>(chosen.size()) < min_coords) {
      const auto flat = static_cast<int64_t>(
          rng.uniform_int(static_cast<uint64_t>(total)));
      if (std::find(chosen.begin(), chosen.end(), flat) == chosen.end())
        chosen.push_back(flat);
    }
    for (int64_t flat : chosen) {
      int64_t off = flat;
      for (size_t pi = 0; pi < params.size(); ++pi) {
        if (off < params[pi]->size()) {
          coords.push_back({pi, off});
          break;
        }
        off -= params[pi]->size();
      }
    }
  }

  FiniteDiffReport report;
  report.coords_checked = static_cast<int64_t>(coords.size());
  for (const auto& [pi, i] : coords) {
    double& slot = params[pi]->value[i];
    const double saved = slot;
    slot = saved + h;
    const double fp = loss_fn();
    slot = saved - h;
    const double fm = loss_fn();
    slot = saved;
    const double fd = (fp - fm) / (2.0 * h);
    const double g = analytic[pi][static_cast<size_t>(i)];
    const double rel = std::abs(fd - g) / std::max(std::abs(g), 1e-8);
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = pi;
      report.worst_coord = i;
      report.worst_analytic = g;
      report.worst_fd = fd;
    }
  }
  return report;
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::string content;
  for (size_t i = 0; i < t.shape.size(); ++i) {
    if (i) content += ' ';
    content += std::to_string(t.shape[i]);
  }
  content += '\n';
  const int m = t.rows(), n = t.cols();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j) content += ' ';
      content += format_double(t.at(i, j));
    }
    content += '\n';
  }
  write_file_atomic(path, content);
}

TensorPtr load_tensor(const std::string& path) {
  const std::string content = read_file(path);
  std::istringstream in(content);
  std::string shape_line;
  if (!std::getline(in, shape_line))
    throw DataError(path + ": empty tensor file");
  std::vector<int> shape;
  {
    std::istringstream ss(shape_line);
    int d;
    while (ss >> d) {
      if (d <= 0) throw DataError(path + ": bad dimension");
      shape.push_back(d);
    }
  }
  if (shape.empty() || shape.size() > 2)
    throw DataError(path + ": unsupported tensor rank");
  std::vector<double> value;
  value.reserve(static_cast<size_t>(numel(shape)));
  double v;
  while (in >> v) value.push_back(v);
  if (static_cast<int64_t>(value.size()) != numel(shape))
    throw DataError(path + ": value count does not match shape");
  return make_tensor(std::move(shape), std::move(value));
}

}  // namespace xlit::numcore
