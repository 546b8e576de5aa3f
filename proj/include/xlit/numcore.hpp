#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace xlit::numcore {

// Dense row-major tensor of doubles, rank 1 or 2. Scalars use shape {1}.
// grad is allocated (zeroed) iff requires_grad.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  int rows() const { return shape.size() == 2 ? shape[0] : 1; }
  int cols() const { return shape.size() == 2 ? shape[1] : shape[0]; }
  double& at(int r, int c) { return value[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const {
    return value[static_cast<size_t>(r) * cols() + c];
  }
  double item() const;  // scalar value; throws unless size()==1

  void ensure_grad();
  void zero_grad();
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<int> shape, std::vector<double> value,
                      bool requires_grad = false);
TensorPtr make_zeros(std::vector<int> shape, bool requires_grad = false);
TensorPtr make_scalar(double v);

// Records operations in execution order (a valid topological order) and
// replays them backwards. Single-owner, single-threaded. With recording off,
// ops compute values only: no tape, no grads.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);     // a[m,k]*b[k,n]
  TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b);  // a[m,k]*b[n,k]^T
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);  // elementwise
  TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& bias);
  TensorPtr mul_scalar(const TensorPtr& a, double c);
  TensorPtr softmax_rows(const TensorPtr& a);
  TensorPtr logsumexp_rows(const TensorPtr& a);  // [m,1]
  TensorPtr layernorm_rows(const TensorPtr& a, const TensorPtr& gain,
                           const TensorPtr& bias, double eps = 1e-5);
  TensorPtr gelu(const TensorPtr& a);  // tanh approximation
  TensorPtr embed_lookup(const TensorPtr& table, const std::vector<int>& ids);
  TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
  TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
  TensorPtr slice_cols(const TensorPtr& a, int start, int len);
  TensorPtr mean_rows_subset(const TensorPtr& a, const std::vector<int>& rows);
  TensorPtr mean_all(const TensorPtr& a);
  TensorPtr sum_all(const TensorPtr& a);
  // Elements a[r,c] for each (r,c), as a [k,1] column.
  TensorPtr gather(const TensorPtr& a, const std::vector<std::pair<int, int>>& rc);
  // Mean of -log softmax(logits)[target] over rows with target >= 0
  // (target < 0 is the IGNORE sentinel). All rows ignored -> constant 0.
  TensorPtr cross_entropy(const TensorPtr& logits,
                          const std::vector<int>& targets);

  // Reverse pass from a scalar root. Accumulates into existing grads.
  void backward(const TensorPtr& root);

  size_t num_ops() const { return tape_.size(); }
  bool recording() const { return recording_; }

 private:
  TensorPtr out_like(std::vector<int> shape,
                     std::initializer_list<TensorPtr> inputs);
  void record(std::function<void()> fn) {
    if (recording_) tape_.push_back(std::move(fn));
  }

  bool recording_;
  std::vector<std::function<void()>> tape_;
};

struct FiniteDiffReport {
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
  // Worst coordinate, for diagnostics.
  size_t worst_param = 0;
  int64_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_fd = 0.0;
};

// Central-difference check of the gradients `loss_fn` leaves behind.
// `loss_fn` must zero nothing itself: it builds a fresh graph, runs backward
// and returns the loss value. Checks all coordinates when there are at most
// `min_coords` of them, otherwise a seeded sample of `min_coords`.
// Relative error uses denominator max(|analytic|, 1e-8).
FiniteDiffReport finite_diff_check(const std::function<double()>& loss_fn,
                                   const std::vector<TensorPtr>& params,
                                   double h = 1e-5, int64_t min_coords = 200,
                                   uint64_t seed = 0);

// Text dump: first line the shape, then one row of %.17g values per line.
// Round-trips doubles bit-exactly.
void save_tensor(const std::string& path, const Tensor& t);
TensorPtr load_tensor(const std::string& path);

}  // namespace xlit::numcore
