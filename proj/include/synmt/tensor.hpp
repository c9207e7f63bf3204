#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "synmt/error.hpp"
#include "synmt/rng.hpp"

namespace synmt {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Operations treat rank-1 tensors of length n as 1 x n matrices and
/// rank-2 tensors as rows x cols. Higher ranks are storable but no
/// operation consumes them.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool requires_grad = false;

  bool has_grad() const { return !grad_.empty(); }
  /// Allocates a zero gradient on first use.
  std::vector<double>& grad();
  const std::vector<double>& grad() const { return grad_; }
  void zero_grad();
  void clear_grad() { grad_.clear(); }

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Ordered record of executed operations for reverse-mode differentiation.
///
/// Nodes are appended as operations run, so the record is topologically
/// sorted by construction. A tape built with `record = false` evaluates
/// values only and never stores backward closures (inference mode).
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value);
  /// Leaf bound to a model parameter. When `param.requires_grad` is set,
  /// backward() accumulates into `param.grad()` (the gradient buffer is
  /// not part of the parameter's value). Repeated calls return the same node.
  Var param(const Tensor& param);

  const Tensor& value(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.param ? *n.param : n.value;
  }
  std::size_t size() const { return nodes_.size(); }

  /// Runs reverse accumulation from a scalar loss. Every requires_grad
  /// parameter leaf on this tape ends with an allocated gradient, zero if
  /// the loss does not reach it.
  void backward(Var loss);

  using BackwardFn =
      std::function<void(Tape&, const Tensor& out_value, std::span<const double> out_grad)>;

  // Operation-author interface.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn);
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  /// Gradient buffer of a node; allocated zeroed on first access.
  std::span<double> grad(Var v);

 private:
  struct Node {
    Tensor value;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    const Tensor* param = nullptr;
    bool needs_grad = false;
    std::vector<double> grad;
  };

  bool record_;
  std::deque<Node> nodes_;
  std::unordered_map<const Tensor*, std::uint32_t> param_nodes_;
  std::vector<double>& param_grad(const Node& n) { return const_cast<Tensor*>(n.param)->grad(); }
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

// ---- operations -----------------------------------------------------------
//
// Binary elementwise operations broadcast 2-D operands whose dimensions are
// equal or 1 (e.g. a B x 1 mask against a B x H state, a 1 x H bias against
// B x H activations).

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var one_minus(Var a);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
/// Rows of `table` selected by `ids` (embedding lookup).
Var lookup(Var table, std::span<const std::int32_t> ids);
/// Repeats a 1 x n row k times.
Var tile_rows(Var a, std::size_t k);
Var sigmoid(Var a);
Var tanh(Var a);
/// Softmax over the last axis. With a mask (same shape, 1 = keep), masked
/// entries are exactly 0 and excluded from normalization.
Var softmax(Var a, const Tensor* mask = nullptr);
/// Inverted dropout: keeps each entry with probability 1-rate and scales it
/// by 1/(1-rate). Identity when rate == 0 or !train.
Var dropout(Var a, double rate, Rng& rng, bool train);
/// Sum over rows of -log softmax(logits)[row, target[row]], weighted by
/// `weights[row]` (0 weights skip padded rows entirely).
Var cross_entropy(Var logits, std::span<const std::int32_t> targets,
                  std::span<const double> weights);
Var sum(Var a);
/// Row b of the result is row b of `seq[index[b]]`.
Var gather_steps(const std::vector<Var>& seq, std::span<const std::int32_t> index);
/// Row b of the result is sum_j weights[b, j] * values[j][b, :].
Var weighted_sum(Var weights, const std::vector<Var>& values);

/// Central finite-difference check of the analytic gradient of `loss_fn`
/// with respect to `params`.
///
/// Returns the maximum over checked coordinates of
/// |analytic - numeric| / max(1, |analytic| + |numeric|). At most
/// `max_coords_per_param` coordinates per tensor are checked (sampled with
/// `rng` when the tensor is larger). `loss_fn` must be deterministic.
double grad_check(const std::function<Var(Tape&)>& loss_fn, const std::vector<Tensor*>& params,
                  double epsilon, std::size_t max_coords_per_param, Rng& rng);

}  // namespace synmt
