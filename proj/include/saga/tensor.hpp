// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace saga {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of 64-bit reals. Plain value type; all autodiff
/// state lives on the Tape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);
  static Tensor scalar(double v);

  const Shape& shape() const { return shape_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }

  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  /// Value of a single-element tensor.
  double item() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Value-level arithmetic, shared by forward evaluation and backward rules.
// Binary ops broadcast numpy-style.
Tensor t_add(const Tensor& a, const Tensor& b);
Tensor t_sub(const Tensor& a, const Tensor& b);
Tensor t_mul(const Tensor& a, const Tensor& b);
Tensor t_div(const Tensor& a, const Tensor& b);
Tensor t_minimum(const Tensor& a, const Tensor& b);
Tensor t_scale(const Tensor& a, double s);
Tensor t_matmul(const Tensor& a, const Tensor& b);
Tensor t_broadcast_to(const Tensor& a, const Shape& shape);
/// Sum `g` down to `shape` by reducing over broadcast axes.
Tensor t_reduce_to(const Tensor& g, const Shape& shape);
Tensor t_conv2d_same(const Tensor& a, const Tensor& kernel);
Tensor t_transpose2d(const Tensor& a);

Shape broadcast_shape(const Shape& a, const Shape& b);

struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Single-threaded; records one node per op and replays
/// the stored backward rules in reverse creation order, so gradients are
/// bit-deterministic across runs.
class Tape {
 public:
  Var leaf(Tensor value);
  Var constant(Tensor value) { return leaf(std::move(value)); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var minimum(Var a, Var b);
  Var scale(Var a, double s);
  Var matmul(Var a, Var b);
  Var transpose2d(Var a);
  Var reshape(Var a, Shape shape);
  Var broadcast_to(Var a, Shape shape);
  Var sum(Var a);
  Var sum_axis(Var a, int axis);
  Var mean(Var a);
  Var max_all(Var a);
  Var max_axis(Var a, int axis);
  Var softmax(Var a, int axis);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var sqrt(Var a);
  Var clamp_min(Var a, double floor);
  /// 2-D convolution with a fixed (non-differentiable) kernel, zero-padded
  /// to the same shape.
  Var conv2d_same(Var a, const Tensor& kernel);
  /// Standard deviation over all elements (population convention, /n).
  Var stddev(Var a);
  /// Stack single-element vars into a length-n vector.
  Var stack_scalars(const std::vector<Var>& parts);
  /// Extract one element (by flat index) as a scalar.
  Var pick(Var a, int64_t flat_index);

  /// Record a node with a caller-supplied backward rule (for structured ops
  /// that do not decompose efficiently into the primitive suite).
  Var custom(Tensor value, std::function<void(const Tensor& gout, Tape& tape)> backprop);
  /// Accumulate into a node's gradient; only valid inside backward rules.
  void add_grad(Var v, const Tensor& g);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() target w.r.t. `v`. Zero tensor if the
  /// node is unreachable from the target.
  const Tensor& grad(Var v) const;

  /// Backpropagate from a scalar-valued node. Errors if `out` is not scalar.
  void backward(Var out);

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::function<void(const Tensor& gout, Tape& tape)> backprop;
  };

  Var push(Tensor value, std::function<void(const Tensor&, Tape&)> backprop);
  void accumulate(int32_t id, const Tensor& g);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

/// Max over coordinates of |autodiff - central difference| divided by
/// max(|ad|, |cd|) + 1e-6, for a scalar-valued function of one tensor input.
/// The floor masks central-difference roundoff (~eps |f| / h) on coordinates
/// whose true gradient is essentially zero.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x,
                  double h = 1e-5);

}  // namespace saga
