#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace simplihumon {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Contract violation: incompatible shapes, bad arguments, bad state.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf detected at an op boundary.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized numel for leaves with requires_grad and recorded nodes
  bool requires_grad = false;
  std::function<void(Node&)> backward;  // empty for leaves
};

/// Dense row-major tensor of 64-bit reals; a cheap handle onto a shared node.
/// Leaves created with requires_grad=true accumulate gradients across backward
/// passes until zero_grad() is called.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  bool requires_grad() const;

  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();
  const std::vector<double>& grad() const;  // throws if no grad storage
  bool has_grad() const;
  void zero_grad();

  double item() const;  // scalar tensors only

  std::shared_ptr<Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node> node_;
};

/// Recording tape. While an instance is alive it captures every op whose
/// inputs carry requires_grad; backward() replays the record once, in
/// reverse insertion order. Per-thread: concurrent evaluation on other
/// threads is unaffected.
class Graph {
 public:
  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Populates grad on every reachable requires_grad leaf; unreachable
  /// leaves keep their (zero-initialized) grads. Single use.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }

  static bool recording();
  static void record(std::shared_ptr<Node> n);

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
  bool consumed_ = false;
  Graph* prev_ = nullptr;
};

// ---- ops ------------------------------------------------------------------
// Elementwise ops require identical shapes; there is no implicit
// broadcasting anywhere, use broadcast() explicitly.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);  // 2-D only
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len);
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor transpose(const Tensor& x);  // 2-D
Tensor mean_all(const Tensor& x);   // -> {1}
Tensor sum_all(const Tensor& x);    // -> {1}
Tensor gelu(const Tensor& x);       // exact Gaussian-CDF form
Tensor softmax(const Tensor& x);    // along the last axis
Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps = 1e-8);
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-8);
Tensor sqrt_elem(const Tensor& x);
Tensor square(const Tensor& x);
Tensor broadcast(const Tensor& x, const Shape& target);

/// x * s via a gradient-free constant; composition of broadcast and mul.
Tensor scale(const Tensor& x, double s);

// ---- gradient checking ----------------------------------------------------

struct GradcheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the analytic gradient of f (a scalar-valued function of the
/// given parameter tensors) against central finite differences with step h.
/// Relative error per coordinate: |a - n| / max(1, |a|, |n|).
GradcheckResult gradcheck(const std::function<Tensor()>& f,
                          const std::vector<Tensor>& params, double h);

}  // namespace simplihumon
