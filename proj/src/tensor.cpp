#include "simplihumon/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace simplihumon {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

thread_local Graph* g_active_graph = nullptr;

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": non-finite value produced");
    }
  }
}

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                     std::to_string(data.size()));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
  }
  check_finite("tensor", data);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->value.size(), 0.0);
  return n;
}

// Computes the result node; records it on the active graph when any input
// requires grad. backward_fn receives the result node (to read its grad and
// cached value) and accumulates into the inputs it captured.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   bool any_input_grad, std::function<void(Node&)> backward_fn) {
  check_finite(op, value);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (any_input_grad && Graph::recording()) {
    n->requires_grad = true;
    n->grad.assign(n->value.size(), 0.0);
    n->backward = std::move(backward_fn);
    Graph::record(n);
  }
  return Tensor(n);
}

bool wants_grad(const Tensor& t) { return t.requires_grad(); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void accum(std::shared_ptr<Node>& n, std::size_t i, double v) {
  if (n->requires_grad) n->grad[i] += v;
}

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size());
  std::size_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

}  // namespace

std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, v), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

const Shape& Tensor::shape() const {
  if (!node_) throw ShapeError("tensor: undefined");
  return node_->shape;
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::data() const {
  if (!node_) throw ShapeError("tensor: undefined");
  return node_->value;
}

std::vector<double>& Tensor::mutable_data() {
  if (!node_) throw ShapeError("tensor: undefined");
  return node_->value;
}

const std::vector<double>& Tensor::grad() const {
  if (!node_ || node_->grad.size() != node_->value.size()) {
    throw ShapeError("tensor: no gradient storage");
  }
  return node_->grad;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not scalar");
  return data()[0];
}

// ---- Graph ----------------------------------------------------------------

Graph::Graph() {
  prev_ = g_active_graph;
  g_active_graph = this;
}

Graph::~Graph() { g_active_graph = prev_; }

bool Graph::recording() { return g_active_graph != nullptr; }

void Graph::record(std::shared_ptr<Node> n) {
  if (!g_active_graph) return;
  if (g_active_graph->consumed_) {
    throw std::runtime_error("graph: already consumed by backward");
  }
  g_active_graph->nodes_.push_back(std::move(n));
}

void Graph::backward(const Tensor& loss) {
  if (consumed_) throw std::runtime_error("graph: already consumed by backward");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  consumed_ = true;
  auto ln = loss.node();
  if (ln->grad.size() != ln->value.size()) {
    // Loss is a leaf or was produced outside recording; nothing flows.
    if (ln->requires_grad) ln->grad.assign(1, 1.0);
    return;
  }
  ln->grad[0] += 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = *nodes_[i];
    if (n.backward) n.backward(n);
  }
}

// ---- elementwise binary ---------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
  auto an = a.node(), bn = b.node();
  return make_result("add", a.shape(), std::move(out), wants_grad(a) || wants_grad(b),
                     [an, bn](Node& self) mutable {
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         accum(an, i, self.grad[i]);
                         accum(bn, i, self.grad[i]);
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i];
  auto an = a.node(), bn = b.node();
  return make_result("sub", a.shape(), std::move(out), wants_grad(a) || wants_grad(b),
                     [an, bn](Node& self) mutable {
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         accum(an, i, self.grad[i]);
                         accum(bn, i, -self.grad[i]);
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
  auto an = a.node(), bn = b.node();
  return make_result("mul", a.shape(), std::move(out), wants_grad(a) || wants_grad(b),
                     [an, bn](Node& self) mutable {
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         accum(an, i, self.grad[i] * bn->value[i]);
                         accum(bn, i, self.grad[i] * an->value[i]);
                       }
                     });
}

// ---- matmul ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: expects 2-D operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  std::size_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul: inner dimension mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  auto an = a.node(), bn = b.node();
  return make_result(
      "matmul", {m, n}, std::move(out), wants_grad(a) || wants_grad(b),
      [an, bn, m, k, n](Node& self) mutable {
        if (an->requires_grad) {
          // dA = dY . B^T
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              const double* gy = self.grad.data() + i * n;
              const double* brow = bn->value.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) s += gy[j] * brow[j];
              an->grad[i * k + p] += s;
            }
        }
        if (bn->requires_grad) {
          // dB = A^T . dY
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double aip = an->value[i * k + p];
              if (aip == 0.0) continue;
              const double* gy = self.grad.data() + i * n;
              double* brow = bn->grad.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) brow[j] += aip * gy[j];
            }
        }
      });
}

// ---- concat / slice / reshape / transpose ---------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(s0));
  }
  Shape out_shape = s0;
  std::size_t axis_total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) {
      throw ShapeError("concat: rank mismatch " + shape_str(s0) + " vs " + shape_str(s));
    }
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != s0[d]) {
        throw ShapeError("concat: shape mismatch off axis " + std::to_string(axis) + ": " +
                         shape_str(s0) + " vs " + shape_str(s));
      }
    }
    axis_total += s[axis];
  }
  out_shape[axis] = axis_total;

  // outer = product of dims before axis, inner = product after.
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

  std::vector<double> out(shape_numel(out_shape));
  std::size_t out_row = axis_total * inner;
  std::size_t offset = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    any_grad = any_grad || wants_grad(p);
    std::size_t len = p.shape()[axis] * inner;
    const auto& pv = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * len, len, out.data() + o * out_row + offset);
    }
    offset += len;
  }

  std::vector<std::shared_ptr<Node>> in_nodes;
  std::vector<std::size_t> in_lens;
  for (const auto& p : parts) {
    in_nodes.push_back(p.node());
    in_lens.push_back(p.shape()[axis] * inner);
  }
  return make_result("concat", out_shape, std::move(out), any_grad,
                     [in_nodes, in_lens, outer, out_row](Node& self) mutable {
                       std::size_t off = 0;
                       for (std::size_t t = 0; t < in_nodes.size(); ++t) {
                         auto& n = in_nodes[t];
                         if (n->requires_grad) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* g = self.grad.data() + o * out_row + off;
                             double* dst = n->grad.data() + o * in_lens[t];
                             for (std::size_t i = 0; i < in_lens[t]; ++i) dst[i] += g[i];
                           }
                         }
                         off += in_lens[t];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("slice: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  if (len == 0 || start + len > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") invalid for axis size " + std::to_string(s[axis]));
  }
  Shape out_shape = s;
  out_shape[axis] = len;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];

  std::vector<double> out(shape_numel(out_shape));
  const auto& xv = x.data();
  std::size_t in_row = s[axis] * inner, out_row = len * inner, off = start * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.data() + o * in_row + off, out_row, out.data() + o * out_row);
  }
  auto xn = x.node();
  return make_result("slice", out_shape, std::move(out), wants_grad(x),
                     [xn, outer, in_row, out_row, off](Node& self) mutable {
                       if (!xn->requires_grad) return;
                       for (std::size_t o = 0; o < outer; ++o) {
                         const double* g = self.grad.data() + o * out_row;
                         double* dst = xn->grad.data() + o * in_row + off;
                         for (std::size_t i = 0; i < out_row; ++i) dst[i] += g[i];
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  }
  auto xn = x.node();
  return make_result("reshape", std::move(new_shape), x.data(), wants_grad(x),
                     [xn](Node& self) mutable {
                       if (!xn->requires_grad) return;
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         xn->grad[i] += self.grad[i];
                     });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expects 2-D, got " + shape_str(x.shape()));
  std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(r * c);
  const auto& xv = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  auto xn = x.node();
  return make_result("transpose", {c, r}, std::move(out), wants_grad(x),
                     [xn, r, c](Node& self) mutable {
                       if (!xn->requires_grad) return;
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           xn->grad[i * c + j] += self.grad[j * r + i];
                     });
}

// ---- reductions -----------------------------------------------------------

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto xn = x.node();
  return make_result("sum", {1}, {s}, wants_grad(x), [xn](Node& self) mutable {
    if (!xn->requires_grad) return;
    double g = self.grad[0];
    for (double& d : xn->grad) d += g;
  });
}

Tensor mean_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  double n = static_cast<double>(x.numel());
  auto xn = x.node();
  return make_result("mean", {1}, {s / n}, wants_grad(x), [xn, n](Node& self) mutable {
    if (!xn->requires_grad) return;
    double g = self.grad[0] / n;
    for (double& d : xn->grad) d += g;
  });
}

// ---- elementwise unary ----------------------------------------------------

Tensor gelu(const Tensor& x) {
  std::size_t n = x.numel();
  std::vector<double> out(n);
  const auto& xv = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = xv[i] * 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2));
  }
  auto xn = x.node();
  return make_result("gelu", x.shape(), std::move(out), wants_grad(x), [xn](Node& self) mutable {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double v = xn->value[i];
      double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      xn->grad[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor sqrt_elem(const Tensor& x) {
  std::size_t n = x.numel();
  std::vector<double> out(n);
  const auto& xv = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(xv[i]);
  auto xn = x.node();
  return make_result("sqrt", x.shape(), std::move(out), wants_grad(x), [xn](Node& self) mutable {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      xn->grad[i] += self.grad[i] * 0.5 / std::sqrt(xn->value[i]);
    }
  });
}

Tensor square(const Tensor& x) {
  std::size_t n = x.numel();
  std::vector<double> out(n);
  const auto& xv = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i] * xv[i];
  auto xn = x.node();
  return make_result("square", x.shape(), std::move(out), wants_grad(x), [xn](Node& self) mutable {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      xn->grad[i] += self.grad[i] * 2.0 * xn->value[i];
    }
  });
}

// ---- row-wise ops (last axis) ---------------------------------------------

Tensor softmax(const Tensor& x) {
  const Shape& s = x.shape();
  std::size_t w = s.back();
  std::size_t rows = x.numel() / w;
  std::vector<double> out(x.numel());
  const auto& xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * w;
    double* o = out.data() + r * w;
    double mx = *std::max_element(in, in + w);
    double sum = 0.0;
    for (std::size_t j = 0; j < w; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < w; ++j) o[j] /= sum;
  }
  auto xn = x.node();
  return make_result("softmax", s, std::move(out), wants_grad(x),
                     [xn, rows, w](Node& self) mutable {
                       if (!xn->requires_grad) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = self.value.data() + r * w;
                         const double* gy = self.grad.data() + r * w;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < w; ++j) dot += gy[j] * y[j];
                         double* gx = xn->grad.data() + r * w;
                         for (std::size_t j = 0; j < w; ++j) gx[j] += y[j] * (gy[j] - dot);
                       }
                     });
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps) {
  const Shape& s = x.shape();
  std::size_t w = s.back();
  if (gain.shape() != Shape{w}) {
    throw ShapeError("rmsnorm: gain shape " + shape_str(gain.shape()) + " must be [" +
                     std::to_string(w) + "]");
  }
  std::size_t rows = x.numel() / w;
  std::vector<double> out(x.numel());
  std::vector<double> inv_rms(rows);
  const auto& xv = x.data();
  const auto& gv = gain.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * w;
    double ms = 0.0;
    for (std::size_t j = 0; j < w; ++j) ms += in[j] * in[j];
    ms /= static_cast<double>(w);
    inv_rms[r] = 1.0 / std::sqrt(ms + eps);
    double* o = out.data() + r * w;
    for (std::size_t j = 0; j < w; ++j) o[j] = in[j] * inv_rms[r] * gv[j];
  }
  auto xn = x.node();
  auto gn = gain.node();
  return make_result(
      "rmsnorm", s, std::move(out), wants_grad(x) || wants_grad(gain),
      [xn, gn, rows, w, inv_rms](Node& self) mutable {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* in = xn->value.data() + r * w;
          const double* gy = self.grad.data() + r * w;
          double ir = inv_rms[r];
          if (xn->requires_grad) {
            double dot = 0.0;  // sum_j gy_j * g_j * x_j
            for (std::size_t j = 0; j < w; ++j) dot += gy[j] * gn->value[j] * in[j];
            double c = dot * ir * ir * ir / static_cast<double>(w);
            double* gx = xn->grad.data() + r * w;
            for (std::size_t j = 0; j < w; ++j) {
              gx[j] += gy[j] * gn->value[j] * ir - in[j] * c;
            }
          }
          if (gn->requires_grad) {
            for (std::size_t j = 0; j < w; ++j) gn->grad[j] += gy[j] * in[j] * ir;
          }
        }
      });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Shape& s = x.shape();
  std::size_t w = s.back();
  if (gain.shape() != Shape{w} || bias.shape() != Shape{w}) {
    throw ShapeError("layernorm: gain/bias must be [" + std::to_string(w) + "], got " +
                     shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  }
  std::size_t rows = x.numel() / w;
  std::vector<double> out(x.numel());
  std::vector<double> inv_std(rows), means(rows);
  const auto& xv = x.data();
  const auto& gv = gain.data();
  const auto& bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * w;
    double mu = 0.0;
    for (std::size_t j = 0; j < w; ++j) mu += in[j];
    mu /= static_cast<double>(w);
    double var = 0.0;
    for (std::size_t j = 0; j < w; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(w);
    means[r] = mu;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    double* o = out.data() + r * w;
    for (std::size_t j = 0; j < w; ++j) o[j] = (in[j] - mu) * inv_std[r] * gv[j] + bv[j];
  }
  auto xn = x.node();
  auto gn = gain.node();
  auto bn = bias.node();
  return make_result(
      "layernorm", s, std::move(out), wants_grad(x) || wants_grad(gain) || wants_grad(bias),
      [xn, gn, bn, rows, w, inv_std, means](Node& self) mutable {
        double wn = static_cast<double>(w);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* in = xn->value.data() + r * w;
          const double* gy = self.grad.data() + r * w;
          double is = inv_std[r], mu = means[r];
          if (xn->requires_grad) {
            double sum_gh = 0.0, sum_ghx = 0.0;
            for (std::size_t j = 0; j < w; ++j) {
              double xhat = (in[j] - mu) * is;
              double gh = gy[j] * gn->value[j];
              sum_gh += gh;
              sum_ghx += gh * xhat;
            }
            double* gx = xn->grad.data() + r * w;
            for (std::size_t j = 0; j < w; ++j) {
              double xhat = (in[j] - mu) * is;
              double gh = gy[j] * gn->value[j];
              gx[j] += is * (gh - sum_gh / wn - xhat * sum_ghx / wn);
            }
          }
          if (gn->requires_grad) {
            for (std::size_t j = 0; j < w; ++j) {
              gn->grad[j] += gy[j] * (in[j] - mu) * is;
            }
          }
          if (bn->requires_grad) {
            for (std::size_t j = 0; j < w; ++j) bn->grad[j] += gy[j];
          }
        }
      });
}

// ---- broadcast ------------------------------------------------------------

Tensor broadcast(const Tensor& x, const Shape& target) {
  const Shape& s = x.shape();
  if (s.size() > target.size()) {
    throw ShapeError("broadcast: source rank exceeds target: " + shape_str(s) + " -> " +
                     shape_str(target));
  }
  // Right-align: pad source shape with leading ones.
  Shape padded(target.size(), 1);
  std::copy(s.begin(), s.end(), padded.begin() + (target.size() - s.size()));
  for (std::size_t d = 0; d < target.size(); ++d) {
    if (padded[d] != target[d] && padded[d] != 1) {
      throw ShapeError("broadcast: " + shape_str(s) + " incompatible with " + shape_str(target));
    }
  }
  auto tstrides = row_major_strides(target);
  auto pstrides = row_major_strides(padded);
  for (std::size_t d = 0; d < target.size(); ++d) {
    if (padded[d] == 1 && target[d] != 1) pstrides[d] = 0;
  }
  std::size_t n = shape_numel(target);
  std::vector<double> out(n);
  const auto& xv = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i, src = 0;
    for (std::size_t d = 0; d < target.size(); ++d) {
      std::size_t idx = rem / tstrides[d];
      rem %= tstrides[d];
      src += idx * pstrides[d];
    }
    out[i] = xv[src];
  }
  auto xn = x.node();
  auto ts = tstrides;
  auto ps = pstrides;
  std::size_t rank = target.size();
  return make_result("broadcast", target, std::move(out), wants_grad(x),
                     [xn, ts, ps, rank](Node& self) mutable {
                       if (!xn->requires_grad) return;
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         std::size_t rem = i, src = 0;
                         for (std::size_t d = 0; d < rank; ++d) {
                           std::size_t idx = rem / ts[d];
                           rem %= ts[d];
                           src += idx * ps[d];
                         }
                         xn->grad[src] += self.grad[i];
                       }
                     });
}

Tensor scale(const Tensor& x, double s) {
  Tensor c = Tensor::scalar(s);
  return mul(x, broadcast(c, x.shape()));
}

// ---- gradcheck ------------------------------------------------------------

GradcheckResult gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                          double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw ShapeError("gradcheck: step " + std::to_string(h) + " outside [1e-7, 1e-3]");
  }
  std::vector<std::vector<double>> analytic;
  {
    for (auto p : params) p.zero_grad();
    Graph g;
    Tensor loss = f();
    if (loss.numel() != 1) {
      throw ShapeError("gradcheck: f must return a scalar, got " + shape_str(loss.shape()));
    }
    g.backward(loss);
    for (const auto& p : params) analytic.push_back(p.grad());
  }

  GradcheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    auto& v = p.mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      double old = v[i];
      v[i] = old + h;
      double fp = f().item();
      v[i] = old - h;
      double fm = f().item();
      v[i] = old;
      double num = (fp - fm) / (2.0 * h);
      double ana = analytic[pi][i];
      double rel = std::fabs(ana - num) / std::max({1.0, std::fabs(ana), std::fabs(num)});
      if (rel > res.max_rel_err) {
        res = {rel, pi, i, ana, num};
      }
    }
  }
  return res;
}

}  // namespace simplihumon
