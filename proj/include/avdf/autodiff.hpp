#pragma once

// Tape-based reverse-mode automatic differentiation over dense double tensors.
//
// A Graph records every operation in execution order. Each node stores its
// forward value and, when any input requires a gradient, a closure that
// scatters the node's output gradient into its inputs. backward() walks the
// tape once in reverse, so nodes are visited exactly once and inputs always
// precede the nodes that consume them.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "avdf/error.hpp"
#include "avdf/parameters.hpp"
#include "avdf/tensor.hpp"

namespace avdf::ad {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

class Graph;

// Handle to a node on a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  const Tensor& grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

enum class GradMode { Enabled, Disabled };

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  explicit Graph(GradMode mode = GradMode::Enabled) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const noexcept { return mode_ == GradMode::Enabled; }

  Var constant(Tensor value) {
    ensure_finite("constant", value);
    return push(std::move(value), false, nullptr, nullptr);
  }

  // Each parameter becomes a single leaf no matter how often it is used. The
  // leaf reads the parameter's storage directly and its gradient buffer is
  // Parameter::grad, so the parameter must outlive the graph.
  Var param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    const bool rg = grad_enabled() && p.trainable;
    nodes_.push_back(Node{Tensor(), Tensor(), rg, nullptr, &p});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
  }

  // Records an operation. `backward` is dropped when no input needs a gradient.
  Var record(const char* op, Tensor value, bool requires_grad, BackwardFn backward) {
    ensure_finite(op, value);
    const bool rg = grad_enabled() && requires_grad;
    return push(std::move(value), rg, rg ? std::move(backward) : nullptr, nullptr);
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.param ? n.param->value : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  const Tensor& grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.param ? n.param->grad : n.grad;
  }

  // Gradient buffer for accumulation, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    Tensor& buf = n.param ? n.param->grad : n.grad;
    const Tensor& val = n.param ? n.param->value : n.value;
    if (buf.shape() != val.shape()) buf = Tensor(val.shape());
    return buf;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  // Accumulates d(loss)/d(param) into Parameter::grad for every trainable
  // parameter reachable from `loss`. Parameters not reached are left untouched,
  // so callers zero gradients between steps.
  void backward(Var loss) {
    if (nodes_.empty()) throw StateError("backward: graph has no recorded forward pass");
    if (loss.id() >= nodes_.size() || &loss.graph() != this) throw StateError("backward: loss is not on this graph");
    if (value(loss.id()).size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_string(value(loss.id()).shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor();
    if (!nodes_[loss.id()].requires_grad || nodes_[loss.id()].param) return;
    grad_buffer(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  static void ensure_finite(const char* op, const Tensor& t) {
    if (!t.all_finite()) throw NumericalError(std::string(op) + ": non-finite value");
  }

  Var push(Tensor value, bool rg, BackwardFn fn, Parameter* p) {
    nodes_.push_back(Node{std::move(value), Tensor(), rg, std::move(fn), p});
    return Var(this, nodes_.size() - 1);
  }

  GradMode mode_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }
inline bool Var::requires_grad() const { return graph_->requires_grad(id_); }
inline const Tensor& Var::grad() const { return graph_->grad(id_); }

namespace detail {

[[noreturn]] inline void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

inline void require_same(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) shape_mismatch(op, a.shape(), b.shape());
}

inline void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(a.shape()));
  }
}

inline void accumulate(Graph& g, Var v, const Tensor& delta) {
  if (!v.requires_grad()) return;
  Tensor& buf = g.grad_buffer(v.id());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += delta[i];
}

template <class F>
void unary_backward(Graph& g, Var x, const Tensor& out_grad, F&& dydx) {
  if (!x.requires_grad()) return;
  Tensor& buf = g.grad_buffer(x.id());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += out_grad[i] * dydx(i);
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

inline Var add(Var a, Var b) {
  detail::require_same("add", a, b);
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.graph().record("add", std::move(out), a.requires_grad() || b.requires_grad(),
                          [a, b](Graph& g, const Tensor& gy) {
                            detail::accumulate(g, a, gy);
                            detail::accumulate(g, b, gy);
                          });
}

inline Var sub(Var a, Var b) {
  detail::require_same("sub", a, b);
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.graph().record("sub", std::move(out), a.requires_grad() || b.requires_grad(),
                          [a, b](Graph& g, const Tensor& gy) {
                            detail::accumulate(g, a, gy);
                            detail::unary_backward(g, b, gy, [](std::size_t) { return -1.0; });
                          });
}

inline Var mul(Var a, Var b) {
  detail::require_same("mul", a, b);
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.graph().record("mul", std::move(out), a.requires_grad() || b.requires_grad(),
                          [a, b](Graph& g, const Tensor& gy) {
                            const Tensor& av = a.value();
                            const Tensor& bv = b.value();
                            detail::unary_backward(g, a, gy, [&](std::size_t i) { return bv[i]; });
                            detail::unary_backward(g, b, gy, [&](std::size_t i) { return av[i]; });
                          });
}

inline Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= c;
  return a.graph().record("scale", std::move(out), a.requires_grad(), [a, c](Graph& g, const Tensor& gy) {
    detail::unary_backward(g, a, gy, [c](std::size_t) { return c; });
  });
}

inline Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return a.graph().record("relu", std::move(out), a.requires_grad(), [a](Graph& g, const Tensor& gy) {
    const Tensor& x = a.value();
    detail::unary_backward(g, a, gy, [&](std::size_t i) { return x[i] > 0.0 ? 1.0 : 0.0; });
  });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = sigmoid_scalar(v);
  const std::size_t id = a.graph().size();
  return a.graph().record("sigmoid", std::move(out), a.requires_grad(), [a, id](Graph& g, const Tensor& gy) {
    const Tensor& y = g.value(id);
    detail::unary_backward(g, a, gy, [&](std::size_t i) { return y[i] * (1.0 - y[i]); });
  });
}

inline Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::tanh(v);
  const std::size_t id = a.graph().size();
  return a.graph().record("tanh", std::move(out), a.requires_grad(), [a, id](Graph& g, const Tensor& gy) {
    const Tensor& y = g.value(id);
    detail::unary_backward(g, a, gy, [&](std::size_t i) { return 1.0 - y[i] * y[i]; });
  });
}

// max(x + margin, 0); the kink at exactly zero routes no gradient.
inline Var hinge(Var a, double margin) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::max(v + margin, 0.0);
  return a.graph().record("hinge", std::move(out), a.requires_grad(), [a, margin](Graph& g, const Tensor& gy) {
    const Tensor& x = a.value();
    detail::unary_backward(g, a, gy, [&](std::size_t i) { return x[i] + margin > 0.0 ? 1.0 : 0.0; });
  });
}

// ---- reductions and reshaping ----------------------------------------------

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.graph().record("sum", Tensor::scalar(s), a.requires_grad(), [a](Graph& g, const Tensor& gy) {
    const double d = gy[0];
    for (double& v : g.grad_buffer(a.id()).values()) v += d;
  });
}

inline Var dot(Var a, Var b) {
  detail::require_same("dot", a, b);
  const auto av = a.value().values();
  const auto bv = b.value().values();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return a.graph().record("dot", Tensor::scalar(s), a.requires_grad() || b.requires_grad(),
                          [a, b](Graph& g, const Tensor& gy) {
                            const double d = gy[0];
                            const Tensor& av = a.value();
                            const Tensor& bv = b.value();
                            if (a.requires_grad()) {
                              Tensor& ga = g.grad_buffer(a.id());
                              for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += d * bv[i];
                            }
                            if (b.requires_grad()) {
                              Tensor& gb = g.grad_buffer(b.id());
                              for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += d * av[i];
                            }
                          });
}

// Arithmetic mean of scalar nodes, summed in the given order.
inline Var mean(const std::vector<Var>& terms) {
  if (terms.empty()) throw ShapeError("mean: no terms");
  Graph& graph = terms.front().graph();
  double s = 0.0;
  bool rg = false;
  for (Var t : terms) {
    s += t.value().item();
    rg = rg || t.requires_grad();
  }
  const double inv = 1.0 / static_cast<double>(terms.size());
  return graph.record("mean", Tensor::scalar(s * inv), rg, [terms, inv](Graph& g, const Tensor& gy) {
    for (Var t : terms) {
      if (t.requires_grad()) g.grad_buffer(t.id())[0] += gy[0] * inv;
    }
  });
}

inline Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph().record("reshape", std::move(out), a.requires_grad(),
                          [a](Graph& g, const Tensor& gy) { detail::accumulate(g, a, gy); });
}

inline Var flatten(Var a) { return reshape(a, Shape{a.value().size()}); }

inline Var concat(Var a, Var b) {
  detail::require_rank("concat", a, 1);
  detail::require_rank("concat", b, 1);
  const std::size_t na = a.value().size();
  std::vector<double> v(a.value().storage());
  v.insert(v.end(), b.value().storage().begin(), b.value().storage().end());
  return a.graph().record("concat", Tensor::vector(std::move(v)), a.requires_grad() || b.requires_grad(),
                          [a, b, na](Graph& g, const Tensor& gy) {
                            if (a.requires_grad()) {
                              Tensor& ga = g.grad_buffer(a.id());
                              for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
                            }
                            if (b.requires_grad()) {
                              Tensor& gb = g.grad_buffer(b.id());
                              for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[na + i];
                            }
                          });
}

inline Var slice(Var a, std::size_t offset, std::size_t length) {
  detail::require_rank("slice", a, 1);
  if (offset + length > a.value().size()) {
    throw ShapeError("slice: [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                     ") out of range for " + shape_string(a.shape()));
  }
  const auto src = a.value().values().subspan(offset, length);
  Tensor out = Tensor::vector(std::vector<double>(src.begin(), src.end()));
  return a.graph().record("slice", std::move(out), a.requires_grad(), [a, offset](Graph& g, const Tensor& gy) {
    Tensor& ga = g.grad_buffer(a.id());
    for (std::size_t i = 0; i < gy.size(); ++i) ga[offset + i] += gy[i];
  });
}

// ---- linear algebra --------------------------------------------------------

inline Var matmul(Var a, Var b) {
  detail::require_rank("matmul", a, 2);
  detail::require_rank("matmul", b, 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) detail::shape_mismatch("matmul", a.shape(), b.shape());
  Tensor out(Shape{m, n});
  MatMap(out.data(), m, n).noalias() = ConstMatMap(a.value().data(), m, k) * ConstMatMap(b.value().data(), k, n);
  return a.graph().record("matmul", std::move(out), a.requires_grad() || b.requires_grad(),
                          [a, b, m, k, n](Graph& g, const Tensor& gy) {
                            ConstMatMap gyv(gy.data(), m, n);
                            if (a.requires_grad()) {
                              MatMap(g.grad_buffer(a.id()).data(), m, k).noalias() +=
                                  gyv * ConstMatMap(b.value().data(), k, n).transpose();
                            }
                            if (b.requires_grad()) {
                              MatMap(g.grad_buffer(b.id()).data(), k, n).noalias() +=
                                  ConstMatMap(a.value().data(), m, k).transpose() * gyv;
                            }
                          });
}

// y = W x + b with x:[n], W:[m,n], b:[m].
inline Var fully_connected(Var x, Var weights, Var bias) {
  detail::require_rank("fully_connected", x, 1);
  detail::require_rank("fully_connected", weights, 2);
  const std::size_t m = weights.shape()[0], n = weights.shape()[1];
  if (x.shape()[0] != n) detail::shape_mismatch("fully_connected", weights.shape(), x.shape());
  if (bias.shape() != Shape{m}) detail::shape_mismatch("fully_connected", weights.shape(), bias.shape());
  Tensor out = bias.value();
  VecMap(out.data(), m).noalias() +=
      ConstMatMap(weights.value().data(), m, n) * ConstVecMap(x.value().data(), n);
  return x.graph().record(
      "fully_connected", std::move(out), x.requires_grad() || weights.requires_grad() || bias.requires_grad(),
      [x, weights, bias, m, n](Graph& g, const Tensor& gy) {
        ConstVecMap gyv(gy.data(), m);
        if (x.requires_grad()) {
          VecMap(g.grad_buffer(x.id()).data(), n).noalias() +=
              ConstMatMap(weights.value().data(), m, n).transpose() * gyv;
        }
        if (weights.requires_grad()) {
          MatMap(g.grad_buffer(weights.id()).data(), m, n).noalias() +=
              gyv * ConstVecMap(x.value().data(), n).transpose();
        }
        detail::accumulate(g, bias, gy);
      });
}

// Stacks equally sized nodes as the rows of a [B, n] matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  Graph& graph = rows.front().graph();
  const std::size_t n = rows.front().value().size();
  Tensor out(Shape{rows.size(), n});
  bool rg = false;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].value().size() != n) detail::shape_mismatch("stack_rows", rows.front().shape(), rows[r].shape());
    std::copy_n(rows[r].value().data(), n, out.data() + r * n);
    rg = rg || rows[r].requires_grad();
  }
  return graph.record("stack_rows", std::move(out), rg, [rows, n](Graph& g, const Tensor& gy) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!rows[r].requires_grad()) continue;
      Tensor& gr = g.grad_buffer(rows[r].id());
      for (std::size_t k = 0; k < n; ++k) gr[k] += gy[r * n + k];
    }
  });
}

// Row r of a [B, n] matrix as an [n] vector.
inline Var row(Var x, std::size_t r) {
  detail::require_rank("row", x, 2);
  const std::size_t n = x.shape()[1];
  if (r >= x.shape()[0]) throw ShapeError("row: index " + std::to_string(r) + " out of range for " + shape_string(x.shape()));
  std::vector<double> v(x.value().data() + r * n, x.value().data() + (r + 1) * n);
  return x.graph().record("row", Tensor::vector(std::move(v)), x.requires_grad(), [x, r, n](Graph& g, const Tensor& gy) {
    Tensor& gx = g.grad_buffer(x.id());
    for (std::size_t k = 0; k < n; ++k) gx[r * n + k] += gy[k];
  });
}

// Y = X W^T + b applied to every row: X:[B,n], W:[m,n], b:[m] -> [B,m].
inline Var linear_rows(Var x, Var weights, Var bias) {
  detail::require_rank("linear_rows", x, 2);
  detail::require_rank("linear_rows", weights, 2);
  const std::size_t B = x.shape()[0], n = x.shape()[1], m = weights.shape()[0];
  if (weights.shape()[1] != n) detail::shape_mismatch("linear_rows", x.shape(), weights.shape());
  if (bias.shape() != Shape{m}) detail::shape_mismatch("linear_rows", weights.shape(), bias.shape());
  Tensor out(Shape{B, m});
  MatMap y(out.data(), B, m);
  y.noalias() = ConstMatMap(x.value().data(), B, n) * ConstMatMap(weights.value().data(), m, n).transpose();
  y.rowwise() += ConstVecMap(bias.value().data(), m).transpose();
  return x.graph().record(
      "linear_rows", std::move(out), x.requires_grad() || weights.requires_grad() || bias.requires_grad(),
      [x, weights, bias, B, n, m](Graph& g, const Tensor& gy) {
        ConstMatMap gyv(gy.data(), B, m);
        if (x.requires_grad()) {
          MatMap(g.grad_buffer(x.id()).data(), B, n).noalias() += gyv * ConstMatMap(weights.value().data(), m, n);
        }
        if (weights.requires_grad()) {
          MatMap(g.grad_buffer(weights.id()).data(), m, n).noalias() +=
              gyv.transpose() * ConstMatMap(x.value().data(), B, n);
        }
        if (bias.requires_grad()) {
          VecMap(g.grad_buffer(bias.id()).data(), m) += gyv.colwise().sum().transpose();
        }
      });
}

// ---- convolution and pooling -----------------------------------------------

namespace detail {

// Geometry of a 2D convolution lowered to a GEMM over a [C*kh*kw, Ho*Wo]
// column matrix. For kernel tap (i, j) the valid output columns form one
// contiguous range, computed once so the inner loops are branch-free.
struct ConvGeometry {
  std::size_t C, H, W, kh, kw, stride, pad, Ho, Wo;

  std::size_t taps() const { return C * kh * kw; }
  std::size_t positions() const { return Ho * Wo; }

  // [lo, hi) range of output coordinates whose input coordinate o*stride + k - pad lies in [0, n).
  std::pair<std::size_t, std::size_t> valid(std::size_t k, std::size_t n, std::size_t outs) const {
    const auto sk = static_cast<std::ptrdiff_t>(k), sp = static_cast<std::ptrdiff_t>(pad);
    const auto ss = static_cast<std::ptrdiff_t>(stride), sn = static_cast<std::ptrdiff_t>(n);
    std::ptrdiff_t lo = sp - sk > 0 ? (sp - sk + ss - 1) / ss : 0;
    std::ptrdiff_t hi = sn - 1 + sp - sk >= 0 ? (sn - 1 + sp - sk) / ss + 1 : 0;
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(outs));
    if (hi < lo) hi = lo;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
  }

  template <class F>
  void for_each_run(F&& f) const {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < kh; ++i) {
        const auto [ylo, yhi] = valid(i, H, Ho);
        for (std::size_t j = 0; j < kw; ++j) {
          const auto [xlo, xhi] = valid(j, W, Wo);
          const std::size_t tap = (c * kh + i) * kw + j;
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            const std::size_t iy = oy * stride + i - pad;
            const std::size_t in_base = (c * H + iy) * W + xlo * stride + j - pad;
            f(tap * positions() + oy * Wo + xlo, in_base, xhi - xlo);
          }
        }
      }
    }
  }
};

}  // namespace detail

// x:[C,H,W], kernels:[O,C,kh,kw] -> [O,Ho,Wo] with symmetric zero padding.
inline Var conv2d(Var x, Var kernels, std::size_t stride, std::size_t padding = 0) {
  detail::require_rank("conv2d", x, 3);
  detail::require_rank("conv2d", kernels, 4);
  const Shape& xs = x.shape();
  const Shape& ks = kernels.shape();
  if (ks[1] != xs[0]) detail::shape_mismatch("conv2d", xs, ks);
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (xs[1] + 2 * padding < ks[2] || xs[2] + 2 * padding < ks[3]) detail::shape_mismatch("conv2d", xs, ks);
  const detail::ConvGeometry geo{xs[0],  xs[1],   xs[2],
                                 ks[2],  ks[3],   stride,
                                 padding, (xs[1] + 2 * padding - ks[2]) / stride + 1,
                                 (xs[2] + 2 * padding - ks[3]) / stride + 1};
  const std::size_t O = ks[0], P = geo.positions(), K = geo.taps();

  auto cols = std::make_shared<RowMat>(RowMat::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P)));
  const double* xv = x.value().data();
  double* cv = cols->data();
  if (stride == 1) {
    geo.for_each_run([&](std::size_t col, std::size_t in, std::size_t n) { std::copy_n(xv + in, n, cv + col); });
  } else {
    geo.for_each_run([&](std::size_t col, std::size_t in, std::size_t n) {
      for (std::size_t k = 0; k < n; ++k) cv[col + k] = xv[in + k * stride];
    });
  }
  Tensor out(Shape{O, geo.Ho, geo.Wo});
  MatMap(out.data(), O, P).noalias() = ConstMatMap(kernels.value().data(), O, K) * (*cols);

  const bool rg = x.requires_grad() || kernels.requires_grad();
  return x.graph().record("conv2d", std::move(out), rg, [x, kernels, cols, geo, O, P, K](Graph& g, const Tensor& gy) {
    ConstMatMap gyv(gy.data(), O, P);
    if (kernels.requires_grad()) {
      MatMap(g.grad_buffer(kernels.id()).data(), O, K).noalias() += gyv * cols->transpose();
    }
    if (x.requires_grad()) {
      const RowMat dcols = ConstMatMap(kernels.value().data(), O, K).transpose() * gyv;
      const double* dv = dcols.data();
      double* gx = g.grad_buffer(x.id()).data();
      const std::size_t stride = geo.stride;
      geo.for_each_run([&](std::size_t col, std::size_t in, std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) gx[in + k * stride] += dv[col + k];
      });
    }
  });
}

// Adds bias[c] to every element of channel c of x:[C,H,W].
inline Var channel_bias(Var x, Var bias) {
  detail::require_rank("channel_bias", x, 3);
  const std::size_t C = x.shape()[0], plane = x.shape()[1] * x.shape()[2];
  if (bias.shape() != Shape{C}) detail::shape_mismatch("channel_bias", x.shape(), bias.shape());
  Tensor out = x.value();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < plane; ++p) out[c * plane + p] += bias.value()[c];
  return x.graph().record("channel_bias", std::move(out), x.requires_grad() || bias.requires_grad(),
                          [x, bias, C, plane](Graph& g, const Tensor& gy) {
                            detail::accumulate(g, x, gy);
                            if (bias.requires_grad()) {
                              Tensor& gb = g.grad_buffer(bias.id());
                              for (std::size_t c = 0; c < C; ++c) {
                                double s = 0.0;
                                for (std::size_t p = 0; p < plane; ++p) s += gy[c * plane + p];
                                gb[c] += s;
                              }
                            }
                          });
}

// Non-overlapping window x window max pooling; trailing rows/cols that do not
// fill a window are dropped. Ties route to the lowest-index maximum.
inline Var maxpool2d(Var x, std::size_t window) {
  detail::require_rank("maxpool2d", x, 3);
  if (window == 0) throw ShapeError("maxpool2d: window must be positive");
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const std::size_t Ho = H / window, Wo = W / window;
  if (Ho == 0 || Wo == 0) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " larger than input " + shape_string(x.shape()));
  }
  Tensor out(Shape{C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const double* xv = x.value().data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        std::size_t best = (c * H + oy * window) * W + ox * window;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = (c * H + oy * window + i) * W + ox * window + j;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        const std::size_t o = (c * Ho + oy) * Wo + ox;
        out[o] = xv[best];
        (*argmax)[o] = best;
      }
    }
  }
  return x.graph().record("maxpool2d", std::move(out), x.requires_grad(), [x, argmax](Graph& g, const Tensor& gy) {
    Tensor& gx = g.grad_buffer(x.id());
    for (std::size_t o = 0; o < gy.size(); ++o) gx[(*argmax)[o]] += gy[o];
  });
}

// ---- probability and geometry ----------------------------------------------

inline Var softmax(Var a) {
  detail::require_rank("softmax", a, 1);
  Tensor out = a.value();
  const double mx = *std::max_element(out.values().begin(), out.values().end());
  double z = 0.0;
  for (double& v : out.values()) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : out.values()) v /= z;
  const std::size_t id = a.graph().size();
  return a.graph().record("softmax", std::move(out), a.requires_grad(), [a, id](Graph& g, const Tensor& gy) {
    const Tensor& y = g.value(id);
    double inner = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) inner += gy[i] * y[i];
    Tensor& ga = g.grad_buffer(a.id());
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += y[i] * (gy[i] - inner);
  });
}

// -log(probs[label]); probabilities are floored at the smallest normal double.
inline Var cross_entropy(Var probs, std::size_t label) {
  detail::require_rank("cross_entropy", probs, 1);
  if (label >= probs.value().size()) {
    throw ShapeError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     shape_string(probs.shape()));
  }
  const double p = std::max(probs.value()[label], std::numeric_limits<double>::min());
  return probs.graph().record("cross_entropy", Tensor::scalar(-std::log(p)), probs.requires_grad(),
                              [probs, label, p](Graph& g, const Tensor& gy) {
                                g.grad_buffer(probs.id())[label] += -gy[0] / p;
                              });
}

// Euclidean distance; the gradient at coincident points is taken as zero.
inline Var euclidean_distance(Var a, Var b) {
  detail::require_same("euclidean_distance", a, b);
  const double d = euclidean(a.value().values(), b.value().values());
  return a.graph().record("euclidean_distance", Tensor::scalar(d), a.requires_grad() || b.requires_grad(),
                          [a, b, d](Graph& g, const Tensor& gy) {
                            if (d == 0.0) return;
                            const double s = gy[0] / d;
                            const Tensor& av = a.value();
                            const Tensor& bv = b.value();
                            if (a.requires_grad()) {
                              Tensor& ga = g.grad_buffer(a.id());
                              for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * (av[i] - bv[i]);
                            }
                            if (b.requires_grad()) {
                              Tensor& gb = g.grad_buffer(b.id());
                              for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= s * (av[i] - bv[i]);
                            }
                          });
}

inline constexpr double kNormalizeEpsilon = 1e-12;

// x / sqrt(|x|^2 + eps).
inline Var unit_normalize(Var a) {
  Tensor out = a.value();
  double sq = 0.0;
  for (double v : out.values()) sq += v * v;
  const double n = std::sqrt(sq + kNormalizeEpsilon);
  for (double& v : out.values()) v /= n;
  const std::size_t id = a.graph().size();
  return a.graph().record("unit_normalize", std::move(out), a.requires_grad(), [a, id, n](Graph& g, const Tensor& gy) {
    const Tensor& y = g.value(id);
    double inner = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) inner += gy[i] * y[i];
    Tensor& ga = g.grad_buffer(a.id());
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += (gy[i] - y[i] * inner) / n;
  });
}

}  // namespace avdf::ad
