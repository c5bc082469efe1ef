#pragma once

// Reverse-mode automatic differentiation on dense row-major tensors.
//
// Design: define-by-run tape. Every op is a pure function returning a fresh
// tensor; when gradients are enabled and an input requires them, the output
// node stores its parents plus a backward closure. backward(loss) walks the
// graph once in reverse topological order and accumulates d(loss)/d(leaf)
// into the grad buffer of every trainable leaf.
//
// The engine is templated on the scalar type: float for training, double for
// the finite-difference gradient checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "amx/error.hpp"

namespace amx {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << "]";
  return os.str();
}

/// Row-major strides; size-1 and rank-0 shapes give the obvious results.
inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * s[i + 1];
  return st;
}

namespace detail {

template <typename T>
struct NodeT {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on demand, same length as value
  bool requires_grad = false;
  bool leaf = true;
  bool backward_ran = false;  // only meaningful on a backward() root
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<NodeT>> parents;
  std::function<void(NodeT&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

inline thread_local bool g_grad_enabled = true;

}  // namespace detail

inline bool grad_enabled() { return detail::g_grad_enabled; }

/// RAII switch that disables graph construction (evaluation mode).
struct NoGradGuard {
  NoGradGuard() : prev(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
  ~NoGradGuard() { detail::g_grad_enabled = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  bool prev;
};

template <typename T>
class TensorT {
  using Node = detail::NodeT<T>;

 public:
  using Scalar = T;

  TensorT() = default;

  static TensorT from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (numel(shape) != static_cast<int64_t>(data.size()))
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    TensorT t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static TensorT full(Shape shape, T v, bool requires_grad = false) {
    std::vector<T> data(static_cast<size_t>(numel(shape)), v);
    return from(std::move(shape), std::move(data), requires_grad);
  }

  static TensorT scalar(T v) { return from(Shape{}, std::vector<T>{v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(node_->value.size()); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  std::string_view op() const { return node_->op; }

  const std::vector<T>& values() const { return node_->value; }

  /// Mutable access to a leaf's payload (optimizer updates, finite-difference
  /// probes). Graph-produced tensors are immutable.
  std::vector<T>& values_mut() {
    if (!node_->leaf)
      throw ValueError("in-place mutation is only allowed on leaf tensors");
    return node_->value;
  }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const std::vector<T>& grad() const {
    if (!has_grad()) throw ValueError("tensor has no gradient buffer");
    return node_->grad;
  }
  void zero_grad() { node_->ensure_grad(); std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  T item() const {
    if (size() != 1)
      throw ShapeError("item() requires a single-element tensor, got shape " +
                       shape_str(shape()));
    return node_->value[0];
  }

  T at(std::initializer_list<int64_t> idx) const {
    const Shape& s = shape();
    if (idx.size() != s.size())
      throw ShapeError("at() index rank mismatch for shape " + shape_str(s));
    auto st = row_major_strides(s);
    int64_t flat = 0, d = 0;
    for (int64_t i : idx) flat += i * st[static_cast<size_t>(d++)];
    return node_->value[static_cast<size_t>(flat)];
  }

  /// Leaf copy of the current values; drops any graph linkage.
  TensorT clone_detached(bool requires_grad = false) const {
    return from(shape(), values(), requires_grad);
  }

  std::shared_ptr<Node> node() const { return node_; }

  /// Builds a derived (non-leaf) tensor. Parents and the backward rule are
  /// recorded only when gradients are enabled and some input needs them.
  static TensorT make_op(std::string_view op, Shape shape, std::vector<T> value,
                         std::vector<TensorT> inputs,
                         std::function<void(Node&)> backward_fn) {
    TensorT t = from(std::move(shape), std::move(value));
    t.node_->leaf = false;
    t.node_->op = op;
    bool need = false;
    if (grad_enabled())
      for (const auto& in : inputs) need = need || in.node_->requires_grad;
    if (need) {
      t.node_->requires_grad = true;
      t.node_->parents.reserve(inputs.size());
      for (auto& in : inputs) t.node_->parents.push_back(in.node_);
      t.node_->backward_fn = std::move(backward_fn);
    }
    return t;
  }

 private:
  std::shared_ptr<Node> node_;
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;
using Tensor = TensorF;

// ---------------------------------------------------------------------------
// Broadcasting
// ---------------------------------------------------------------------------

/// NumPy-style right-aligned broadcast of two shapes. Dims must match or be 1.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (size_t i = 0; i < rank; ++i) {
    int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast shapes " + shape_str(a) + " and " +
                       shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

namespace detail {

/// Per-output-dim strides into an input that may be broadcast (stride 0 on
/// stretched dims, missing leading dims included).
inline std::vector<int64_t> bcast_strides(const Shape& in, const Shape& out) {
  auto in_st = row_major_strides(in);
  std::vector<int64_t> st(out.size(), 0);
  size_t off = out.size() - in.size();
  for (size_t i = 0; i < in.size(); ++i)
    st[off + i] = in[i] == 1 ? 0 : in_st[i];
  return st;
}

/// Odometer walk over `out_shape`; fn(flat_out, flat_a, flat_b).
template <class Fn>
void for_each_broadcast(const Shape& out_shape, const std::vector<int64_t>& sa,
                        const std::vector<int64_t>& sb, Fn&& fn) {
  const int64_t n = numel(out_shape);
  const int rank = static_cast<int>(out_shape.size());
  std::vector<int64_t> coord(static_cast<size_t>(rank), 0);
  int64_t ia = 0, ib = 0;
  for (int64_t o = 0; o < n; ++o) {
    fn(o, ia, ib);
    for (int d = rank - 1; d >= 0; --d) {
      ++coord[static_cast<size_t>(d)];
      ia += sa[static_cast<size_t>(d)];
      ib += sb[static_cast<size_t>(d)];
      if (coord[static_cast<size_t>(d)] < out_shape[static_cast<size_t>(d)]) break;
      coord[static_cast<size_t>(d)] = 0;
      ia -= sa[static_cast<size_t>(d)] * out_shape[static_cast<size_t>(d)];
      ib -= sb[static_cast<size_t>(d)] * out_shape[static_cast<size_t>(d)];
    }
  }
}

template <typename T, class FwdFn, class BwdFn>
TensorT<T> binary_op(std::string_view name, const TensorT<T>& a,
                     const TensorT<T>& b, FwdFn fwd, BwdFn bwd) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const int64_t n = numel(out_shape);
  std::vector<T> out(static_cast<size_t>(n));
  const auto& av = a.values();
  const auto& bv = b.values();
  if (a.shape() == b.shape()) {
    for (int64_t i = 0; i < n; ++i)
      out[static_cast<size_t>(i)] =
          fwd(av[static_cast<size_t>(i)], bv[static_cast<size_t>(i)]);
  } else {
    auto sa = bcast_strides(a.shape(), out_shape);
    auto sb = bcast_strides(b.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb, [&](int64_t o, int64_t ia, int64_t ib) {
      out[static_cast<size_t>(o)] =
          fwd(av[static_cast<size_t>(ia)], bv[static_cast<size_t>(ib)]);
    });
  }
  auto an = a.node();
  auto bn = b.node();
  auto backward = [an, bn, out_shape, bwd](NodeT<T>& self) {
    const bool need_a = an->requires_grad;
    const bool need_b = bn->requires_grad;
    if (need_a) an->ensure_grad();
    if (need_b) bn->ensure_grad();
    auto sa = bcast_strides(an->shape, out_shape);
    auto sb = bcast_strides(bn->shape, out_shape);
    for_each_broadcast(out_shape, sa, sb, [&](int64_t o, int64_t ia, int64_t ib) {
      const T g = self.grad[static_cast<size_t>(o)];
      const T va = an->value[static_cast<size_t>(ia)];
      const T vb = bn->value[static_cast<size_t>(ib)];
      auto [ga, gb] = bwd(g, va, vb);
      if (need_a) an->grad[static_cast<size_t>(ia)] += ga;
      if (need_b) bn->grad[static_cast<size_t>(ib)] += gb;
    });
  };
  return TensorT<T>::make_op(name, out_shape, std::move(out), {a, b},
                             std::move(backward));
}

template <typename T, class FwdFn, class BwdFn>
TensorT<T> unary_op(std::string_view name, const TensorT<T>& x, FwdFn fwd,
                    BwdFn bwd) {
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  auto xn = x.node();
  auto backward = [xn, bwd](NodeT<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      xn->grad[i] += bwd(self.grad[i], xn->value[i], self.value[i]);
  };
  return TensorT<T>::make_op(name, x.shape(), std::move(out), {x},
                             std::move(backward));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops (broadcasting)
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  return detail::binary_op<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](T g, T, T) { return std::pair<T, T>{g, g}; });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  return detail::binary_op<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](T g, T, T) { return std::pair<T, T>{g, -g}; });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  return detail::binary_op<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](T g, T x, T y) { return std::pair<T, T>{g * y, g * x}; });
}

/// Elementwise division. The denominator is recorded for backward but zeros
/// are deliberately not guarded here; filtering is the caller's contract.
template <typename T>
TensorT<T> div(const TensorT<T>& a, const TensorT<T>& b) {
  return detail::binary_op<T>(
      "div", a, b, [](T x, T y) { return x / y; },
      [](T g, T x, T y) {
        return std::pair<T, T>{g / y, -g * x / (y * y)};
      });
}

template <typename T> TensorT<T> add(const TensorT<T>& a, T c) { return add(a, TensorT<T>::scalar(c)); }
template <typename T> TensorT<T> sub(const TensorT<T>& a, T c) { return sub(a, TensorT<T>::scalar(c)); }
template <typename T> TensorT<T> mul(const TensorT<T>& a, T c) { return mul(a, TensorT<T>::scalar(c)); }
template <typename T> TensorT<T> div(const TensorT<T>& a, T c) { return div(a, TensorT<T>::scalar(c)); }

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  return detail::unary_op<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T g, T v, T) { return v > T(0) ? g : T(0); });
}

template <typename T>
TensorT<T> exp(const TensorT<T>& x) {
  return detail::unary_op<T>(
      "exp", x, [](T v) { return std::exp(v); },
      [](T g, T, T out) { return g * out; });
}

/// |x|; the subgradient at 0 is taken as 0.
template <typename T>
TensorT<T> abs(const TensorT<T>& x) {
  return detail::unary_op<T>(
      "abs", x, [](T v) { return std::abs(v); },
      [](T g, T v, T) { return v > T(0) ? g : (v < T(0) ? -g : T(0)); });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> sum(const TensorT<T>& x) {
  const auto& xv = x.values();
  T acc = 0;
  for (T v : xv) acc += v;
  auto xn = x.node();
  auto backward = [xn](detail::NodeT<T>& self) {
    xn->ensure_grad();
    const T g = self.grad[0];
    for (auto& gv : xn->grad) gv += g;
  };
  return TensorT<T>::make_op("sum", Shape{}, {acc}, {x}, std::move(backward));
}

template <typename T>
TensorT<T> mean(const TensorT<T>& x) {
  if (x.size() == 0) throw ShapeError("mean of an empty tensor " + shape_str(x.shape()));
  const T inv = T(1) / static_cast<T>(x.size());
  const auto& xv = x.values();
  T acc = 0;
  for (T v : xv) acc += v;
  acc *= inv;
  auto xn = x.node();
  auto backward = [xn, inv](detail::NodeT<T>& self) {
    xn->ensure_grad();
    const T g = self.grad[0] * inv;
    for (auto& gv : xn->grad) gv += g;
  };
  return TensorT<T>::make_op("mean", Shape{}, {acc}, {x}, std::move(backward));
}

namespace detail {

template <typename T>
TensorT<T> axis_reduce(std::string_view name, const TensorT<T>& x, int axis,
                       bool take_mean) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw ShapeError("reduce axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(s));
  const int64_t n_axis = s[static_cast<size_t>(axis)];
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape;
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    if (i != axis) out_shape.push_back(s[static_cast<size_t>(i)]);
  const T scale = take_mean ? T(1) / static_cast<T>(n_axis) : T(1);
  const auto& xv = x.values();
  std::vector<T> out(static_cast<size_t>(outer * inner), T(0));
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < n_axis; ++j) {
      const size_t base = static_cast<size_t>((o * n_axis + j) * inner);
      const size_t obase = static_cast<size_t>(o * inner);
      for (int64_t i = 0; i < inner; ++i)
        out[obase + static_cast<size_t>(i)] += xv[base + static_cast<size_t>(i)];
    }
  if (take_mean)
    for (auto& v : out) v *= scale;
  auto xn = x.node();
  auto backward = [xn, outer, inner, n_axis, scale](detail::NodeT<T>& self) {
    xn->ensure_grad();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t j = 0; j < n_axis; ++j) {
        const size_t base = static_cast<size_t>((o * n_axis + j) * inner);
        const size_t obase = static_cast<size_t>(o * inner);
        for (int64_t i = 0; i < inner; ++i)
          xn->grad[base + static_cast<size_t>(i)] +=
              self.grad[obase + static_cast<size_t>(i)] * scale;
      }
  };
  return TensorT<T>::make_op(name, std::move(out_shape), std::move(out), {x},
                             std::move(backward));
}

}  // namespace detail

template <typename T>
TensorT<T> sum(const TensorT<T>& x, int axis) {
  return detail::axis_reduce<T>("sum_axis", x, axis, /*take_mean=*/false);
}

template <typename T>
TensorT<T> mean(const TensorT<T>& x, int axis) {
  return detail::axis_reduce<T>("mean_axis", x, axis, /*take_mean=*/true);
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape new_shape) {
  if (numel(new_shape) != x.size())
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " +
                     shape_str(new_shape));
  auto xn = x.node();
  auto backward = [xn](detail::NodeT<T>& self) {
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  };
  return TensorT<T>::make_op("reshape", std::move(new_shape), x.values(), {x},
                             std::move(backward));
}

template <typename T>
TensorT<T> permute(const TensorT<T>& x, std::vector<int> axes) {
  const Shape& s = x.shape();
  if (axes.size() != s.size())
    throw ShapeError("permute axes rank mismatch for shape " + shape_str(s));
  Shape out_shape(s.size());
  for (size_t i = 0; i < axes.size(); ++i)
    out_shape[i] = s[static_cast<size_t>(axes[i])];
  auto in_st = row_major_strides(s);
  // stride into the input for each output dim
  std::vector<int64_t> map_st(s.size());
  for (size_t i = 0; i < axes.size(); ++i)
    map_st[i] = in_st[static_cast<size_t>(axes[i])];
  const int64_t n = x.size();
  const auto& xv = x.values();
  std::vector<T> out(static_cast<size_t>(n));
  std::vector<int64_t> zero(s.size(), 0);
  detail::for_each_broadcast(out_shape, map_st, zero,
                             [&](int64_t o, int64_t ii, int64_t) {
                               out[static_cast<size_t>(o)] = xv[static_cast<size_t>(ii)];
                             });
  auto xn = x.node();
  auto backward = [xn, out_shape, map_st, zero](detail::NodeT<T>& self) {
    xn->ensure_grad();
    detail::for_each_broadcast(out_shape, map_st, zero,
                               [&](int64_t o, int64_t ii, int64_t) {
                                 xn->grad[static_cast<size_t>(ii)] +=
                                     self.grad[static_cast<size_t>(o)];
                               });
  };
  return TensorT<T>::make_op("permute", std::move(out_shape), std::move(out), {x},
                             std::move(backward));
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(static_cast<size_t>(m * n), T(0));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      const T x = av[static_cast<size_t>(i * k + p)];
      const T* brow = bv.data() + p * n;
      T* orow = out.data() + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  auto an = a.node();
  auto bn = b.node();
  auto backward = [an, bn, m, k, n](detail::NodeT<T>& self) {
    const T* g = self.grad.data();
    if (an->requires_grad) {
      an->ensure_grad();
      // dA[i,p] += sum_j g[i,j] * B[p,j]
      for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
          const T* grow = g + i * n;
          const T* brow = bn->value.data() + p * n;
          T acc = 0;
          for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          an->grad[static_cast<size_t>(i * k + p)] += acc;
        }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      // dB[p,j] += sum_i A[i,p] * g[i,j]
      for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
          const T x = an->value[static_cast<size_t>(i * k + p)];
          const T* grow = g + i * n;
          T* brow = bn->grad.data() + p * n;
          for (int64_t j = 0; j < n; ++j) brow[j] += x * grow[j];
        }
    }
  };
  return TensorT<T>::make_op("matmul", Shape{m, n}, std::move(out), {a, b},
                             std::move(backward));
}

// ---------------------------------------------------------------------------
// Convolution lowering
// ---------------------------------------------------------------------------

inline int64_t conv_out_dim(int64_t in, int64_t kernel, int64_t stride, int64_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

/// Unfolds [N,C,H,W] into [N*OH*OW, C*KH*KW] patch rows (zero padding).
template <typename T>
TensorT<T> im2col(const TensorT<T>& x, int64_t kh, int64_t kw, int64_t stride,
                  int64_t pad) {
  if (x.rank() != 4)
    throw ShapeError("im2col expects [N,C,H,W], got " + shape_str(x.shape()));
  if (stride != 1 && stride != 2)
    throw ValueError("conv stride must be 1 or 2, got " + std::to_string(stride));
  const int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int64_t oh = conv_out_dim(H, kh, stride, pad);
  const int64_t ow = conv_out_dim(W, kw, stride, pad);
  if (oh < 1 || ow < 1)
    throw ShapeError("convolution output would be empty: input " +
                     shape_str(x.shape()) + ", kernel " + shape_str({kh, kw}));
  const int64_t ckk = C * kh * kw;
  const auto& xv = x.values();
  std::vector<T> out(static_cast<size_t>(N * oh * ow * ckk), T(0));
  for (int64_t n = 0; n < N; ++n)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        T* row = out.data() + ((n * oh + oy) * ow + ox) * ckk;
        for (int64_t c = 0; c < C; ++c)
          for (int64_t ky = 0; ky < kh; ++ky) {
            const int64_t iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            const T* src = xv.data() + ((n * C + c) * H + iy) * W;
            T* dst = row + (c * kh + ky) * kw;
            for (int64_t kx = 0; kx < kw; ++kx) {
              const int64_t ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < W) dst[kx] = src[ix];
            }
          }
      }
  auto xn = x.node();
  auto backward = [xn, N, C, H, W, kh, kw, stride, pad, oh, ow,
                   ckk](detail::NodeT<T>& self) {
    xn->ensure_grad();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          const T* row = self.grad.data() + ((n * oh + oy) * ow + ox) * ckk;
          for (int64_t c = 0; c < C; ++c)
            for (int64_t ky = 0; ky < kh; ++ky) {
              const int64_t iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= H) continue;
              T* dst = xn->grad.data() + ((n * C + c) * H + iy) * W;
              const T* src = row + (c * kh + ky) * kw;
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t ix = ox * stride - pad + kx;
                if (ix >= 0 && ix < W) dst[ix] += src[kx];
              }
            }
        }
  };
  return TensorT<T>::make_op("im2col", Shape{N * oh * ow, ckk}, std::move(out),
                             {x}, std::move(backward));
}

/// 2-D convolution of x [N,Cin,H,W] with w [Cout,Cin,KH,KW] (+ optional bias
/// [Cout]), lowered to im2col + matmul so one matmul backward covers conv.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias,
                  int64_t stride, int64_t pad) {
  if (x.rank() != 4 || w.rank() != 4 || x.shape()[1] != w.shape()[1])
    throw ShapeError("conv2d shape mismatch: input " + shape_str(x.shape()) +
                     ", weight " + shape_str(w.shape()));
  const int64_t N = x.shape()[0], cout = w.shape()[0];
  const int64_t kh = w.shape()[2], kw = w.shape()[3];
  const int64_t oh = conv_out_dim(x.shape()[2], kh, stride, pad);
  const int64_t ow = conv_out_dim(x.shape()[3], kw, stride, pad);
  auto cols = im2col(x, kh, kw, stride, pad);                  // [N*OH*OW, CKK]
  auto wmat = permute(reshape(w, {cout, cols.shape()[1]}), {1, 0});
  auto out = matmul(cols, wmat);                               // [N*OH*OW, Cout]
  out = permute(reshape(out, {N, oh, ow, cout}), {0, 3, 1, 2});
  if (bias.defined()) out = add(out, reshape(bias, {cout, 1, 1}));
  return out;
}

/// Mean over the spatial dims: [N,C,H,W] -> [N,C,1,1].
template <typename T>
TensorT<T> adaptive_avg_pool1x1(const TensorT<T>& x) {
  if (x.rank() != 4)
    throw ShapeError("adaptive_avg_pool1x1 expects [N,C,H,W], got " +
                     shape_str(x.shape()));
  const int64_t N = x.shape()[0], C = x.shape()[1];
  const int64_t hw = x.shape()[2] * x.shape()[3];
  const T inv = T(1) / static_cast<T>(hw);
  const auto& xv = x.values();
  std::vector<T> out(static_cast<size_t>(N * C), T(0));
  for (int64_t i = 0; i < N * C; ++i) {
    const T* src = xv.data() + i * hw;
    T acc = 0;
    for (int64_t j = 0; j < hw; ++j) acc += src[j];
    out[static_cast<size_t>(i)] = acc * inv;
  }
  auto xn = x.node();
  auto backward = [xn, N, C, hw, inv](detail::NodeT<T>& self) {
    xn->ensure_grad();
    for (int64_t i = 0; i < N * C; ++i) {
      const T g = self.grad[static_cast<size_t>(i)] * inv;
      T* dst = xn->grad.data() + i * hw;
      for (int64_t j = 0; j < hw; ++j) dst[j] += g;
    }
  };
  return TensorT<T>::make_op("adaptive_avg_pool1x1", Shape{N, C, 1, 1},
                             std::move(out), {x}, std::move(backward));
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

/// Reverse-mode sweep from a scalar loss. Each reachable node is visited
/// exactly once; leaf tensors that require gradients end up holding
/// d(loss)/d(leaf) in their grad buffer (accumulated).
template <typename T>
void backward(const TensorT<T>& loss) {
  using Node = detail::NodeT<T>;
  if (loss.size() != 1)
    throw ValueError("backward requires a scalar loss, got shape " +
                     shape_str(loss.shape()));
  auto root = loss.node();
  if (root->backward_ran)
    throw Error("backward called twice on the same loss without reset");
  if (!root->requires_grad)
    throw ValueError("backward on a loss with no gradient path to any trainable tensor");

  // iterative post-order topological sort
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  root->backward_ran = true;
}

/// Clears the backward-ran flag and zeroes every gradient buffer reachable
/// from `loss`, allowing a legitimate re-run of backward on the same graph.
template <typename T>
void reset_backward(const TensorT<T>& loss) {
  using Node = detail::NodeT<T>;
  std::unordered_set<Node*> visited;
  std::vector<Node*> stack{loss.node().get()};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    n->backward_ran = false;
    std::fill(n->grad.begin(), n->grad.end(), T(0));
    for (auto& p : n->parents)
      if (visited.insert(p.get()).second) stack.push_back(p.get());
  }
}

template <typename T>
void zero_grad(std::span<TensorT<T>> tensors) {
  for (auto& t : tensors) t.zero_grad();
}

/// Leaf-copy conversion between scalar types (float <-> double).
template <typename U, typename T>
TensorT<U> cast(const TensorT<T>& x, bool requires_grad = false) {
  std::vector<U> data(x.values().begin(), x.values().end());
  return TensorT<U>::from(x.shape(), std::move(data), requires_grad);
}

}  // namespace amx
