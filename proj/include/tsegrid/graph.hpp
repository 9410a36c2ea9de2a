// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_GRAPH_HPP_
#define TSEGRID_GRAPH_HPP_

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "tsegrid/tensor.hpp"

namespace tsegrid {

// ---------------------------------------------------------------------------
// GEMM kernels. Eigen is used strictly as the inner product engine; the
// autodiff semantics, shape algebra and every backward rule live here.
// Eigen packs operands before multiplying, so results do not depend on the
// heap alignment of the inputs -- forward passes are bit-reproducible.
// ---------------------------------------------------------------------------

template <typename T>
using EMat =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
inline void gemm_nn(const T* a, size_t m, size_t k, const T* b, size_t n,
                    T* c, bool accumulate) {
  Eigen::Map<const EMat<T>> A(a, m, k), B(b, k, n);
  Eigen::Map<EMat<T>> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

template <typename T>
inline void gemm_nt(const T* a, size_t m, size_t k, const T* b, size_t n,
                    T* c, bool accumulate) {
  // c[m,n] = a[m,k] * b[n,k]^T
  Eigen::Map<const EMat<T>> A(a, m, k), B(b, n, k);
  Eigen::Map<EMat<T>> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

template <typename T>
inline void gemm_tn(const T* a, size_t k, size_t m, const T* b, size_t n,
                    T* c, bool accumulate) {
  // c[m,n] = a[k,m]^T * b[k,n]
  Eigen::Map<const EMat<T>> A(a, k, m), B(b, k, n);
  Eigen::Map<EMat<T>> C(c, m, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

// ---------------------------------------------------------------------------
// Graph: a topologically ordered record of operations. Nodes are appended in
// creation order, which is a valid topological order by construction, so
// backward() is a single reverse sweep that visits each node exactly once.
// One graph is built and traversed by one thread; parallelism across scenes
// uses independent graphs.
// ---------------------------------------------------------------------------

template <typename T>
class Graph;

template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  int32_t id = -1;

  bool defined() const { return graph != nullptr && id >= 0; }
  const Tensor<T>& value() const;
  const Tensor<T>& grad() const;
  const Shape& shape() const { return value().shape; }
  size_t size() const { return value().size(); }
};

template <typename T>
class Graph {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first touch during backward
    bool requires_grad = false;
    bool grad_live = false;
    std::function<void()> backprop;  // empty for leaves / no-grad nodes
    Tensor<T>* grad_sink = nullptr;  // external accumulator (parameters)
  };

  // When false, every node is grad-free: forward-only evaluation with no
  // closure bookkeeping.
  bool grad_enabled = true;

  Var<T> leaf(Tensor<T> v, bool requires_grad = false) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad && grad_enabled;
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int32_t>(nodes_.size() - 1)};
  }

  Var<T> constant(Tensor<T> v) { return leaf(std::move(v), false); }

  // Leaf whose gradient is flushed into an external buffer (a parameter's
  // grad accumulator) by flush_grads(). The value is copied into the graph,
  // so the owning parameter may live longer or shorter than the graph.
  Var<T> leaf_with_sink(const Tensor<T>& v, Tensor<T>* sink) {
    Var<T> out = leaf(v, true);
    nodes_[out.id].grad_sink = sink;
    return out;
  }

  const Node& node(int32_t id) const { return nodes_[id]; }
  Node& node(int32_t id) { return nodes_[id]; }
  size_t num_nodes() const { return nodes_.size(); }

  Tensor<T>& grad_buf(int32_t id) {
    Node& n = nodes_[id];
    if (!n.grad_live) {
      n.grad = Tensor<T>::zeros(n.value.shape);
      n.grad_live = true;
    }
    return n.grad;
  }

  bool grad_live(int32_t id) const { return nodes_[id].grad_live; }

  // Reverse-mode sweep from a scalar root. Nodes that did not contribute to
  // the root keep an exactly-zero (never allocated) gradient.
  void backward(Var<T> root) {
    if (root.graph != this) throw ShapeError("backward: var from another graph");
    Node& r = nodes_[root.id];
    if (r.value.size() != 1)
      throw ShapeError("backward: root must be scalar, got " +
                       shape_str(r.value.shape));
    grad_buf(root.id)[0] = T(1);
    for (int32_t i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad_live && n.backprop) n.backprop();
    }
  }

  void zero_grad() {
    for (Node& n : nodes_) {
      n.grad = Tensor<T>();
      n.grad_live = false;
    }
  }

  // Adds leaf gradients into their external sinks. Called once per graph by
  // the thread that owns the optimizer step; ordering across graphs is the
  // caller's responsibility (the trainer reduces in batch order).
  void flush_grads() {
    for (Node& n : nodes_) {
      if (n.grad_sink && n.grad_live) {
        Tensor<T>& s = *n.grad_sink;
        for (size_t i = 0; i < s.size(); ++i) s[i] += n.grad[i];
      }
    }
  }

 private:
  std::vector<Node> nodes_;
};

template <typename T>
inline const Tensor<T>& Var<T>::value() const {
  return graph->node(id).value;
}

template <typename T>
inline const Tensor<T>& Var<T>::grad() const {
  return graph->node(id).grad;
}

namespace detail {

template <typename T>
inline bool wants_grad(std::initializer_list<Var<T>> vs) {
  for (const Var<T>& v : vs)
    if (v.graph->node(v.id).requires_grad) return true;
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural operations. Each op computes its value eagerly
// and registers a closure implementing the exact vector-Jacobian product.
// No implicit broadcasting: shapes must match exactly except for the
// documented scalar-tensor ops.
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph;
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Var<T> r = g.leaf(std::move(out), detail::wants_grad<T>({a, b}));
  if (g.node(r.id).requires_grad) {
    int32_t ia = a.id, ib = b.id, ir = r.id;
    g.node(r.id).backprop = [&g, ia, ib, ir]() {
      const Tensor<T>& dy = g.node(ir).grad;
      if (g.node(ia).requires_grad) {
        Tensor<T>& da = g.grad_buf(ia);
        for (size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (g.node(ib).requires_grad) {
        Tensor<T>& db = g.grad_buf(ib);
        for (size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
      }
    };
  }
  return r;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph;
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  Var<T> r = g.leaf(std::move(out), detail::wants_grad<T>({a, b}));
  if (g.node(r.id).requires_grad) {
    int32_t ia = a.id, ib = b.id, ir = r.id;
    g.node(r.id).backprop = [&g, ia, ib, ir]() {
      const Tensor<T>& dy = g.node(ir).grad;
      if (g.node(ia).requires_grad) {
        Tensor<T>& da = g.grad_buf(ia);
        for (size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (g.node(ib).requires_grad) {
        Tensor<T>& db = g.grad_buf(ib);
        for (size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
      }
    };
  }
  return r;
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph;
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Var<T> r = g.leaf(std::move(out), detail::wants_grad<T>({a, b}));
  if (g.node(r.id).requires_grad) {
    int32_t ia = a.id, ib = b.id, ir = r.id;
    g.node(r.id).backprop = [&g, ia, ib, ir]() {
      const Tensor<T>& dy = g.node(ir).grad;
      const Tensor<T>& av = g.node(ia).value;
      const Tensor<T>& bv2 = g.node(ib).value;
      if (g.node(ia).requires_grad) {
        Tensor<T>& da = g.grad_buf(ia);
        for (size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv2[i];
      }
      if (g.node(ib).requires_grad) {
        Tensor<T>& db = g.grad_buf(ib);
        for (size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
      }
    };
  }
  return r;
}

template <typename T>
Var<T> vdiv(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph;
  require_same_shape(a.value(), b.value(), "div");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
  Var<T> r = g.leaf(std::move(out), detail::wants_grad<T>({a, b}));
  if (g.node(r.id).requires_grad) {
    int32_t ia = a.id, ib = b.id, ir = r.id;
    g.node(r.id).backprop = [&g, ia, ib, ir]() {
      const Tensor<T>& dy = g.node(ir).grad;
      const Tensor<T>& av = g.node(ia).value;
      const Tensor<T>& bv2 = g.node(ib).value;
      if (g.node(ia).requires_grad) {
        Tensor<T>& da = g.grad_buf(ia);
        for (size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] / bv2[i];
      }
      if (g.node(ib).requires_grad) {
        Tensor<T>& db = g.grad_buf(ib);
        for (size_t i = 0; i < dy.size(); ++i)
          db[i] -= dy[i] * av[i] / (bv2[i] * bv2[i]);
      }
    };
  }
  return r;
}

template <typename T, typename Fwd, typename Bwd>
Var<T> unary_op(Var<T> x, Fwd fwd, Bwd bwd_factor) {
  // bwd_factor(x_i, y_i) -> dy/dx at element i
  Graph<T>& g = *x.graph;
  Tensor<T> out = x.value();
  for (T& v : out.data) v = fwd(v);
  Var<T> r = g.leaf(std::move(out), g.node(x.id).requires_grad);
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, ir, bwd_factor]() {
      const Tensor<T>& dy = g.node(ir).grad;
      const Tensor<T>& xv = g.node(ix).value;
      const Tensor<T>& yv = g.node(ir).value;
      Tensor<T>& dx = g.grad_buf(ix);
      for (size_t i = 0; i < dy.size(); ++i)
        dx[i] += dy[i] * bwd_factor(xv[i], yv[i]);
    };
  }
  return r;
}

template <typename T>
Var<T> scale(Var<T> x, double c) {
  T cc = static_cast<T>(c);
  return unary_op(
      x, [cc](T v) { return v * cc; }, [cc](T, T) { return cc; });
}

template <typename T>
Var<T> add_const(Var<T> x, double c) {
  T cc = static_cast<T>(c);
  return unary_op(
      x, [cc](T v) { return v + cc; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> neg(Var<T> x) {
  return scale(x, -1.0);
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return unary_op(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> vtanh(Var<T> x) {
  return unary_op(
      x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return unary_op(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> vexp(Var<T> x) {
  return unary_op(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> vlog(Var<T> x) {
  return unary_op(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Var<T> vabs(Var<T> x) {
  return unary_op(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> clamp(Var<T> x, double lo, double hi) {
  T l = static_cast<T>(lo), h = static_cast<T>(hi);
  return unary_op(
      x, [l, h](T v) { return std::min(std::max(v, l), h); },
      [l, h](T v, T) { return (v >= l && v <= h) ? T(1) : T(0); });
}

template <typename T>
Var<T> sum_all(Var<T> x) {
  Graph<T>& g = *x.graph;
  T s = T(0);
  for (const T& v : x.value().data) s += v;
  Var<T> r = g.leaf(Tensor<T>::scalar(s), g.node(x.id).requires_grad);
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, ir]() {
      T dy = g.node(ir).grad[0];
      Tensor<T>& dx = g.grad_buf(ix);
      for (size_t i = 0; i < dx.size(); ++i) dx[i] += dy;
    };
  }
  return r;
}

template <typename T>
Var<T> mean_all(Var<T> x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

template <typename T>
Var<T> dot(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "dot");
  return sum_all(mul(a, b));
}

// scalar (shape [1]) broadcast against a tensor -- the only broadcasting rule
template <typename T>
Var<T> add_scalar(Var<T> x, Var<T> s) {
  Graph<T>& g = *x.graph;
  if (s.size() != 1) throw ShapeError("add_scalar: rhs must be scalar");
  Tensor<T> out = x.value();
  T sv = s.value()[0];
  for (T& v : out.data) v += sv;
  Var<T> r = g.leaf(std::move(out), detail::wants_grad<T>({x, s}));
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, is = s.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, is, ir]() {
      const Tensor<T>& dy = g.node(ir).grad;
      if (g.node(ix).requires_grad) {
        Tensor<T>& dx = g.grad_buf(ix);
        for (size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      }
      if (g.node(is).requires_grad) {
        T acc = T(0);
        for (size_t i = 0; i < dy.size(); ++i) acc += dy[i];
        g.grad_buf(is)[0] += acc;
      }
    };
  }
  return r;
}

template <typename T>
Var<T> mul_scalar(Var<T> x, Var<T> s) {
  Graph<T>& g = *x.graph;
  if (s.size() != 1) throw ShapeError("mul_scalar: rhs must be scalar");
  Tensor<T> out = x.value();
  T sv = s.value()[0];
  for (T& v : out.data) v *= sv;
  Var<T> r = g.leaf(std::move(out), detail::wants_grad<T>({x, s}));
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, is = s.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, is, ir]() {
      const Tensor<T>& dy = g.node(ir).grad;
      const Tensor<T>& xv = g.node(ix).value;
      T sv2 = g.node(is).value[0];
      if (g.node(ix).requires_grad) {
        Tensor<T>& dx = g.grad_buf(ix);
        for (size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * sv2;
      }
      if (g.node(is).requires_grad) {
        T acc = T(0);
        for (size_t i = 0; i < dy.size(); ++i) acc += dy[i] * xv[i];
        g.grad_buf(is)[0] += acc;
      }
    };
  }
  return r;
}

template <typename T>
Var<T> div_scalar(Var<T> x, Var<T> s) {
  Graph<T>& g = *x.graph;
  if (s.size() != 1) throw ShapeError("div_scalar: rhs must be scalar");
  Tensor<T> out = x.value();
  T sv = s.value()[0];
  for (T& v : out.data) v /= sv;
  Var<T> r = g.leaf(std::move(out), detail::wants_grad<T>({x, s}));
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, is = s.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, is, ir]() {
      const Tensor<T>& dy = g.node(ir).grad;
      const Tensor<T>& xv = g.node(ix).value;
      T sv2 = g.node(is).value[0];
      if (g.node(ix).requires_grad) {
        Tensor<T>& dx = g.grad_buf(ix);
        for (size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] / sv2;
      }
      if (g.node(is).requires_grad) {
        T acc = T(0);
        for (size_t i = 0; i < dy.size(); ++i) acc += dy[i] * xv[i];
        g.grad_buf(is)[0] -= acc / (sv2 * sv2);
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// matmul and linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph;
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0])
    throw ShapeError("matmul: " + shape_str(av.shape) + " x " +
                     shape_str(bv.shape));
  size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Tensor<T> out({m, n});
  gemm_nn(av.ptr(), m, k, bv.ptr(), n, out.ptr(), false);
  Var<T> r = g.leaf(std::move(out), detail::wants_grad<T>({a, b}));
  if (g.node(r.id).requires_grad) {
    int32_t ia = a.id, ib = b.id, ir = r.id;
    g.node(r.id).backprop = [&g, ia, ib, ir, m, k, n]() {
      const Tensor<T>& dy = g.node(ir).grad;
      const Tensor<T>& av2 = g.node(ia).value;
      const Tensor<T>& bv2 = g.node(ib).value;
      if (g.node(ia).requires_grad)
        gemm_nt(dy.ptr(), m, n, bv2.ptr(), k, g.grad_buf(ia).ptr(), true);
      if (g.node(ib).requires_grad)
        gemm_tn(av2.ptr(), m, k, dy.ptr(), n, g.grad_buf(ib).ptr(), true);
    };
  }
  return r;
}

template <typename T>
Var<T> transpose2(Var<T> x) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("transpose2: rank != 2");
  size_t m = xv.shape[0], n = xv.shape[1];
  Tensor<T> out({n, m});
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out.at2(j, i) = xv.at2(i, j);
  Var<T> r = g.leaf(std::move(out), g.node(x.id).requires_grad);
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, ir, m, n]() {
      const Tensor<T>& dy = g.node(ir).grad;
      Tensor<T>& dx = g.grad_buf(ix);
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) dx.data[i * n + j] += dy.data[j * m + i];
    };
  }
  return r;
}

// xW + b for x[M,K], W[K,N], b[N]
template <typename T>
Var<T> add_rowvec(Var<T> x, Var<T> b) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = b.value();
  if (xv.rank() != 2 || bv.rank() != 1 || bv.shape[0] != xv.shape[1])
    throw ShapeError("add_rowvec: " + shape_str(xv.shape) + " + " +
                     shape_str(bv.shape));
  size_t m = xv.shape[0], n = xv.shape[1];
  Tensor<T> out = xv;
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out.at2(i, j) += bv[j];
  Var<T> r = g.leaf(std::move(out), detail::wants_grad<T>({x, b}));
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, ib = b.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, ib, ir, m, n]() {
      const Tensor<T>& dy = g.node(ir).grad;
      if (g.node(ix).requires_grad) {
        Tensor<T>& dx = g.grad_buf(ix);
        for (size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      }
      if (g.node(ib).requires_grad) {
        Tensor<T>& db = g.grad_buf(ib);
        for (size_t i = 0; i < m; ++i)
          for (size_t j = 0; j < n; ++j) db[j] += dy.data[i * n + j];
      }
    };
  }
  return r;
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  return add_rowvec(matmul(x, w), b);
}

// per-channel bias over axis 0: x[C, ...] + b[C]
template <typename T>
Var<T> add_chanvec(Var<T> x, Var<T> b) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = b.value();
  if (xv.rank() < 1 || bv.rank() != 1 || bv.shape[0] != xv.shape[0])
    throw ShapeError("add_chanvec: " + shape_str(xv.shape) + " + " +
                     shape_str(bv.shape));
  size_t c = xv.shape[0], inner = xv.size() / c;
  Tensor<T> out = xv;
  for (size_t i = 0; i < c; ++i)
    for (size_t j = 0; j < inner; ++j) out.data[i * inner + j] += bv[i];
  Var<T> r = g.leaf(std::move(out), detail::wants_grad<T>({x, b}));
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, ib = b.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, ib, ir, c, inner]() {
      const Tensor<T>& dy = g.node(ir).grad;
      if (g.node(ix).requires_grad) {
        Tensor<T>& dx = g.grad_buf(ix);
        for (size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      }
      if (g.node(ib).requires_grad) {
        Tensor<T>& db = g.grad_buf(ib);
        for (size_t i = 0; i < c; ++i) {
          T acc = T(0);
          for (size_t j = 0; j < inner; ++j) acc += dy.data[i * inner + j];
          db[i] += acc;
        }
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> reshape(Var<T> x, Shape s) {
  Graph<T>& g = *x.graph;
  if (shape_numel(s) != x.size())
    throw ShapeError("reshape: " + shape_str(x.value().shape) + " -> " +
                     shape_str(s));
  Tensor<T> out = x.value();
  out.shape = std::move(s);
  Var<T> r = g.leaf(std::move(out), g.node(x.id).requires_grad);
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, ir]() {
      const Tensor<T>& dy = g.node(ir).grad;
      Tensor<T>& dx = g.grad_buf(ix);
      for (size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    };
  }
  return r;
}

template <typename T>
Var<T> narrow(Var<T> x, size_t axis, size_t start, size_t len) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  if (axis >= xv.rank() || start + len > xv.shape[axis] || len == 0)
    throw ShapeError("narrow: axis " + std::to_string(axis) + " [" +
                     std::to_string(start) + "," + std::to_string(start + len) +
                     ") of " + shape_str(xv.shape));
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= xv.shape[i];
  for (size_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.shape[i];
  size_t d = xv.shape[axis];
  Shape os = xv.shape;
  os[axis] = len;
  Tensor<T> out(os);
  for (size_t o = 0; o < outer; ++o)
    std::copy(xv.ptr() + (o * d + start) * inner,
              xv.ptr() + (o * d + start + len) * inner,
              out.ptr() + o * len * inner);
  Var<T> r = g.leaf(std::move(out), g.node(x.id).requires_grad);
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, ir, outer, inner, d, start, len]() {
      const Tensor<T>& dy = g.node(ir).grad;
      Tensor<T>& dx = g.grad_buf(ix);
      for (size_t o = 0; o < outer; ++o) {
        const T* src = dy.ptr() + o * len * inner;
        T* dst = dx.ptr() + (o * d + start) * inner;
        for (size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    };
  }
  return r;
}

template <typename T>
Var<T> concat(size_t axis, const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Graph<T>& g = *parts[0].graph;
  const Shape& s0 = parts[0].value().shape;
  if (axis >= s0.size()) throw ShapeError("concat: bad axis");
  size_t total = 0;
  bool rg = false;
  for (const Var<T>& p : parts) {
    const Shape& s = p.value().shape;
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i])
        throw ShapeError("concat: " + shape_str(s) + " vs " + shape_str(s0));
    total += s[axis];
    rg = rg || g.node(p.id).requires_grad;
  }
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape os = s0;
  os[axis] = total;
  Tensor<T> out(os);
  size_t off = 0;
  for (const Var<T>& p : parts) {
    const Tensor<T>& pv = p.value();
    size_t d = pv.shape[axis];
    for (size_t o = 0; o < outer; ++o)
      std::copy(pv.ptr() + o * d * inner, pv.ptr() + (o + 1) * d * inner,
                out.ptr() + (o * total + off) * inner);
    off += d;
  }
  Var<T> r = g.leaf(std::move(out), rg);
  if (rg) {
    std::vector<int32_t> ids;
    std::vector<size_t> dims;
    for (const Var<T>& p : parts) {
      ids.push_back(p.id);
      dims.push_back(p.value().shape[axis]);
    }
    int32_t ir = r.id;
    g.node(r.id).backprop = [&g, ids, dims, ir, outer, inner, total]() {
      const Tensor<T>& dy = g.node(ir).grad;
      size_t off2 = 0;
      for (size_t pi = 0; pi < ids.size(); ++pi) {
        size_t d = dims[pi];
        if (g.node(ids[pi]).requires_grad) {
          Tensor<T>& dx = g.grad_buf(ids[pi]);
          for (size_t o = 0; o < outer; ++o) {
            const T* src = dy.ptr() + (o * total + off2) * inner;
            T* dst = dx.ptr() + o * d * inner;
            for (size_t i = 0; i < d * inner; ++i) dst[i] += src[i];
          }
        }
        off2 += d;
      }
    };
  }
  return r;
}

template <typename T>
Var<T> permute3(Var<T> x, std::array<size_t, 3> p) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("permute3: rank != 3");
  Shape os = {xv.shape[p[0]], xv.shape[p[1]], xv.shape[p[2]]};
  Tensor<T> out(os);
  size_t idx[3];
  for (size_t i = 0; i < os[0]; ++i)
    for (size_t j = 0; j < os[1]; ++j)
      for (size_t k = 0; k < os[2]; ++k) {
        idx[p[0]] = i;
        idx[p[1]] = j;
        idx[p[2]] = k;
        out.at3(i, j, k) = xv.at3(idx[0], idx[1], idx[2]);
      }
  Var<T> r = g.leaf(std::move(out), g.node(x.id).requires_grad);
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, ir, p, os]() {
      const Tensor<T>& dy = g.node(ir).grad;
      Tensor<T>& dx = g.grad_buf(ix);
      size_t idx2[3];
      for (size_t i = 0; i < os[0]; ++i)
        for (size_t j = 0; j < os[1]; ++j)
          for (size_t k = 0; k < os[2]; ++k) {
            idx2[p[0]] = i;
            idx2[p[1]] = j;
            idx2[p[2]] = k;
            dx.at3(idx2[0], idx2[1], idx2[2]) += dy.at3(i, j, k);
          }
    };
  }
  return r;
}

// [..., n] replication of the input along a new trailing axis
template <typename T>
Var<T> expand_last(Var<T> x, size_t n) {
  Graph<T>& g = *x.graph;
  if (n == 0) throw ShapeError("expand_last: n == 0");
  const Tensor<T>& xv = x.value();
  Shape os = xv.shape;
  os.push_back(n);
  Tensor<T> out(os);
  for (size_t i = 0; i < xv.size(); ++i)
    for (size_t f = 0; f < n; ++f) out.data[i * n + f] = xv[i];
  Var<T> r = g.leaf(std::move(out), g.node(x.id).requires_grad);
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, ir, n]() {
      const Tensor<T>& dy = g.node(ir).grad;
      Tensor<T>& dx = g.grad_buf(ix);
      for (size_t i = 0; i < dx.size(); ++i) {
        T acc = T(0);
        for (size_t f = 0; f < n; ++f) acc += dy.data[i * n + f];
        dx[i] += acc;
      }
    };
  }
  return r;
}

// elementwise product with a constant mask broadcast over all leading axes:
// x[..., N] * m[N]
template <typename T>
Var<T> mask_lastdim(Var<T> x, const Tensor<T>& m) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  if (m.rank() != 1 || xv.shape.back() != m.shape[0])
    throw ShapeError("mask_lastdim: " + shape_str(xv.shape) + " * " +
                     shape_str(m.shape));
  size_t n = m.shape[0], rows = xv.size() / n;
  Tensor<T> out = xv;
  for (size_t r0 = 0; r0 < rows; ++r0)
    for (size_t j = 0; j < n; ++j) out.data[r0 * n + j] *= m[j];
  Var<T> r = g.leaf(std::move(out), g.node(x.id).requires_grad);
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, ir = r.id;
    Tensor<T> mc = m;
    g.node(r.id).backprop = [&g, ix, ir, mc, rows, n]() {
      const Tensor<T>& dy = g.node(ir).grad;
      Tensor<T>& dx = g.grad_buf(ix);
      for (size_t r0 = 0; r0 < rows; ++r0)
        for (size_t j = 0; j < n; ++j)
          dx.data[r0 * n + j] += dy.data[r0 * n + j] * mc[j];
    };
  }
  return r;
}

// numerically stable softmax over the last axis
template <typename T>
Var<T> softmax_last(Var<T> x) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  if (xv.rank() < 1) throw ShapeError("softmax_last: rank 0");
  size_t n = xv.shape.back(), rows = xv.size() / n;
  Tensor<T> out = xv;
  for (size_t r0 = 0; r0 < rows; ++r0) {
    T* row = out.ptr() + r0 * n;
    T mx = row[0];
    for (size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    T s = T(0);
    for (size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    for (size_t j = 0; j < n; ++j) row[j] /= s;
  }
  Var<T> r = g.leaf(std::move(out), g.node(x.id).requires_grad);
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, ir, rows, n]() {
      const Tensor<T>& dy = g.node(ir).grad;
      const Tensor<T>& yv = g.node(ir).value;
      Tensor<T>& dx = g.grad_buf(ix);
      for (size_t r0 = 0; r0 < rows; ++r0) {
        const T* dyr = dy.ptr() + r0 * n;
        const T* yr = yv.ptr() + r0 * n;
        T s = T(0);
        for (size_t j = 0; j < n; ++j) s += dyr[j] * yr[j];
        T* dxr = dx.ptr() + r0 * n;
        for (size_t j = 0; j < n; ++j) dxr[j] += (dyr[j] - s) * yr[j];
      }
    };
  }
  return r;
}

// Channelwise layer norm: x[C,N] normalized over C per column, affine per
// channel. The V-TCN "per-channel normalization".
template <typename T>
Var<T> layer_norm0(Var<T> x, Var<T> gamma, Var<T> beta, double eps = 1e-5) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("layer_norm0: rank != 2");
  size_t c = xv.shape[0], n = xv.shape[1];
  if (gamma.value().shape != Shape{c} || beta.value().shape != Shape{c})
    throw ShapeError("layer_norm0: affine params must be [C]");
  Tensor<T> out({c, n});
  Tensor<T> xhat({c, n});
  Tensor<T> inv_std({n});
  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();
  for (size_t j = 0; j < n; ++j) {
    T mu = T(0);
    for (size_t i = 0; i < c; ++i) mu += xv.at2(i, j);
    mu /= static_cast<T>(c);
    T var = T(0);
    for (size_t i = 0; i < c; ++i) {
      T d = xv.at2(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<T>(c);
    T is = T(1) / std::sqrt(var + static_cast<T>(eps));
    inv_std[j] = is;
    for (size_t i = 0; i < c; ++i) {
      T xh = (xv.at2(i, j) - mu) * is;
      xhat.at2(i, j) = xh;
      out.at2(i, j) = gv[i] * xh + bv[i];
    }
  }
  Var<T> r = g.leaf(std::move(out), detail::wants_grad<T>({x, gamma, beta}));
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, ig = gamma.id, ib = beta.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, ig, ib, ir, xhat, inv_std, c, n]() {
      const Tensor<T>& dy = g.node(ir).grad;
      const Tensor<T>& gv2 = g.node(ig).value;
      if (g.node(ig).requires_grad) {
        Tensor<T>& dg = g.grad_buf(ig);
        for (size_t i = 0; i < c; ++i) {
          T acc = T(0);
          for (size_t j = 0; j < n; ++j) acc += dy.at2(i, j) * xhat.at2(i, j);
          dg[i] += acc;
        }
      }
      if (g.node(ib).requires_grad) {
        Tensor<T>& db = g.grad_buf(ib);
        for (size_t i = 0; i < c; ++i) {
          T acc = T(0);
          for (size_t j = 0; j < n; ++j) acc += dy.at2(i, j);
          db[i] += acc;
        }
      }
      if (g.node(ix).requires_grad) {
        Tensor<T>& dx = g.grad_buf(ix);
        for (size_t j = 0; j < n; ++j) {
          T m1 = T(0), m2 = T(0);
          for (size_t i = 0; i < c; ++i) {
            T dxh = dy.at2(i, j) * gv2[i];
            m1 += dxh;
            m2 += dxh * xhat.at2(i, j);
          }
          m1 /= static_cast<T>(c);
          m2 /= static_cast<T>(c);
          for (size_t i = 0; i < c; ++i) {
            T dxh = dy.at2(i, j) * gv2[i];
            dx.at2(i, j) += (dxh - m1 - xhat.at2(i, j) * m2) * inv_std[j];
          }
        }
      }
    };
  }
  return r;
}

}  // namespace tsegrid

#endif  // TSEGRID_GRAPH_HPP_
