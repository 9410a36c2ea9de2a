// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_NN_HPP_
#define TSEGRID_NN_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "tsegrid/graph.hpp"
#include "tsegrid/ops_conv.hpp"
#include "tsegrid/params.hpp"

namespace tsegrid {

template <typename T>
struct LinearLayer {
  Param<T> w, b;
  size_t in_dim = 0, out_dim = 0;

  LinearLayer() = default;
  LinearLayer(const std::string& name, size_t in, size_t out)
      : w(name + ".w", {in, out}), b(name + ".b", {out}), in_dim(in),
        out_dim(out) {}

  void init(uint64_t seed) {
    w.init_uniform(seed, in_dim);
    b.init_const(0.0);
  }

  Var<T> forward(Graph<T>& g, Var<T> x) {
    return linear(x, use(g, w), use(g, b));
  }

  void collect(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename T>
struct Conv2dLayer {
  Param<T> w, b;
  size_t sh = 1, sw = 1;
  int64_t ph = 0, pw = 0;
  size_t fan_in = 0;

  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, size_t cin, size_t cout, size_t kh,
              size_t kw, size_t sh_ = 1, size_t sw_ = 1, int64_t ph_ = 0,
              int64_t pw_ = 0)
      : w(name + ".w", {cout, cin, kh, kw}), b(name + ".b", {cout}), sh(sh_),
        sw(sw_), ph(ph_), pw(pw_), fan_in(cin * kh * kw) {}

  void init(uint64_t seed) {
    w.init_uniform(seed, fan_in);
    b.init_const(0.0);
  }

  Var<T> forward(Graph<T>& g, Var<T> x) {
    return conv2d(x, use(g, w), use(g, b), sh, sw, ph, pw);
  }

  void collect(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename T>
struct ConvT2dLayer {
  Param<T> w, b;
  size_t sh = 1, sw = 1;
  int64_t ph = 0, pw = 0;
  size_t fan_in = 0;

  ConvT2dLayer() = default;
  ConvT2dLayer(const std::string& name, size_t cin, size_t cout, size_t kh,
               size_t kw, size_t sh_ = 1, size_t sw_ = 1, int64_t ph_ = 0,
               int64_t pw_ = 0)
      : w(name + ".w", {cin, cout, kh, kw}), b(name + ".b", {cout}), sh(sh_),
        sw(sw_), ph(ph_), pw(pw_), fan_in(cin * kh * kw) {}

  void init(uint64_t seed) {
    w.init_uniform(seed, fan_in);
    b.init_const(0.0);
  }

  Var<T> forward(Graph<T>& g, Var<T> x) {
    return conv_transpose2d(x, use(g, w), use(g, b), sh, sw, ph, pw);
  }

  void collect(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename T>
struct Conv1dLayer {
  Param<T> w, b;
  size_t stride = 1, dilation = 1;
  int64_t pad = 0;
  size_t fan_in = 0;

  Conv1dLayer() = default;
  Conv1dLayer(const std::string& name, size_t cin, size_t cout, size_t k,
              size_t stride_ = 1, int64_t pad_ = 0, size_t dilation_ = 1)
      : w(name + ".w", {cout, cin, k}), b(name + ".b", {cout}),
        stride(stride_), dilation(dilation_), pad(pad_), fan_in(cin * k) {}

  void init(uint64_t seed) {
    w.init_uniform(seed, fan_in);
    b.init_const(0.0);
  }

  Var<T> forward(Graph<T>& g, Var<T> x) {
    return conv1d(x, use(g, w), use(g, b), stride, pad, dilation);
  }

  void collect(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename T>
struct ChanLayerNorm {
  Param<T> gamma, beta;

  ChanLayerNorm() = default;
  ChanLayerNorm(const std::string& name, size_t channels)
      : gamma(name + ".g", {channels}), beta(name + ".b", {channels}) {}

  void init(uint64_t) {
    gamma.init_const(1.0);
    beta.init_const(0.0);
  }

  Var<T> forward(Graph<T>& g, Var<T> x) {
    return layer_norm0(x, use(g, gamma), use(g, beta));
  }

  void collect(ParamList<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

// ---------------------------------------------------------------------------
// Bidirectional LSTM.
//
// Standard gate equations, fused per direction into one input projection
// W[D,4H] and one recurrence U[H,4H] with gate order (input, forget, cell,
// output). Forget-gate bias is initialized to 1.0, everything else to 0.
// Input is step-major [S, B, D] (S steps, B independent rows); output is
// [S, B, 2H] with the forward direction in channels [0,H) and the backward
// direction in [H,2H).
// ---------------------------------------------------------------------------
template <typename T>
struct BiLstm {
  size_t in_dim = 0, hidden = 0;
  Param<T> w_f, u_f, b_f;  // forward direction
  Param<T> w_b, u_b, b_b;  // backward direction

  BiLstm() = default;
  BiLstm(const std::string& name, size_t in, size_t h)
      : in_dim(in), hidden(h), w_f(name + ".fw.w", {in, 4 * h}),
        u_f(name + ".fw.u", {h, 4 * h}), b_f(name + ".fw.b", {4 * h}),
        w_b(name + ".bw.w", {in, 4 * h}), u_b(name + ".bw.u", {h, 4 * h}),
        b_b(name + ".bw.b", {4 * h}) {
    if (h == 0) throw ConfigError("lstm: hidden == 0");
  }

  void init(uint64_t seed) {
    w_f.init_uniform(seed, in_dim);
    u_f.init_uniform(seed, hidden);
    w_b.init_uniform(seed, in_dim);
    u_b.init_uniform(seed, hidden);
    b_f.init_const(0.0);
    b_b.init_const(0.0);
    for (size_t j = hidden; j < 2 * hidden; ++j) {
      b_f.value[j] = T(1);
      b_b.value[j] = T(1);
    }
  }

  Var<T> forward(Graph<T>& g, Var<T> x) {
    const Shape& s = x.value().shape;
    if (s.size() != 3 || s[2] != in_dim)
      throw ShapeError("lstm: input " + shape_str(s) + " expected [S,B," +
                       std::to_string(in_dim) + "]");
    size_t S = s[0], B = s[1];
    Var<T> fwd = run_direction(g, x, S, B, /*reverse=*/false);
    Var<T> bwd = run_direction(g, x, S, B, /*reverse=*/true);
    return concat<T>(2, {fwd, bwd});
  }

  // [S, D] convenience form -> [S, 2H]
  Var<T> forward_seq(Graph<T>& g, Var<T> x) {
    Shape s = x.value().shape;  // copy: ops below may relocate node storage
    if (s.size() != 2)
      throw ShapeError("lstm: expected [T,D], got " + shape_str(s));
    Var<T> x3 = reshape(x, {s[0], size_t(1), s[1]});
    Var<T> y = forward(g, x3);
    return reshape(y, {s[0], 2 * hidden});
  }

  void collect(ParamList<T>& out) {
    out.push_back(&w_f);
    out.push_back(&u_f);
    out.push_back(&b_f);
    out.push_back(&w_b);
    out.push_back(&u_b);
    out.push_back(&b_b);
  }

 private:
  Var<T> run_direction(Graph<T>& g, Var<T> x, size_t S, size_t B,
                       bool reverse) {
    size_t H = hidden;
    Param<T>& W = reverse ? w_b : w_f;
    Param<T>& U = reverse ? u_b : u_f;
    Param<T>& bias = reverse ? b_b : b_f;
    // all-steps input projection in one GEMM
    Var<T> xw = linear(reshape(x, {S * B, in_dim}), use(g, W), use(g, bias));
    Var<T> uvar = use(g, U);
    Var<T> h = g.constant(Tensor<T>({B, H}));
    Var<T> c = g.constant(Tensor<T>({B, H}));
    std::vector<Var<T>> outs(S);
    for (size_t step = 0; step < S; ++step) {
      size_t t = reverse ? S - 1 - step : step;
      Var<T> pre = add(narrow(xw, 0, t * B, B), matmul(h, uvar));
      Var<T> gi = sigmoid(narrow(pre, 1, 0, H));
      Var<T> gf = sigmoid(narrow(pre, 1, H, H));
      Var<T> gc = vtanh(narrow(pre, 1, 2 * H, H));
      Var<T> go = sigmoid(narrow(pre, 1, 3 * H, H));
      c = add(mul(gf, c), mul(gi, gc));
      h = mul(go, vtanh(c));
      outs[t] = reshape(h, {size_t(1), B, H});
    }
    return concat<T>(0, outs);
  }
};

// ---------------------------------------------------------------------------
// Multi-head attention.
//
// Projects q/k/v from model_dim to inner_dim, runs scaled dot-product
// attention per head (softmax over the key axis), concatenates heads and
// projects back to model_dim. The common square case has
// inner_dim == model_dim; the separator uses a narrower inner_dim to keep
// the flattened channel*frequency features affordable.
// ---------------------------------------------------------------------------
template <typename T>
struct Mha {
  size_t model_dim = 0, inner_dim = 0, heads = 0;
  Param<T> wq, bq, wk, bk, wv, bv, wo, bo;

  Mha() = default;
  Mha(const std::string& name, size_t model, size_t inner, size_t heads_)
      : model_dim(model), inner_dim(inner), heads(heads_),
        wq(name + ".q.w", {model, inner}), bq(name + ".q.b", {inner}),
        wk(name + ".k.w", {model, inner}), bk(name + ".k.b", {inner}),
        wv(name + ".v.w", {model, inner}), bv(name + ".v.b", {inner}),
        wo(name + ".o.w", {inner, model}), bo(name + ".o.b", {model}) {
    if (heads == 0 || inner % heads != 0)
      throw ConfigError("attention: inner dim " + std::to_string(inner) +
                        " not divisible by heads " + std::to_string(heads_));
  }

  void init(uint64_t seed) {
    wq.init_uniform(seed, model_dim);
    wk.init_uniform(seed, model_dim);
    wv.init_uniform(seed, model_dim);
    wo.init_uniform(seed, inner_dim);
    bq.init_const(0.0);
    bk.init_const(0.0);
    bv.init_const(0.0);
    bo.init_const(0.0);
  }

  Var<T> forward(Graph<T>& g, Var<T> q, Var<T> k, Var<T> v) {
    const Shape& qs = q.value().shape;
    const Shape& ks = k.value().shape;
    const Shape& vs = v.value().shape;
    if (qs.size() != 2 || qs[1] != model_dim)
      throw ShapeError("attention: q " + shape_str(qs));
    if (ks.size() != 2 || ks[1] != model_dim || vs != ks)
      throw ShapeError("attention: k " + shape_str(ks) + " v " +
                       shape_str(vs));
    Var<T> Q = linear(q, use(g, wq), use(g, bq));
    Var<T> K = linear(k, use(g, wk), use(g, bk));
    Var<T> V = linear(v, use(g, wv), use(g, bv));
    size_t dh = inner_dim / heads;
    double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var<T>> head_outs;
    head_outs.reserve(heads);
    for (size_t h = 0; h < heads; ++h) {
      Var<T> qh = narrow(Q, 1, h * dh, dh);
      Var<T> kh = narrow(K, 1, h * dh, dh);
      Var<T> vh = narrow(V, 1, h * dh, dh);
      Var<T> scores = scale(matmul(qh, transpose2(kh)), inv_scale);
      Var<T> attn = softmax_last(scores);
      head_outs.push_back(matmul(attn, vh));
    }
    Var<T> cat = concat<T>(1, head_outs);
    return linear(cat, use(g, wo), use(g, bo));
  }

  void collect(ParamList<T>& out) {
    for (Param<T>* p : {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo})
      out.push_back(p);
  }
};

}  // namespace tsegrid

#endif  // TSEGRID_NN_HPP_
