// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_OPS_CONV_HPP_
#define TSEGRID_OPS_CONV_HPP_

#include <cstdint>
#include <vector>

#include "tsegrid/graph.hpp"

namespace tsegrid {

// Convolutions are lowered to GEMM over patch matrices (im2col). The same
// gather/scatter pair drives conv and transposed conv: a transposed conv is
// the adjoint map of a conv with identical kernel/stride/padding, with the
// patch geometry anchored on its *output* array.

namespace convdet {

struct Geom {
  size_t kh, kw;     // kernel
  size_t sh, sw;     // stride
  int64_t ph, pw;    // padding
  size_t dh, dw;     // dilation
};

inline size_t conv_out_extent(size_t in, size_t k, size_t s, int64_t p,
                              size_t d, const char* what) {
  int64_t eff = static_cast<int64_t>(d) * (static_cast<int64_t>(k) - 1) + 1;
  int64_t o = (static_cast<int64_t>(in) + 2 * p - eff) / static_cast<int64_t>(s) + 1;
  if (o <= 0)
    throw ShapeError(std::string(what) + ": output extent " + std::to_string(o) +
                     " from input " + std::to_string(in));
  return static_cast<size_t>(o);
}

inline size_t deconv_out_extent(size_t in, size_t k, size_t s, int64_t p,
                                const char* what) {
  int64_t o = (static_cast<int64_t>(in) - 1) * static_cast<int64_t>(s) - 2 * p +
              static_cast<int64_t>(k);
  if (o <= 0)
    throw ShapeError(std::string(what) + ": output extent " + std::to_string(o) +
                     " from input " + std::to_string(in));
  return static_cast<size_t>(o);
}

// cols[(c*kh+i)*kw+j, a*Wn+b] = src[c, a*sh-ph+i*dh, b*sw-pw+j*dw] (0 outside)
template <typename T>
void gather_cols(const T* src, size_t C, size_t Hs, size_t Ws, const Geom& ge,
                 size_t Hn, size_t Wn, T* cols) {
  for (size_t c = 0; c < C; ++c)
    for (size_t i = 0; i < ge.kh; ++i)
      for (size_t j = 0; j < ge.kw; ++j) {
        T* row = cols + ((c * ge.kh + i) * ge.kw + j) * (Hn * Wn);
        for (size_t a = 0; a < Hn; ++a) {
          int64_t h = static_cast<int64_t>(a * ge.sh) - ge.ph +
                      static_cast<int64_t>(i * ge.dh);
          if (h < 0 || h >= static_cast<int64_t>(Hs)) {
            for (size_t b = 0; b < Wn; ++b) row[a * Wn + b] = T(0);
            continue;
          }
          const T* srow = src + (c * Hs + static_cast<size_t>(h)) * Ws;
          for (size_t b = 0; b < Wn; ++b) {
            int64_t w = static_cast<int64_t>(b * ge.sw) - ge.pw +
                        static_cast<int64_t>(j * ge.dw);
            row[a * Wn + b] = (w >= 0 && w < static_cast<int64_t>(Ws))
                                  ? srow[static_cast<size_t>(w)]
                                  : T(0);
          }
        }
      }
}

// adjoint of gather_cols: dst[c, h, w] += cols[...]
template <typename T>
void scatter_cols(const T* cols, size_t C, size_t Hs, size_t Ws,
                  const Geom& ge, size_t Hn, size_t Wn, T* dst) {
  for (size_t c = 0; c < C; ++c)
    for (size_t i = 0; i < ge.kh; ++i)
      for (size_t j = 0; j < ge.kw; ++j) {
        const T* row = cols + ((c * ge.kh + i) * ge.kw + j) * (Hn * Wn);
        for (size_t a = 0; a < Hn; ++a) {
          int64_t h = static_cast<int64_t>(a * ge.sh) - ge.ph +
                      static_cast<int64_t>(i * ge.dh);
          if (h < 0 || h >= static_cast<int64_t>(Hs)) continue;
          T* drow = dst + (c * Hs + static_cast<size_t>(h)) * Ws;
          for (size_t b = 0; b < Wn; ++b) {
            int64_t w = static_cast<int64_t>(b * ge.sw) - ge.pw +
                        static_cast<int64_t>(j * ge.dw);
            if (w >= 0 && w < static_cast<int64_t>(Ws))
              drow[static_cast<size_t>(w)] += row[a * Wn + b];
          }
        }
      }
}

}  // namespace convdet

// x[Cin,H,W], w[Cout,Cin,kh,kw], b[Cout] -> [Cout,Ho,Wo]
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, size_t sh = 1, size_t sw = 1,
              int64_t ph = 0, int64_t pw = 0, size_t dh = 1, size_t dw = 1) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  if (xv.rank() != 3 || wv.rank() != 4 || wv.shape[1] != xv.shape[0])
    throw ShapeError("conv2d: input " + shape_str(xv.shape) + " kernel " +
                     shape_str(wv.shape));
  size_t Cin = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
  size_t Cout = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3];
  if (b.value().shape != Shape{Cout})
    throw ShapeError("conv2d: bias must be [Cout]");
  size_t Ho = convdet::conv_out_extent(H, kh, sh, ph, dh, "conv2d[h]");
  size_t Wo = convdet::conv_out_extent(W, kw, sw, pw, dw, "conv2d[w]");
  convdet::Geom ge{kh, kw, sh, sw, ph, pw, dh, dw};

  size_t K = Cin * kh * kw, P = Ho * Wo;
  std::vector<T> cols(K * P);
  convdet::gather_cols(xv.ptr(), Cin, H, W, ge, Ho, Wo, cols.data());
  Tensor<T> out({Cout, Ho, Wo});
  gemm_nn(wv.ptr(), Cout, K, cols.data(), P, out.ptr(), false);
  const Tensor<T>& bv = b.value();
  for (size_t c = 0; c < Cout; ++c)
    for (size_t p = 0; p < P; ++p) out.data[c * P + p] += bv[c];

  Var<T> r = g.leaf(std::move(out), detail::wants_grad<T>({x, w, b}));
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, iw = w.id, ib = b.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, iw, ib, ir, ge, Cin, H, W, Cout, Ho, Wo,
                             K, P]() {
      const Tensor<T>& dy = g.node(ir).grad;
      const Tensor<T>& xv2 = g.node(ix).value;
      const Tensor<T>& wv2 = g.node(iw).value;
      if (g.node(ib).requires_grad) {
        Tensor<T>& db = g.grad_buf(ib);
        for (size_t c = 0; c < Cout; ++c) {
          T acc = T(0);
          for (size_t p = 0; p < P; ++p) acc += dy.data[c * P + p];
          db[c] += acc;
        }
      }
      if (g.node(iw).requires_grad) {
        std::vector<T> cols2(K * P);
        convdet::gather_cols(xv2.ptr(), Cin, H, W, ge, Ho, Wo, cols2.data());
        gemm_nt(dy.ptr(), Cout, P, cols2.data(), K, g.grad_buf(iw).ptr(),
                true);
      }
      if (g.node(ix).requires_grad) {
        std::vector<T> dcols(K * P);
        gemm_tn(wv2.ptr(), Cout, K, dy.ptr(), P, dcols.data(), false);
        convdet::scatter_cols(dcols.data(), Cin, H, W, ge, Ho, Wo,
                              g.grad_buf(ix).ptr());
      }
    };
  }
  return r;
}

// x[Cin,H,W], w[Cin,Cout,kh,kw], b[Cout] -> [Cout,(H-1)sh-2ph+kh, ...]
template <typename T>
Var<T> conv_transpose2d(Var<T> x, Var<T> w, Var<T> b, size_t sh = 1,
                        size_t sw = 1, int64_t ph = 0, int64_t pw = 0) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  if (xv.rank() != 3 || wv.rank() != 4 || wv.shape[0] != xv.shape[0])
    throw ShapeError("conv_transpose2d: input " + shape_str(xv.shape) +
                     " kernel " + shape_str(wv.shape));
  size_t Cin = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
  size_t Cout = wv.shape[1], kh = wv.shape[2], kw = wv.shape[3];
  if (b.value().shape != Shape{Cout})
    throw ShapeError("conv_transpose2d: bias must be [Cout]");
  size_t Ho = convdet::deconv_out_extent(H, kh, sh, ph, "conv_transpose2d[h]");
  size_t Wo = convdet::deconv_out_extent(W, kw, sw, pw, "conv_transpose2d[w]");
  convdet::Geom ge{kh, kw, sh, sw, ph, pw, 1, 1};

  size_t K = Cout * kh * kw, P = H * W;
  std::vector<T> prod(K * P);
  // prod = Wmat^T[K,Cin] * x_flat[Cin,P]
  gemm_tn(wv.ptr(), Cin, K, xv.ptr(), P, prod.data(), false);
  Tensor<T> out({Cout, Ho, Wo});
  convdet::scatter_cols(prod.data(), Cout, Ho, Wo, ge, H, W, out.ptr());
  const Tensor<T>& bv = b.value();
  for (size_t c = 0; c < Cout; ++c)
    for (size_t p = 0; p < Ho * Wo; ++p) out.data[c * Ho * Wo + p] += bv[c];

  Var<T> r = g.leaf(std::move(out), detail::wants_grad<T>({x, w, b}));
  if (g.node(r.id).requires_grad) {
    int32_t ix = x.id, iw = w.id, ib = b.id, ir = r.id;
    g.node(r.id).backprop = [&g, ix, iw, ib, ir, ge, Cin, H, W, Cout, Ho, Wo,
                             K, P]() {
      const Tensor<T>& dy = g.node(ir).grad;
      const Tensor<T>& xv2 = g.node(ix).value;
      const Tensor<T>& wv2 = g.node(iw).value;
      if (g.node(ib).requires_grad) {
        Tensor<T>& db = g.grad_buf(ib);
        for (size_t c = 0; c < Cout; ++c) {
          T acc = T(0);
          for (size_t p = 0; p < Ho * Wo; ++p) acc += dy.data[c * Ho * Wo + p];
          db[c] += acc;
        }
      }
      std::vector<T> dycols(K * P);
      convdet::gather_cols(dy.ptr(), Cout, Ho, Wo, ge, H, W, dycols.data());
      if (g.node(ix).requires_grad)
        gemm_nn(wv2.ptr(), Cin, K, dycols.data(), P, g.grad_buf(ix).ptr(),
                true);
      if (g.node(iw).requires_grad)
        gemm_nt(xv2.ptr(), Cin, P, dycols.data(), K, g.grad_buf(iw).ptr(),
                true);
    };
  }
  return r;
}

// x[Cin,L], w[Cout,Cin,k], b[Cout] -> [Cout,Lout]
template <typename T>
Var<T> conv1d(Var<T> x, Var<T> w, Var<T> b, size_t stride = 1, int64_t pad = 0,
              size_t dilation = 1) {
  Shape xs = x.value().shape;  // copies: reshape below relocates node storage
  Shape ws = w.value().shape;
  if (xs.size() != 2 || ws.size() != 3)
    throw ShapeError("conv1d: input " + shape_str(xs) + " kernel " +
                     shape_str(ws));
  Var<T> x3 = reshape(x, {xs[0], size_t(1), xs[1]});
  Var<T> w4 = reshape(w, {ws[0], ws[1], size_t(1), ws[2]});
  Var<T> y = conv2d(x3, w4, b, 1, stride, 0, pad, 1, dilation);
  Shape ys = y.value().shape;
  return reshape(y, {ys[0], ys[2]});
}

// x[Cin,L], w[Cin,Cout,k], b[Cout] -> [Cout,(L-1)s-2p+k]
template <typename T>
Var<T> conv_transpose1d(Var<T> x, Var<T> w, Var<T> b, size_t stride = 1,
                        int64_t pad = 0) {
  Shape xs = x.value().shape;
  Shape ws = w.value().shape;
  if (xs.size() != 2 || ws.size() != 3)
    throw ShapeError("conv_transpose1d: input " + shape_str(xs) + " kernel " +
                     shape_str(ws));
  Var<T> x3 = reshape(x, {xs[0], size_t(1), xs[1]});
  Var<T> w4 = reshape(w, {ws[0], ws[1], size_t(1), ws[2]});
  Var<T> y = conv_transpose2d(x3, w4, b, 1, stride, 0, pad);
  Shape ys = y.value().shape;
  return reshape(y, {ys[0], ys[2]});
}

}  // namespace tsegrid

#endif  // TSEGRID_OPS_CONV_HPP_
