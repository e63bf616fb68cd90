// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "fsyn/graph.hpp"
#include "fsyn/tensor.hpp"

namespace fsyn {
namespace detail {

// C (M x N) = or += A (M x K) * B (K x N), row-major, single thread.
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  for (int i = 0; i < M; ++i) {
    T* crow = C + static_cast<int64_t>(i) * N;
    if (!accumulate) std::fill(crow, crow + N, T(0));
    const T* arow = A + static_cast<int64_t>(i) * K;
    for (int k = 0; k < K; ++k) {
      const T a = arow[k];
      if (a == T(0)) continue;
      const T* brow = B + static_cast<int64_t>(k) * N;
      for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

// C (M x N) += A (M x K) * B^T where B is (N x K) row-major.
template <typename T>
void gemm_nt_acc(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int i = 0; i < M; ++i) {
    const T* arow = A + static_cast<int64_t>(i) * K;
    T* crow = C + static_cast<int64_t>(i) * N;
    for (int j = 0; j < N; ++j) {
      const T* brow = B + static_cast<int64_t>(j) * K;
      T acc = 0;
      for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
      crow[j] += acc;
    }
  }
}

struct ConvGeom {
  int stride = 1;
  int pad_l = 0, pad_r = 0, pad_t = 0, pad_b = 0;
  int ic = 0, oc = 0, kh = 0, kw = 0;
  int h = 0, w = 0, ho = 0, wo = 0;
};

inline ConvGeom conv_geom(const std::vector<int>& xshape, const std::vector<int>& wshape,
                          int stride, int pad_l, int pad_r, int pad_t, int pad_b) {
  ConvGeom cg;
  cg.stride = stride;
  cg.pad_l = pad_l;
  cg.pad_r = pad_r;
  cg.pad_t = pad_t;
  cg.pad_b = pad_b;
  cg.oc = wshape[0];
  cg.ic = wshape[1];
  cg.kh = wshape[2];
  cg.kw = wshape[3];
  cg.h = xshape[2];
  cg.w = xshape[3];
  if (xshape[1] != cg.ic)
    throw DataError("conv2d: input has " + std::to_string(xshape[1]) + " channels, weight expects " +
                    std::to_string(cg.ic));
  cg.ho = (cg.h + pad_t + pad_b - cg.kh) / stride + 1;
  cg.wo = (cg.w + pad_l + pad_r - cg.kw) / stride + 1;
  if (cg.ho <= 0 || cg.wo <= 0) throw DataError("conv2d: output would be empty");
  return cg;
}

// Patch matrix for output rows [y0, y1): (ic*kh*kw) x ((y1-y0)*wo).
// Out-of-image taps are zero.
template <typename T>
void im2col_rows(const T* x, const ConvGeom& g, int y0, int y1, T* cols) {
  const int ncols = (y1 - y0) * g.wo;
  for (int ic = 0; ic < g.ic; ++ic) {
    const T* xc = x + static_cast<int64_t>(ic) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        T* row = cols + (static_cast<int64_t>(ic) * g.kh * g.kw + ky * g.kw + kx) * ncols;
        for (int oy = y0; oy < y1; ++oy) {
          const int iy = oy * g.stride - g.pad_t + ky;
          T* dst = row + static_cast<int64_t>(oy - y0) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = xc + static_cast<int64_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad_l + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a patch-matrix gradient back onto the input gradient.
template <typename T>
void col2im_rows(const T* cols, const ConvGeom& g, int y0, int y1, T* gx) {
  const int ncols = (y1 - y0) * g.wo;
  for (int ic = 0; ic < g.ic; ++ic) {
    T* gc = gx + static_cast<int64_t>(ic) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + (static_cast<int64_t>(ic) * g.kh * g.kw + ky * g.kw + kx) * ncols;
        for (int oy = y0; oy < y1; ++oy) {
          const int iy = oy * g.stride - g.pad_t + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + static_cast<int64_t>(oy - y0) * g.wo;
          T* dst = gc + static_cast<int64_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad_l + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

inline int conv_row_block(const ConvGeom& g) {
  // Bound the im2col scratch to ~4 MB.
  const int64_t k = static_cast<int64_t>(g.ic) * g.kh * g.kw;
  int rows = static_cast<int>(std::max<int64_t>(1, (1 << 20) / std::max<int64_t>(1, k * g.wo)));
  return std::min(rows, g.ho);
}

template <typename T>
void conv_forward(const Tensor<T>& x, const Tensor<T>& w, const T* bias, const ConvGeom& g,
                  Tensor<T>& out) {
  const int B = x.dim(0);
  const int K = g.ic * g.kh * g.kw;
  const int block = conv_row_block(g);
  std::vector<T> cols(static_cast<size_t>(K) * block * g.wo);
  for (int b = 0; b < B; ++b) {
    const T* xb = x.ptr() + static_cast<int64_t>(b) * g.ic * g.h * g.w;
    T* ob = out.ptr() + static_cast<int64_t>(b) * g.oc * g.ho * g.wo;
    for (int y0 = 0; y0 < g.ho; y0 += block) {
      const int y1 = std::min(g.ho, y0 + block);
      const int ncols = (y1 - y0) * g.wo;
      im2col_rows(xb, g, y0, y1, cols.data());
      // Write into a compact block then scatter by row offset.
      std::vector<T> cblk(static_cast<size_t>(g.oc) * ncols);
      gemm_nn(g.oc, ncols, K, w.ptr(), cols.data(), cblk.data(), false);
      for (int oc = 0; oc < g.oc; ++oc) {
        const T bv = bias ? bias[oc] : T(0);
        const T* src = cblk.data() + static_cast<int64_t>(oc) * ncols;
        T* dst = ob + (static_cast<int64_t>(oc) * g.ho + y0) * g.wo;
        for (int i = 0; i < ncols; ++i) dst[i] = src[i] + bv;
      }
    }
  }
}

template <typename T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& w, const ConvGeom& g,
                   const Tensor<T>& gout, Tensor<T>* gx, Tensor<T>* gw, T* gbias) {
  const int B = x.dim(0);
  const int K = g.ic * g.kh * g.kw;
  const int block = conv_row_block(g);
  std::vector<T> cols(static_cast<size_t>(K) * block * g.wo);
  std::vector<T> dcols(gx ? cols.size() : 0);
  std::vector<T> dblk(static_cast<size_t>(g.oc) * block * g.wo);
  std::vector<T> wT;
  if (gx) {
    wT.resize(static_cast<size_t>(K) * g.oc);
    for (int oc = 0; oc < g.oc; ++oc)
      for (int k = 0; k < K; ++k) wT[static_cast<size_t>(k) * g.oc + oc] = w[static_cast<int64_t>(oc) * K + k];
  }
  for (int b = 0; b < B; ++b) {
    const T* xb = x.ptr() + static_cast<int64_t>(b) * g.ic * g.h * g.w;
    const T* gb = gout.ptr() + static_cast<int64_t>(b) * g.oc * g.ho * g.wo;
    for (int y0 = 0; y0 < g.ho; y0 += block) {
      const int y1 = std::min(g.ho, y0 + block);
      const int ncols = (y1 - y0) * g.wo;
      for (int oc = 0; oc < g.oc; ++oc)
        std::copy(gb + (static_cast<int64_t>(oc) * g.ho + y0) * g.wo,
                  gb + (static_cast<int64_t>(oc) * g.ho + y1) * g.wo,
                  dblk.data() + static_cast<int64_t>(oc) * ncols);
      if (gw || gx) im2col_rows(xb, g, y0, y1, cols.data());
      if (gw)
        gemm_nt_acc(g.oc, K, ncols, dblk.data(), cols.data(), gw->ptr());
      if (gx) {
        gemm_nn(K, ncols, g.oc, wT.data(), dblk.data(), dcols.data(), false);
        col2im_rows(dcols.data(), g, y0, y1,
                    gx->ptr() + static_cast<int64_t>(b) * g.ic * g.h * g.w);
      }
      if (gbias)
        for (int oc = 0; oc < g.oc; ++oc) {
          const T* src = dblk.data() + static_cast<int64_t>(oc) * ncols;
          double acc = 0.0;
          for (int i = 0; i < ncols; ++i) acc += static_cast<double>(src[i]);
          gbias[oc] += static_cast<T>(acc);
        }
    }
  }
}

}  // namespace detail

// 2D convolution node. `bias` may be an invalid Var to skip the bias term.
// Padding is per-edge so the post-upsample k4 s1 case (1,2,1,2) works.
template <typename T>
Var conv2d(Graph<T>& g, Var x, Var w, Var bias, int stride, int pad_l, int pad_r, int pad_t,
           int pad_b) {
  const Tensor<T>& vx = g.val(x);
  const Tensor<T>& vw = g.val(w);
  if (vx.rank() != 4 || vw.rank() != 4) throw std::logic_error("conv2d: expects 4D tensors");
  detail::ConvGeom geom = detail::conv_geom(vx.shape, vw.shape, stride, pad_l, pad_r, pad_t, pad_b);
  Tensor<T> out({vx.dim(0), geom.oc, geom.ho, geom.wo});
  const T* bp = bias.valid() ? g.val(bias).ptr() : nullptr;
  detail::conv_forward(vx, vw, bp, geom, out);
  std::vector<Var> parents = {x, w};
  if (bias.valid()) parents.push_back(bias);
  return g.make(std::move(out), parents, [&g, x, w, bias, geom, idx = g.next_index()]() {
    const Tensor<T>& gout = g.node(Var{static_cast<int>(idx)}).grad;
    Tensor<T>* gx = g.node(x).needs_grad ? &g.grad(x) : nullptr;
    Tensor<T>* gw = g.node(w).needs_grad ? &g.grad(w) : nullptr;
    T* gb = (bias.valid() && g.node(bias).needs_grad) ? g.grad(bias).ptr() : nullptr;
    detail::conv_backward(g.val(x), g.val(w), geom, gout, gx, gw, gb);
  });
}

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var w, Var bias, int stride, int pad) {
  return conv2d(g, x, w, bias, stride, pad, pad, pad, pad);
}

}  // namespace fsyn
