// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "fsyn/graph.hpp"
#include "fsyn/tensor.hpp"

namespace fsyn {
namespace detail {

template <typename T>
struct WarpTaps {
  int x0, x1, y0, y1;
  T fx, fy;
  bool clamped_x, clamped_y;
};

// Backward warping with border clamp: the sample location for output pixel
// (x, y) is (x + dx, y + dy), clamped into the image rectangle.
template <typename T>
WarpTaps<T> warp_taps(T sx, T sy, int w, int h) {
  WarpTaps<T> t;
  t.clamped_x = sx < T(0) || sx > T(w - 1);
  t.clamped_y = sy < T(0) || sy > T(h - 1);
  sx = std::min(std::max(sx, T(0)), T(w - 1));
  sy = std::min(std::max(sy, T(0)), T(h - 1));
  t.x0 = static_cast<int>(std::floor(sx));
  t.y0 = static_cast<int>(std::floor(sy));
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.fx = sx - static_cast<T>(t.x0);
  t.fy = sy - static_cast<T>(t.y0);
  return t;
}

template <typename T>
void warp_forward(const Tensor<T>& img, const Tensor<T>& disp, Tensor<T>& out) {
  const int B = img.dim(0), C = img.dim(1), H = img.dim(2), W = img.dim(3);
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const T sx = static_cast<T>(x) + disp.at(b, 0, y, x);
        const T sy = static_cast<T>(y) + disp.at(b, 1, y, x);
        const WarpTaps<T> t = warp_taps(sx, sy, W, H);
        for (int c = 0; c < C; ++c) {
          const T v00 = img.at(b, c, t.y0, t.x0);
          const T v01 = img.at(b, c, t.y0, t.x1);
          const T v10 = img.at(b, c, t.y1, t.x0);
          const T v11 = img.at(b, c, t.y1, t.x1);
          out.at(b, c, y, x) = (T(1) - t.fy) * ((T(1) - t.fx) * v00 + t.fx * v01) +
                               t.fy * ((T(1) - t.fx) * v10 + t.fx * v11);
        }
      }
}

template <typename T>
void warp_backward(const Tensor<T>& img, const Tensor<T>& disp, const Tensor<T>& gout,
                   Tensor<T>* gimg, Tensor<T>* gdisp) {
  const int B = img.dim(0), C = img.dim(1), H = img.dim(2), W = img.dim(3);
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const T sx = static_cast<T>(x) + disp.at(b, 0, y, x);
        const T sy = static_cast<T>(y) + disp.at(b, 1, y, x);
        const WarpTaps<T> t = warp_taps(sx, sy, W, H);
        T gdx = 0, gdy = 0;
        for (int c = 0; c < C; ++c) {
          const T go = gout.at(b, c, y, x);
          if (go == T(0)) continue;
          const T v00 = img.at(b, c, t.y0, t.x0);
          const T v01 = img.at(b, c, t.y0, t.x1);
          const T v10 = img.at(b, c, t.y1, t.x0);
          const T v11 = img.at(b, c, t.y1, t.x1);
          if (gimg) {
            gimg->at(b, c, t.y0, t.x0) += go * (T(1) - t.fy) * (T(1) - t.fx);
            gimg->at(b, c, t.y0, t.x1) += go * (T(1) - t.fy) * t.fx;
            gimg->at(b, c, t.y1, t.x0) += go * t.fy * (T(1) - t.fx);
            gimg->at(b, c, t.y1, t.x1) += go * t.fy * t.fx;
          }
          gdx += go * ((T(1) - t.fy) * (v01 - v00) + t.fy * (v11 - v10));
          gdy += go * ((T(1) - t.fx) * (v10 - v00) + t.fx * (v11 - v01));
        }
        if (gdisp) {
          // Clamped samples sit on the border plateau: zero subgradient.
          if (!t.clamped_x) gdisp->at(b, 0, y, x) += gdx;
          if (!t.clamped_y) gdisp->at(b, 1, y, x) += gdy;
        }
      }
}

}  // namespace detail

// Differentiable bilinear warp. img (B,C,H,W), disp (B,2,H,W) in pixels;
// disp channel 0 is horizontal, channel 1 vertical.
template <typename T>
Var bilinear_warp(Graph<T>& g, Var img, Var disp) {
  const Tensor<T>& vi = g.val(img);
  const Tensor<T>& vd = g.val(disp);
  if (vi.rank() != 4 || vd.rank() != 4 || vd.dim(1) != 2 || vd.dim(0) != vi.dim(0) ||
      vd.dim(2) != vi.dim(2) || vd.dim(3) != vi.dim(3))
    throw DataError("bilinear_warp: disp must be (B,2,H,W) matching image");
  for (int64_t i = 0; i < vd.size(); ++i)
    if (!std::isfinite(static_cast<double>(vd[i])))
      throw DataError("bilinear_warp: displacement contains non-finite values");
  Tensor<T> out(vi.shape);
  detail::warp_forward(vi, vd, out);
  return g.make(std::move(out), {img, disp}, [&g, img, disp, idx = g.next_index()]() {
    const Tensor<T>& gout = g.node(Var{static_cast<int>(idx)}).grad;
    Tensor<T>* gi = g.node(img).needs_grad ? &g.grad(img) : nullptr;
    Tensor<T>* gd = g.node(disp).needs_grad ? &g.grad(disp) : nullptr;
    detail::warp_backward(g.val(img), g.val(disp), gout, gi, gd);
  });
}

// Plain-tensor warp for inference paths and tooling.
template <typename T>
Tensor<T> bilinear_warp(const Tensor<T>& img, const Tensor<T>& disp) {
  Tensor<T> out(img.shape);
  detail::warp_forward(img, disp, out);
  return out;
}

// Maps a raw field in [-1,1] to pixel displacements in [-M, M].
template <typename T>
Var scale_field(Graph<T>& g, Var raw, T margin) {
  const Tensor<T>& v = g.val(raw);
  for (int64_t i = 0; i < v.size(); ++i)
    if (v[i] < T(-1) || v[i] > T(1) || !std::isfinite(static_cast<double>(v[i])))
      throw DataError("scale_field: raw field out of [-1, 1]");
  return g.scale(raw, margin);
}

template <typename T>
Tensor<T> scale_field(const Tensor<T>& raw, T margin) {
  Tensor<T> out = raw;
  for (int64_t i = 0; i < out.size(); ++i) {
    if (out[i] < T(-1) || out[i] > T(1) || !std::isfinite(static_cast<double>(out[i])))
      throw DataError("scale_field: raw field out of [-1, 1]");
    out[i] *= margin;
  }
  return out;
}

// I_w = sum_i m_i (.) warp(x_i, w_i). Bank images come in as graph vars
// (constants during training), masks as (B,N,H,W) summing to one per pixel,
// fields as (B,2N,H,W) already scaled to pixels.
template <typename T>
Var merge_warped(Graph<T>& g, const std::vector<Var>& bank, Var masks, Var fields) {
  const int n = static_cast<int>(bank.size());
  const Tensor<T>& vm = g.val(masks);
  const Tensor<T>& vf = g.val(fields);
  if (n < 1) throw DataError("merge_warped: empty bank");
  if (vm.dim(1) != n || vf.dim(1) != 2 * n)
    throw DataError("merge_warped: bank size inconsistent with masks/fields");
  for (Var b : bank)
    if (g.val(b).dim(2) != vm.dim(2) || g.val(b).dim(3) != vm.dim(3) ||
        g.val(b).dim(0) != vm.dim(0))
      throw DataError("merge_warped: bank image dimensions inconsistent with masks");
  const int64_t hw = static_cast<int64_t>(vm.dim(2)) * vm.dim(3);
  for (int b = 0; b < vm.dim(0); ++b)
    for (int64_t p = 0; p < hw; ++p) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += static_cast<double>(vm[(static_cast<int64_t>(b) * n + i) * hw + p]);
      if (std::abs(s - 1.0) > 1e-5)
        throw DataError("merge_warped: selection masks do not sum to one");
    }
  Var acc{-1};
  for (int i = 0; i < n; ++i) {
    Var mi = g.slice_ch(masks, i, 1);
    Var di = g.slice_ch(fields, 2 * i, 2);
    Var wi = bilinear_warp(g, bank[static_cast<size_t>(i)], di);
    Var term = g.bmul(mi, wi);
    acc = acc.valid() ? g.add(acc, term) : term;
  }
  return acc;
}

// I_o = (1 - V) (.) I_a + V (.) I_w, per pixel.
template <typename T>
Var merge_final(Graph<T>& g, Var appearance, Var warped, Var merge_mask) {
  const Tensor<T>& vv = g.val(merge_mask);
  require_same_shape(g.val(appearance), g.val(warped), "merge_final");
  if (vv.dim(1) != 1 || vv.dim(2) != g.val(appearance).dim(2) ||
      vv.dim(3) != g.val(appearance).dim(3))
    throw DataError("merge_final: V must be (B,1,H,W)");
  for (int64_t i = 0; i < vv.size(); ++i)
    if (vv[i] < T(0) || vv[i] > T(1)) throw DataError("merge_final: V out of [0, 1]");
  Var inv = g.scale_add(merge_mask, T(-1), T(1));
  return g.add(g.bmul(inv, appearance), g.bmul(merge_mask, warped));
}

}  // namespace fsyn
