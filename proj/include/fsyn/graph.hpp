// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fsyn/tensor.hpp"

namespace fsyn {

// A named trainable tensor. Gradients accumulate here after Graph::backward;
// m/v are the optimizer's moment estimates.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m, v;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v0) : name(std::move(n)), value(std::move(v0)) {
    grad = Tensor<T>::zeros(value.shape);
  }
  void zero_grad() { grad.fill(T(0)); }
};

struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

// Reverse-mode tape. One Graph is built per forward pass; backward() walks
// the tape in reverse creation order (topological by construction) and
// flushes leaf gradients into their Parameters.
template <typename T>
class Graph {
 public:
  bool grad_enabled = true;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    std::function<void()> backprop;
    bool needs_grad = false;
    Parameter<T>* param = nullptr;
  };

  Var constant(Tensor<T> v) {
    nodes_.push_back(Node{std::move(v), {}, nullptr, false, nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var param(Parameter<T>& p) {
    nodes_.push_back(Node{p.value, {}, nullptr, grad_enabled, grad_enabled ? &p : nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(Var v) { return nodes_[static_cast<size_t>(v.i)]; }
  Tensor<T>& val(Var v) { return node(v).value; }
  const Tensor<T>& val(Var v) const { return nodes_[static_cast<size_t>(v.i)].value; }

  // Grad tensor of a node, allocated as zeros on first use.
  Tensor<T>& grad(Var v) {
    Node& n = node(v);
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
    return n.grad;
  }
  bool has_grad(Var v) { return !node(v).grad.empty(); }

  size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be scalar.
  void backward(Var loss) {
    if (val(loss).size() != 1) throw std::logic_error("backward: loss must be a scalar");
    grad(loss)[0] = T(1);
    for (int i = loss.i; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.grad.empty() || !n.backprop) continue;
      n.backprop();
    }
    for (auto& n : nodes_) {
      if (n.param && !n.grad.empty())
        for (int64_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
    }
  }

  // ---- op helpers ----

  Var make(Tensor<T> value, std::vector<Var> parents, std::function<void()> backprop) {
    bool ng = false;
    if (grad_enabled)
      for (Var p : parents) ng = ng || node(p).needs_grad;
    nodes_.push_back(Node{std::move(value), {}, ng ? std::move(backprop) : nullptr, ng, nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  // ---- elementwise ----

  Var add(Var a, Var b) {
    require_same_shape(val(a), val(b), "add");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    for (int64_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    Var o{-1};
    o = make(std::move(out), {a, b}, [this, a, b, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      Tensor<T>& ga = grad(Var{a.i});
      Tensor<T>& gb = grad(Var{b.i});
      for (int64_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
    });
    return o;
  }

  Var sub(Var a, Var b) {
    require_same_shape(val(a), val(b), "sub");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
    return make(std::move(out), {a, b}, [this, a, b, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      Tensor<T>& ga = grad(a);
      Tensor<T>& gb = grad(b);
      for (int64_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
    });
  }

  Var mul(Var a, Var b) {
    require_same_shape(val(a), val(b), "mul");
    Tensor<T> out = val(a);
    const Tensor<T>& vb = val(b);
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    return make(std::move(out), {a, b}, [this, a, b, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      const Tensor<T>& va = val(a);
      const Tensor<T>& vb2 = val(b);
      Tensor<T>& ga = grad(a);
      Tensor<T>& gb = grad(b);
      for (int64_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * vb2[i];
        gb[i] += g[i] * va[i];
      }
    });
  }

  // Broadcast multiply: mask (B,1,H,W) times x (B,C,H,W).
  Var bmul(Var mask, Var x) {
    const Tensor<T>& m = val(mask);
    const Tensor<T>& vx = val(x);
    if (m.rank() != 4 || vx.rank() != 4 || m.dim(1) != 1 || m.dim(0) != vx.dim(0) ||
        m.dim(2) != vx.dim(2) || m.dim(3) != vx.dim(3))
      throw DataError("bmul: mask must be (B,1,H,W) matching x " + shape_str(vx.shape));
    const int B = vx.dim(0), C = vx.dim(1);
    const int64_t hw = static_cast<int64_t>(vx.dim(2)) * vx.dim(3);
    Tensor<T> out(vx.shape);
    for (int b = 0; b < B; ++b) {
      const T* mp = m.ptr() + b * hw;
      for (int c = 0; c < C; ++c) {
        const T* xp = vx.ptr() + (static_cast<int64_t>(b) * C + c) * hw;
        T* op = out.ptr() + (static_cast<int64_t>(b) * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) op[i] = mp[i] * xp[i];
      }
    }
    return make(std::move(out), {mask, x}, [this, mask, x, B, C, hw, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      const Tensor<T>& m2 = val(mask);
      const Tensor<T>& vx2 = val(x);
      Tensor<T>& gm = grad(mask);
      Tensor<T>& gx = grad(x);
      for (int b = 0; b < B; ++b) {
        const T* mp = m2.ptr() + b * hw;
        T* gmp = gm.ptr() + b * hw;
        for (int c = 0; c < C; ++c) {
          const int64_t off = (static_cast<int64_t>(b) * C + c) * hw;
          const T* gp = g.ptr() + off;
          const T* xp = vx2.ptr() + off;
          T* gxp = gx.ptr() + off;
          for (int64_t i = 0; i < hw; ++i) {
            gmp[i] += gp[i] * xp[i];
            gxp[i] += gp[i] * mp[i];
          }
        }
      }
    });
  }

  // a*x + b with scalar constants.
  Var scale_add(Var x, T a, T b) {
    Tensor<T> out = val(x);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a * out[i] + b;
    return make(std::move(out), {x}, [this, x, a, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      Tensor<T>& gx = grad(x);
      for (int64_t i = 0; i < g.size(); ++i) gx[i] += a * g[i];
    });
  }

  Var scale(Var x, T a) { return scale_add(x, a, T(0)); }

  // Tensor times scalar node.
  Var smul(Var x, Var s) {
    if (val(s).size() != 1) throw std::logic_error("smul: s must be scalar");
    const T sv = val(s)[0];
    Tensor<T> out = val(x);
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= sv;
    return make(std::move(out), {x, s}, [this, x, s, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      const Tensor<T>& vx = val(x);
      const T sv2 = val(s)[0];
      Tensor<T>& gx = grad(x);
      Tensor<T>& gs = grad(s);
      double acc = 0.0;
      for (int64_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i] * sv2;
        acc += static_cast<double>(g[i]) * static_cast<double>(vx[i]);
      }
      gs[0] += static_cast<T>(acc);
    });
  }

  // Scalar node: sum of a elementwise-times b.
  Var vdot(Var a, Var b) {
    require_same_shape(val(a), val(b), "vdot");
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    double acc = 0.0;
    for (int64_t i = 0; i < va.size(); ++i)
      acc += static_cast<double>(va[i]) * static_cast<double>(vb[i]);
    return make(Tensor<T>::scalar(static_cast<T>(acc)), {a, b},
                [this, a, b, idx = next_index()]() {
                  const T g0 = nodes_[idx].grad[0];
                  const Tensor<T>& va2 = val(a);
                  const Tensor<T>& vb2 = val(b);
                  Tensor<T>& ga = grad(a);
                  Tensor<T>& gb = grad(b);
                  for (int64_t i = 0; i < va2.size(); ++i) {
                    ga[i] += g0 * vb2[i];
                    gb[i] += g0 * va2[i];
                  }
                });
  }

  Var recip(Var x) {
    Tensor<T> out = val(x);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = T(1) / out[i];
    return make(std::move(out), {x}, [this, x, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      const Tensor<T>& y = nodes_[idx].value;
      Tensor<T>& gx = grad(x);
      for (int64_t i = 0; i < g.size(); ++i) gx[i] -= g[i] * y[i] * y[i];
    });
  }

  // ---- activations ----

  Var relu(Var x) {
    Tensor<T> out = val(x);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > T(0) ? out[i] : T(0);
    return make(std::move(out), {x}, [this, x, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      const Tensor<T>& vx = val(x);
      Tensor<T>& gx = grad(x);
      for (int64_t i = 0; i < g.size(); ++i)
        if (vx[i] > T(0)) gx[i] += g[i];
    });
  }

  Var lrelu(Var x, T slope) {
    Tensor<T> out = val(x);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > T(0) ? out[i] : slope * out[i];
    return make(std::move(out), {x}, [this, x, slope, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      const Tensor<T>& vx = val(x);
      Tensor<T>& gx = grad(x);
      for (int64_t i = 0; i < g.size(); ++i) gx[i] += vx[i] > T(0) ? g[i] : slope * g[i];
    });
  }

  Var tanh_(Var x) {
    Tensor<T> out = val(x);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    return make(std::move(out), {x}, [this, x, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      const Tensor<T>& y = nodes_[idx].value;
      Tensor<T>& gx = grad(x);
      for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (T(1) - y[i] * y[i]);
    });
  }

  Var sigmoid_(Var x) {
    Tensor<T> out = val(x);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-out[i]));
    return make(std::move(out), {x}, [this, x, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      const Tensor<T>& y = nodes_[idx].value;
      Tensor<T>& gx = grad(x);
      for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
    });
  }

  // Subgradient 0 at the kink.
  Var abs_(Var x) {
    Tensor<T> out = val(x);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::abs(out[i]);
    return make(std::move(out), {x}, [this, x, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      const Tensor<T>& vx = val(x);
      Tensor<T>& gx = grad(x);
      for (int64_t i = 0; i < g.size(); ++i) {
        if (vx[i] > T(0))
          gx[i] += g[i];
        else if (vx[i] < T(0))
          gx[i] -= g[i];
      }
    });
  }

  // ---- reductions ----

  Var sum(Var x) {
    const Tensor<T>& vx = val(x);
    double acc = 0.0;
    for (int64_t i = 0; i < vx.size(); ++i) acc += static_cast<double>(vx[i]);
    return make(Tensor<T>::scalar(static_cast<T>(acc)), {x}, [this, x, idx = next_index()]() {
      const T g0 = nodes_[idx].grad[0];
      Tensor<T>& gx = grad(x);
      for (int64_t i = 0; i < gx.size(); ++i) gx[i] += g0;
    });
  }

  Var mean(Var x) {
    const int64_t n = val(x).size();
    Var s = sum(x);
    return scale(s, T(1) / static_cast<T>(n));
  }

  // ---- structured ops ----

  // Softmax over the channel dimension of (B,C,H,W), per pixel.
  Var softmax_ch(Var x) {
    const Tensor<T>& vx = val(x);
    if (vx.rank() != 4) throw std::logic_error("softmax_ch: expects (B,C,H,W)");
    const int B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor<T> out(vx.shape);
    for (int b = 0; b < B; ++b) {
      for (int64_t p = 0; p < hw; ++p) {
        const int64_t base = static_cast<int64_t>(b) * C * hw + p;
        T mx = vx[base];
        for (int c = 1; c < C; ++c) mx = std::max(mx, vx[base + c * hw]);
        double denom = 0.0;
        for (int c = 0; c < C; ++c) {
          T e = std::exp(vx[base + c * hw] - mx);
          out[base + c * hw] = e;
          denom += static_cast<double>(e);
        }
        const T inv = static_cast<T>(1.0 / denom);
        for (int c = 0; c < C; ++c) out[base + c * hw] *= inv;
      }
    }
    return make(std::move(out), {x}, [this, x, B, C, hw, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      const Tensor<T>& s = nodes_[idx].value;
      Tensor<T>& gx = grad(x);
      for (int b = 0; b < B; ++b) {
        for (int64_t p = 0; p < hw; ++p) {
          const int64_t base = static_cast<int64_t>(b) * C * hw + p;
          double dot = 0.0;
          for (int c = 0; c < C; ++c)
            dot += static_cast<double>(g[base + c * hw]) * static_cast<double>(s[base + c * hw]);
          for (int c = 0; c < C; ++c)
            gx[base + c * hw] += s[base + c * hw] * (g[base + c * hw] - static_cast<T>(dot));
        }
      }
    });
  }

  // Per-sample, per-channel normalization with affine params gamma/beta (shape {C}).
  Var instance_norm(Var x, Var gamma, Var beta, T eps = T(1e-5)) {
    const Tensor<T>& vx = val(x);
    if (vx.rank() != 4) throw std::logic_error("instance_norm: expects (B,C,H,W)");
    const int B = vx.dim(0), C = vx.dim(1);
    const int64_t m = static_cast<int64_t>(vx.dim(2)) * vx.dim(3);
    if (val(gamma).size() != C || val(beta).size() != C)
      throw std::logic_error("instance_norm: gamma/beta must have C entries");
    Tensor<T> out(vx.shape);
    auto xhat = std::make_shared<Tensor<T>>(vx.shape);
    auto invstd = std::make_shared<Tensor<T>>(std::vector<int>{B, C});
    const Tensor<T>& gm = val(gamma);
    const Tensor<T>& bt = val(beta);
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < C; ++c) {
        const int64_t off = (static_cast<int64_t>(b) * C + c) * m;
        const T* xp = vx.ptr() + off;
        double mu = 0.0;
        for (int64_t i = 0; i < m; ++i) mu += static_cast<double>(xp[i]);
        mu /= static_cast<double>(m);
        double var = 0.0;
        for (int64_t i = 0; i < m; ++i) {
          double d = static_cast<double>(xp[i]) - mu;
          var += d * d;
        }
        var /= static_cast<double>(m);
        const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        (*invstd)[static_cast<int64_t>(b) * C + c] = inv;
        T* hp = xhat->ptr() + off;
        T* op = out.ptr() + off;
        const T muT = static_cast<T>(mu);
        for (int64_t i = 0; i < m; ++i) {
          hp[i] = (xp[i] - muT) * inv;
          op[i] = gm[c] * hp[i] + bt[c];
        }
      }
    }
    return make(std::move(out), {x, gamma, beta},
                [this, x, gamma, beta, xhat, invstd, B, C, m, idx = next_index()]() {
                  const Tensor<T>& g = nodes_[idx].grad;
                  const Tensor<T>& gm = val(gamma);
                  Tensor<T>& gx = grad(x);
                  Tensor<T>& gg = grad(gamma);
                  Tensor<T>& gb = grad(beta);
                  for (int b = 0; b < B; ++b) {
                    for (int c = 0; c < C; ++c) {
                      const int64_t off = (static_cast<int64_t>(b) * C + c) * m;
                      const T* gp = g.ptr() + off;
                      const T* hp = xhat->ptr() + off;
                      T* gxp = gx.ptr() + off;
                      double sg = 0.0, sgh = 0.0;
                      for (int64_t i = 0; i < m; ++i) {
                        sg += static_cast<double>(gp[i]);
                        sgh += static_cast<double>(gp[i]) * static_cast<double>(hp[i]);
                      }
                      gb[c] += static_cast<T>(sg);
                      gg[c] += static_cast<T>(sgh);
                      const T inv = (*invstd)[static_cast<int64_t>(b) * C + c];
                      const T k = gm[c] * inv;
                      const T mg = static_cast<T>(sg / static_cast<double>(m));
                      const T mgh = static_cast<T>(sgh / static_cast<double>(m));
                      for (int64_t i = 0; i < m; ++i)
                        gxp[i] += k * (gp[i] - mg - hp[i] * mgh);
                    }
                  }
                });
  }

  Var concat_ch(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::logic_error("concat_ch: empty input");
    const Tensor<T>& first = val(xs[0]);
    const int B = first.dim(0), H = first.dim(2), W = first.dim(3);
    int C = 0;
    for (Var v : xs) {
      const Tensor<T>& t = val(v);
      if (t.rank() != 4 || t.dim(0) != B || t.dim(2) != H || t.dim(3) != W)
        throw DataError("concat_ch: incompatible shapes");
      C += t.dim(1);
    }
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor<T> out({B, C, H, W});
    int c0 = 0;
    std::vector<std::pair<int, int>> spans;  // (start channel, count) per input
    for (Var v : xs) {
      const Tensor<T>& t = val(v);
      const int tc = t.dim(1);
      for (int b = 0; b < B; ++b)
        std::copy(t.ptr() + static_cast<int64_t>(b) * tc * hw,
                  t.ptr() + static_cast<int64_t>(b + 1) * tc * hw,
                  out.ptr() + (static_cast<int64_t>(b) * C + c0) * hw);
      spans.emplace_back(c0, tc);
      c0 += tc;
    }
    return make(std::move(out), xs, [this, xs, spans, B, C, hw, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      for (size_t k = 0; k < xs.size(); ++k) {
        Tensor<T>& gi = grad(xs[k]);
        const int s = spans[k].first, tc = spans[k].second;
        for (int b = 0; b < B; ++b) {
          const T* gp = g.ptr() + (static_cast<int64_t>(b) * C + s) * hw;
          T* dst = gi.ptr() + static_cast<int64_t>(b) * tc * hw;
          for (int64_t i = 0; i < static_cast<int64_t>(tc) * hw; ++i) dst[i] += gp[i];
        }
      }
    });
  }

  Var slice_ch(Var x, int c0, int count) {
    const Tensor<T>& vx = val(x);
    if (vx.rank() != 4 || c0 < 0 || c0 + count > vx.dim(1))
      throw std::logic_error("slice_ch: channel range out of bounds");
    const int B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor<T> out({B, count, H, W});
    for (int b = 0; b < B; ++b)
      std::copy(vx.ptr() + (static_cast<int64_t>(b) * C + c0) * hw,
                vx.ptr() + (static_cast<int64_t>(b) * C + c0 + count) * hw,
                out.ptr() + static_cast<int64_t>(b) * count * hw);
    return make(std::move(out), {x}, [this, x, c0, count, B, C, hw, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      Tensor<T>& gx = grad(x);
      for (int b = 0; b < B; ++b) {
        const T* gp = g.ptr() + static_cast<int64_t>(b) * count * hw;
        T* dst = gx.ptr() + (static_cast<int64_t>(b) * C + c0) * hw;
        for (int64_t i = 0; i < static_cast<int64_t>(count) * hw; ++i) dst[i] += gp[i];
      }
    });
  }

  // Sum of squared horizontal plus vertical forward differences over all
  // samples and channels. Errors when the map is too small to difference.
  Var tv_sumsq(Var x) {
    const Tensor<T>& vx = val(x);
    if (vx.rank() != 4) throw std::logic_error("tv_sumsq: expects (B,C,H,W)");
    const int B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    if (H < 2 || W < 2) throw DataError("tv_sumsq: spatial dims must be at least 2");
    double acc = 0.0;
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx) {
            const T v = vx.at(b, c, y, xx);
            if (xx + 1 < W) {
              double d = static_cast<double>(vx.at(b, c, y, xx + 1)) - static_cast<double>(v);
              acc += d * d;
            }
            if (y + 1 < H) {
              double d = static_cast<double>(vx.at(b, c, y + 1, xx)) - static_cast<double>(v);
              acc += d * d;
            }
          }
    return make(Tensor<T>::scalar(static_cast<T>(acc)), {x},
                [this, x, B, C, H, W, idx = next_index()]() {
                  const T g0 = nodes_[idx].grad[0];
                  const Tensor<T>& vx2 = val(x);
                  Tensor<T>& gx = grad(x);
                  for (int b = 0; b < B; ++b)
                    for (int c = 0; c < C; ++c)
                      for (int y = 0; y < H; ++y)
                        for (int xx = 0; xx < W; ++xx) {
                          const T v = vx2.at(b, c, y, xx);
                          if (xx + 1 < W) {
                            const T d = vx2.at(b, c, y, xx + 1) - v;
                            gx.at(b, c, y, xx + 1) += g0 * 2 * d;
                            gx.at(b, c, y, xx) -= g0 * 2 * d;
                          }
                          if (y + 1 < H) {
                            const T d = vx2.at(b, c, y + 1, xx) - v;
                            gx.at(b, c, y + 1, xx) += g0 * 2 * d;
                            gx.at(b, c, y, xx) -= g0 * 2 * d;
                          }
                        }
                });
  }

  // Nearest-neighbor 2x spatial upsampling.
  Var upsample2x(Var x) {
    const Tensor<T>& vx = val(x);
    const int B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    Tensor<T> out({B, C, 2 * H, 2 * W});
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y) {
          const T* src = vx.ptr() + ((static_cast<int64_t>(b) * C + c) * H + y / 2) * W;
          T* dst = out.ptr() + ((static_cast<int64_t>(b) * C + c) * 2 * H + y) * 2 * W;
          for (int xx = 0; xx < 2 * W; ++xx) dst[xx] = src[xx / 2];
        }
    return make(std::move(out), {x}, [this, x, B, C, H, W, idx = next_index()]() {
      const Tensor<T>& g = nodes_[idx].grad;
      Tensor<T>& gx = grad(x);
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
          for (int y = 0; y < 2 * H; ++y) {
            const T* gp = g.ptr() + ((static_cast<int64_t>(b) * C + c) * 2 * H + y) * 2 * W;
            T* dst = gx.ptr() + ((static_cast<int64_t>(b) * C + c) * H + y / 2) * W;
            for (int xx = 0; xx < 2 * W; ++xx) dst[xx / 2] += gp[xx];
          }
    });
  }

  // Index the node an op is about to create; for capture in its backprop.
  size_t next_index() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

}  // namespace fsyn
