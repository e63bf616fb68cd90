// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fsyn/graph.hpp"
#include "fsyn/random.hpp"
#include "fsyn/tensor.hpp"

namespace tu {

using fsyn::Graph;
using fsyn::Parameter;
using fsyn::RandomEngine;
using fsyn::Tensor;
using fsyn::Var;

inline double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Tensor<double> random_tensor(std::vector<int> shape, RandomEngine& rng, double lo = -1.0,
                                    double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * rng.uniform();
  return t;
}

// Direct convolution, the oracle for the im2col implementation.
template <typename T>
Tensor<T> conv_ref(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, int stride, int pl,
                   int pr, int pt, int pb) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OC = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const int OH = (H + pt + pb - KH) / stride + 1;
  const int OW = (W + pl + pr - KW) / stride + 1;
  Tensor<T> out({B, OC, OH, OW});
  for (int n = 0; n < B; ++n)
    for (int oc = 0; oc < OC; ++oc)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          T acc = b ? (*b)[oc] : T(0);
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < KH; ++ky)
              for (int kx = 0; kx < KW; ++kx) {
                const int iy = oy * stride + ky - pt;
                const int ix = ox * stride + kx - pl;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x.at(n, c, iy, ix) * w.at(oc, c, ky, kx);
              }
          out.at(n, oc, oy, ox) = acc;
        }
  return out;
}

struct GradCheckResult {
  double max_rel = 0.0;
  double analytic = 0.0;
  double numeric = 0.0;
  int input = -1;
  int64_t index = -1;
};

using BuildFn = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

inline double eval_scalar(const BuildFn& f, const std::vector<Tensor<double>>& xs) {
  Graph<double> g;
  g.grad_enabled = false;
  std::vector<Var> vs;
  vs.reserve(xs.size());
  for (const auto& x : xs) vs.push_back(g.constant(x));
  return g.val(f(g, vs))[0];
}

// Central-difference check of d(loss)/d(xs[i]) against the tape gradients.
// checks_per_input == 0 probes every element; otherwise that many random
// ones. skip(i, j) lets callers exclude elements that sit on a kink.
inline GradCheckResult gradcheck(
    const BuildFn& f, std::vector<Tensor<double>> xs, double eps = 1e-5, double floor = 1e-3,
    int checks_per_input = 0, uint64_t seed = 42,
    const std::function<bool(int, int64_t)>& skip = nullptr) {
  std::vector<Parameter<double>> params;
  params.reserve(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) params.emplace_back("x" + std::to_string(i), xs[i]);
  {
    Graph<double> g;
    std::vector<Var> vs;
    for (auto& p : params) vs.push_back(g.param(p));
    Var loss = f(g, vs);
    g.backward(loss);
  }
  GradCheckResult r;
  RandomEngine rng(seed);
  for (size_t i = 0; i < xs.size(); ++i) {
    const int64_t n = xs[i].size();
    std::vector<int64_t> idxs;
    if (checks_per_input > 0 && n > checks_per_input) {
      for (int k = 0; k < checks_per_input; ++k)
        idxs.push_back(rng.uniform_int(static_cast<int>(n)));
    } else {
      for (int64_t j = 0; j < n; ++j) idxs.push_back(j);
    }
    for (int64_t j : idxs) {
      if (skip && skip(static_cast<int>(i), j)) continue;
      const double x0 = xs[i][j];
      xs[i][j] = x0 + eps;
      const double fp = eval_scalar(f, xs);
      xs[i][j] = x0 - eps;
      const double fm = eval_scalar(f, xs);
      xs[i][j] = x0;
      const double num = (fp - fm) / (2.0 * eps);
      const double ana = params[i].grad[j];
      const double re = rel_err(ana, num, floor);
      if (re > r.max_rel) r = {re, ana, num, static_cast<int>(i), j};
    }
  }
  return r;
}

// Variant for gradients that live on external Parameter objects (network
// weights). build() must reconstruct the loss from current values.
inline GradCheckResult gradcheck_params(const std::function<Var(Graph<double>&)>& build,
                                        const std::vector<Parameter<double>*>& params,
                                        int checks_per_param, double eps = 1e-5,
                                        double floor = 1e-3, uint64_t seed = 42) {
  for (Parameter<double>* p : params) p->zero_grad();
  {
    Graph<double> g;
    Var loss = build(g);
    g.backward(loss);
  }
  auto eval = [&]() {
    Graph<double> g;
    g.grad_enabled = false;
    return g.val(build(g))[0];
  };
  GradCheckResult r;
  RandomEngine rng(seed);
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter<double>* p = params[i];
    const int64_t n = p->value.size();
    std::vector<int64_t> idxs;
    if (checks_per_param > 0 && n > checks_per_param) {
      for (int k = 0; k < checks_per_param; ++k)
        idxs.push_back(rng.uniform_int(static_cast<int>(n)));
    } else {
      for (int64_t j = 0; j < n; ++j) idxs.push_back(j);
    }
    for (int64_t j : idxs) {
      const double x0 = p->value[j];
      p->value[j] = x0 + eps;
      const double fp = eval();
      p->value[j] = x0 - eps;
      const double fm = eval();
      p->value[j] = x0;
      const double num = (fp - fm) / (2.0 * eps);
      const double ana = p->grad[j];
      const double re = rel_err(ana, num, floor);
      if (re > r.max_rel) r = {re, ana, num, static_cast<int>(i), j};
    }
  }
  return r;
}

}  // namespace tu
