// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fsyn/graph.hpp"
#include "fsyn/losses.hpp"
#include "fsyn/tensor.hpp"

namespace fsyn {

// Mean absolute difference in 8-bit units over paired image sets.
template <typename T>
double l1_metric(const std::vector<Tensor<T>>& pred, const std::vector<Tensor<T>>& gt) {
  if (pred.size() != gt.size()) throw DataError("l1_metric: set size mismatch");
  if (pred.empty()) throw DataError("l1_metric: empty sets");
  double acc = 0.0;
  int64_t count = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    require_same_shape(pred[i], gt[i], "l1_metric");
    for (int64_t k = 0; k < pred[i].size(); ++k)
      acc += std::abs(static_cast<double>(pred[i][k]) - static_cast<double>(gt[i][k]));
    count += pred[i].size();
  }
  return acc / static_cast<double>(count);
}

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. A = V diag(w) V^T
// with eigenvectors in the columns of V. Row-major storage.
inline void jacobi_eig(std::vector<double> a, int n, std::vector<double>& w,
                       std::vector<double>& v) {
  v.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;
  auto at = [&](std::vector<double>& m, int r, int c) -> double& {
    return m[static_cast<size_t>(r) * n + c];
  };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += at(a, p, q) * at(a, p, q);
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(a, p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double app = at(a, p, p), aqq = at(a, q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = at(a, k, p), akq = at(a, k, q);
          at(a, k, p) = c * akp - s * akq;
          at(a, k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = at(a, p, k), aqk = at(a, q, k);
          at(a, p, k) = c * apk - s * aqk;
          at(a, q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = at(v, k, p), vkq = at(v, k, q);
          at(v, k, p) = c * vkp - s * vkq;
          at(v, k, q) = s * vkp + c * vkq;
        }
      }
  }
  w.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<size_t>(i)] = a[static_cast<size_t>(i) * n + i];
}

// B = V f(w) V^T for a symmetric matrix already decomposed by jacobi_eig.
inline std::vector<double> rebuild_sym(const std::vector<double>& w, const std::vector<double>& v,
                                       int n, double (*f)(double)) {
  std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
  for (int k = 0; k < n; ++k) {
    const double fw = f(w[static_cast<size_t>(k)]);
    if (fw == 0.0) continue;
    for (int i = 0; i < n; ++i) {
      const double vik = v[static_cast<size_t>(i) * n + k] * fw;
      for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += vik * v[static_cast<size_t>(j) * n + k];
    }
  }
  return out;
}

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  int n) {
  std::vector<double> c(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double aik = a[static_cast<size_t>(i) * n + k];
      if (aik == 0.0) continue;
      for (int j = 0; j < n; ++j) c[static_cast<size_t>(i) * n + j] += aik * b[static_cast<size_t>(k) * n + j];
    }
  return c;
}

inline double sqrt_clamped(double x) { return x > 0.0 ? std::sqrt(x) : 0.0; }

}  // namespace detail

// Fréchet distance between Gaussian fits of two feature sets:
// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}). The matrix square root
// comes from the symmetric eigendecomposition of S1^{1/2} S2 S1^{1/2};
// negative eigenvalues are clamped to zero.
inline double fid_metric(const std::vector<std::vector<double>>& pred,
                         const std::vector<std::vector<double>>& gt) {
  if (pred.size() < 2 || gt.size() < 2) throw DataError("fid_metric: degenerate set sizes");
  const int d = static_cast<int>(pred.front().size());
  for (const auto& v : pred)
    if (static_cast<int>(v.size()) != d) throw DataError("fid_metric: inconsistent feature dims");
  for (const auto& v : gt)
    if (static_cast<int>(v.size()) != d) throw DataError("fid_metric: inconsistent feature dims");

  auto moments = [d](const std::vector<std::vector<double>>& set, std::vector<double>& mu,
                     std::vector<double>& cov) {
    const double n = static_cast<double>(set.size());
    mu.assign(static_cast<size_t>(d), 0.0);
    for (const auto& v : set)
      for (int i = 0; i < d; ++i) mu[static_cast<size_t>(i)] += v[static_cast<size_t>(i)];
    for (int i = 0; i < d; ++i) mu[static_cast<size_t>(i)] /= n;
    cov.assign(static_cast<size_t>(d) * d, 0.0);
    for (const auto& v : set)
      for (int i = 0; i < d; ++i) {
        const double di = v[static_cast<size_t>(i)] - mu[static_cast<size_t>(i)];
        for (int j = 0; j < d; ++j)
          cov[static_cast<size_t>(i) * d + j] += di * (v[static_cast<size_t>(j)] - mu[static_cast<size_t>(j)]);
      }
    for (double& x : cov) x /= (n - 1.0);
  };

  std::vector<double> mu1, mu2, c1, c2;
  moments(pred, mu1, c1);
  moments(gt, mu2, c2);

  double mean_term = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = mu1[static_cast<size_t>(i)] - mu2[static_cast<size_t>(i)];
    mean_term += diff * diff;
  }
  double tr1 = 0.0, tr2 = 0.0;
  for (int i = 0; i < d; ++i) {
    tr1 += c1[static_cast<size_t>(i) * d + i];
    tr2 += c2[static_cast<size_t>(i) * d + i];
  }

  std::vector<double> w, v;
  detail::jacobi_eig(c1, d, w, v);
  std::vector<double> sqrt1 = detail::rebuild_sym(w, v, d, detail::sqrt_clamped);
  std::vector<double> inner = detail::matmul(detail::matmul(sqrt1, c2, d), sqrt1, d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double s = 0.5 * (inner[static_cast<size_t>(i) * d + j] + inner[static_cast<size_t>(j) * d + i]);
      inner[static_cast<size_t>(i) * d + j] = s;
      inner[static_cast<size_t>(j) * d + i] = s;
    }
  detail::jacobi_eig(inner, d, w, v);
  double tr_sqrt = 0.0;
  for (double ev : w) tr_sqrt += detail::sqrt_clamped(ev);

  return std::max(0.0, mean_term + tr1 + tr2 - 2.0 * tr_sqrt);
}

// Channel-averaged deepest feature map of the extractor, one vector per
// image; the embedding behind directory-level FID evaluation.
template <typename T>
std::vector<double> image_feature_vector(FeatureExtractor<T>& extractor, const Tensor<T>& image) {
  Graph<T> g;
  g.grad_enabled = false;
  std::vector<Var> feats = extractor.features(g, g.constant(image.rank() == 3 ? image.batched() : image));
  if (feats.empty()) throw DataError("image_feature_vector: extractor returned no features");
  const Tensor<T>& f = g.val(feats.back());
  const int c = f.dim(1);
  const int64_t hw = static_cast<int64_t>(f.dim(2)) * f.dim(3);
  std::vector<double> out(static_cast<size_t>(c), 0.0);
  for (int ch = 0; ch < c; ++ch) {
    const T* p = f.ptr() + static_cast<int64_t>(ch) * hw;
    double acc = 0.0;
    for (int64_t i = 0; i < hw; ++i) acc += static_cast<double>(p[i]);
    out[static_cast<size_t>(ch)] = acc / static_cast<double>(hw);
  }
  return out;
}

}  // namespace fsyn
