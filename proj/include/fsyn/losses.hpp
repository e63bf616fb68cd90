// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fsyn/conv.hpp"
#include "fsyn/facegeom.hpp"
#include "fsyn/graph.hpp"
#include "fsyn/random.hpp"
#include "fsyn/tensor.hpp"

namespace fsyn {

template <typename T>
struct LossWeights {
  T lambda_s = T(1.0);
  T lambda_tv = T(1e-5);
  T lambda_rec = T(250.0);
  T lambda_p = T(1.0);
  T lambda_adv = T(1.0);
  T tv_wm_scale = T(0.1);
  double gamma = 0.95;
  double floor = 0.3;
  T margin = T(40.0);
  int n = 5;

  void validate() const {
    if (lambda_s < T(0) || lambda_tv < T(0) || lambda_rec < T(0) || lambda_p < T(0) ||
        lambda_adv < T(0) || tv_wm_scale < T(0) || margin < T(0) || n < 1)
      throw DataError("LossWeights: weights must be non-negative, n >= 1");
  }
};

// L1 norm of the merge mask. V is non-negative by construction, so this is
// the plain sum; abs keeps the contract honest for arbitrary input.
template <typename T>
Var sparsity_loss(Graph<T>& g, Var v) {
  return g.sum(g.abs_(v));
}

// Total variation: squared forward differences, summed.
template <typename T>
Var tv_loss(Graph<T>& g, Var x) {
  return g.tv_sumsq(x);
}

// Tile an (H, W) heatmap into a (B, 1, H, W) graph constant.
template <typename T>
Var heatmap_const(Graph<T>& g, const Tensor<T>& k, int batch) {
  if (k.rank() != 2) throw DataError("heatmap_const: K must be (H, W)");
  Tensor<T> t({batch, 1, k.dim(0), k.dim(1)});
  for (int b = 0; b < batch; ++b)
    std::copy(k.data.begin(), k.data.end(), t.data.begin() + static_cast<int64_t>(b) * k.size());
  return g.constant(std::move(t));
}

// sum_c || K (.) (pred_c - target_c) ||_1 with K broadcast over channels.
template <typename T>
Var weighted_l1(Graph<T>& g, Var pred, Var target, Var k_b1hw) {
  require_same_shape(g.val(pred), g.val(target), "weighted_l1");
  return g.sum(g.bmul(k_b1hw, g.abs_(g.sub(pred, target))));
}

template <typename T>
double weighted_l1(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& k) {
  require_same_shape(pred, target, "weighted_l1");
  const Tensor<T> pb = pred.rank() == 3 ? pred.batched() : pred;
  const Tensor<T> tb = target.rank() == 3 ? target.batched() : target;
  const int B = pb.dim(0), C = pb.dim(1), H = pb.dim(2), W = pb.dim(3);
  if (k.rank() != 2 || k.dim(0) != H || k.dim(1) != W)
    throw DataError("weighted_l1: K must be (H, W) matching the images");
  double acc = 0.0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          acc += static_cast<double>(k.at(y, x)) *
                 std::abs(static_cast<double>(pb.at(b, c, y, x)) - tb.at(b, c, y, x));
  return acc;
}

// Multi-scale feature maps from an RGB image; implementations must be
// deterministic with parameters held fixed during training.
template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Var> features(Graph<T>& g, Var image) = 0;
};

// Fixed-seed random strided convolution stack. Stands in for a pretrained
// perceptual backbone: random multi-scale projections preserve distances
// well enough for training signals, and tests get full reproducibility.
template <typename T>
class StubFeatureExtractor : public FeatureExtractor<T> {
 public:
  explicit StubFeatureExtractor(uint64_t seed = 7u, int in_ch = 3) {
    RandomEngine rng(seed);
    const int chans[5] = {in_ch, 8, 16, 32, 64};
    for (int s = 0; s < 4; ++s) {
      Tensor<T> w({chans[s + 1], chans[s], 3, 3});
      const double stdev = std::sqrt(2.0 / (9.0 * chans[s]));
      for (int64_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.normal() * stdev);
      weights_.push_back(std::move(w));
    }
  }

  // Custom weight stack, e.g. loaded from a file; each entry is a
  // (oc, ic, 3, 3) kernel applied with stride 2.
  explicit StubFeatureExtractor(std::vector<Tensor<T>> weights) : weights_(std::move(weights)) {
    if (weights_.empty()) throw DataError("feature extractor needs at least one conv stage");
    for (const Tensor<T>& w : weights_)
      if (w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3)
        throw DataError("feature extractor stages must be (oc, ic, 3, 3) kernels");
  }

  const std::vector<Tensor<T>>& weights() const { return weights_; }

  std::vector<Var> features(Graph<T>& g, Var image) override {
    std::vector<Var> out;
    Var h = image;
    for (const Tensor<T>& w : weights_) {
      h = g.tanh_(conv2d(g, h, g.constant(w), Var{}, 2, 1));
      out.push_back(h);
    }
    return out;
  }

 private:
  std::vector<Tensor<T>> weights_;
};

// Sum of squared feature differences across scales, equal layer weights.
template <typename T>
Var perceptual_loss(Graph<T>& g, Var pred, Var target, FeatureExtractor<T>& extractor) {
  require_same_shape(g.val(pred), g.val(target), "perceptual_loss");
  std::vector<Var> fp = extractor.features(g, pred);
  std::vector<Var> ft = extractor.features(g, target);
  if (fp.size() != ft.size() || fp.empty())
    throw DataError("perceptual_loss: extractor returned inconsistent feature lists");
  Var total{-1};
  for (size_t i = 0; i < fp.size(); ++i) {
    Var d = g.sub(fp[i], ft[i]);
    Var sq = g.vdot(d, d);
    total = total.valid() ? g.add(total, sq) : sq;
  }
  return total;
}

// Hinge losses over patch score maps; means keep magnitudes independent of
// resolution.
template <typename T>
Var hinge_d_loss(Graph<T>& g, Var real_scores, Var fake_scores) {
  Var lr = g.mean(g.relu(g.scale_add(real_scores, T(-1), T(1))));
  Var lf = g.mean(g.relu(g.scale_add(fake_scores, T(1), T(1))));
  return g.add(lr, lf);
}

template <typename T>
Var hinge_g_loss(Graph<T>& g, Var fake_scores) {
  return g.scale(g.mean(fake_scores), T(-1));
}

template <typename S>
struct LossTerms {
  S sparsity{};
  S tv_v{};
  S tv_ww{};
  S tv_wm{};
  S rec{};
  S perceptual{};
  S adv{};
};

// Weighted total: the three TV terms share lambda_TV, with the mask-TV term
// further scaled by tv_wm_scale. No sparsity term is applied to the warp
// selection masks.
template <typename T>
T total_generator_loss(const LossTerms<T>& t, const LossWeights<T>& w) {
  const T tv = t.tv_v + t.tv_ww + w.tv_wm_scale * t.tv_wm;
  return w.lambda_s * t.sparsity + w.lambda_tv * tv + w.lambda_rec * t.rec +
         w.lambda_p * t.perceptual + w.lambda_adv * t.adv;
}

template <typename T>
Var total_generator_loss(Graph<T>& g, const LossTerms<Var>& t, const LossWeights<T>& w) {
  Var tv = g.add(g.add(t.tv_v, t.tv_ww), g.scale(t.tv_wm, w.tv_wm_scale));
  Var total = g.scale(t.sparsity, w.lambda_s);
  total = g.add(total, g.scale(tv, w.lambda_tv));
  total = g.add(total, g.scale(t.rec, w.lambda_rec));
  total = g.add(total, g.scale(t.perceptual, w.lambda_p));
  total = g.add(total, g.scale(t.adv, w.lambda_adv));
  return total;
}

}  // namespace fsyn
