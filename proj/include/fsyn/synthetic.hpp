// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fsyn/facegeom.hpp"
#include "fsyn/random.hpp"
#include "fsyn/tensor.hpp"

namespace fsyn {

// Parametric cartoon face. The mouth, eye, and jaw geometry and the 68
// landmarks derive from the same parameters, so landmark-conditioned
// training has a consistent, license-free corpus.
struct FaceParams {
  double cx = 0.5, cy = 0.5;    // face center, relative units
  double rx = 0.30, ry = 0.38;  // face half-axes, relative units
  double mouth_open = 0.10;     // lip gap in relative units (of image size)
  double eye_open = 1.0;        // 0 closed .. 1 wide
  double eye_span = 0.45;       // eye center offset as a fraction of rx
  double skin[3] = {0.86, 0.68, 0.54};
  double bg[3] = {0.12, 0.14, 0.20};
  double lip[3] = {0.62, 0.18, 0.20};
};

namespace detail {

inline double ellipse_cov(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx, dy = (y - cy) / ry;
  const double e = dx * dx + dy * dy;
  const double soft = 0.75 * std::min(rx, ry);
  return std::clamp(0.5 + (1.0 - e) * soft, 0.0, 1.0);
}

inline void blend(float* px, int64_t stride, const double rgb[3], double a) {
  if (a <= 0.0) return;
  for (int c = 0; c < 3; ++c) {
    const double base = static_cast<double>(px[c * stride]);
    px[c * stride] = static_cast<float>(base * (1.0 - a) + rgb[c] * a);
  }
}

}  // namespace detail

inline std::pair<Tensor<float>, LandmarkSet> render_face(int size, const FaceParams& p) {
  if (size < 16) throw DataError("render_face: size too small");
  const double s = static_cast<double>(size);
  const double cx = p.cx * s, cy = p.cy * s;
  const double rx = p.rx * s, ry = p.ry * s;
  const double eye_y = cy - 0.28 * ry;
  const double eye_dx = p.eye_span * rx;
  const double eye_rx = 0.17 * rx;
  const double eye_ry = (0.2 + 0.8 * p.eye_open) * 0.62 * eye_rx;
  const double nose_y = cy + 0.10 * ry;
  const double mouth_y = cy + 0.52 * ry;
  const double mouth_rx = 0.42 * rx;
  const double mouth_ry = 0.5 * p.mouth_open * s;  // lip gap = 2 * mouth_ry
  const double lip_pad = 0.035 * s;

  Tensor<float> img({3, size, size});
  const int64_t hw = static_cast<int64_t>(size) * size;
  const double white[3] = {0.95, 0.95, 0.92};
  const double dark[3] = {0.10, 0.07, 0.07};
  const double brow[3] = {0.25, 0.16, 0.10};
  const double nose_c[3] = {0.72, 0.52, 0.40};
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      float* px = img.ptr() + static_cast<int64_t>(y) * size + x;
      const double fx = x, fy = y;
      const double grad = 0.08 * fy / s;
      for (int c = 0; c < 3; ++c)
        px[c * hw] = static_cast<float>(p.bg[c] + grad);
      detail::blend(px, hw, p.skin, detail::ellipse_cov(fx, fy, cx, cy, rx, ry));
      for (int side = -1; side <= 1; side += 2) {
        const double ex = cx + side * eye_dx;
        detail::blend(px, hw, brow,
                      detail::ellipse_cov(fx, fy, ex, eye_y - 1.8 * eye_rx, eye_rx * 1.15, 0.35 * eye_rx));
        detail::blend(px, hw, white, detail::ellipse_cov(fx, fy, ex, eye_y, eye_rx, eye_ry));
        if (p.eye_open > 0.15)
          detail::blend(px, hw, dark,
                        detail::ellipse_cov(fx, fy, ex, eye_y, 0.38 * eye_rx, std::min(eye_ry, 0.38 * eye_rx)));
      }
      detail::blend(px, hw, nose_c, detail::ellipse_cov(fx, fy, cx, nose_y, 0.13 * rx, 0.20 * ry));
      detail::blend(px, hw, p.lip,
                    detail::ellipse_cov(fx, fy, cx, mouth_y, mouth_rx, mouth_ry + lip_pad));
      if (mouth_ry > 0.5)
        detail::blend(px, hw, dark,
                      detail::ellipse_cov(fx, fy, cx, mouth_y, 0.8 * mouth_rx, mouth_ry));
    }
  for (int64_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<float>(std::clamp(img[i] * 2.0 - 1.0, -1.0, 1.0));

  std::vector<Point2> pts(kNumLandmarks);
  // Jaw 1..17 along the lower face ellipse, left ear to right ear.
  for (int i = 0; i < 17; ++i) {
    const double ang = M_PI / 2.0 + (8 - i) / 8.0 * 1.35;
    pts[static_cast<size_t>(i)] = {cx + rx * std::cos(ang), cy + ry * std::sin(ang)};
  }
  // Brows 18..27.
  for (int i = 0; i < 5; ++i) {
    const double t = (i - 2) / 2.0;
    pts[static_cast<size_t>(17 + i)] = {cx - eye_dx + t * eye_rx * 1.15, eye_y - 1.8 * eye_rx - 0.2 * eye_rx * (1 - t * t)};
    pts[static_cast<size_t>(22 + i)] = {cx + eye_dx + t * eye_rx * 1.15, eye_y - 1.8 * eye_rx - 0.2 * eye_rx * (1 - t * t)};
  }
  // Nose bridge 28..31 and base 32..36; 34 is the tip.
  for (int i = 0; i < 4; ++i)
    pts[static_cast<size_t>(27 + i)] = {cx, eye_y + (nose_y - eye_y) * (i + 1) / 4.0};
  for (int i = 0; i < 5; ++i)
    pts[static_cast<size_t>(31 + i)] = {cx + (i - 2) * 0.065 * rx, nose_y + 0.20 * ry * (i == 2 ? 1.0 : 0.85)};
  // Eyes 37..42 (left, 37 outer) and 43..48 (right, 46 outer).
  auto eye_ring = [&](size_t base, double ex, bool left) {
    const double sgn = left ? -1.0 : 1.0;
    const double outer = ex + sgn * eye_rx;
    const double inner = ex - sgn * eye_rx;
    const double top = eye_y - eye_ry, bot = eye_y + eye_ry;
    const double x1 = ex - 0.45 * eye_rx, x2 = ex + 0.45 * eye_rx;
    if (left) {
      pts[base + 0] = {outer, eye_y};
      pts[base + 1] = {x1, top};
      pts[base + 2] = {x2, top};
      pts[base + 3] = {inner, eye_y};
      pts[base + 4] = {x2, bot};
      pts[base + 5] = {x1, bot};
    } else {
      pts[base + 0] = {inner, eye_y};
      pts[base + 1] = {x1, top};
      pts[base + 2] = {x2, top};
      pts[base + 3] = {outer, eye_y};
      pts[base + 4] = {x2, bot};
      pts[base + 5] = {x1, bot};
    }
  };
  eye_ring(36, cx - eye_dx, true);
  eye_ring(42, cx + eye_dx, false);
  // Mouth: outer ring 49..60 (52 top middle, 58 bottom middle), inner 61..68.
  for (int j = 0; j < 12; ++j) {
    const double ang = M_PI + j * (M_PI / 6.0);
    pts[static_cast<size_t>(48 + j)] = {cx + mouth_rx * std::cos(ang), mouth_y + mouth_ry * std::sin(ang)};
  }
  for (int j = 0; j < 8; ++j) {
    const double ang = M_PI + j * (M_PI / 4.0);
    pts[static_cast<size_t>(60 + j)] = {cx + 0.75 * mouth_rx * std::cos(ang),
                                        mouth_y + 0.75 * mouth_ry * std::sin(ang)};
  }
  return {std::move(img), LandmarkSet(std::move(pts))};
}

struct SyntheticClip {
  std::vector<Tensor<float>> frames;     // (3, H, W) in [-1, 1]
  std::vector<LandmarkSet> landmarks;
};

// One identity speaking: mouth openness sweeps its range over the clip with
// mild head jitter and blinks.
inline SyntheticClip synthetic_clip(int size, int n_frames, uint64_t seed) {
  if (n_frames < 1) throw DataError("synthetic_clip: need at least one frame");
  RandomEngine rng(seed);
  FaceParams base;
  base.rx = 0.27 + 0.05 * rng.uniform();
  base.ry = 0.35 + 0.05 * rng.uniform();
  base.eye_span = 0.40 + 0.10 * rng.uniform();
  for (int c = 0; c < 3; ++c) {
    base.skin[c] = std::clamp(base.skin[c] + 0.10 * (rng.uniform() - 0.5), 0.0, 1.0);
    base.bg[c] = std::clamp(base.bg[c] + 0.08 * (rng.uniform() - 0.5), 0.0, 1.0);
    base.lip[c] = std::clamp(base.lip[c] + 0.10 * (rng.uniform() - 0.5), 0.0, 1.0);
  }
  SyntheticClip clip;
  for (int t = 0; t < n_frames; ++t) {
    FaceParams p = base;
    const double phase = n_frames == 1 ? 0.0 : static_cast<double>(t) / (n_frames - 1);
    p.mouth_open = 0.02 + 0.16 * (0.5 - 0.5 * std::cos(2.0 * M_PI * phase)) + 0.01 * rng.uniform();
    p.eye_open = 0.65 + 0.35 * std::sin(M_PI * phase) + 0.05 * (rng.uniform() - 0.5);
    p.cx = 0.5 + 0.02 * (rng.uniform() - 0.5);
    p.cy = 0.5 + 0.02 * (rng.uniform() - 0.5);
    auto [img, lms] = render_face(size, p);
    clip.frames.push_back(std::move(img));
    clip.landmarks.push_back(std::move(lms));
  }
  return clip;
}

}  // namespace fsyn
