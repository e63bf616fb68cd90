// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsyn/tensor.hpp"

namespace fsyn {

inline constexpr int kNumLandmarks = 68;
// 1-indexed Dlib landmark IDs used by the pipeline.
inline constexpr int kUpperLipId = 52;
inline constexpr int kLowerLipId = 58;
inline constexpr int kNoseTipId = 34;
inline constexpr int kLeftEyeCornerId = 37;
inline constexpr int kRightEyeCornerId = 46;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// 68 ordered facial landmarks, continuous pixel coordinates. Coordinates may
// lie outside the image rectangle; only finiteness is enforced.
class LandmarkSet {
 public:
  LandmarkSet() = default;
  explicit LandmarkSet(std::vector<Point2> pts) {
    if (pts.size() != static_cast<size_t>(kNumLandmarks))
      throw DataError("LandmarkSet: expected 68 points, got " + std::to_string(pts.size()));
    for (const Point2& p : pts)
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw DataError("LandmarkSet: non-finite coordinate");
    std::copy(pts.begin(), pts.end(), pts_.begin());
  }

  // 1-indexed access per the Dlib numbering convention.
  const Point2& id(int landmark_id) const {
    if (landmark_id < 1 || landmark_id > kNumLandmarks)
      throw DataError("LandmarkSet: landmark id out of range");
    return pts_[static_cast<size_t>(landmark_id - 1)];
  }
  Point2& id(int landmark_id) {
    return const_cast<Point2&>(static_cast<const LandmarkSet&>(*this).id(landmark_id));
  }
  const std::array<Point2, kNumLandmarks>& points() const { return pts_; }

 private:
  std::array<Point2, kNumLandmarks> pts_{};
};

inline double mouth_openness(const LandmarkSet& l) {
  const Point2& a = l.id(kUpperLipId);
  const Point2& b = l.id(kLowerLipId);
  return std::hypot(b.x - a.x, b.y - a.y);
}

template <typename T>
struct SourceBank {
  std::vector<Tensor<T>> images;      // N images (3, H, W) in [-1, 1]
  std::vector<LandmarkSet> landmarks; // aligned 1:1 with images
  std::vector<double> openness;       // non-decreasing

  int count() const { return static_cast<int>(images.size()); }
  int height() const { return images.empty() ? 0 : images.front().dim(1); }
  int width() const { return images.empty() ? 0 : images.front().dim(2); }
};

// Picks N frames at uniform rank spacing over the openness ordering, always
// keeping the most closed and most open mouth. Ties break by frame index.
template <typename T>
SourceBank<T> select_bank(const std::vector<Tensor<T>>& frames,
                          const std::vector<LandmarkSet>& landmarks, int n) {
  const int f = static_cast<int>(frames.size());
  if (landmarks.size() != frames.size())
    throw DataError("select_bank: landmarks not aligned with frames");
  if (n < 1 || f < n) throw DataError("select_bank: insufficient frames");
  for (const Tensor<T>& img : frames)
    if (img.rank() != 3 || img.dim(0) != 3 || img.dim(1) != frames.front().dim(1) ||
        img.dim(2) != frames.front().dim(2))
      throw DataError("select_bank: frames must share (3, H, W)");

  std::vector<int> order(static_cast<size_t>(f));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> open(static_cast<size_t>(f));
  for (int i = 0; i < f; ++i) open[static_cast<size_t>(i)] = mouth_openness(landmarks[static_cast<size_t>(i)]);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return open[static_cast<size_t>(a)] < open[static_cast<size_t>(b)]; });

  SourceBank<T> bank;
  for (int k = 0; k < n; ++k) {
    const int rank = (n == 1) ? 0 : static_cast<int>((static_cast<int64_t>(k) * (f - 1)) / (n - 1));
    const int idx = order[static_cast<size_t>(rank)];
    bank.images.push_back(frames[static_cast<size_t>(idx)]);
    bank.landmarks.push_back(landmarks[static_cast<size_t>(idx)]);
    bank.openness.push_back(open[static_cast<size_t>(idx)]);
  }
  return bank;
}

// Sparse target-minus-source displacement map (2, H, W): the value (t - s)
// sits at the rounded source-landmark pixel, zero elsewhere. Landmarks
// rounding outside the rectangle are skipped; on collision the higher
// landmark index wins.
template <typename T>
Tensor<T> difference_field(const LandmarkSet& source, const LandmarkSet& target, int w, int h) {
  if (w <= 0 || h <= 0) throw DataError("difference_field: non-positive dimensions");
  Tensor<T> map = Tensor<T>::zeros({2, h, w});
  for (int j = 0; j < kNumLandmarks; ++j) {
    const Point2& s = source.points()[static_cast<size_t>(j)];
    const Point2& t = target.points()[static_cast<size_t>(j)];
    const long px = std::lround(s.x);
    const long py = std::lround(s.y);
    if (px < 0 || px >= w || py < 0 || py >= h) continue;
    map.at(0, static_cast<int>(py), static_cast<int>(px)) = static_cast<T>(t.x - s.x);
    map.at(1, static_cast<int>(py), static_cast<int>(px)) = static_cast<T>(t.y - s.y);
  }
  return map;
}

// Stacks the bank and the difference fields into the (3N + 2N, H, W) network
// input. Images are already in [-1, 1]; displacement channels are divided by
// max(W, H) to sit in a comparable range.
template <typename T>
Tensor<T> assemble_input(const SourceBank<T>& bank, const std::vector<Tensor<T>>& fields) {
  const int n = bank.count();
  if (n < 1) throw DataError("assemble_input: empty bank");
  if (static_cast<int>(fields.size()) != n)
    throw DataError("assemble_input: field count differs from bank size");
  const int h = bank.height(), w = bank.width();
  for (const Tensor<T>& f : fields)
    if (f.rank() != 3 || f.dim(0) != 2 || f.dim(1) != h || f.dim(2) != w)
      throw DataError("assemble_input: field dimensions differ from bank");

  Tensor<T> out = Tensor<T>::zeros({5 * n, h, w});
  const int64_t hw = static_cast<int64_t>(h) * w;
  for (int i = 0; i < n; ++i)
    std::copy_n(bank.images[static_cast<size_t>(i)].data.begin(), 3 * hw,
                out.data.begin() + static_cast<int64_t>(3 * i) * hw);
  const T inv = T(1) / static_cast<T>(std::max(w, h));
  for (int i = 0; i < n; ++i) {
    const Tensor<T>& f = fields[static_cast<size_t>(i)];
    T* dst = out.data.data() + (static_cast<int64_t>(3 * n) + 2 * i) * hw;
    for (int64_t p = 0; p < 2 * hw; ++p) dst[p] = f[p] * inv;
  }
  return out;
}

template <typename T>
struct HeatmapWeights {
  Tensor<T> k;  // (H, W), entries in [floor, 1]
  double gamma = 0.95;
  double floor = 0.3;
};

// K(p) = max(gamma^B(p), floor) with B the distance to the nearest rounded
// target landmark. Rounding keeps K exactly 1 on landmark pixels.
template <typename T>
HeatmapWeights<T> heatmap_weights(const LandmarkSet& target, int w, int h, double gamma = 0.95,
                                  double floor = 0.3) {
  if (w <= 0 || h <= 0) throw DataError("heatmap_weights: non-positive dimensions");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DataError("heatmap_weights: gamma must be in (0, 1)");
  if (floor < 0.0 || floor > 1.0) throw DataError("heatmap_weights: floor must be in [0, 1]");
  std::array<Point2, kNumLandmarks> rounded;
  for (int j = 0; j < kNumLandmarks; ++j) {
    rounded[static_cast<size_t>(j)].x = static_cast<double>(std::lround(target.points()[static_cast<size_t>(j)].x));
    rounded[static_cast<size_t>(j)].y = static_cast<double>(std::lround(target.points()[static_cast<size_t>(j)].y));
  }
  HeatmapWeights<T> out;
  out.gamma = gamma;
  out.floor = floor;
  out.k = Tensor<T>::zeros({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (const Point2& r : rounded)
        best = std::min(best, std::hypot(static_cast<double>(x) - r.x, static_cast<double>(y) - r.y));
      out.k.at(y, x) = static_cast<T>(std::max(std::pow(gamma, best), floor));
    }
  return out;
}

enum class CropMode { kNoseTip, kEyeCorners };

namespace detail {

template <typename T>
T bilinear_sample(const Tensor<T>& img, int c, double sx, double sy) {
  const int h = img.dim(1), w = img.dim(2);
  sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
  sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = sx - x0, fy = sy - y0;
  const double v = (1.0 - fy) * ((1.0 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1)) +
                   fy * ((1.0 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1));
  return static_cast<T>(v);
}

}  // namespace detail

// Crops a landmark-centered square (side = 2 x farthest-landmark distance
// x 1.25 margin), resizes to out_size, and remaps the landmarks by the same
// affine transform.
template <typename T>
std::pair<Tensor<T>, LandmarkSet> crop_center(const Tensor<T>& image, const LandmarkSet& landmarks,
                                              CropMode mode, int out_size) {
  if (image.rank() != 3) throw DataError("crop_center: image must be (C, H, W)");
  if (out_size < 1) throw DataError("crop_center: out_size must be positive");
  const int h = image.dim(1), w = image.dim(2);
  Point2 center;
  if (mode == CropMode::kNoseTip) {
    center = landmarks.id(kNoseTipId);
  } else {
    const Point2& a = landmarks.id(kLeftEyeCornerId);
    const Point2& b = landmarks.id(kRightEyeCornerId);
    center = {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
  }
  double maxdist = 0.0;
  for (const Point2& p : landmarks.points())
    maxdist = std::max(maxdist, std::hypot(p.x - center.x, p.y - center.y));
  const double side = 2.0 * maxdist * 1.25;
  if (side < 1e-9) throw DataError("crop_center: degenerate landmark set");
  const double x0 = center.x - side / 2.0;
  const double y0 = center.y - side / 2.0;
  if (x0 >= w || y0 >= h || x0 + side <= 0.0 || y0 + side <= 0.0)
    throw DataError("crop_center: crop window outside image");

  // Corner-aligned affine so the center landmark maps to out_size/2 exactly
  // at every scale.
  const double scale = static_cast<double>(out_size) / side;
  Tensor<T> out = Tensor<T>::zeros({image.dim(0), out_size, out_size});
  for (int oy = 0; oy < out_size; ++oy)
    for (int ox = 0; ox < out_size; ++ox) {
      const double sx = x0 + ox / scale;
      const double sy = y0 + oy / scale;
      for (int c = 0; c < image.dim(0); ++c)
        out.at(c, oy, ox) = detail::bilinear_sample(image, c, sx, sy);
    }
  std::vector<Point2> remapped(kNumLandmarks);
  for (int j = 0; j < kNumLandmarks; ++j) {
    const Point2& p = landmarks.points()[static_cast<size_t>(j)];
    remapped[static_cast<size_t>(j)] = {(p.x - x0) * scale, (p.y - y0) * scale};
  }
  return {std::move(out), LandmarkSet(std::move(remapped))};
}

// JSON-lines landmark IO: one line per frame holding a JSON array of 68
// [x, y] pairs; landmark IDs are implicit by order (1..68).
inline std::vector<LandmarkSet> read_landmarks_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open landmark file: " + path);
  std::vector<LandmarkSet> sets;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_array())
      throw DataError(path + ":" + std::to_string(lineno) + ": expected a JSON array of [x, y] pairs");
    std::vector<Point2> pts;
    pts.reserve(rec.size());
    for (const auto& pair : rec) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number())
        throw DataError(path + ":" + std::to_string(lineno) + ": malformed landmark pair");
      pts.push_back({pair[0].get<double>(), pair[1].get<double>()});
    }
    try {
      sets.emplace_back(std::move(pts));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return sets;
}

inline void write_landmarks_jsonl(const std::string& path, const std::vector<LandmarkSet>& sets) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write landmark file: " + path);
  for (const LandmarkSet& l : sets) {
    nlohmann::json rec = nlohmann::json::array();
    for (const Point2& p : l.points()) rec.push_back({p.x, p.y});
    out << rec.dump() << "\n";
  }
}

}  // namespace fsyn
