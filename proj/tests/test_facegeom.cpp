// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fsyn/facegeom.hpp"
#include "fsyn/random.hpp"
#include "fsyn/synthetic.hpp"

using fsyn::DataError;
using fsyn::LandmarkSet;
using fsyn::Point2;
using fsyn::RandomEngine;
using fsyn::Tensor;

namespace {

LandmarkSet grid_landmarks(double ox = 0.0, double oy = 0.0) {
  std::vector<Point2> pts;
  for (int j = 0; j < 68; ++j)
    pts.push_back({ox + 2.0 + (j % 10) * 5.0, oy + 2.0 + (j / 10) * 5.0});
  return LandmarkSet(std::move(pts));
}

LandmarkSet with_point(LandmarkSet base, int id, Point2 p) {
  auto pts_arr = base.points();
  std::vector<Point2> pts(pts_arr.begin(), pts_arr.end());
  pts[static_cast<size_t>(id - 1)] = p;
  return LandmarkSet(std::move(pts));
}

Tensor<float> flat_frame(int h, int w, float v) {
  return Tensor<float>::full({3, h, w}, v);
}

}  // namespace

TEST_CASE("landmark sets hold exactly 68 finite points") {
  std::vector<Point2> few(10, Point2{0, 0});
  REQUIRE_THROWS_AS(LandmarkSet(few), DataError);
  std::vector<Point2> bad(68, Point2{0, 0});
  bad[3].x = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(LandmarkSet(bad), DataError);

  // Coordinates outside the image rectangle are legal.
  std::vector<Point2> outside(68, Point2{-50.0, 900.0});
  REQUIRE_NOTHROW(LandmarkSet(outside));

  LandmarkSet g = grid_landmarks();
  REQUIRE(g.id(1).x == 2.0);
  REQUIRE(g.id(68).y == 2.0 + 6 * 5.0);
  REQUIRE_THROWS_AS(g.id(0), DataError);
  REQUIRE_THROWS_AS(g.id(69), DataError);
}

TEST_CASE("mouth openness is the lip landmark distance") {
  LandmarkSet a = with_point(with_point(grid_landmarks(), 52, {100, 120}), 58, {100, 150});
  REQUIRE(fsyn::mouth_openness(a) == Catch::Approx(30.0).margin(1e-12));

  LandmarkSet b = with_point(with_point(grid_landmarks(), 52, {42, 17}), 58, {42, 17});
  REQUIRE(fsyn::mouth_openness(b) == 0.0);

  LandmarkSet c = with_point(with_point(grid_landmarks(), 52, {10, 10}), 58, {13, 14});
  REQUIRE(fsyn::mouth_openness(c) == Catch::Approx(5.0).margin(1e-12));
}

TEST_CASE("select_bank picks uniform openness ranks") {
  const int f = 10;
  std::vector<Tensor<float>> frames;
  std::vector<LandmarkSet> lms;
  // Openness k for frame k, shuffled storage order.
  const int order[f] = {7, 2, 9, 0, 4, 6, 1, 8, 3, 5};
  for (int i = 0; i < f; ++i) {
    const double open = order[i];
    frames.push_back(flat_frame(8, 8, static_cast<float>(order[i])));
    lms.push_back(with_point(with_point(grid_landmarks(), 52, {10, 10}), 58, {10, 10 + open}));
  }

  auto bank = fsyn::select_bank(frames, lms, 5);
  REQUIRE(bank.count() == 5);
  const double expect[5] = {0, 2, 4, 6, 9};
  for (int i = 0; i < 5; ++i) {
    REQUIRE(bank.openness[static_cast<size_t>(i)] == Catch::Approx(expect[i]).margin(1e-12));
    // The frame pixel payload tags which original frame was taken.
    REQUIRE(bank.images[static_cast<size_t>(i)][0] == Catch::Approx(expect[i]).margin(1e-6));
  }
  for (int i = 1; i < 5; ++i)
    REQUIRE(bank.openness[static_cast<size_t>(i)] >= bank.openness[static_cast<size_t>(i - 1)]);

  auto one = fsyn::select_bank(frames, lms, 1);
  REQUIRE(one.count() == 1);
  REQUIRE(one.openness[0] == 0.0);

  auto all = fsyn::select_bank(frames, lms, f);
  for (int i = 0; i < f; ++i) REQUIRE(all.openness[static_cast<size_t>(i)] == i);

  REQUIRE_THROWS_WITH(fsyn::select_bank(frames, lms, 11),
                      Catch::Matchers::ContainsSubstring("insufficient frames"));
}

TEST_CASE("select_bank breaks openness ties by original frame index") {
  std::vector<Tensor<float>> frames;
  std::vector<LandmarkSet> lms;
  for (int i = 0; i < 4; ++i) {
    frames.push_back(flat_frame(4, 4, static_cast<float>(i)));
    lms.push_back(grid_landmarks());  // identical openness everywhere
  }
  auto bank = fsyn::select_bank(frames, lms, 2);
  REQUIRE(bank.images[0][0] == 0.0f);
  REQUIRE(bank.images[1][0] == 3.0f);  // rank (2-1)*(4-1)/(2-1) = 3
}

TEST_CASE("difference_field places target-minus-source at rounded source pixels") {
  LandmarkSet src = grid_landmarks();
  LandmarkSet tgt = grid_landmarks(3.0, 4.0);
  auto field = fsyn::difference_field<float>(src, tgt, 64, 64);
  REQUIRE(field.dim(0) == 2);

  int nonzero = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (field.at(0, y, x) != 0.0f || field.at(1, y, x) != 0.0f) ++nonzero;
  REQUIRE(nonzero == 68);
  REQUIRE(field.at(0, 2, 2) == 3.0f);
  REQUIRE(field.at(1, 2, 2) == 4.0f);

  SECTION("identical sets give the zero map") {
    auto zero = fsyn::difference_field<float>(src, src, 64, 64);
    for (int64_t i = 0; i < zero.size(); ++i) REQUIRE(zero[i] == 0.0f);
  }

  SECTION("sources rounding outside the rectangle are skipped") {
    LandmarkSet off = with_point(src, 1, {-5.0, 3.0});
    auto f2 = fsyn::difference_field<float>(off, tgt, 64, 64);
    int nz = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (f2.at(0, y, x) != 0.0f || f2.at(1, y, x) != 0.0f) ++nz;
    REQUIRE(nz == 67);
  }

  SECTION("collisions resolve to the higher landmark index") {
    // Landmarks 1 and 2 round to the same pixel with different targets.
    LandmarkSet s2 = with_point(with_point(src, 1, {30.2, 30.2}), 2, {29.8, 29.9});
    LandmarkSet t2 = with_point(with_point(src, 1, {40.0, 40.0}), 2, {50.0, 60.0});
    auto f3 = fsyn::difference_field<float>(s2, t2, 64, 64);
    REQUIRE(f3.at(0, 30, 30) == Catch::Approx(50.0 - 29.8).margin(1e-5));
    REQUIRE(f3.at(1, 30, 30) == Catch::Approx(60.0 - 29.9).margin(1e-5));
  }

  SECTION("fractional source positions round to nearest pixel") {
    LandmarkSet s3 = with_point(src, 5, {10.6, 20.4});
    LandmarkSet t3 = with_point(src, 5, {15.6, 27.4});
    auto f4 = fsyn::difference_field<double>(s3, t3, 64, 64);
    REQUIRE(f4.at(0, 20, 11) == Catch::Approx(5.0).margin(1e-12));
    REQUIRE(f4.at(1, 20, 11) == Catch::Approx(7.0).margin(1e-12));
  }
}

TEST_CASE("assemble_input lays out image then field channels") {
  const int n = 2, h = 8, w = 8;
  fsyn::SourceBank<float> bank;
  for (int i = 0; i < n; ++i) {
    bank.images.push_back(flat_frame(h, w, 0.1f * (i + 1)));
    bank.landmarks.push_back(grid_landmarks());
    bank.openness.push_back(i);
  }
  std::vector<Tensor<float>> fields;
  for (int i = 0; i < n; ++i) {
    Tensor<float> f = Tensor<float>::zeros({2, h, w});
    f.at(0, 3, 4) = 4.0f * (i + 1);
    f.at(1, 3, 4) = -2.0f;
    fields.push_back(f);
  }
  auto in = fsyn::assemble_input(bank, fields);
  REQUIRE(in.dim(0) == 5 * n);
  REQUIRE(in.at(0, 0, 0) == 0.1f);
  REQUIRE(in.at(3, 0, 0) == 0.2f);
  // Field channels normalized by max(W, H).
  REQUIRE(in.at(6, 3, 4) == Catch::Approx(4.0 / 8.0).margin(1e-6));
  REQUIRE(in.at(7, 3, 4) == Catch::Approx(-2.0 / 8.0).margin(1e-6));
  REQUIRE(in.at(8, 3, 4) == Catch::Approx(8.0 / 8.0).margin(1e-6));
  REQUIRE(in.at(6, 0, 0) == 0.0f);

  std::vector<Tensor<float>> bad = fields;
  bad.pop_back();
  REQUIRE_THROWS_AS(fsyn::assemble_input(bank, bad), DataError);
}

TEST_CASE("heatmap weights decay with distance to the nearest landmark") {
  // One landmark only, far from the others' influence: park the rest far away.
  std::vector<Point2> pts(68, Point2{500.0, 500.0});
  pts[0] = {16.0, 16.0};
  LandmarkSet lm{pts};
  auto hw = fsyn::heatmap_weights<double>(lm, 64, 64, 0.95, 0.3);

  REQUIRE(hw.k.at(16, 16) == 1.0);
  REQUIRE(hw.k.at(16, 26) == Catch::Approx(std::pow(0.95, 10.0)).margin(1e-12));
  REQUIRE(std::pow(0.95, 10.0) == Catch::Approx(0.5987).margin(1e-4));
  REQUIRE(hw.k.at(16, 46) == 0.3);  // 0.95^30 ~ 0.2146 < floor

  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      REQUIRE(hw.k.at(y, x) >= 0.3);
      REQUIRE(hw.k.at(y, x) <= 1.0);
    }
  // Non-increasing along a ray away from the landmark.
  for (int x = 17; x < 40; ++x) REQUIRE(hw.k.at(16, x) <= hw.k.at(16, x - 1));

  SECTION("K is 1 exactly at every rounded landmark pixel") {
    RandomEngine rng(3);
    std::vector<Point2> rnd;
    for (int j = 0; j < 68; ++j) rnd.push_back({rng.uniform() * 63.0, rng.uniform() * 63.0});
    LandmarkSet lr{rnd};
    auto h2 = fsyn::heatmap_weights<double>(lr, 64, 64, 0.95, 0.3);
    for (const Point2& p : rnd)
      REQUIRE(h2.k.at(static_cast<int>(std::lround(p.y)), static_cast<int>(std::lround(p.x))) ==
              1.0);
  }

  SECTION("parameter validation") {
    REQUIRE_THROWS_AS(fsyn::heatmap_weights<double>(lm, 64, 64, 1.5, 0.3), DataError);
    REQUIRE_THROWS_AS(fsyn::heatmap_weights<double>(lm, 64, 64, 0.95, -0.1), DataError);
  }
}

TEST_CASE("crop_center crops a landmark-scaled square and remaps landmarks") {
  // Ramp image so resampling is checkable.
  const int h = 48, w = 48;
  Tensor<float> img({3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(c, y, x) = static_cast<float>(x + 0.25 * y + 10 * c);

  // Compact cluster so the window stays inside.
  std::vector<Point2> pts;
  for (int j = 0; j < 68; ++j)
    pts.push_back({24.0 + 6.0 * std::cos(j * 0.5), 22.0 + 6.0 * std::sin(j * 0.5)});
  pts[fsyn::kNoseTipId - 1] = {24.0, 22.0};
  LandmarkSet lm{pts};

  auto [crop, mapped] = fsyn::crop_center(img, lm, fsyn::CropMode::kNoseTip, 32);
  REQUIRE(crop.dim(0) == 3);
  REQUIRE(crop.dim(1) == 32);
  REQUIRE(crop.dim(2) == 32);

  // Nose tip lands at the center.
  REQUIRE(mapped.id(fsyn::kNoseTipId).x == Catch::Approx(16.0).margin(0.5));
  REQUIRE(mapped.id(fsyn::kNoseTipId).y == Catch::Approx(16.0).margin(0.5));

  // Affine round-trip: mapping a remapped landmark back hits the original.
  double maxdist = 0.0;
  for (const Point2& p : pts) maxdist = std::max(maxdist, std::hypot(p.x - 24.0, p.y - 22.0));
  const double side = 2.0 * maxdist * 1.25;
  const double scale = 32.0 / side;
  const double x0 = 24.0 - side / 2.0, y0 = 22.0 - side / 2.0;
  for (int j = 1; j <= 68; ++j) {
    REQUIRE(mapped.id(j).x == Catch::Approx((lm.id(j).x - x0) * scale).margin(1e-9));
    REQUIRE(mapped.id(j).y == Catch::Approx((lm.id(j).y - y0) * scale).margin(1e-9));
  }

  // Pixel content: interior sample matches direct bilinear interpolation of
  // the ramp, which is linear, so the value equals the ramp at the source.
  const double sx = x0 + 10 / scale, sy = y0 + 13 / scale;
  REQUIRE(crop.at(1, 13, 10) == Catch::Approx(sx + 0.25 * sy + 10).margin(1e-3));

  SECTION("eye-corner mode centers between the outer corners") {
    auto pts2 = pts;
    pts2[fsyn::kLeftEyeCornerId - 1] = {20.0, 20.0};
    pts2[fsyn::kRightEyeCornerId - 1] = {28.0, 21.0};
    LandmarkSet lm2{pts2};
    auto [c2, m2] = fsyn::crop_center(img, lm2, fsyn::CropMode::kEyeCorners, 32);
    const double mid_x = 24.0, mid_y = 20.5;
    double md = 0.0;
    for (const Point2& p : pts2) md = std::max(md, std::hypot(p.x - mid_x, p.y - mid_y));
    const double sc = 32.0 / (2.0 * md * 1.25);
    REQUIRE(m2.id(fsyn::kLeftEyeCornerId).x ==
            Catch::Approx((20.0 - (mid_x - 32.0 / sc / 2.0)) * sc).margin(1e-9));
  }

  SECTION("window fully outside the image is an error") {
    std::vector<Point2> far;
    for (int j = 0; j < 68; ++j) far.push_back({500.0 + (j % 8), 500.0 + (j / 8)});
    REQUIRE_THROWS_AS(fsyn::crop_center(img, LandmarkSet{far}, fsyn::CropMode::kNoseTip, 32),
                      DataError);
  }

  SECTION("degenerate landmark cluster is an error") {
    std::vector<Point2> same(68, Point2{24.0, 24.0});
    REQUIRE_THROWS_AS(fsyn::crop_center(img, LandmarkSet{same}, fsyn::CropMode::kNoseTip, 32),
                      DataError);
  }
}

TEST_CASE("landmark JSONL round-trips and reports parse errors with locations") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "fsyn_facegeom_test";
  fs::create_directories(dir);
  const std::string path = (dir / "lm.jsonl").string();

  std::vector<LandmarkSet> sets = {grid_landmarks(), grid_landmarks(1.5, -2.25)};
  fsyn::write_landmarks_jsonl(path, sets);
  auto back = fsyn::read_landmarks_jsonl(path);
  REQUIRE(back.size() == 2);
  for (int j = 1; j <= 68; ++j) {
    REQUIRE(back[1].id(j).x == Catch::Approx(sets[1].id(j).x).margin(1e-9));
    REQUIRE(back[1].id(j).y == Catch::Approx(sets[1].id(j).y).margin(1e-9));
  }

  const std::string bad = (dir / "bad.jsonl").string();
  {
    std::ofstream out(bad);
    out << "[[1,2],[3,4]]\n";  // wrong count
  }
  REQUIRE_THROWS_WITH(fsyn::read_landmarks_jsonl(bad),
                      Catch::Matchers::ContainsSubstring("bad.jsonl:1"));
  {
    std::ofstream out(bad);
    out << "not json\n";
  }
  REQUIRE_THROWS_AS(fsyn::read_landmarks_jsonl(bad), DataError);
  REQUIRE_THROWS_AS(fsyn::read_landmarks_jsonl((dir / "missing.jsonl").string()), DataError);
}

TEST_CASE("synthetic faces expose controllable mouth openness") {
  auto [img, lm] = fsyn::render_face(64, fsyn::FaceParams{});
  REQUIRE(img.dim(0) == 3);
  REQUIRE(img.dim(1) == 64);
  REQUIRE(img.all_finite());
  for (int64_t i = 0; i < img.size(); ++i) {
    REQUIRE(img[i] >= -1.0f);
    REQUIRE(img[i] <= 1.0f);
  }

  fsyn::FaceParams p;
  p.mouth_open = 0.14;
  auto [img2, lm2] = fsyn::render_face(64, p);
  REQUIRE(fsyn::mouth_openness(lm2) == Catch::Approx(0.14 * 64).margin(1e-6));

  // Landmarks fall inside the frame for default geometry.
  for (const Point2& pt : lm2.points()) {
    REQUIRE(pt.x >= 0.0);
    REQUIRE(pt.x <= 63.0);
    REQUIRE(pt.y >= 0.0);
    REQUIRE(pt.y <= 63.0);
  }

  auto clip_a = fsyn::synthetic_clip(64, 12, 7);
  auto clip_b = fsyn::synthetic_clip(64, 12, 7);
  REQUIRE(clip_a.frames.size() == 12);
  REQUIRE(clip_a.landmarks.size() == 12);
  for (size_t i = 0; i < clip_a.frames.size(); ++i)
    REQUIRE(fsyn::max_abs_diff(clip_a.frames[i], clip_b.frames[i]) == 0.0f);
  // Mouth openness actually varies across the clip.
  double lo = 1e9, hi = -1e9;
  for (const auto& l : clip_a.landmarks) {
    lo = std::min(lo, fsyn::mouth_openness(l));
    hi = std::max(hi, fsyn::mouth_openness(l));
  }
  REQUIRE(hi - lo > 2.0);
}
