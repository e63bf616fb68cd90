// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "fsyn/facegeom.hpp"
#include "fsyn/image_io.hpp"
#include "fsyn/netarch.hpp"
#include "fsyn/tensor.hpp"
#include "fsyn/trainer.hpp"

namespace fsyn {

enum class StreamMode { kMerged, kAppearanceOnly, kWarpedOnly };

struct VariantSpec {
  std::string name;
  int bank_limit = 0;  // 0 keeps the full bank
  StreamMode mode = StreamMode::kMerged;
};

inline VariantSpec parse_variant(const std::string& name) {
  if (name == "1B") return {name, 1, StreamMode::kMerged};
  if (name == "3B") return {name, 3, StreamMode::kMerged};
  if (name == "5B") return {name, 5, StreamMode::kMerged};
  if (name == "A") return {name, 0, StreamMode::kAppearanceOnly};
  if (name == "W") return {name, 0, StreamMode::kWarpedOnly};
  if (name == "AW") return {name, 0, StreamMode::kMerged};
  throw DataError("unknown variant: " + name);
}

// Keeps the first `limit` bank entries; the bank is stored in ascending
// mouth-openness order, so this is the openness-order prefix.
template <typename T>
SourceBank<T> truncate_bank(const SourceBank<T>& bank, int limit) {
  if (limit <= 0 || limit == bank.count()) return bank;
  if (limit > bank.count())
    throw DataError("variant needs a bank of at least " + std::to_string(limit) + " images, have " +
                    std::to_string(bank.count()));
  SourceBank<T> out;
  out.images.assign(bank.images.begin(), bank.images.begin() + limit);
  out.landmarks.assign(bank.landmarks.begin(), bank.landmarks.begin() + limit);
  out.openness.assign(bank.openness.begin(), bank.openness.begin() + limit);
  return out;
}

template <typename T>
struct SynthFrame {
  Tensor<T> output;      // (3, H, W) selected by the stream mode
  Tensor<T> appearance;  // (3, H, W)
  Tensor<T> warped;      // (3, H, W)
  Tensor<T> merge_mask;  // (1, H, W)
  Tensor<T> masks;       // (N, H, W)
  Tensor<T> fields_px;   // (2N, H, W) displacements in pixels
};

template <typename T>
SynthFrame<T> synthesize_frame(Generator<T>& gen, const SourceBank<T>& bank,
                               const LandmarkSet& target, T margin,
                               StreamMode mode = StreamMode::kMerged) {
  if (gen.bank_size() != bank.count())
    throw DataError("checkpoint expects a bank of " + std::to_string(gen.bank_size()) +
                    " images but got " + std::to_string(bank.count()));
  std::vector<Tensor<T>> fields;
  for (int i = 0; i < bank.count(); ++i)
    fields.push_back(difference_field<T>(bank.landmarks[static_cast<size_t>(i)], target,
                                         bank.width(), bank.height()));
  Graph<T> g;
  g.grad_enabled = false;
  Var input = g.constant(assemble_input(bank, fields).batched());
  std::vector<Var> bank_vars;
  for (const Tensor<T>& img : bank.images) bank_vars.push_back(g.constant(img.batched()));
  TwoStreamOut<T> ts = two_stream_forward(g, gen, input, bank_vars, margin, false);

  SynthFrame<T> frame;
  frame.appearance = detail::batch_slice(g.val(ts.heads.appearance), 0);
  frame.warped = detail::batch_slice(g.val(ts.warped), 0);
  frame.merge_mask = detail::batch_slice(g.val(ts.heads.merge_mask), 0);
  frame.masks = detail::batch_slice(g.val(ts.heads.masks), 0);
  frame.fields_px = detail::batch_slice(g.val(ts.fields_px), 0);
  switch (mode) {
    case StreamMode::kAppearanceOnly: frame.output = frame.appearance; break;
    case StreamMode::kWarpedOnly: frame.output = frame.warped; break;
    case StreamMode::kMerged: frame.output = detail::batch_slice(g.val(ts.output), 0); break;
  }
  return frame;
}

template <typename T, typename Fn>
void synthesize_sequence(Generator<T>& gen, const SourceBank<T>& bank,
                         const std::vector<LandmarkSet>& targets, T margin, StreamMode mode,
                         Fn&& per_frame) {
  for (size_t i = 0; i < targets.size(); ++i)
    per_frame(static_cast<int>(i), synthesize_frame(gen, bank, targets[i], margin, mode));
}

inline std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

// Bank directory layout: bank_000.png .. bank_NNN.png in openness order,
// landmarks.jsonl with one record per image, manifest.json with the count.
template <typename T>
void write_bank_dir(const std::string& dir, const SourceBank<T>& bank) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (int i = 0; i < bank.count(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "bank_%03d.png", i);
    write_png_rgb((fs::path(dir) / buf).string(),
                  signed_to_u8(bank.images[static_cast<size_t>(i)].template cast<float>()));
  }
  write_landmarks_jsonl((fs::path(dir) / "landmarks.jsonl").string(), bank.landmarks);
  nlohmann::json manifest;
  manifest["n"] = bank.count();
  manifest["height"] = bank.height();
  manifest["width"] = bank.width();
  manifest["openness"] = bank.openness;
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw DataError("cannot write bank manifest under " + dir);
  out << manifest.dump(2) << '\n';
}

inline SourceBank<float> read_bank_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw DataError("bank directory lacks manifest.json: " + dir);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(mpath.string() + ": " + e.what());
  }
  const int n = manifest.value("n", 0);
  if (n < 1) throw DataError(mpath.string() + ": invalid bank size");
  SourceBank<float> bank;
  for (int i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "bank_%03d.png", i);
    bank.images.push_back(u8_to_signed(read_png_rgb((fs::path(dir) / buf).string())));
  }
  bank.landmarks = read_landmarks_jsonl((fs::path(dir) / "landmarks.jsonl").string());
  if (static_cast<int>(bank.landmarks.size()) != n)
    throw DataError(dir + ": landmark record count does not match bank size");
  for (const LandmarkSet& lm : bank.landmarks) bank.openness.push_back(mouth_openness(lm));
  for (int i = 1; i < n; ++i)
    if (bank.openness[static_cast<size_t>(i)] < bank.openness[static_cast<size_t>(i - 1)])
      throw DataError(dir + ": bank images are not in ascending mouth-openness order");
  for (const Tensor<float>& img : bank.images)
    if (img.dim(1) != bank.images[0].dim(1) || img.dim(2) != bank.images[0].dim(2))
      throw DataError(dir + ": bank images differ in size");
  return bank;
}

// Output frame plus its diagnostic side-cars, all 8-bit PNG.
template <typename T>
void write_frame_outputs(const std::string& dir, int index, const SynthFrame<T>& frame, T margin,
                         bool diagnostics) {
  namespace fs = std::filesystem;
  const std::string stem = frame_name(index);
  write_png_rgb((fs::path(dir) / (stem + ".png")).string(),
                signed_to_u8(frame.output.template cast<float>()));
  if (!diagnostics) return;
  write_png_rgb((fs::path(dir) / (stem + "_appearance.png")).string(),
                signed_to_u8(frame.appearance.template cast<float>()));
  write_png_rgb((fs::path(dir) / (stem + "_warped.png")).string(),
                signed_to_u8(frame.warped.template cast<float>()));
  write_png_rgb((fs::path(dir) / (stem + "_merge.png")).string(),
                gray_to_rgb_u8(frame.merge_mask.template cast<float>()));
  const Tensor<float> masks_f = frame.masks.template cast<float>();
  const int h = masks_f.dim(1), w = masks_f.dim(2);
  for (int k = 0; k < masks_f.dim(0); ++k) {
    Tensor<float> mask({h, w});
    std::copy_n(masks_f.ptr() + static_cast<int64_t>(k) * h * w, mask.size(), mask.ptr());
    char buf[32];
    std::snprintf(buf, sizeof buf, "_mask_%02d.png", k);
    write_png_rgb((fs::path(dir) / (stem + buf)).string(), gray_to_rgb_u8(mask));
  }
  // Displacements render as red/green offsets around mid-gray.
  const T denom = margin > T(0) ? T(2) * margin : T(1);
  for (int k = 0; k * 2 < frame.fields_px.dim(0); ++k) {
    Tensor<float> rgb({3, h, w});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const T dx = frame.fields_px.at(2 * k, y, x);
        const T dy = frame.fields_px.at(2 * k + 1, y, x);
        rgb.at(0, y, x) = static_cast<float>(255.0 * (0.5 + static_cast<double>(dx / denom)));
        rgb.at(1, y, x) = static_cast<float>(255.0 * (0.5 + static_cast<double>(dy / denom)));
        rgb.at(2, y, x) = 127.5f;
      }
    char buf[32];
    std::snprintf(buf, sizeof buf, "_field_%02d.png", k);
    write_png_rgb((fs::path(dir) / (stem + buf)).string(), rgb);
  }
}

}  // namespace fsyn
