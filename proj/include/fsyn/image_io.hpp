// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include <png.h>

#include "fsyn/tensor.hpp"

namespace fsyn {

// PNG -> planar (3, H, W) float tensor with values in [0, 255].
inline Tensor<float> read_png_rgb(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw DataError("cannot read PNG " + path + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("cannot decode PNG " + path + ": " + image.message);
  }
  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  Tensor<float> out({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(c, y, x) = static_cast<float>(buffer[(static_cast<size_t>(y) * w + x) * 3 + c]);
  return out;
}

// Planar (3, H, W) float tensor in [0, 255] -> PNG (values rounded, clamped).
inline void write_png_rgb(const std::string& path, const Tensor<float>& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw DataError("write_png_rgb: image must be (3, H, W)");
  const int h = img.dim(1), w = img.dim(2);
  std::vector<png_byte> buffer(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::round(img.at(c, y, x));
        buffer[(static_cast<size_t>(y) * w + x) * 3 + c] =
            static_cast<png_byte>(v < 0.f ? 0.f : (v > 255.f ? 255.f : v));
      }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw DataError("cannot write PNG " + path + ": " + image.message);
}

// Value-range adapters between the 8-bit file convention and the network's
// [-1, 1] convention.
inline Tensor<float> u8_to_signed(const Tensor<float>& img) {
  Tensor<float> out = img;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = out[i] / 127.5f - 1.f;
  return out;
}

inline Tensor<float> signed_to_u8(const Tensor<float>& img) {
  Tensor<float> out = img;
  for (int64_t i = 0; i < out.size(); ++i) {
    float v = (out[i] + 1.f) * 127.5f;
    out[i] = v < 0.f ? 0.f : (v > 255.f ? 255.f : v);
  }
  return out;
}

// Single-channel map in [0, 1] -> grayscale RGB in [0, 255]; diagnostics.
inline Tensor<float> gray_to_rgb_u8(const Tensor<float>& map) {
  if (map.rank() != 2 && !(map.rank() == 3 && map.dim(0) == 1))
    throw DataError("gray_to_rgb_u8: map must be (H, W) or (1, H, W)");
  const int h = map.rank() == 2 ? map.dim(0) : map.dim(1);
  const int w = map.rank() == 2 ? map.dim(1) : map.dim(2);
  Tensor<float> out({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float v = map[static_cast<int64_t>(y) * w + x] * 255.f;
      v = v < 0.f ? 0.f : (v > 255.f ? 255.f : v);
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = v;
    }
  return out;
}

}  // namespace fsyn
