// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsyn/tensor.hpp"

namespace fsyn {

// Versioned container of named float32 tensors plus a JSON manifest.
// Layout: magic, u32 version, u32 manifest length, manifest bytes, u64
// tensor count, then per tensor: u32 name length, name, u32 rank, u32 dims,
// raw little-endian float32 data.
struct TensorStore {
  static constexpr char kMagic[8] = {'F', 'S', 'Y', 'N', 'C', 'K', 'P', 'T'};
  static constexpr uint32_t kVersion = 1;

  nlohmann::json manifest;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }

  void add(const std::string& name, Tensor<float> t) { tensors.emplace_back(name, std::move(t)); }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    write_u32(out, kVersion);
    const std::string mani = manifest.dump();
    write_u32(out, static_cast<uint32_t>(mani.size()));
    out.write(mani.data(), static_cast<std::streamsize>(mani.size()));
    write_u64(out, tensors.size());
    for (const auto& [name, t] : tensors) {
      write_u32(out, static_cast<uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(out, static_cast<uint32_t>(t.rank()));
      for (int d = 0; d < t.rank(); ++d) write_u32(out, static_cast<uint32_t>(t.dim(d)));
      out.write(reinterpret_cast<const char*>(t.ptr()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!out) throw DataError("short write on checkpoint: " + path);
  }

  static TensorStore load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
      throw DataError("not a checkpoint file: " + path);
    const uint32_t version = read_u32(in, path);
    if (version != kVersion)
      throw DataError("checkpoint version mismatch in " + path + ": found " +
                      std::to_string(version) + ", expected " + std::to_string(kVersion));
    const uint32_t mlen = read_u32(in, path);
    std::string mani(mlen, '\0');
    in.read(mani.data(), mlen);
    if (!in) throw DataError("corrupt checkpoint manifest: " + path);
    TensorStore store;
    store.manifest = nlohmann::json::parse(mani, nullptr, false);
    if (store.manifest.is_discarded()) throw DataError("corrupt checkpoint manifest: " + path);
    const uint64_t count = read_u64(in, path);
    for (uint64_t i = 0; i < count; ++i) {
      const uint32_t nlen = read_u32(in, path);
      std::string name(nlen, '\0');
      in.read(name.data(), nlen);
      const uint32_t rank = read_u32(in, path);
      if (!in || rank > 8) throw DataError("corrupt checkpoint tensor header: " + path);
      std::vector<int> shape(rank);
      for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(read_u32(in, path));
      Tensor<float> t(shape);
      in.read(reinterpret_cast<char*>(t.ptr()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
      if (!in) throw DataError("corrupt checkpoint tensor data: " + path);
      store.tensors.emplace_back(std::move(name), std::move(t));
    }
    return store;
  }

 private:
  static void write_u32(std::ofstream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  static void write_u64(std::ofstream& out, uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
  }
  static uint32_t read_u32(std::ifstream& in, const std::string& path) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw DataError("corrupt checkpoint: " + path);
    return v;
  }
  static uint64_t read_u64(std::ifstream& in, const std::string& path) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw DataError("corrupt checkpoint: " + path);
    return v;
  }
};

}  // namespace fsyn
