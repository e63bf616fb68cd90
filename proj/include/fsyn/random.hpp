// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fsyn {

// mt19937 plus self-contained distributions. std:: distributions keep hidden
// state with unspecified algorithms, which would break bitwise checkpoint
// resume; everything here serializes exactly.
class RandomEngine {
 public:
  explicit RandomEngine(uint64_t seed = 0) : gen_(static_cast<uint32_t>(seed)) {}

  uint32_t next_u32() { return gen_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    uint64_t hi = gen_() >> 5;  // 27 bits
    uint64_t lo = gen_() >> 6;  // 26 bits
    return static_cast<double>((hi << 26) | lo) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925287 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n), rejection sampled (no modulo bias).
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    uint32_t un = static_cast<uint32_t>(n);
    uint32_t bound = UINT32_MAX - UINT32_MAX % un;
    uint32_t x;
    do {
      x = gen_();
    } while (x >= bound);
    return static_cast<int>(x % un);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << gen_ << ' ' << (has_cached_ ? 1 : 0) << ' ' << std::hexfloat << cached_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    int flag = 0;
    is >> gen_ >> flag;
    // hexfloat round-trips exactly; istream >> double rejects the 0x prefix
    // on some libstdc++ versions, so parse it manually.
    std::string tok;
    is >> tok;
    cached_ = tok.empty() ? 0.0 : std::strtod(tok.c_str(), nullptr);
    has_cached_ = flag != 0;
    if (is.fail()) throw std::runtime_error("RandomEngine: corrupt serialized state");
  }

 private:
  std::mt19937 gen_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace fsyn
