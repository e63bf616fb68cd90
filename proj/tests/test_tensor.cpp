// Copyright (c) 2026 the facesynth authors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "fsyn/random.hpp"
#include "fsyn/tensor.hpp"

using fsyn::DataError;
using fsyn::RandomEngine;
using fsyn::Tensor;

TEST_CASE("tensor layout is row-major NCHW") {
  Tensor<float> t({2, 3, 4, 5});
  REQUIRE(t.size() == 2 * 3 * 4 * 5);
  t.at(1, 2, 3, 4) = 7.0f;
  REQUIRE(t[t.size() - 1] == 7.0f);
  t.at(0, 0, 0, 1) = 3.0f;
  REQUIRE(t[1] == 3.0f);

  Tensor<float> u({3, 4, 5});
  u.at(2, 3, 4) = 9.0f;
  REQUIRE(u[u.size() - 1] == 9.0f);
}

TEST_CASE("tensor factories and helpers") {
  auto z = Tensor<double>::zeros({2, 2});
  for (int64_t i = 0; i < z.size(); ++i) REQUIRE(z[i] == 0.0);
  auto f = Tensor<double>::full({2, 2}, 1.5);
  REQUIRE(f[3] == 1.5);
  auto s = Tensor<double>::scalar(4.0);
  REQUIRE(s.size() == 1);
  REQUIRE(s[0] == 4.0);

  auto c = f.cast<float>();
  REQUIRE(c[0] == 1.5f);

  Tensor<float> chw({3, 2, 2});
  auto b = chw.batched();
  REQUIRE(b.rank() == 4);
  REQUIRE(b.dim(0) == 1);

  REQUIRE(fsyn::shape_str({2, 3}) == "(2, 3)");
  Tensor<float> nan_t({2});
  nan_t[0] = std::numeric_limits<float>::quiet_NaN();
  REQUIRE_FALSE(nan_t.all_finite());
}

TEST_CASE("random engine is deterministic and serializable") {
  RandomEngine a(123), b(123);
  for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());
  for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == b.normal());

  // Serialize mid-stream, including the Box-Muller cache parity.
  RandomEngine c(9);
  c.normal();
  const std::string state = c.serialize();
  std::vector<double> expect;
  for (int i = 0; i < 50; ++i) expect.push_back(c.normal());
  RandomEngine d(1);
  d.deserialize(state);
  for (int i = 0; i < 50; ++i) REQUIRE(d.normal() == expect[static_cast<size_t>(i)]);
}

TEST_CASE("uniform draws live in the half-open unit interval") {
  RandomEngine rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("uniform_int covers its range") {
  RandomEngine rng(11);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const int v = rng.uniform_int(5);
    REQUIRE(v >= 0);
    REQUIRE(v < 5);
    ++counts[static_cast<size_t>(v)];
  }
  for (int c : counts) REQUIRE(c > 800);
  for (int i = 0; i < 100; ++i) REQUIRE(rng.uniform_int(1) == 0);
}

TEST_CASE("normal draws have sane moments") {
  RandomEngine rng(5);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.05);
  REQUIRE(std::abs(var - 1.0) < 0.05);
}
