#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sober/random.hpp"

using namespace sober;

TEST_CASE("seeded streams are reproducible") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.normal() == b.normal());
  }
}

TEST_CASE("uniform stays in range") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("normal moments are sane") {
  Rng rng(11);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sum_sq / n - 1.0) < 0.02);
}

TEST_CASE("categorical respects weights") {
  Rng rng(13);
  std::vector<double> weights{1.0, 3.0};
  int hits = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    if (rng.categorical(weights) == 1) ++hits;
  }
  CHECK(std::abs(hits / static_cast<double>(n) - 0.75) < 0.02);
}

TEST_CASE("categorical rejects bad input") {
  Rng rng(1);
  CHECK_THROWS_AS(rng.categorical({0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(rng.categorical({-1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}

TEST_CASE("shuffle is a permutation") {
  Rng rng(5);
  std::vector<std::size_t> items(50);
  std::iota(items.begin(), items.end(), 0);
  rng.shuffle(items);
  std::vector<std::size_t> sorted = items;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}
