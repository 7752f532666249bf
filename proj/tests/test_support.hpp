#pragma once

// shared builders for the test suites

#include <vector>

#include "sober/measures.hpp"
#include "sober/random.hpp"

namespace sober::testing {

inline DomainSpec box_domain(int dims, double lo = 0.0, double hi = 1.0) {
  DomainSpec domain;
  for (int i = 0; i < dims; ++i) domain.continuous.push_back({lo, hi});
  return domain;
}

inline MixedPoint continuous_point(const Vector& x) {
  MixedPoint p;
  p.continuous = x;
  return p;
}

inline MixedPoint bit_point(const std::vector<int>& bits) {
  MixedPoint p;
  p.bits = bits;
  p.continuous = Vector(0);
  return p;
}

/// n uniform points in the domain box with the given weights (uniform when
/// weights is empty).
inline EmpiricalMeasure random_box_measure(const DomainSpec& domain, int n, std::uint64_t seed,
                                           Vector weights = Vector()) {
  Rng rng(seed);
  std::vector<MixedPoint> points;
  for (int i = 0; i < n; ++i) {
    MixedPoint p;
    p.continuous.resize(domain.continuous_dims());
    for (int k = 0; k < domain.continuous_dims(); ++k) {
      p.continuous[k] = rng.uniform(domain.continuous[k].lower, domain.continuous[k].upper);
    }
    points.push_back(std::move(p));
  }
  if (weights.size() == 0) weights = Vector::Constant(n, 1.0 / n);
  return make_measure(domain, std::move(points), weights);
}

/// Random normalized weight vector.
inline Vector random_weights(int n, std::uint64_t seed) {
  Rng rng(seed);
  Vector w(n);
  for (int i = 0; i < n; ++i) w[i] = rng.uniform() + 1e-3;
  return w / w.sum();
}

}  // namespace sober::testing
