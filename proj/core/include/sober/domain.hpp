#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace sober {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Bounds of one continuous coordinate.
struct ContinuousDim {
  double lower = 0.0;
  double upper = 1.0;
};

struct MixedPoint;

/// Description of a product search space: continuous boxes, categorical
/// dimensions with known class counts, and binary dimensions. A domain may
/// additionally be enumerable, in which case the full candidate list is known
/// a priori and samplers return it verbatim.
struct DomainSpec {
  std::vector<ContinuousDim> continuous;
  std::vector<int> categorical_classes;  // class count per categorical dim
  int binary = 0;                        // number of binary dims
  bool enumerable = false;
  std::vector<MixedPoint> candidates;    // populated iff enumerable

  int continuous_dims() const { return static_cast<int>(continuous.size()); }
  int categorical_dims() const { return static_cast<int>(categorical_classes.size()); }
  int binary_dims() const { return binary; }

  /// Dimension of the real embedding: continuous coordinates, one-hot
  /// categorical blocks, then binary bits as {0,1} coordinates.
  int embedding_dim() const;

  /// Throws std::invalid_argument when the description violates its
  /// invariants (at least one dimension, finite bounds with lower < upper).
  void validate() const;
};

/// One point of a mixed space.
struct MixedPoint {
  Vector continuous;          // size = domain.continuous_dims()
  std::vector<int> category;  // codes, one per categorical dim
  std::vector<int> bits;      // 0/1, one per binary dim

  bool operator==(const MixedPoint& other) const;
};

/// Checks a point against a domain; throws std::invalid_argument on mismatch
/// or out-of-range coordinates/codes/bits.
void validate_point(const DomainSpec& domain, const MixedPoint& point);

/// Real embedding of a point (continuous | one-hot categorical | bits).
Vector embed(const DomainSpec& domain, const MixedPoint& point);

/// Row-wise embedding of a point list into an (N x embedding_dim) matrix.
Matrix embed(const DomainSpec& domain, const std::vector<MixedPoint>& points);

/// Inverse of embed for points produced by embed (used by KDE resampling);
/// categorical blocks are decoded by argmax, bits by > 0.5 threshold,
/// continuous coordinates are clamped into bounds.
MixedPoint unembed(const DomainSpec& domain, const Vector& embedded);

}  // namespace sober
