#include "sober/domain.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sober {

int DomainSpec::embedding_dim() const {
  int d = continuous_dims();
  for (int classes : categorical_classes) d += classes;
  return d + binary;
}

void DomainSpec::validate() const {
  if (continuous.empty() && categorical_classes.empty() && binary == 0) {
    throw std::invalid_argument("DomainSpec: at least one dimension required");
  }
  for (const auto& dim : continuous) {
    if (!std::isfinite(dim.lower) || !std::isfinite(dim.upper) || dim.lower >= dim.upper) {
      throw std::invalid_argument("DomainSpec: continuous bounds must be finite with lower < upper");
    }
  }
  for (int classes : categorical_classes) {
    if (classes < 2) throw std::invalid_argument("DomainSpec: categorical dims need >= 2 classes");
  }
  if (binary < 0) throw std::invalid_argument("DomainSpec: negative binary dim count");
  if (enumerable && candidates.empty()) {
    throw std::invalid_argument("DomainSpec: enumerable domain without candidates");
  }
}

bool MixedPoint::operator==(const MixedPoint& other) const {
  if (continuous.size() != other.continuous.size()) return false;
  if (category != other.category || bits != other.bits) return false;
  for (Eigen::Index i = 0; i < continuous.size(); ++i) {
    if (continuous[i] != other.continuous[i]) return false;
  }
  return true;
}

void validate_point(const DomainSpec& domain, const MixedPoint& point) {
  if (point.continuous.size() != domain.continuous_dims()) {
    throw std::invalid_argument("MixedPoint: continuous dimension mismatch");
  }
  if (static_cast<int>(point.category.size()) != domain.categorical_dims()) {
    throw std::invalid_argument("MixedPoint: categorical dimension mismatch");
  }
  if (static_cast<int>(point.bits.size()) != domain.binary) {
    throw std::invalid_argument("MixedPoint: binary dimension mismatch");
  }
  for (int i = 0; i < domain.continuous_dims(); ++i) {
    const double x = point.continuous[i];
    if (!std::isfinite(x) || x < domain.continuous[i].lower - 1e-12 ||
        x > domain.continuous[i].upper + 1e-12) {
      throw std::invalid_argument("MixedPoint: continuous coordinate " + std::to_string(i) +
                                  " out of bounds");
    }
  }
  for (int i = 0; i < domain.categorical_dims(); ++i) {
    if (point.category[i] < 0 || point.category[i] >= domain.categorical_classes[i]) {
      throw std::invalid_argument("MixedPoint: categorical code out of range");
    }
  }
  for (int b : point.bits) {
    if (b != 0 && b != 1) throw std::invalid_argument("MixedPoint: bits must be 0 or 1");
  }
}

Vector embed(const DomainSpec& domain, const MixedPoint& point) {
  Vector out = Vector::Zero(domain.embedding_dim());
  int k = 0;
  for (int i = 0; i < domain.continuous_dims(); ++i) out[k++] = point.continuous[i];
  for (int i = 0; i < domain.categorical_dims(); ++i) {
    out[k + point.category[i]] = 1.0;
    k += domain.categorical_classes[i];
  }
  for (int i = 0; i < domain.binary; ++i) out[k++] = static_cast<double>(point.bits[i]);
  return out;
}

Matrix embed(const DomainSpec& domain, const std::vector<MixedPoint>& points) {
  Matrix out(static_cast<Eigen::Index>(points.size()), domain.embedding_dim());
  for (std::size_t i = 0; i < points.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = embed(domain, points[i]).transpose();
  return out;
}

MixedPoint unembed(const DomainSpec& domain, const Vector& embedded) {
  if (embedded.size() != domain.embedding_dim()) {
    throw std::invalid_argument("unembed: embedding dimension mismatch");
  }
  MixedPoint p;
  p.continuous.resize(domain.continuous_dims());
  int k = 0;
  for (int i = 0; i < domain.continuous_dims(); ++i) {
    p.continuous[i] = std::min(domain.continuous[i].upper, std::max(domain.continuous[i].lower, embedded[k]));
    ++k;
  }
  for (int classes : domain.categorical_classes) {
    int best = 0;
    double best_val = embedded[k];
    for (int c = 1; c < classes; ++c) {
      if (embedded[k + c] > best_val) {
        best_val = embedded[k + c];
        best = c;
      }
    }
    p.category.push_back(best);
    k += classes;
  }
  for (int i = 0; i < domain.binary; ++i) p.bits.push_back(embedded[k++] > 0.5 ? 1 : 0);
  return p;
}

}  // namespace sober
