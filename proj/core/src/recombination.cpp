#include "sober/recombination.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sober/random.hpp"

namespace sober {

namespace {

constexpr double kWeightFloor = 1e-12;

/// One Carathéodory elimination pass on a small system. A is (r x m) with the
/// mass row included, w the m current weights (>= 0). Null-space directions of
/// A are walked to a weight-zeroing endpoint one at a time; after each
/// elimination the remaining basis vectors are pivoted to keep the dead
/// coordinate untouched. Returns the number of eliminated columns.
int eliminate_pass(const Matrix& a, Vector& w, const Vector* alpha) {
  const Eigen::Index m = a.cols();
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double tol = std::max(a.rows(), a.cols()) * 1e-14 * (sv.size() > 0 ? sv[0] : 0.0);
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv[rank] > tol) ++rank;
  const Eigen::Index null_dim = m - rank;
  if (null_dim <= 0) return 0;

  Matrix basis = svd.matrixV().rightCols(null_dim);
  std::vector<bool> alive(static_cast<std::size_t>(m), true);
  int eliminated = 0;

  for (Eigen::Index used = 0; used < null_dim; ++used) {
    // pick the widest remaining direction for pivoting stability
    Eigen::Index best_col = -1;
    double best_norm = 1e-10;
    for (Eigen::Index c = used; c < null_dim; ++c) {
      const double norm = basis.col(c).norm();
      if (norm > best_norm) {
        best_norm = norm;
        best_col = c;
      }
    }
    if (best_col < 0) break;
    basis.col(used).swap(basis.col(best_col));
    Vector v = basis.col(used) / basis.col(used).norm();

    const double vmax = v.cwiseAbs().maxCoeff();
    const double entry_tol = 1e-13 * vmax;

    double t_pos = std::numeric_limits<double>::infinity();
    double t_neg = std::numeric_limits<double>::infinity();
    Eigen::Index j_pos = -1, j_neg = -1;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!alive[static_cast<std::size_t>(j)]) continue;
      if (v[j] > entry_tol) {
        const double t = w[j] / v[j];
        if (t < t_pos) {
          t_pos = t;
          j_pos = j;
        }
      } else if (v[j] < -entry_tol) {
        const double t = w[j] / (-v[j]);
        if (t < t_neg) {
          t_neg = t;
          j_neg = j;
        }
      }
    }
    if (j_pos < 0 && j_neg < 0) continue;  // direction does not touch live coordinates

    // w(t) = w - t v preserves A w for any t; both endpoints are feasible.
    bool go_positive;
    if (j_pos < 0) {
      go_positive = false;
    } else if (j_neg < 0) {
      go_positive = true;
    } else if (alpha != nullptr) {
      double dv = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (alive[static_cast<std::size_t>(j)]) dv += (*alpha)[j] * v[j];
      }
      // objective after +endpoint: obj - t_pos dv; after -endpoint: obj + t_neg dv
      go_positive = -t_pos * dv >= t_neg * dv;
    } else {
      go_positive = true;
    }

    const double t = go_positive ? t_pos : -t_neg;
    const Eigen::Index dead = go_positive ? j_pos : j_neg;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!alive[static_cast<std::size_t>(j)]) continue;
      w[j] -= t * v[j];
      if (w[j] < 0.0) w[j] = 0.0;  // round-off
    }
    w[dead] = 0.0;
    alive[static_cast<std::size_t>(dead)] = false;
    ++eliminated;

    // Gauss step: zero the dead coordinate in the unused directions so they
    // remain null vectors of the reduced system.
    const double pivot = v[dead];
    if (std::abs(pivot) > 0.0) {
      for (Eigen::Index c = used + 1; c < null_dim; ++c) {
        const double factor = basis(dead, c) / pivot;
        if (factor != 0.0) basis.col(c) -= factor * v;
      }
    }
  }
  return eliminated;
}

/// Reduces (A, w) until no null directions remain; support ends at most at
/// rank(A) columns.
void eliminate_to_rank(const Matrix& a, Vector& w, const Vector* alpha) {
  for (int guard = 0; guard < 64; ++guard) {
    std::vector<Eigen::Index> live;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      if (w[j] > 0.0) live.push_back(j);
    }
    if (live.size() <= 1) return;
    Matrix a_live(a.rows(), static_cast<Eigen::Index>(live.size()));
    Vector w_live(static_cast<Eigen::Index>(live.size()));
    Vector alpha_live;
    if (alpha) alpha_live.resize(static_cast<Eigen::Index>(live.size()));
    for (std::size_t k = 0; k < live.size(); ++k) {
      a_live.col(static_cast<Eigen::Index>(k)) = a.col(live[k]);
      w_live[static_cast<Eigen::Index>(k)] = w[live[k]];
      if (alpha) alpha_live[static_cast<Eigen::Index>(k)] = (*alpha)[live[k]];
    }
    const int removed = eliminate_pass(a_live, w_live, alpha ? &alpha_live : nullptr);
    for (std::size_t k = 0; k < live.size(); ++k) w[live[k]] = w_live[static_cast<Eigen::Index>(k)];
    if (removed == 0) return;
  }
}

}  // namespace

void BatchSelection::validate() const {
  if (indices.empty()) throw std::invalid_argument("BatchSelection: empty batch");
  std::vector<std::size_t> sorted = indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("BatchSelection: duplicate indices");
  }
  if ((weights.array() < -kWeightFloor).any()) {
    throw std::invalid_argument("BatchSelection: negative weight");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("BatchSelection: weights must sum to 1");
  }
}

RecombineResult recombine(const Vector& weights, const Matrix& test_fns, std::uint64_t seed,
                          const Vector* objective) {
  const Eigen::Index n_points = weights.size();
  if (n_points == 0) throw std::invalid_argument("recombine: empty measure");
  if (test_fns.cols() != 0 && test_fns.cols() != n_points) {
    throw std::invalid_argument("recombine: test function matrix width mismatch");
  }
  if (!test_fns.allFinite()) throw std::invalid_argument("recombine: non-finite test functions");
  if (objective && objective->size() != n_points) {
    throw std::invalid_argument("recombine: objective length mismatch");
  }
  const Eigen::Index n_rows = test_fns.rows() + 1;  // moments plus total mass
  const Eigen::Index target = n_rows;               // at most k + 1 survivors

  std::vector<std::size_t> support;
  for (Eigen::Index i = 0; i < n_points; ++i) {
    if (weights[i] > 0.0) support.push_back(static_cast<std::size_t>(i));
  }
  if (support.empty()) throw std::invalid_argument("recombine: all weights zero");

  Vector w = weights;

  Rng rng(derive_seed(seed, 0x7ec0));
  rng.shuffle(support);

  // Divide and conquer: halve the support until a leaf fits in one system.
  while (static_cast<Eigen::Index>(support.size()) > 2 * target) {
    const Eigen::Index n_blocks = 2 * target;
    const std::size_t count = support.size();
    const std::size_t block_size = (count + static_cast<std::size_t>(n_blocks) - 1) /
                                   static_cast<std::size_t>(n_blocks);
    std::vector<std::vector<std::size_t>> blocks;
    for (std::size_t start = 0; start < count; start += block_size) {
      const std::size_t stop = std::min(count, start + block_size);
      blocks.emplace_back(support.begin() + static_cast<std::ptrdiff_t>(start),
                          support.begin() + static_cast<std::ptrdiff_t>(stop));
    }

    const Eigen::Index b = static_cast<Eigen::Index>(blocks.size());
    Matrix a(n_rows, b);
    Vector block_mass(b);
    Vector block_alpha = objective ? Vector(b) : Vector();
    for (Eigen::Index col = 0; col < b; ++col) {
      Vector moment = Vector::Zero(n_rows);
      double mass = 0.0;
      double alpha_acc = 0.0;
      for (std::size_t idx : blocks[static_cast<std::size_t>(col)]) {
        const double wi = w[static_cast<Eigen::Index>(idx)];
        mass += wi;
        moment[0] += wi;
        for (Eigen::Index r = 1; r < n_rows; ++r) {
          moment[r] += wi * test_fns(r - 1, static_cast<Eigen::Index>(idx));
        }
        if (objective) alpha_acc += wi * (*objective)[static_cast<Eigen::Index>(idx)];
      }
      block_mass[col] = mass;
      if (mass > 0.0) {
        a.col(col) = moment / mass;  // block centre of moment
        if (objective) block_alpha[col] = alpha_acc / mass;
      } else {
        a.col(col).setZero();
        if (objective) block_alpha[col] = 0.0;
      }
    }

    Vector new_mass = block_mass;
    eliminate_to_rank(a, new_mass, objective ? &block_alpha : nullptr);

    std::vector<std::size_t> next_support;
    for (Eigen::Index col = 0; col < b; ++col) {
      const auto& block = blocks[static_cast<std::size_t>(col)];
      if (new_mass[col] <= 0.0 || block_mass[col] <= 0.0) {
        for (std::size_t idx : block) w[static_cast<Eigen::Index>(idx)] = 0.0;
        continue;
      }
      const double scale = new_mass[col] / block_mass[col];
      for (std::size_t idx : block) {
        w[static_cast<Eigen::Index>(idx)] *= scale;
        if (w[static_cast<Eigen::Index>(idx)] > 0.0) next_support.push_back(idx);
      }
    }
    support = std::move(next_support);
  }

  // Leaf: direct elimination over the remaining points.
  {
    const Eigen::Index m = static_cast<Eigen::Index>(support.size());
    Matrix a(n_rows, m);
    Vector w_leaf(m);
    Vector alpha_leaf = objective ? Vector(m) : Vector();
    for (Eigen::Index col = 0; col < m; ++col) {
      const Eigen::Index idx = static_cast<Eigen::Index>(support[static_cast<std::size_t>(col)]);
      a(0, col) = 1.0;
      for (Eigen::Index r = 1; r < n_rows; ++r) a(r, col) = test_fns(r - 1, idx);
      w_leaf[col] = w[idx];
      if (objective) alpha_leaf[col] = (*objective)[idx];
    }
    eliminate_to_rank(a, w_leaf, objective ? &alpha_leaf : nullptr);
    for (Eigen::Index col = 0; col < m; ++col) {
      w[static_cast<Eigen::Index>(support[static_cast<std::size_t>(col)])] = w_leaf[col];
    }
  }

  RecombineResult result;
  for (Eigen::Index i = 0; i < n_points; ++i) {
    if (w[i] > 0.0) {
      result.indices.push_back(static_cast<std::size_t>(i));
    }
  }
  if (static_cast<Eigen::Index>(result.indices.size()) > target) {
    throw std::logic_error("recombine: elimination left more than k + 1 points");
  }
  result.weights.resize(static_cast<Eigen::Index>(result.indices.size()));
  for (std::size_t k = 0; k < result.indices.size(); ++k) {
    result.weights[static_cast<Eigen::Index>(k)] = w[static_cast<Eigen::Index>(result.indices[k])];
  }
  return result;
}

RecombineResult recombine(const EmpiricalMeasure& measure, const Matrix& test_fns,
                          std::uint64_t seed) {
  measure.validate();
  return recombine(measure.weights, test_fns, seed, nullptr);
}

double wce_estimate(const CovarianceOp& kernel, const Matrix& batch_embedded,
                    const Vector& batch_weights, const EmpiricalMeasure& measure, bool skip_const) {
  const Matrix k_bb = kernel.cross(batch_embedded, batch_embedded);
  const Matrix k_br = kernel.cross(batch_embedded, measure.embedded);
  double value = batch_weights.dot(k_bb * batch_weights) -
                 2.0 * batch_weights.dot(k_br * measure.weights);
  if (!skip_const) {
    // blocked so the N x N Gram never materializes at once
    const Eigen::Index n = measure.embedded.rows();
    const Eigen::Index chunk = 1024;
    double self = 0.0;
    for (Eigen::Index start = 0; start < n; start += chunk) {
      const Eigen::Index rows = std::min(chunk, n - start);
      const Matrix k_rr = kernel.cross(measure.embedded.middleRows(start, rows), measure.embedded);
      self += measure.weights.segment(start, rows).dot(k_rr * measure.weights);
    }
    value += self;
  }
  return value;
}

double wce_estimate(const CovarianceOp& kernel, const BatchSelection& batch,
                    const EmpiricalMeasure& measure, bool skip_const) {
  return wce_estimate(kernel, batch.embedded, batch.weights, measure, skip_const);
}

namespace {

BatchSelection finish_batch(const EmpiricalMeasure& measure, RecombineResult&& raw,
                            const Vector& af_values, BatchSelection::Method method) {
  BatchSelection batch;
  batch.indices = std::move(raw.indices);
  batch.weights = std::move(raw.weights);
  batch.weights = batch.weights.cwiseMax(0.0);
  batch.method = method;
  batch.points.reserve(batch.indices.size());
  for (std::size_t idx : batch.indices) batch.points.push_back(measure.points[idx]);
  batch.embedded.resize(static_cast<Eigen::Index>(batch.indices.size()), measure.embedded.cols());
  for (std::size_t k = 0; k < batch.indices.size(); ++k) {
    batch.embedded.row(static_cast<Eigen::Index>(k)) =
        measure.embedded.row(static_cast<Eigen::Index>(batch.indices[k]));
  }
  if (af_values.size() == measure.weights.size() && af_values.size() > 0) {
    double obj = 0.0;
    for (std::size_t k = 0; k < batch.indices.size(); ++k) {
      obj += batch.weights[static_cast<Eigen::Index>(k)] *
             af_values[static_cast<Eigen::Index>(batch.indices[k])];
    }
    batch.objective_value = obj;
  }
  batch.validate();
  return batch;
}

}  // namespace

BatchSelection objective_rchq(const EmpiricalMeasure& measure, const NystromFeatures& nystrom,
                              const Vector& af_values, int n, std::uint64_t seed) {
  measure.validate();
  if (n < 1) throw std::invalid_argument("objective_rchq: n must be >= 1");
  if (n > measure.size()) throw std::invalid_argument("objective_rchq: n exceeds measure size");
  if (af_values.size() != 0 && af_values.size() != measure.weights.size()) {
    throw std::invalid_argument("objective_rchq: acquisition length mismatch");
  }
  if (!af_values.allFinite()) throw std::invalid_argument("objective_rchq: non-finite acquisition");

  Matrix phi;
  if (n >= 2) {
    phi = eval_test_functions(nystrom, measure.embedded);
    if (phi.rows() > n - 1) phi.conservativeResize(n - 1, Eigen::NoChange);
  } else {
    phi.resize(0, measure.size());
  }

  const Vector* steer = af_values.size() > 0 ? &af_values : nullptr;
  RecombineResult raw = recombine(measure.weights, phi, seed, steer);
  BatchSelection batch = finish_batch(measure, std::move(raw), af_values,
                                      BatchSelection::Method::Rchq);
  batch.wce = wce_estimate(nystrom.kernel, batch, measure, /*skip_const=*/true);
  return batch;
}

BatchSelection greedy_thinning(const EmpiricalMeasure& measure, const CovarianceOp& kernel,
                               const Vector& af_values, int n) {
  measure.validate();
  const Eigen::Index big_n = measure.embedded.rows();
  if (n < 1 || n > measure.size()) throw std::invalid_argument("greedy_thinning: bad n");

  // z_i = sum_k w_k K(x_i, x_k), computed in row blocks.
  Vector z(big_n);
  const Eigen::Index chunk = 1024;
  for (Eigen::Index start = 0; start < big_n; start += chunk) {
    const Eigen::Index rows = std::min(chunk, big_n - start);
    z.segment(start, rows) =
        kernel.cross(measure.embedded.middleRows(start, rows), measure.embedded) * measure.weights;
  }
  const Vector diag = kernel.diag(measure.embedded);

  std::vector<bool> taken(static_cast<std::size_t>(big_n), false);
  std::vector<std::size_t> picked;
  Vector g = Vector::Zero(big_n);  // g_i = sum_{s in S} K(x_i, x_s)
  double gram_sum = 0.0;           // sum_{s,s' in S} K(x_s, x_s')
  double z_sum = 0.0;              // sum_{s in S} z_s

  for (int step = 1; step <= n; ++step) {
    const double t = static_cast<double>(step);
    double best_score = std::numeric_limits<double>::infinity();
    double best_af = -std::numeric_limits<double>::infinity();
    Eigen::Index best_idx = -1;
    for (Eigen::Index i = 0; i < big_n; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      // skip-const wce of S + {i} under weight 1/t each
      const double quad = gram_sum + 2.0 * g[i] + diag[i];
      const double score = quad / (t * t) - 2.0 * (z_sum + z[i]) / t;
      const double af = af_values.size() > 0 ? af_values[i] : 0.0;
      const double tol = 1e-12 * (std::abs(score) + std::abs(best_score) + 1e-300);
      if (score < best_score - tol || (std::abs(score - best_score) <= tol && af > best_af)) {
        best_score = score;
        best_af = af;
        best_idx = i;
      }
    }
    taken[static_cast<std::size_t>(best_idx)] = true;
    picked.push_back(static_cast<std::size_t>(best_idx));
    z_sum += z[best_idx];
    gram_sum += 2.0 * g[best_idx] + diag[best_idx];
    const Matrix row = kernel.cross(measure.embedded.row(best_idx), measure.embedded);
    g += row.transpose();
  }

  BatchSelection batch;
  batch.indices = picked;
  batch.weights = Vector::Constant(static_cast<Eigen::Index>(picked.size()),
                                   1.0 / static_cast<double>(picked.size()));
  batch.method = BatchSelection::Method::Thinning;
  batch.points.reserve(picked.size());
  for (std::size_t idx : picked) batch.points.push_back(measure.points[idx]);
  batch.embedded.resize(static_cast<Eigen::Index>(picked.size()), measure.embedded.cols());
  for (std::size_t k = 0; k < picked.size(); ++k) {
    batch.embedded.row(static_cast<Eigen::Index>(k)) =
        measure.embedded.row(static_cast<Eigen::Index>(picked[k]));
  }
  if (af_values.size() > 0) {
    double obj = 0.0;
    for (std::size_t k = 0; k < picked.size(); ++k) {
      obj += batch.weights[static_cast<Eigen::Index>(k)] *
             af_values[static_cast<Eigen::Index>(picked[k])];
    }
    batch.objective_value = obj;
  }
  batch.wce = wce_estimate(kernel, batch, measure, /*skip_const=*/true);
  batch.validate();
  return batch;
}

BatchSelection auto_kq_select(const EmpiricalMeasure& measure, const NystromFeatures& nystrom,
                              const CovarianceOp& kernel, const Vector& af_values, int n,
                              std::uint64_t seed, bool use_thinning) {
  BatchSelection rchq = objective_rchq(measure, nystrom, af_values, n, seed);
  rchq.wce = wce_estimate(kernel, rchq, measure, /*skip_const=*/true);
  if (!use_thinning) return rchq;

  BatchSelection thinning = greedy_thinning(measure, kernel, af_values, n);
  return thinning.wce < rchq.wce ? thinning : rchq;
}

}  // namespace sober
