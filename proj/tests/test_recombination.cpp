#include <doctest.h>

#include <chrono>
#include <numeric>

#include "sober/random.hpp"
#include "sober/recombination.hpp"
#include "test_support.hpp"

using namespace sober;
using sober::testing::box_domain;
using sober::testing::random_box_measure;
using sober::testing::random_weights;

namespace {

Matrix rbf_test_functions(const EmpiricalMeasure& measure, int n_batch, double lengthscale,
                          std::uint64_t seed) {
  const KernelParams params =
      KernelParams::rbf_iso(1.0, lengthscale, static_cast<int>(measure.embedded.cols()));
  const int anchors = std::min(measure.size(), std::max(4 * n_batch, 16));
  const NystromFeatures f =
      fit_nystrom(params, measure.embedded.topRows(anchors), n_batch - 1, 10, seed);
  return eval_test_functions(f, measure.embedded);
}

double max_moment_error(const Matrix& phi, const Vector& w_full, const RecombineResult& result) {
  const Vector target = phi * w_full;
  Vector achieved = Vector::Zero(phi.rows());
  for (std::size_t k = 0; k < result.indices.size(); ++k) {
    achieved += result.weights[static_cast<Eigen::Index>(k)] *
                phi.col(static_cast<Eigen::Index>(result.indices[k]));
  }
  const double scale = std::max(1.0, target.cwiseAbs().maxCoeff());
  return (achieved - target).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

TEST_CASE("N = n returns the measure unchanged") {
  const DomainSpec domain = box_domain(2);
  const EmpiricalMeasure m = random_box_measure(domain, 8, 3, random_weights(8, 5));
  const Matrix phi = rbf_test_functions(m, 8, 0.4, 7);
  const RecombineResult r = recombine(m.weights, phi, 11);
  REQUIRE(r.indices.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(r.indices[i] == i);
    CHECK(r.weights[static_cast<Eigen::Index>(i)] ==
          doctest::Approx(m.weights[static_cast<Eigen::Index>(i)]).epsilon(1e-15));
  }
}

TEST_CASE("a single constant test function collapses to one point") {
  const DomainSpec domain = box_domain(1);
  const EmpiricalMeasure m = random_box_measure(domain, 100, 13);
  const Matrix phi = Matrix::Ones(1, 100);
  const RecombineResult r = recombine(m.weights, phi, 17);
  REQUIRE(r.indices.size() == 1);
  CHECK(r.weights[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("moments are preserved on a large RBF instance") {
  const DomainSpec domain = box_domain(3);
  const EmpiricalMeasure m = random_box_measure(domain, 1000, 19, random_weights(1000, 23));
  const Matrix phi = rbf_test_functions(m, 32, 0.4, 29);
  const RecombineResult r = recombine(m.weights, phi, 31);
  CHECK(static_cast<int>(r.indices.size()) <= 32);
  CHECK((r.weights.array() >= 0.0).all());
  CHECK(r.weights.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(max_moment_error(phi, m.weights, r) <= 1e-6);
}

TEST_CASE("property: random instances satisfy the full contract") {
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const int n_points = 50 + static_cast<int>(rng.index(400));
    const int n_batch = 4 + static_cast<int>(rng.index(24));
    const int dims = 1 + static_cast<int>(rng.index(4));
    const DomainSpec domain = box_domain(dims);
    const EmpiricalMeasure m =
        random_box_measure(domain, n_points, rng.raw(), random_weights(n_points, rng.raw()));
    const Matrix phi = rbf_test_functions(m, n_batch, 0.2 + 0.5 * rng.uniform(), rng.raw());
    const RecombineResult r = recombine(m.weights, phi, rng.raw());

    CHECK(static_cast<int>(r.indices.size()) <= n_batch);
    CHECK((r.weights.array() >= 0.0).all());
    CHECK(r.weights.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(max_moment_error(phi, m.weights, r) <= 1e-6);

    // indices distinct
    std::vector<std::size_t> sorted = r.indices;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  }
}

TEST_CASE("objective steering") {
  const DomainSpec domain = box_domain(2);

  SUBCASE("constant acquisition is inert but feasible") {
    const EmpiricalMeasure m = random_box_measure(domain, 200, 41, random_weights(200, 43));
    const KernelParams params = KernelParams::rbf_iso(1.0, 0.4, 2);
    const NystromFeatures f = fit_nystrom(params, m.embedded.topRows(64), 15, 10, 47);
    const Vector af = Vector::Constant(200, 0.7);
    const BatchSelection batch = objective_rchq(m, f, af, 16, 53);
    CHECK(batch.size() <= 16);
    CHECK(batch.objective_value == doctest::Approx(0.7));
    const Matrix phi = eval_test_functions(f, m.embedded);
    RecombineResult as_result{batch.indices, batch.weights};
    CHECK(max_moment_error(phi, m.weights, as_result) <= 1e-6);
  }

  SUBCASE("a planted high-acquisition candidate is kept") {
    // one constant test function: every single point is a feasible solution,
    // so the steering has full freedom and must keep the alpha = 1 candidate
    const EmpiricalMeasure m = random_box_measure(domain, 20, 59);
    Vector af = Vector::Zero(20);
    af[5] = 1.0;
    NystromFeatures constant_feature;
    const KernelParams params = KernelParams::rbf_iso(1.0, 1e8, 2);
    constant_feature = fit_nystrom(params, m.embedded.topRows(8), 1, 10, 61);
    const BatchSelection batch = objective_rchq(m, constant_feature, af, 2, 67);
    bool found = false;
    for (std::size_t idx : batch.indices) {
      if (idx == 5) found = true;
    }
    CHECK(found);
    CHECK(batch.objective_value >= 0.05 - 1e-12);  // at least its initial weight
  }

  SUBCASE("steering beats plain recombination on most random instances") {
    Rng rng(71);
    int wins = 0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
      const EmpiricalMeasure m = random_box_measure(domain, 300, rng.raw(), random_weights(300, rng.raw()));
      const KernelParams params = KernelParams::rbf_iso(1.0, 0.5, 2);
      const NystromFeatures f = fit_nystrom(params, m.embedded.topRows(32), 7, 10, rng.raw());
      Vector af(300);
      for (int i = 0; i < 300; ++i) af[i] = rng.uniform();
      const std::uint64_t seed = rng.raw();

      const BatchSelection steered = objective_rchq(m, f, af, 8, seed);
      const Matrix phi = eval_test_functions(f, m.embedded);
      const RecombineResult plain = recombine(m.weights, phi, seed, nullptr);
      double plain_obj = 0.0;
      for (std::size_t k = 0; k < plain.indices.size(); ++k) {
        plain_obj += plain.weights[static_cast<Eigen::Index>(k)] *
                     af[static_cast<Eigen::Index>(plain.indices[k])];
      }
      if (steered.objective_value >= plain_obj - 1e-12) ++wins;
    }
    CHECK(wins >= 40);  // >= 80%
  }
}

TEST_CASE("worst-case error estimates") {
  const DomainSpec domain = box_domain(2);
  const KernelParams params = KernelParams::rbf_iso(1.0, 0.5, 2);
  const CovarianceOp kernel = kernel_op(params);

  SUBCASE("the full measure as batch has zero error") {
    const EmpiricalMeasure m = random_box_measure(domain, 30, 73, random_weights(30, 79));
    const double w = wce_estimate(kernel, m.embedded, m.weights, m, /*skip_const=*/false);
    CHECK(std::abs(w) <= 1e-10);
  }

  SUBCASE("skip-const differences equal full-form differences") {
    const EmpiricalMeasure m = random_box_measure(domain, 40, 83, random_weights(40, 89));
    const EmpiricalMeasure b1 = random_box_measure(domain, 5, 97);
    const EmpiricalMeasure b2 = random_box_measure(domain, 5, 101);
    const double full_diff =
        wce_estimate(kernel, b1.embedded, b1.weights, m, false) -
        wce_estimate(kernel, b2.embedded, b2.weights, m, false);
    const double skip_diff =
        wce_estimate(kernel, b1.embedded, b1.weights, m, true) -
        wce_estimate(kernel, b2.embedded, b2.weights, m, true);
    CHECK(full_diff == doctest::Approx(skip_diff).epsilon(1e-10));
  }

  SUBCASE("matches the brute-force double sum") {
    const EmpiricalMeasure m = random_box_measure(domain, 6, 103, random_weights(6, 107));
    std::vector<std::size_t> batch_idx{1, 4};
    Matrix batch(2, 2);
    batch.row(0) = m.embedded.row(1);
    batch.row(1) = m.embedded.row(4);
    Vector bw(2);
    bw << 0.3, 0.7;

    double brute = 0.0;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        brute += bw[i] * bw[j] *
                 eval_kernel(params, batch.row(i).transpose(), batch.row(j).transpose());
      }
    }
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 6; ++j) {
        brute -= 2.0 * bw[i] * m.weights[j] *
                 eval_kernel(params, batch.row(i).transpose(), m.embedded.row(j).transpose());
      }
    }
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        brute += m.weights[i] * m.weights[j] *
                 eval_kernel(params, m.embedded.row(i).transpose(), m.embedded.row(j).transpose());
      }
    }
    CHECK(wce_estimate(kernel, batch, bw, m, false) == doctest::Approx(brute).epsilon(1e-12));
  }

  SUBCASE("full form is never meaningfully negative") {
    Rng rng(109);
    for (int t = 0; t < 10; ++t) {
      const EmpiricalMeasure m = random_box_measure(domain, 50, rng.raw(), random_weights(50, rng.raw()));
      const EmpiricalMeasure b = random_box_measure(domain, 7, rng.raw());
      CHECK(wce_estimate(kernel, b.embedded, b.weights, m, false) >= -1e-8);
    }
  }
}

TEST_CASE("greedy thinning") {
  const DomainSpec domain = box_domain(2);
  const KernelParams params = KernelParams::rbf_iso(1.0, 0.5, 2);
  const CovarianceOp kernel = kernel_op(params);

  SUBCASE("selecting every point of a uniform measure is exact") {
    const EmpiricalMeasure m = random_box_measure(domain, 12, 113);
    const BatchSelection batch = greedy_thinning(m, kernel, Vector(), 12);
    REQUIRE(batch.size() == 12);
    CHECK(std::abs(wce_estimate(kernel, batch, m, false)) <= 1e-10);
  }

  SUBCASE("n = 1 matches exhaustive search") {
    // two clusters; the best single point minimizes the uniform-rule error
    std::vector<MixedPoint> pts;
    Rng rng(127);
    for (int i = 0; i < 20; ++i) {
      Vector x(2);
      const double cx = i < 10 ? 0.25 : 0.75;
      x << cx + 0.02 * rng.normal(), 0.5 + 0.02 * rng.normal();
      pts.push_back(sober::testing::continuous_point(x.cwiseMax(0.0).cwiseMin(1.0)));
    }
    const EmpiricalMeasure m = make_measure(domain, pts, Vector::Constant(20, 0.05));
    const BatchSelection batch = greedy_thinning(m, kernel, Vector(), 1);

    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (int i = 0; i < 20; ++i) {
      const double w =
          wce_estimate(kernel, m.embedded.row(i), Vector::Constant(1, 1.0), m, false);
      if (w < best) {
        best = w;
        best_idx = static_cast<std::size_t>(i);
      }
    }
    CHECK(batch.indices[0] == best_idx);
  }

  SUBCASE("greedy beats the median random subset") {
    const EmpiricalMeasure m = random_box_measure(domain, 300, 131, random_weights(300, 137));
    const BatchSelection batch = greedy_thinning(m, kernel, Vector(), 16);
    const double greedy_wce = wce_estimate(kernel, batch, m, true);

    Rng rng(139);
    std::vector<double> random_wce;
    const Vector uniform = Vector::Constant(16, 1.0 / 16.0);
    for (int s = 0; s < 100; ++s) {
      std::vector<std::size_t> order(300);
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(order);
      Matrix rows(16, 2);
      for (int i = 0; i < 16; ++i) rows.row(i) = m.embedded.row(static_cast<Eigen::Index>(order[i]));
      random_wce.push_back(wce_estimate(kernel, rows, uniform, m, true));
    }
    std::sort(random_wce.begin(), random_wce.end());
    CHECK(greedy_wce <= random_wce[50]);
  }
}

TEST_CASE("automatic kq selection") {
  const DomainSpec domain = box_domain(2);
  const EmpiricalMeasure m = random_box_measure(domain, 400, 149, random_weights(400, 151));
  const KernelParams params = KernelParams::rbf_iso(1.0, 1.0, 2);  // smooth: lengthscale = box width
  const CovarianceOp kernel = kernel_op(params);
  const NystromFeatures f = fit_nystrom(params, m.embedded.topRows(64), 15, 10, 157);

  SUBCASE("thinning disabled returns the rchq batch") {
    const BatchSelection direct = objective_rchq(m, f, Vector(), 16, 163);
    const BatchSelection via_auto = auto_kq_select(m, f, kernel, Vector(), 16, 163, false);
    CHECK(via_auto.method == BatchSelection::Method::Rchq);
    REQUIRE(via_auto.indices == direct.indices);
    CHECK((via_auto.weights - direct.weights).cwiseAbs().maxCoeff() <= 1e-15);
  }

  SUBCASE("returns the candidate with the smaller wce") {
    const BatchSelection chosen = auto_kq_select(m, f, kernel, Vector(), 16, 167, true);
    BatchSelection rchq = objective_rchq(m, f, Vector(), 16, 167);
    rchq.wce = wce_estimate(kernel, rchq, m, true);
    const BatchSelection thin = greedy_thinning(m, kernel, Vector(), 16);
    CHECK(chosen.wce == doctest::Approx(std::min(rchq.wce, thin.wce)).epsilon(1e-12));
  }

  SUBCASE("rchq wins on smooth kernels in most seeded trials") {
    int rchq_wins = 0;
    for (int t = 0; t < 20; ++t) {
      const EmpiricalMeasure trial_m =
          random_box_measure(domain, 300, derive_seed(171, 1, t), random_weights(300, derive_seed(171, 2, t)));
      const NystromFeatures trial_f =
          fit_nystrom(params, trial_m.embedded.topRows(64), 15, 10, derive_seed(171, 3, t));
      const BatchSelection chosen =
          auto_kq_select(trial_m, trial_f, kernel, Vector(), 16, derive_seed(171, 4, t), true);
      if (chosen.method == BatchSelection::Method::Rchq) ++rchq_wins;
    }
    CHECK(rchq_wins >= 14);  // >= 70%
  }
}

TEST_CASE("recombination runtime scales subquadratically in N") {
  const DomainSpec domain = box_domain(3);
  const KernelParams params = KernelParams::rbf_iso(1.0, 0.3, 3);
  std::vector<double> times;
  for (int n_points : {1000, 4000, 16000}) {
    const EmpiricalMeasure m = random_box_measure(domain, n_points, 173);
    const NystromFeatures f = fit_nystrom(params, m.embedded.topRows(128), 31, 10, 179);
    const Matrix phi = eval_test_functions(f, m.embedded);
    double best = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < 3; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      const RecombineResult r = recombine(m.weights, phi, 181 + rep);
      best = std::min(best,
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      CHECK(static_cast<int>(r.indices.size()) <= 32);
    }
    times.push_back(best);
  }
  const double slope = std::log(times[2] / times[0]) / std::log(16.0);
  CHECK(slope < 1.8);
}
