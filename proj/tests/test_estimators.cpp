#include "doctest.h"

#include "manifold_probe/estimators.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

using namespace manifold_probe;

namespace {

Matrix shuffled_rows(const Matrix& m, std::uint64_t seed) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  rng.shuffle(std::span<Eigen::Index>(order));
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < order.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = m.row(order[r]);
  }
  return out;
}

double mean_local(const IdEstimate& est) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : est.local_ids) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("center: identical rows give exact zeros") {
  Matrix m(5, 3);
  m.rowwise() = Eigen::RowVector3d(0.1, -7.3, 1e6 / 3.0);
  const Matrix z = center(m);
  CHECK(z.isZero(0.0));
  CHECK((z.array() == 0.0).all());
}

TEST_CASE("center: symmetric pair") {
  Matrix m(2, 2);
  m << 1, 1, 3, 3;
  Matrix expected(2, 2);
  expected << -1, -1, 1, 1;
  CHECK(center(m) == expected);
}

TEST_CASE("center: column means vanish") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 1 + rng.uniform_index(80);
    const std::size_t cols = 1 + rng.uniform_index(40);
    Matrix m = synth::gaussian(rows, cols, rng) * std::pow(10.0, trial % 5);
    m.rowwise() += synth::gaussian(1, cols, rng).row(0) * 100.0;
    const Matrix z = center(m);
    const double bound = 1e-12 * m.cwiseAbs().maxCoeff() * static_cast<double>(rows);
    CHECK((z.colwise().sum() / static_cast<double>(rows)).cwiseAbs().maxCoeff() <= bound);
    CHECK((z - oracle::center(m)).cwiseAbs().maxCoeff() <= bound);
  }
}

TEST_CASE("center: row shuffles permute the output exactly") {
  Rng rng(6);
  const Matrix m = synth::gaussian(30, 7, rng);
  const Matrix z = center(m);
  const Matrix zs = center(shuffled_rows(m, 9));
  CHECK(shuffled_rows(z, 9) == zs);
}

TEST_CASE("center: rejects non-finite and empty input") {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(center(m), DataError);
  CHECK_THROWS_AS(center(Matrix(0, 3)), DataError);
}

TEST_CASE("PointCloud rejects bad input") {
  CHECK_THROWS_AS(PointCloud(Matrix(0, 2)), DataError);
  Matrix m = Matrix::Zero(3, 2);
  m(2, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(PointCloud{m}, DataError);
}

TEST_CASE("squared_distance matches the plain sum") {
  Rng rng(7);
  for (std::size_t d : {1u, 3u, 4u, 5u, 17u, 64u}) {
    const Matrix p = synth::gaussian(2, d, rng);
    const double expected = (p.row(0) - p.row(1)).squaredNorm();
    const double got = squared_distance({p.data(), d}, {p.data() + d, d});
    CHECK(rel(got, expected) < 1e-14);
  }
}

TEST_CASE("knn: collinear points") {
  Matrix m(3, 1);
  m << 0, 1, 3;
  const auto nl = knn(PointCloud(m), 1);
  CHECK(nl.neighbors(0)[0] == 1);
  CHECK(nl.neighbors(1)[0] == 0);
  CHECK(nl.neighbors(2)[0] == 1);
  CHECK(nl.radius(2) == 2.0);
}

TEST_CASE("knn: ties go to the lower index") {
  Matrix m(4, 2);
  m << 0, 0, 1, 0, 0, 1, 1, 1;
  const auto nl = knn(PointCloud(m), 2);
  CHECK(std::vector<std::size_t>(nl.neighbors(0).begin(), nl.neighbors(0).end()) ==
        std::vector<std::size_t>{1, 2});
  CHECK(std::vector<std::size_t>(nl.neighbors(3).begin(), nl.neighbors(3).end()) ==
        std::vector<std::size_t>{1, 2});
  CHECK(std::vector<std::size_t>(nl.neighbors(1).begin(), nl.neighbors(1).end()) ==
        std::vector<std::size_t>{0, 3});
}

TEST_CASE("knn: matches a full-sort oracle") {
  Rng rng(8);
  const Matrix m = synth::gaussian(200, 16, rng);
  const auto nl = knn(PointCloud(m), 20);
  for (std::size_t i = 0; i < 200; ++i) {
    const auto expected = oracle::neighbors(m, i, 20);
    for (std::size_t j = 0; j < 20; ++j) {
      REQUIRE(nl.neighbors(i)[j] == expected[j].second);
      CHECK(rel(nl.squared_distances[i * 20 + j], expected[j].first) < 1e-13);
    }
    CHECK(std::is_sorted(nl.squared_distances.begin() + static_cast<std::ptrdiff_t>(i * 20),
                         nl.squared_distances.begin() + static_cast<std::ptrdiff_t>(i * 20 + 20)));
  }
}

TEST_CASE("knn: k out of range") {
  Rng rng(9);
  const PointCloud c(synth::gaussian(5, 2, rng));
  CHECK_THROWS_AS(knn(c, 5), DataError);
  CHECK_THROWS_AS(knn(c, 0), DataError);
  CHECK_NOTHROW(knn(c, 4));
}

TEST_CASE("tle_local: matches the distance-only oracle") {
  Rng rng(10);
  for (const std::size_t d : {2u, 5u, 12u}) {
    const Matrix m = synth::embed(synth::gaussian(150, d, rng), 20, rng);
    const PointCloud cloud(m);
    for (const std::size_t k : {5u, 20u}) {
      const auto nl = knn(cloud, k);
      for (std::size_t i = 0; i < 150; i += 7) {
        const auto local = tle_local(cloud, nl, i);
        REQUIRE(local.value.has_value());
        CHECK(local.retained_terms == 2 * k * k);
        CHECK(local.skipped_terms == 0);
        CHECK(rel(*local.value, oracle::tle_local(m, i, k)) < 1e-9);
      }
    }
  }
}

TEST_CASE("tle_local: segment in R^8") {
  Rng rng(11);
  const Matrix m = synth::embed(synth::uniform(100, 1, rng), 8, rng);
  const PointCloud cloud(m);
  const auto nl = knn(cloud, 10);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    if (const auto v = tle_local(cloud, nl, i).value) {
      sum += *v;
      ++n;
    }
  }
  REQUIRE(n > 0);
  CHECK(sum / static_cast<double>(n) >= 0.7);
  CHECK(sum / static_cast<double>(n) <= 1.3);
}

TEST_CASE("tle_local: 2-plane in R^32") {
  Rng rng(12);
  const Matrix m = synth::embed(synth::uniform(500, 2, rng), 32, rng);
  const auto est = tle_global(PointCloud(m), {20, false});
  const double mean = mean_local(est);
  CHECK(mean >= 1.6);
  CHECK(mean <= 2.4);
}

TEST_CASE("tle_local: duplicate-saturated neighborhood is absent") {
  Rng rng(13);
  Matrix m = synth::gaussian(30, 3, rng);
  for (Eigen::Index r = 1; r <= 5; ++r) {
    m.row(r) = m.row(0);
  }
  const PointCloud cloud(m);
  const auto nl = knn(cloud, 5);
  CHECK(nl.radius(0) == 0.0);
  CHECK_FALSE(tle_local(cloud, nl, 0).value.has_value());
  const auto est = tle_global(cloud, {5, false});
  CHECK(est.num_valid_points < 30);
  CHECK_FALSE(est.local_ids[0].has_value());
}

TEST_CASE("tle_global: hypercubes") {
  for (const std::size_t d : {1u, 2u, 4u, 8u}) {
    Rng rng(1000 + d);
    const auto est = tle_global(PointCloud(synth::hypercube(2000, d, 64, rng)));
    CAPTURE(d);
    CAPTURE(est.global_id);
    CHECK(est.global_id >= 0.8 * static_cast<double>(d));
    CHECK(est.global_id <= 1.2 * static_cast<double>(d));
  }
}

TEST_CASE("tle_global: mean of the defined local estimates") {
  Rng rng(14);
  const auto est = tle_global(PointCloud(synth::gaussian(120, 4, rng)), {10, false});
  CHECK(est.num_valid_points == 120);
  CHECK(est.local_ids.size() == 120);
  CHECK(est.k_used == 10);
  CHECK(rel(est.global_id, mean_local(est)) < 1e-12);
  CHECK(est.global_id > 0.0);
}

TEST_CASE("tle_global: row order does not matter") {
  Rng rng(15);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix m = synth::embed(synth::gaussian(150, 3, rng), 10, rng);
    const auto a = tle_global(PointCloud(m));
    const auto b = tle_global(PointCloud(shuffled_rows(m, 100 + trial)));
    CHECK(std::abs(a.global_id - b.global_id) <= 1e-9);
  }
}

TEST_CASE("tle_global: too few points") {
  Rng rng(16);
  const PointCloud c(synth::gaussian(21, 3, rng));
  CHECK_THROWS_AS(tle_global(c, {20, false}), EstimationError);
  try {
    tle_global(c, {20, false});
  } catch (const EstimationError& e) {
    CHECK(std::string(e.what()).find("insufficient points") != std::string::npos);
  }
  const auto est = tle_global(c, {20, true});
  CHECK(est.k_used == 19);
  CHECK(est.warnings.size() == 1);
  CHECK(tle_global(PointCloud(synth::gaussian(3, 3, rng)), {20, true}).k_used == 2);
  CHECK_THROWS_AS(tle_global(PointCloud(synth::gaussian(2, 3, rng)), {20, true}),
                  EstimationError);
}

TEST_CASE("tle_global: rotation changes the estimate by under 1%") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix m = synth::embed(synth::gaussian(200, 4, rng), 16, rng);
    const Matrix q = synth::random_orthogonal(16, rng);
    const double a = tle_global(PointCloud(m)).global_id;
    const double b = tle_global(PointCloud(m * q)).global_id;
    CHECK(rel(b, a) <= 0.01);
  }
}

TEST_CASE("information_volume: degenerate inputs") {
  Matrix constant(6, 4);
  constant.rowwise() = Eigen::RowVector4d(3.3, -1.0, 0.7, 1e3);
  CHECK(information_volume(constant) == 0.0);
  CHECK(information_volume(Matrix::Constant(1, 9, 2.5)) == 0.0);
  Matrix bad = Matrix::Zero(2, 2);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(information_volume(bad), DataError);
}

TEST_CASE("information_volume: eigenvalue oracle on 40x512") {
  Rng rng(18);
  const Matrix m = synth::gaussian(40, 512, rng);
  CHECK(rel(information_volume(m), oracle::information_volume(m)) <= 1e-8);
}

TEST_CASE("information_volume: both Gram sides agree") {
  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 1 + rng.uniform_index(40);
    const std::size_t cols = 1 + rng.uniform_index(60);
    const Matrix z = center(synth::gaussian(rows, cols, rng));
    const double steps = information_volume_centered(z, GramSide::steps);
    const double features = information_volume_centered(z, GramSide::features);
    if (rows == 1) {
      CHECK(steps == 0.0);
      CHECK(features == 0.0);
    } else {
      CHECK(rel(steps, features) <= 1e-10);
    }
  }
}

TEST_CASE("information_volume: scaling up increases it") {
  Rng rng(20);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = synth::gaussian(2 + rng.uniform_index(30), 1 + rng.uniform_index(30), rng) *
                     std::pow(10.0, static_cast<double>(trial % 7) - 3.0);
    CHECK(information_volume(2.0 * z) > information_volume(z));
    CHECK(information_volume(z) >= 0.0);
  }
}

TEST_CASE("information_volume: invariances") {
  Rng rng(21);
  const Matrix m = synth::gaussian(25, 12, rng);
  const double v = information_volume(m);
  CHECK(information_volume(shuffled_rows(m, 3)) == v);
  const Matrix q = synth::random_orthogonal(12, rng);
  CHECK(rel(information_volume(m * q), v) <= 1e-8);
  Matrix shifted = m;
  shifted.rowwise() += Eigen::RowVectorXd::Constant(12, 5.0);
  CHECK(rel(information_volume(shifted), v) <= 1e-10);
}

TEST_CASE("half_log_det_identity_plus: small closed form") {
  Matrix g(2, 2);
  g << 2, 0, 0, 3;
  CHECK(rel(half_log_det_identity_plus(g, 0.5), 0.5 * std::log(2.0 * 2.5)) < 1e-14);
  CHECK(half_log_det_identity_plus(Matrix::Zero(3, 3), 1.0) == 0.0);
}
