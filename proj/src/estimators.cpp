#include "manifold_probe/estimators.hpp"

#include "manifold_probe/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace manifold_probe {

namespace {

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& order) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < order.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(order[r]));
  }
  return out;
}

void require_finite(const Matrix& m, const char* what) {
  if (!all_finite(m)) {
    throw DataError(std::string(what) + ": non-finite entry");
  }
}

}  // namespace

std::vector<std::size_t> canonical_row_order(const Matrix& points) {
  std::vector<std::size_t> order(static_cast<std::size_t>(points.rows()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto cols = points.cols();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double* ra = points.data() + a * cols;
    const double* rb = points.data() + b * cols;
    return std::lexicographical_compare(ra, ra + cols, rb, rb + cols);
  });
  return order;
}

Matrix center(const Matrix& states) {
  require_finite(states, "center");
  if (states.rows() < 1) {
    throw DataError("center: empty trajectory");
  }
  const auto order = canonical_row_order(states);
  const Eigen::RowVectorXd base = states.row(static_cast<Eigen::Index>(order.front()));
  Eigen::RowVectorXd offset = Eigen::RowVectorXd::Zero(states.cols());
  for (const std::size_t r : order) {
    offset += states.row(static_cast<Eigen::Index>(r)) - base;
  }
  const Eigen::RowVectorXd mean = base + offset / static_cast<double>(states.rows());
  return states.rowwise() - mean;
}

PointCloud::PointCloud(Matrix points) : points_(std::move(points)) {
  if (points_.rows() < 1 || points_.cols() < 1) {
    throw DataError("point cloud must contain at least one point of dimension >= 1");
  }
  require_finite(points_, "point cloud");
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t n = a.size();
  std::size_t c = 0;
  for (; c + 4 <= n; c += 4) {
    for (std::size_t l = 0; l < 4; ++l) {
      const double diff = a[c + l] - b[c + l];
      acc[l] += diff * diff;
    }
  }
  for (; c < n; ++c) {
    const double diff = a[c] - b[c];
    acc[0] += diff * diff;
  }
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

double NeighborList::distance(std::size_t i, std::size_t j) const {
  return std::sqrt(squared_distances[i * k + j]);
}

NeighborList knn(const PointCloud& cloud, std::size_t k) {
  const std::size_t m = cloud.size();
  if (k == 0) {
    throw DataError("knn: k must be positive");
  }
  if (k >= m) {
    throw DataError("knn: k = " + std::to_string(k) + " requires more than " + std::to_string(k) +
                    " points, got " + std::to_string(m));
  }
  NeighborList out;
  out.k = k;
  out.indices.resize(m * k);
  out.squared_distances.resize(m * k);

  parallel_for(m, [&](std::size_t i) {
    std::vector<std::pair<double, std::size_t>> candidates;
    candidates.reserve(m - 1);
    const auto pi = cloud.point(i);
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) {
        candidates.emplace_back(squared_distance(pi, cloud.point(j)), j);
      }
    }
    const auto kth = candidates.begin() + static_cast<std::ptrdiff_t>(k);
    std::nth_element(candidates.begin(), kth - 1, candidates.end());
    std::sort(candidates.begin(), kth);
    for (std::size_t j = 0; j < k; ++j) {
      out.squared_distances[i * k + j] = candidates[j].first;
      out.indices[i * k + j] = candidates[j].second;
    }
  });
  return out;
}

LocalId tle_local(const PointCloud& cloud, const NeighborList& neighbors, std::size_t i) {
  LocalId out;
  const std::size_t k = neighbors.k;
  const std::size_t d = cloud.dim();
  const double r2 = neighbors.squared_distances[i * k + k - 1];
  if (!(r2 > 0.0)) {
    return out;
  }

  // Neighborhood relative to the query point; row 0 is the query itself.
  Matrix rel = Matrix::Zero(static_cast<Eigen::Index>(k + 1), static_cast<Eigen::Index>(d));
  const auto q = cloud.point(i);
  const auto nbrs = neighbors.neighbors(i);
  for (std::size_t j = 0; j < k; ++j) {
    const auto v = cloud.point(nbrs[j]);
    for (std::size_t c = 0; c < d; ++c) {
      rel(static_cast<Eigen::Index>(j + 1), static_cast<Eigen::Index>(c)) = v[c] - q[c];
    }
  }
  std::vector<double> norm2(k + 1, 0.0);
  for (std::size_t j = 1; j <= k; ++j) {
    norm2[j] = rel.row(static_cast<Eigen::Index>(j)).squaredNorm();
  }

  // Ratio (measured distance / r) for a point at squared offset di2 from the
  // query, separation sep2 to w, and dot = (q - v).(w - v).
  auto ratio = [r2](double sep2, double dot, double di2) {
    const double a = 2.0 * dot;
    const double slack = std::max(0.0, r2 - di2);
    const double root = std::sqrt(a * a + 4.0 * sep2 * slack);
    if (a >= 0.0) {
      return 2.0 * sep2 / (a + root);
    }
    return (root - a) / (2.0 * slack);
  };

  double log_sum = 0.0;
  auto accumulate = [&](double x) {
    const double l = std::log(x);
    if (x > 0.0 && std::isfinite(l)) {
      log_sum += l;
      ++out.retained_terms;
    } else {
      ++out.skipped_terms;
    }
  };

  for (std::size_t a = 0; a <= k; ++a) {
    const double* p = rel.data() + a * d;
    for (std::size_t b = 1; b <= k; ++b) {
      if (a == b) {
        continue;
      }
      const double* u = rel.data() + b * d;
      double sep_s = 0.0;
      double dot_s = 0.0;
      double sep_t = 0.0;
      double dot_t = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double ds = u[c] - p[c];
        const double dt = u[c] + p[c];
        sep_s += ds * ds;
        dot_s -= p[c] * ds;
        sep_t += dt * dt;
        dot_t += p[c] * dt;
      }
      accumulate(ratio(sep_s, dot_s, norm2[a]));
      accumulate(ratio(sep_t, dot_t, norm2[a]));
    }
  }

  if (out.retained_terms == 0) {
    return out;
  }
  const double estimate = -static_cast<double>(out.retained_terms) / log_sum;
  if (estimate > 0.0 && std::isfinite(estimate)) {
    out.value = estimate;
  }
  return out;
}

IdEstimate tle_global(const PointCloud& cloud, const TleOptions& options) {
  const std::size_t m = cloud.size();
  IdEstimate est;
  std::size_t k = options.k;
  if (k == 0) {
    throw DataError("tle: k must be positive");
  }
  if (m < k + 2) {
    if (!options.allow_fallback) {
      throw EstimationError("insufficient points: " + std::to_string(m) + " points, need k + 2 = " +
                            std::to_string(k + 2));
    }
    k = std::max<std::size_t>(2, m >= 2 ? m - 2 : 0);
    if (k + 1 > m) {
      throw EstimationError("insufficient points: " + std::to_string(m) +
                            " points, fallback needs at least 3");
    }
    est.warnings.push_back("k reduced from " + std::to_string(options.k) + " to " +
                           std::to_string(k) + " for " + std::to_string(m) + " points");
  }
  est.k_used = k;

  const auto order = canonical_row_order(cloud.points());
  const PointCloud canonical(permute_rows(cloud.points(), order));
  const NeighborList neighbors = knn(canonical, k);

  std::vector<LocalId> locals(m);
  parallel_for(m, [&](std::size_t i) { locals[i] = tle_local(canonical, neighbors, i); });

  double sum = 0.0;
  est.local_ids.assign(m, std::nullopt);
  for (std::size_t c = 0; c < m; ++c) {
    est.num_skipped_terms += locals[c].skipped_terms;
    if (locals[c].value) {
      sum += *locals[c].value;
      ++est.num_valid_points;
      est.local_ids[order[c]] = locals[c].value;
    }
  }
  if (est.num_valid_points == 0) {
    throw EstimationError("no valid local estimates (degenerate neighborhoods)");
  }
  est.global_id = sum / static_cast<double>(est.num_valid_points);
  return est;
}

double half_log_det_identity_plus(const Matrix& gram, double scale) {
  const auto n = gram.rows();
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) + scale * Eigen::MatrixXd(gram);
  const Eigen::LLT<Eigen::MatrixXd> llt(system);
  double value = 0.0;
  if (llt.info() == Eigen::Success) {
    const Eigen::MatrixXd& factor = llt.matrixLLT();
    for (Eigen::Index i = 0; i < n; ++i) {
      value += std::log(factor(i, i));
    }
  } else {
    // Only reachable through rounding; eigenvalues of the system are >= 1.
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(system, Eigen::EigenvaluesOnly);
    for (const double lambda : solver.eigenvalues()) {
      value += 0.5 * std::log(std::max(lambda, 1.0));
    }
  }
  return std::max(0.0, value);
}

double information_volume_centered(const Matrix& centered, GramSide side) {
  const auto steps = centered.rows();
  const auto dims = centered.cols();
  if (steps < 1 || dims < 1) {
    throw DataError("information volume: empty trajectory");
  }
  const double scale = static_cast<double>(dims) / static_cast<double>(steps);
  if (side == GramSide::smaller) {
    side = steps <= dims ? GramSide::steps : GramSide::features;
  }
  if (side == GramSide::steps) {
    return half_log_det_identity_plus(centered * centered.transpose(), scale);
  }
  return half_log_det_identity_plus(centered.transpose() * centered, scale);
}

double information_volume(const Matrix& states) {
  require_finite(states, "information volume");
  if (states.rows() < 1 || states.cols() < 1) {
    throw DataError("information volume: empty trajectory");
  }
  const Matrix canonical = permute_rows(states, canonical_row_order(states));
  return information_volume_centered(center(canonical));
}

}  // namespace manifold_probe
