#pragma once

#include "manifold_probe/common.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace manifold_probe {

/// Subtracts the column-wise mean of all rows from every row. Identical rows
/// center to exactly zero, and the mean is accumulated in a canonical row order
/// so that permuting the input permutes the output bit-for-bit.
Matrix center(const Matrix& states);

/// Row indices that sort the rows lexicographically (stable).
std::vector<std::size_t> canonical_row_order(const Matrix& points);

/// A finite, non-empty set of points in R^d, one per row.
class PointCloud {
 public:
  explicit PointCloud(Matrix points);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points_.cols()); }
  const Matrix& points() const { return points_; }
  std::span<const double> point(std::size_t i) const {
    return {points_.data() + i * dim(), dim()};
  }

 private:
  Matrix points_;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

/// Exact k nearest neighbors of every point, self excluded. Row i lists its
/// neighbors by ascending distance; equal distances are ordered by index.
struct NeighborList {
  std::size_t k = 0;
  std::vector<std::size_t> indices;       // size() * k, row-major
  std::vector<double> squared_distances;  // same layout

  std::size_t size() const { return k == 0 ? 0 : indices.size() / k; }
  std::span<const std::size_t> neighbors(std::size_t i) const {
    return {indices.data() + i * k, k};
  }
  double distance(std::size_t i, std::size_t j) const;
  /// Distance from point i to its k-th neighbor.
  double radius(std::size_t i) const { return distance(i, k - 1); }
};

NeighborList knn(const PointCloud& cloud, std::size_t k);

struct LocalId {
  std::optional<double> value;
  std::size_t retained_terms = 0;
  std::size_t skipped_terms = 0;
};

/// Tight local intrinsic dimensionality at point i.
///
/// Each ordered pair (v, w) with v drawn from the neighborhood plus the point
/// itself and w from the neighborhood (v != w) contributes two log-distance
/// measurements log(s/r) and log(t/r), where r is the k-NN radius, s is the
/// radius of the ball through v and w whose center lies on the ray from v
/// towards q (rescaled onto the k-NN ball), and t is the same quantity for the
/// reflection 2q - v. For v on the k-NN sphere,
///
///   s = r |w - v|^2 / (2 (q - v).(w - v)).
///
/// Measurements that are non-positive or non-finite are skipped and counted.
/// The estimate is -(mean retained log ratio)^-1; it is absent when r = 0,
/// when every measurement was skipped, or when the result is not positive.
LocalId tle_local(const PointCloud& cloud, const NeighborList& neighbors, std::size_t i);

struct TleOptions {
  std::size_t k = 20;
  /// Reduce k to max(2, m - 2) instead of failing when m < k + 2.
  bool allow_fallback = false;
};

struct IdEstimate {
  double global_id = 0.0;
  std::vector<std::optional<double>> local_ids;  // input row order
  std::size_t num_valid_points = 0;
  std::size_t num_skipped_terms = 0;
  std::size_t k_used = 0;
  std::vector<std::string> warnings;
};

/// Arithmetic mean of the defined local estimates. Invariant to row order.
/// Throws EstimationError("insufficient points") when m < k + 2 without
/// fallback, and EstimationError when no point yields a local estimate.
IdEstimate tle_global(const PointCloud& cloud, const TleOptions& options = {});

enum class GramSide {
  smaller,   // whichever of the two Gram matrices is smaller
  steps,     // T x T: Z^T Z in column-per-step convention
  features,  // d x d: Z Z^T
};

/// 1/2 log det(I + scale * gram) for a symmetric positive semidefinite gram.
double half_log_det_identity_plus(const Matrix& gram, double scale);

/// 1/2 log det(I + (d/T) Z Z^T) of an already-centered T x d matrix, evaluated
/// through the requested Gram matrix (both sides agree by Sylvester's identity).
double information_volume_centered(const Matrix& centered, GramSide side = GramSide::smaller);

/// Information volume of a trajectory: centers, then
/// 1/2 log det(I + (d/T) Z Z^T). Natural log, always >= 0, invariant to row
/// order.
double information_volume(const Matrix& states);

}  // namespace manifold_probe
