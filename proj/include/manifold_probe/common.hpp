#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace manifold_probe {

/// Row-major dense matrix. Rows are points (or generation steps), columns are
/// ambient coordinates.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Malformed input data or a violated data contract. Maps to CLI exit code 1.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An estimator could not produce a value for the given input (too few points,
/// fully degenerate neighborhoods). Callers aggregating over many prompts catch
/// this and record the prompt as skipped.
class EstimationError : public DataError {
 public:
  using DataError::DataError;
};

/// Missing files or directories, unwritable outputs, bad invocation. Maps to CLI
/// exit code 2.
class EnvironmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool all_finite(const Matrix& m);

}  // namespace manifold_probe
