#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace manifold_probe {

/// Point estimate with a two-sided percentile bootstrap interval.
struct BootstrapCI {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  std::size_t n_boot = 1000;
  std::uint64_t seed = 0;
};

struct BootstrapOptions {
  std::size_t n_boot = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

using Statistic = std::function<double(std::span<const double>)>;

/// Aggregate over a resample, given as indices into the original observations.
/// May return NaN for a resample on which the statistic is undefined; such
/// resamples are left out of the quantiles.
using IndexStatistic = std::function<double(std::span<const std::size_t>)>;

double mean(std::span<const double> values);
double median(std::span<const double> values);

/// Linear-interpolation quantile (Hyndman-Fan type 7) of sorted data.
double sorted_quantile(std::span<const double> sorted, double p);

/// Percentile bootstrap of `statistic` over `values`, resampled with
/// replacement. Resample b draws from Rng(derive_seed(seed, b)).
BootstrapCI bootstrap_ci(std::span<const double> values, const Statistic& statistic,
                         const BootstrapOptions& options = {});

/// Percentile bootstrap over n observations, for statistics that need more than
/// a value list. `point` is reported as-is.
BootstrapCI bootstrap_indices(std::size_t n, double point, const IndexStatistic& statistic,
                              const BootstrapOptions& options = {});

/// As bootstrap_indices, but observations are partitioned into consecutive
/// strata of the given sizes and each stratum is resampled separately.
BootstrapCI bootstrap_stratified(std::span<const std::size_t> stratum_sizes, double point,
                                 const IndexStatistic& statistic,
                                 const BootstrapOptions& options = {});

struct RankCorrelation {
  double rho = 0.0;
  std::size_t n = 0;
  /// Observations sharing their value with at least one other observation.
  std::size_t num_ties_x = 0;
  std::size_t num_ties_y = 0;
};

/// 1-based ranks; tied values receive the average of the ranks they span.
std::vector<double> fractional_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of fractional ranks. Throws DataError on length
/// mismatch, n < 2, or "degenerate ranks" (all values equal in either input).
RankCorrelation spearman(std::span<const double> x, std::span<const double> y);

}  // namespace manifold_probe
