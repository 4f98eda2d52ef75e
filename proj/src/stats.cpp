#include "manifold_probe/stats.hpp"

#include "manifold_probe/common.hpp"
#include "manifold_probe/parallel.hpp"
#include "manifold_probe/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace manifold_probe {

namespace {

void check_options(const BootstrapOptions& options) {
  if (options.n_boot < 1) {
    throw DataError("bootstrap: n_boot must be >= 1");
  }
  if (!(options.level > 0.0 && options.level < 1.0)) {
    throw DataError("bootstrap: level must lie in (0, 1)");
  }
}

BootstrapCI summarize(std::vector<double> replicates, double point,
                      const BootstrapOptions& options) {
  std::erase_if(replicates, [](double v) { return !std::isfinite(v); });
  BootstrapCI ci{point, point, point, options.level, options.n_boot, options.seed};
  if (replicates.empty()) {
    return ci;
  }
  std::sort(replicates.begin(), replicates.end());
  const double tail = (1.0 - options.level) / 2.0;
  ci.lower = sorted_quantile(replicates, tail);
  ci.upper = sorted_quantile(replicates, 1.0 - tail);
  return ci;
}

std::size_t count_tied(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t tied = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i + 1;
    while (j < sorted.size() && sorted[j] == sorted[i]) {
      ++j;
    }
    if (j - i > 1) {
      tied += j - i;
    }
    i = j;
  }
  return tied;
}

}  // namespace

double mean(std::span<const double> values) {
  if (values.empty()) {
    throw DataError("mean of empty list");
  }
  double sum = 0.0;
  for (const double v : values) {
    sum += v;
  }
  return sum / static_cast<double>(values.size());
}

double median(std::span<const double> values) {
  if (values.empty()) {
    throw DataError("median of empty list");
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted_quantile(sorted, 0.5);
}

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) {
    throw DataError("quantile of empty list");
  }
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) {
    return sorted[lo];
  }
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BootstrapCI bootstrap_ci(std::span<const double> values, const Statistic& statistic,
                         const BootstrapOptions& options) {
  if (values.empty()) {
    throw DataError("bootstrap: empty values");
  }
  const double point = statistic(values);
  return bootstrap_indices(
      values.size(), point,
      [&](std::span<const std::size_t> idx) {
        std::vector<double> sample(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          sample[i] = values[idx[i]];
        }
        return statistic(sample);
      },
      options);
}

BootstrapCI bootstrap_indices(std::size_t n, double point, const IndexStatistic& statistic,
                              const BootstrapOptions& options) {
  const std::size_t sizes[] = {n};
  return bootstrap_stratified(sizes, point, statistic, options);
}

BootstrapCI bootstrap_stratified(std::span<const std::size_t> stratum_sizes, double point,
                                 const IndexStatistic& statistic,
                                 const BootstrapOptions& options) {
  check_options(options);
  const std::size_t total =
      std::accumulate(stratum_sizes.begin(), stratum_sizes.end(), std::size_t{0});
  if (total == 0 || std::find(stratum_sizes.begin(), stratum_sizes.end(), std::size_t{0}) !=
                        stratum_sizes.end()) {
    throw DataError("bootstrap: every stratum must be non-empty");
  }
  std::vector<double> replicates(options.n_boot);
  parallel_for(options.n_boot, [&](std::size_t b) {
    Rng rng(derive_seed(options.seed, b));
    std::vector<std::size_t> idx;
    idx.reserve(total);
    std::size_t offset = 0;
    for (const std::size_t size : stratum_sizes) {
      for (std::size_t i = 0; i < size; ++i) {
        idx.push_back(offset + rng.uniform_index(size));
      }
      offset += size;
    }
    replicates[b] = statistic(idx);
  });
  return summarize(std::move(replicates), point, options);
}

std::vector<double> fractional_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) {
      ++j;
    }
    // Positions i..j-1 hold ranks i+1..j.
    const double average = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      ranks[order[t]] = average;
    }
    i = j;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

RankCorrelation spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DataError("spearman: length mismatch (" + std::to_string(x.size()) + " vs " +
                    std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) {
    throw DataError("spearman: need at least 2 observations");
  }
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  const double rho = pearson(rx, ry);
  if (std::isnan(rho)) {
    throw DataError("degenerate ranks");
  }
  return {rho, x.size(), count_tied(x), count_tied(y)};
}

}  // namespace manifold_probe
