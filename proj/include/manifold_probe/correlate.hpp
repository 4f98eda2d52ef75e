#pragma once

// Rank correlation of per-model structural predictors against external
// benchmark scores.

#include "manifold_probe/stats.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace manifold_probe {

struct ModelScores {
  std::string model_id;
  double d_stim = 0.0;
  double volume = 0.0;
  double h_score = 0.0;
};

struct BenchmarkScore {
  std::string model_id;
  std::string benchmark;
  double score = 0.0;
};

/// CSV with a header row naming at least model_id, d_stim, volume, h_score.
std::vector<ModelScores> read_model_scores(const std::filesystem::path& path);
/// CSV with a header row naming at least model_id, benchmark, score.
std::vector<BenchmarkScore> read_benchmark_scores(const std::filesystem::path& path);

enum class Predictor { id_only, id_volume, full };

inline constexpr Predictor kPredictors[] = {Predictor::id_only, Predictor::id_volume,
                                            Predictor::full};

std::string_view to_string(Predictor p);
/// Closed form of each predictor, for report metadata.
std::string_view formula(Predictor p);

/// id_only: exp(-epsilon * d_stim); id_volume: volume / exp(epsilon * d_stim);
/// full: the stored h_score.
double predictor_value(const ModelScores& m, Predictor p, double epsilon);

struct CorrelationRow {
  std::string benchmark;
  Predictor predictor = Predictor::full;
  RankCorrelation correlation;
  BootstrapCI ci;
  std::vector<std::string> models;  // joined model ids, sorted
};

/// Inner-joins on model_id and correlates every predictor with every
/// benchmark. Intervals resample models with replacement; resamples with tied
/// ranks throughout are dropped. Rows are ordered by benchmark name, then
/// predictor.
std::vector<CorrelationRow> correlate(const std::vector<ModelScores>& scores,
                                      const std::vector<BenchmarkScore>& external, double epsilon,
                                      const BootstrapOptions& options);

}  // namespace manifold_probe
