#pragma once

// Model-level analyses over trajectory datasets: stimulus-induced
// dimensionality and volume, world expressivity, the health score, layer
// profiles, stimulus expansion and the control analyses.

#include "manifold_probe/estimators.hpp"
#include "manifold_probe/stats.hpp"
#include "manifold_probe/trajectory_store.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace manifold_probe {

inline constexpr std::size_t kDefaultK = 20;
inline constexpr double kDefaultEpsilon = 0.1;
inline constexpr std::size_t kDefaultVocabSample = 20000;
/// Largest per-prompt change the shuffle control tolerates.
inline constexpr double kShuffleTolerance = 1e-9;

struct AnalysisOptions {
  std::size_t k = kDefaultK;
  bool fallback_k = false;
  double epsilon = kDefaultEpsilon;
  BootstrapOptions bootstrap;
};

/// "final" or an explicit layer index.
class LayerSelector {
 public:
  static LayerSelector final_layer() { return LayerSelector(); }
  static LayerSelector index(std::size_t layer) { return LayerSelector(layer); }
  /// Accepts "final" or a nonnegative integer.
  static LayerSelector parse(std::string_view text);

  std::size_t resolve(const TrajectorySet& set) const;
  std::string to_string() const;

 private:
  LayerSelector() = default;
  explicit LayerSelector(std::size_t layer) : index_(layer) {}
  std::optional<std::size_t> index_;
};

/// ID and V of one (prompt, layer) trajectory. A missing ID carries the
/// reason in `note`. V is defined for any length, but model-level aggregates
/// only use prompts that are `long_enough` for the ID estimator.
struct PromptMetrics {
  std::string prompt_id;
  std::string group_label;
  std::size_t num_steps = 0;
  bool long_enough = false;
  std::optional<double> id;
  std::optional<double> volume;
  std::string note;
};

/// Smallest trajectory length the ID estimator accepts under `options`.
std::size_t minimum_steps(const AnalysisOptions& options);

/// Centers the trajectory and evaluates both estimators. Trajectories shorter
/// than minimum_steps() get no ID.
PromptMetrics measure_trajectory(const TrajectoryRecord& record, const AnalysisOptions& options);
std::vector<PromptMetrics> measure_layer(const TrajectorySet& set, std::size_t layer,
                                         const AnalysisOptions& options);

struct StimulusMetric {
  std::size_t layer_index = 0;
  double value = 0.0;   // arithmetic mean over prompts with a value
  double median = 0.0;
  std::size_t num_used = 0;
  std::vector<std::string> skipped;  // prompt ids without a value
  std::vector<PromptMetrics> per_prompt;
};

/// D_stim: mean over prompts of the TLE estimate of each centered trajectory.
/// Throws DataError("zero usable prompts") when no prompt yields a value.
StimulusMetric stimulus_dimensionality(const TrajectorySet& set, LayerSelector layer,
                                       const AnalysisOptions& options);
/// Mean information volume over prompts, same gating as stimulus_dimensionality.
StimulusMetric stimulus_volume(const TrajectorySet& set, LayerSelector layer,
                               const AnalysisOptions& options);

struct WorldDimensionality {
  double value = 0.0;
  std::size_t sample_size = 0;
  std::size_t vocab_size = 0;
  std::size_t k_used = 0;
  std::size_t num_valid_points = 0;
};

/// Sorted row indices of a seeded uniform subsample without replacement; all
/// rows when sample >= n.
std::vector<std::size_t> subsample_rows(std::size_t n, std::size_t sample, std::uint64_t seed);

/// D_world: TLE of a seeded row subsample of the static embedding matrix.
WorldDimensionality world_dimensionality(const EmbeddingMatrix& embedding,
                                         std::size_t sample_size, std::uint64_t seed,
                                         std::size_t k = kDefaultK);

/// H = log(d_world) * volume / exp(epsilon * d_stim). Appends a warning when
/// d_world <= 1 makes the score non-positive.
double health_score(double d_world, double d_stim, double volume, double epsilon = kDefaultEpsilon,
                    std::vector<std::string>* warnings = nullptr);

struct HealthReport {
  std::string model_id;
  std::size_t layer_index = 0;
  double d_world = 0.0;
  double d_stim = 0.0;
  double volume = 0.0;
  double epsilon = kDefaultEpsilon;
  double h_score = 0.0;
  BootstrapCI ci_d_stim;
  BootstrapCI ci_volume;
  BootstrapCI ci_h_score;
  double median_d_stim = 0.0;
  double median_volume = 0.0;
  std::size_t k_used = kDefaultK;
  std::size_t num_prompts = 0;
  std::size_t world_sample_size = 0;
  std::size_t vocab_size = 0;
  std::vector<PromptMetrics> per_prompt;
  std::vector<std::string> warnings;
};

/// Computes D_world, D_stim and V (model-level means at the selected layer) and
/// applies the health score once. Bootstrap intervals resample prompts and
/// hold D_world fixed.
HealthReport health_report(const TrajectorySet& set, const EmbeddingMatrix& embedding,
                           LayerSelector layer, std::size_t vocab_sample,
                           const AnalysisOptions& options);

struct LayerSummary {
  std::size_t layer_index = 0;
  double mean_id = 0.0;
  double mean_volume = 0.0;
  double median_id = 0.0;
  double median_volume = 0.0;
  BootstrapCI ci_id;
  BootstrapCI ci_volume;
  std::size_t num_prompts = 0;
};

struct LayerProfile {
  std::string model_id;
  std::vector<LayerSummary> layers;  // ascending layer index
  std::vector<std::string> notices;
};

LayerProfile layer_profile(const TrajectorySet& set, const AnalysisOptions& options);

struct ExpansionStage {
  std::size_t num_groups = 0;
  std::string added_group;
  std::size_t num_prompts = 0;
  std::size_t num_points = 0;
  double d_stim = 0.0;
  BootstrapCI ci;
};

struct ExpansionCurve {
  std::string model_id;
  std::size_t layer_index = 0;
  std::vector<std::string> group_order;
  std::vector<ExpansionStage> stages;
};

/// Stage s pools the centered trajectories of the first s groups into one point
/// cloud and estimates its ID. Intervals resample prompts within each group.
ExpansionCurve expansion_curve(const TrajectorySet& set, std::span<const std::string> group_order,
                               LayerSelector layer, const AnalysisOptions& options);

/// Group labels at `layer` in order of first appearance.
std::vector<std::string> group_labels(const TrajectorySet& set, std::size_t layer);

enum class ControlKind { shuffled_order, truncated, alternate_stimuli };

std::string_view to_string(ControlKind kind);

struct MetricPair {
  std::optional<double> id;
  std::optional<double> volume;
};

struct PromptDelta {
  std::string prompt_id;
  MetricPair baseline;
  MetricPair control;
  std::optional<double> delta_id;
  std::optional<double> delta_volume;
  std::string status;  // "ok" or why the prompt was skipped
};

struct ControlReport {
  ControlKind kind = ControlKind::shuffled_order;
  std::optional<double> fraction;
  std::optional<std::uint64_t> seed;
  std::size_t layer_index = 0;
  std::size_t k = kDefaultK;
  /// Means over the prompts whose status is "ok".
  MetricPair baseline;
  MetricPair control;
  std::vector<PromptDelta> prompts;
  std::size_t num_skipped = 0;
  double max_abs_delta = 0.0;
  /// Shuffle control only: every |delta| <= kShuffleTolerance.
  std::optional<bool> invariance_ok;
  std::vector<std::string> notes;
};

/// Number of leading steps kept by truncation to `fraction`: ceil(fraction * T).
std::size_t truncated_length(std::size_t steps, double fraction);

ControlReport shuffle_control(const TrajectorySet& set, std::uint64_t seed, LayerSelector layer,
                              const AnalysisOptions& options);

inline constexpr double kDefaultTruncationFractions[] = {0.25, 0.5, 0.75};

std::vector<ControlReport> truncate_control(const TrajectorySet& set,
                                            std::span<const double> fractions,
                                            LayerSelector layer, const AnalysisOptions& options);

/// Compares a dataset elicited by alternate prompts against the baseline set.
ControlReport alternate_stimuli_control(const TrajectorySet& baseline,
                                        const TrajectorySet& alternate, LayerSelector layer,
                                        const AnalysisOptions& options);

}  // namespace manifold_probe
