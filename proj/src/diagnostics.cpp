#include "manifold_probe/diagnostics.hpp"

#include "manifold_probe/parallel.hpp"
#include "manifold_probe/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace manifold_probe {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream offsets so that unrelated draws from one master seed never share a
// generator.
constexpr std::uint64_t kWorldSubsampleStream = 0x5752'4C44ULL;
constexpr std::uint64_t kShuffleStream = 0x5348'5546ULL;

std::vector<double> defined(const std::vector<PromptMetrics>& metrics,
                            std::optional<double> PromptMetrics::*field) {
  std::vector<double> out;
  for (const auto& m : metrics) {
    if (m.long_enough && m.*field) {
      out.push_back(*(m.*field));
    }
  }
  return out;
}

bool usable(const PromptMetrics& m) { return m.long_enough && (m.id || m.volume); }

std::optional<double> mean_if_any(const std::vector<double>& values) {
  if (values.empty()) {
    return std::nullopt;
  }
  return mean(values);
}

Matrix stack_rows(const std::vector<const Matrix*>& parts) {
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front()->cols();
  for (const auto* p : parts) {
    if (p->cols() != cols) {
      throw DataError("cannot pool trajectories of different ambient dimension");
    }
    rows += p->rows();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const auto* p : parts) {
    out.middleRows(offset, p->rows()) = *p;
    offset += p->rows();
  }
  return out;
}

StimulusMetric summarize_stimulus(const TrajectorySet& set, LayerSelector layer,
                                  const AnalysisOptions& options,
                                  std::optional<double> PromptMetrics::*field) {
  StimulusMetric out;
  out.layer_index = layer.resolve(set);
  out.per_prompt = measure_layer(set, out.layer_index, options);
  const auto values = defined(out.per_prompt, field);
  if (values.empty()) {
    throw DataError("zero usable prompts at layer " + std::to_string(out.layer_index));
  }
  for (const auto& m : out.per_prompt) {
    if (!m.long_enough || !(m.*field)) {
      out.skipped.push_back(m.prompt_id);
    }
  }
  out.num_used = values.size();
  out.value = mean(values);
  out.median = median(values);
  return out;
}

Matrix truncate_steps(const Matrix& states, std::size_t steps) {
  return states.topRows(static_cast<Eigen::Index>(steps));
}

PromptMetrics measure_states(const TrajectoryRecord& source, Matrix states,
                             const AnalysisOptions& options) {
  TrajectoryRecord copy;
  copy.header = source.header;
  copy.header.num_steps = static_cast<std::size_t>(states.rows());
  copy.states = std::move(states);
  return measure_trajectory(copy, options);
}

std::optional<double> difference(std::optional<double> control, std::optional<double> baseline) {
  if (control && baseline) {
    return *control - *baseline;
  }
  return std::nullopt;
}

void finish_control(ControlReport& report) {
  std::vector<double> base_id;
  std::vector<double> base_v;
  std::vector<double> ctrl_id;
  std::vector<double> ctrl_v;
  for (const auto& p : report.prompts) {
    for (const auto& delta : {p.delta_id, p.delta_volume}) {
      if (delta) {
        report.max_abs_delta = std::max(report.max_abs_delta, std::abs(*delta));
      }
    }
    if (p.status != "ok") {
      ++report.num_skipped;
      continue;
    }
    base_id.push_back(*p.baseline.id);
    base_v.push_back(*p.baseline.volume);
    ctrl_id.push_back(*p.control.id);
    ctrl_v.push_back(*p.control.volume);
  }
  report.baseline = {mean_if_any(base_id), mean_if_any(base_v)};
  report.control = {mean_if_any(ctrl_id), mean_if_any(ctrl_v)};
}

PromptDelta pair_prompts(const PromptMetrics& base, const PromptMetrics& ctrl) {
  PromptDelta d;
  d.prompt_id = base.prompt_id;
  d.baseline = {base.id, base.volume};
  d.control = {ctrl.id, ctrl.volume};
  d.delta_id = difference(ctrl.id, base.id);
  d.delta_volume = difference(ctrl.volume, base.volume);
  if (!base.id) {
    d.status = "no baseline ID: " + base.note;
  } else if (!ctrl.id) {
    d.status = "no control ID: " + ctrl.note;
  } else {
    d.status = "ok";
  }
  return d;
}

}  // namespace

LayerSelector LayerSelector::parse(std::string_view text) {
  if (text == "final") {
    return final_layer();
  }
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw DataError("layer must be 'final' or a nonnegative integer, got '" + std::string(text) +
                    "'");
  }
  return index(value);
}

std::size_t LayerSelector::resolve(const TrajectorySet& set) const {
  const std::size_t layer = index_ ? *index_ : set.final_layer();
  if (layer >= set.num_layers) {
    throw DataError("layer " + std::to_string(layer) + " out of range (num_layers " +
                    std::to_string(set.num_layers) + ")");
  }
  return layer;
}

std::string LayerSelector::to_string() const {
  return index_ ? std::to_string(*index_) : std::string("final");
}

std::size_t minimum_steps(const AnalysisOptions& options) {
  return options.fallback_k ? 3 : options.k + 2;
}

PromptMetrics measure_trajectory(const TrajectoryRecord& record, const AnalysisOptions& options) {
  PromptMetrics m;
  m.prompt_id = record.header.prompt_id;
  m.group_label = record.header.group_label;
  m.num_steps = static_cast<std::size_t>(record.states.rows());
  const std::size_t need = minimum_steps(options);
  m.volume = information_volume(record.states);
  m.long_enough = m.num_steps >= need;
  if (!m.long_enough) {
    m.note = "too short: " + std::to_string(m.num_steps) + " steps, need at least " +
             std::to_string(need);
    return m;
  }
  try {
    const IdEstimate est =
        tle_global(PointCloud(center(record.states)), TleOptions{options.k, options.fallback_k});
    m.id = est.global_id;
    if (!est.warnings.empty()) {
      m.note = est.warnings.front();
    }
  } catch (const EstimationError& e) {
    m.note = e.what();
  }
  return m;
}

std::vector<PromptMetrics> measure_layer(const TrajectorySet& set, std::size_t layer,
                                         const AnalysisOptions& options) {
  const auto records = set.at_layer(layer);
  std::vector<PromptMetrics> out(records.size());
  parallel_for(records.size(),
               [&](std::size_t i) { out[i] = measure_trajectory(*records[i], options); });
  return out;
}

StimulusMetric stimulus_dimensionality(const TrajectorySet& set, LayerSelector layer,
                                       const AnalysisOptions& options) {
  return summarize_stimulus(set, layer, options, &PromptMetrics::id);
}

StimulusMetric stimulus_volume(const TrajectorySet& set, LayerSelector layer,
                               const AnalysisOptions& options) {
  return summarize_stimulus(set, layer, options, &PromptMetrics::volume);
}

std::vector<std::size_t> subsample_rows(std::size_t n, std::size_t sample, std::uint64_t seed) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (sample >= n) {
    return rows;
  }
  Rng rng(derive_seed(seed, kWorldSubsampleStream));
  for (std::size_t i = 0; i < sample; ++i) {
    std::swap(rows[i], rows[i + rng.uniform_index(n - i)]);
  }
  rows.resize(sample);
  std::sort(rows.begin(), rows.end());
  return rows;
}

WorldDimensionality world_dimensionality(const EmbeddingMatrix& embedding,
                                         std::size_t sample_size, std::uint64_t seed,
                                         std::size_t k) {
  if (sample_size < 1) {
    throw DataError("vocabulary sample size must be positive");
  }
  const auto rows = subsample_rows(embedding.vocab_size(), sample_size, seed);
  Matrix sample(static_cast<Eigen::Index>(rows.size()), embedding.rows.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sample.row(static_cast<Eigen::Index>(i)) = embedding.rows.row(static_cast<Eigen::Index>(rows[i]));
  }
  const IdEstimate est = tle_global(PointCloud(std::move(sample)), TleOptions{k, false});
  return {est.global_id, rows.size(), embedding.vocab_size(), est.k_used, est.num_valid_points};
}

double health_score(double d_world, double d_stim, double volume, double epsilon,
                    std::vector<std::string>* warnings) {
  if (!(d_world > 0.0)) {
    throw DataError("health score: d_world must be positive");
  }
  if (!(d_stim > 0.0)) {
    throw DataError("health score: d_stim must be positive");
  }
  if (!(volume >= 0.0)) {
    throw DataError("health score: volume must be nonnegative");
  }
  if (!(epsilon > 0.0)) {
    throw DataError("health score: epsilon must be positive");
  }
  if (d_world <= 1.0 && warnings != nullptr) {
    warnings->push_back("d_world <= 1: log(d_world) <= 0, health score is non-positive");
  }
  return std::log(d_world) * volume / std::exp(epsilon * d_stim);
}

HealthReport health_report(const TrajectorySet& set, const EmbeddingMatrix& embedding,
                           LayerSelector layer, std::size_t vocab_sample,
                           const AnalysisOptions& options) {
  HealthReport r;
  r.model_id = set.model_id;
  r.layer_index = layer.resolve(set);
  r.epsilon = options.epsilon;
  r.k_used = options.k;
  r.per_prompt = measure_layer(set, r.layer_index, options);

  const auto ids = defined(r.per_prompt, &PromptMetrics::id);
  const auto vols = defined(r.per_prompt, &PromptMetrics::volume);
  if (ids.empty() || vols.empty()) {
    throw DataError("zero usable prompts at layer " + std::to_string(r.layer_index));
  }
  r.d_stim = mean(ids);
  r.volume = mean(vols);
  r.median_d_stim = median(ids);
  r.median_volume = median(vols);

  const WorldDimensionality world =
      world_dimensionality(embedding, vocab_sample, options.bootstrap.seed, options.k);
  r.d_world = world.value;
  r.world_sample_size = world.sample_size;
  r.vocab_size = world.vocab_size;
  r.h_score = health_score(r.d_world, r.d_stim, r.volume, r.epsilon, &r.warnings);

  std::vector<const PromptMetrics*> used;
  for (const auto& m : r.per_prompt) {
    if (usable(m)) {
      used.push_back(&m);
    }
    if (!m.long_enough) {
      r.warnings.push_back("prompt " + m.prompt_id + " skipped: " + m.note);
    } else if (!m.id) {
      r.warnings.push_back("prompt " + m.prompt_id + " has no ID: " + m.note);
    } else if (!m.note.empty()) {
      r.warnings.push_back("prompt " + m.prompt_id + ": " + m.note);
    }
  }
  r.num_prompts = used.size();

  auto resample_mean = [&](std::span<const std::size_t> idx,
                           std::optional<double> PromptMetrics::*field) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const std::size_t i : idx) {
      if (const auto& v = used[i]->*field) {
        sum += *v;
        ++n;
      }
    }
    return n == 0 ? kNaN : sum / static_cast<double>(n);
  };
  const double d_world = r.d_world;
  const double epsilon = r.epsilon;
  r.ci_d_stim = bootstrap_indices(
      used.size(), r.d_stim,
      [&](std::span<const std::size_t> idx) { return resample_mean(idx, &PromptMetrics::id); },
      options.bootstrap);
  r.ci_volume = bootstrap_indices(
      used.size(), r.volume,
      [&](std::span<const std::size_t> idx) { return resample_mean(idx, &PromptMetrics::volume); },
      options.bootstrap);
  r.ci_h_score = bootstrap_indices(
      used.size(), r.h_score,
      [&](std::span<const std::size_t> idx) {
        const double d_stim = resample_mean(idx, &PromptMetrics::id);
        const double volume = resample_mean(idx, &PromptMetrics::volume);
        return std::log(d_world) * volume / std::exp(epsilon * d_stim);
      },
      options.bootstrap);
  return r;
}

LayerProfile layer_profile(const TrajectorySet& set, const AnalysisOptions& options) {
  if (set.records.empty()) {
    throw DataError("empty trajectory set");
  }
  LayerProfile profile;
  profile.model_id = set.model_id;
  const Statistic mean_statistic = [](std::span<const double> v) { return mean(v); };
  for (const std::size_t layer : set.layers()) {
    const auto metrics = measure_layer(set, layer, options);
    const auto ids = defined(metrics, &PromptMetrics::id);
    const auto vols = defined(metrics, &PromptMetrics::volume);
    if (ids.empty() || vols.empty()) {
      profile.notices.push_back("layer " + std::to_string(layer) +
                                " omitted: no usable prompts");
      continue;
    }
    LayerSummary s;
    s.layer_index = layer;
    s.mean_id = mean(ids);
    s.mean_volume = mean(vols);
    s.median_id = median(ids);
    s.median_volume = median(vols);
    s.ci_id = bootstrap_ci(ids, mean_statistic, options.bootstrap);
    s.ci_volume = bootstrap_ci(vols, mean_statistic, options.bootstrap);
    s.num_prompts = static_cast<std::size_t>(std::count_if(metrics.begin(), metrics.end(), usable));
    profile.layers.push_back(s);
  }
  if (profile.layers.empty()) {
    throw DataError("no layer has usable prompts");
  }
  return profile;
}

std::vector<std::string> group_labels(const TrajectorySet& set, std::size_t layer) {
  std::vector<std::string> labels;
  for (const auto* rec : set.at_layer(layer)) {
    if (std::find(labels.begin(), labels.end(), rec->header.group_label) == labels.end()) {
      labels.push_back(rec->header.group_label);
    }
  }
  return labels;
}

ExpansionCurve expansion_curve(const TrajectorySet& set, std::span<const std::string> group_order,
                               LayerSelector layer, const AnalysisOptions& options) {
  ExpansionCurve curve;
  curve.model_id = set.model_id;
  curve.layer_index = layer.resolve(set);
  curve.group_order.assign(group_order.begin(), group_order.end());
  if (group_order.empty()) {
    throw DataError("group order is empty");
  }

  std::map<std::string, std::vector<const TrajectoryRecord*>> by_label;
  for (const auto* rec : set.at_layer(curve.layer_index)) {
    if (rec->header.group_label.empty()) {
      throw DataError("expansion analysis requires nonempty group labels (prompt " +
                      rec->header.prompt_id + ")");
    }
    by_label[rec->header.group_label].push_back(rec);
  }
  std::set<std::string> seen;
  for (const auto& label : group_order) {
    if (!by_label.contains(label)) {
      throw DataError("unknown label: " + label);
    }
    if (!seen.insert(label).second) {
      throw DataError("duplicate label in group order: " + label);
    }
  }

  // Prompts in stage order, each centered by its own mean.
  std::vector<Matrix> centered;
  std::vector<std::size_t> group_sizes;
  for (const auto& label : group_order) {
    const auto& members = by_label.at(label);
    group_sizes.push_back(members.size());
    for (const auto* rec : members) {
      centered.push_back(center(rec->states));
    }
  }

  const TleOptions tle{options.k, options.fallback_k};
  std::size_t prompts = 0;
  for (std::size_t s = 0; s < group_order.size(); ++s) {
    prompts += group_sizes[s];
    std::vector<const Matrix*> parts;
    for (std::size_t i = 0; i < prompts; ++i) {
      parts.push_back(&centered[i]);
    }
    const Matrix pooled = stack_rows(parts);
    const auto points = static_cast<std::size_t>(pooled.rows());
    if (points < options.k + 2 && !options.fallback_k) {
      throw DataError("stage " + std::to_string(s + 1) + " below minimum size: " +
                      std::to_string(points) + " points, need " + std::to_string(options.k + 2));
    }
    ExpansionStage stage;
    stage.num_groups = s + 1;
    stage.added_group = group_order[s];
    stage.num_prompts = prompts;
    stage.num_points = points;
    stage.d_stim = tle_global(PointCloud(pooled), tle).global_id;

    const std::span<const std::size_t> strata(group_sizes.data(), s + 1);
    stage.ci = bootstrap_stratified(
        strata, stage.d_stim,
        [&](std::span<const std::size_t> idx) {
          std::vector<const Matrix*> resampled;
          resampled.reserve(idx.size());
          for (const std::size_t i : idx) {
            resampled.push_back(&centered[i]);
          }
          try {
            return tle_global(PointCloud(stack_rows(resampled)), tle).global_id;
          } catch (const EstimationError&) {
            return kNaN;
          }
        },
        options.bootstrap);
    curve.stages.push_back(std::move(stage));
  }
  return curve;
}

std::string_view to_string(ControlKind kind) {
  switch (kind) {
    case ControlKind::shuffled_order:
      return "shuffled-order";
    case ControlKind::truncated:
      return "truncated";
    case ControlKind::alternate_stimuli:
      return "alternate-stimuli";
  }
  return "unknown";
}

std::size_t truncated_length(std::size_t steps, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw DataError("truncation fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  const double exact = fraction * static_cast<double>(steps);
  const double nearest = std::round(exact);
  // Absorb rounding in the product, e.g. 0.1 * 30 = 3.0000000000000004.
  const double kept =
      std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact) ? nearest : std::ceil(exact);
  return std::clamp<std::size_t>(static_cast<std::size_t>(kept), 1, steps);
}

ControlReport shuffle_control(const TrajectorySet& set, std::uint64_t seed, LayerSelector layer,
                              const AnalysisOptions& options) {
  ControlReport report;
  report.kind = ControlKind::shuffled_order;
  report.seed = seed;
  report.layer_index = layer.resolve(set);
  report.k = options.k;

  const auto records = set.at_layer(report.layer_index);
  report.prompts.resize(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const auto& rec = *records[i];
    std::vector<Eigen::Index> order(static_cast<std::size_t>(rec.states.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(derive_seed(seed ^ kShuffleStream, i));
    rng.shuffle(std::span<Eigen::Index>(order));
    Matrix shuffled(rec.states.rows(), rec.states.cols());
    for (std::size_t t = 0; t < order.size(); ++t) {
      shuffled.row(static_cast<Eigen::Index>(t)) = rec.states.row(order[t]);
    }
    report.prompts[i] = pair_prompts(measure_trajectory(rec, options),
                                     measure_states(rec, std::move(shuffled), options));
  });
  finish_control(report);
  report.invariance_ok = report.max_abs_delta <= kShuffleTolerance;
  report.notes.push_back(
      "ID and V are functions of the set of states only, so permuting step order leaves them "
      "unchanged up to rounding; an order effect cannot be measured with these two metrics");
  if (!*report.invariance_ok) {
    report.notes.push_back("self-check failed: a per-prompt delta exceeds 1e-9");
  }
  return report;
}

std::vector<ControlReport> truncate_control(const TrajectorySet& set,
                                            std::span<const double> fractions,
                                            LayerSelector layer, const AnalysisOptions& options) {
  for (const double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw DataError("truncation fraction must lie in (0, 1], got " + std::to_string(f));
    }
  }
  const std::size_t layer_index = layer.resolve(set);
  const auto records = set.at_layer(layer_index);
  const auto baseline = measure_layer(set, layer_index, options);
  const std::size_t need = minimum_steps(options);

  std::vector<ControlReport> reports;
  for (const double f : fractions) {
    ControlReport report;
    report.kind = ControlKind::truncated;
    report.fraction = f;
    report.layer_index = layer_index;
    report.k = options.k;
    report.prompts.resize(records.size());
    parallel_for(records.size(), [&](std::size_t i) {
      const auto& rec = *records[i];
      const std::size_t kept = truncated_length(static_cast<std::size_t>(rec.states.rows()), f);
      if (kept < need) {
        PromptDelta d;
        d.prompt_id = rec.header.prompt_id;
        d.baseline = {baseline[i].id, baseline[i].volume};
        d.status = "skipped: truncated to " + std::to_string(kept) + " steps, need at least " +
                   std::to_string(need);
        report.prompts[i] = std::move(d);
        return;
      }
      report.prompts[i] =
          pair_prompts(baseline[i], measure_states(rec, truncate_steps(rec.states, kept), options));
    });
    finish_control(report);
    if (report.num_skipped == report.prompts.size()) {
      report.notes.push_back("all prompts skipped at fraction " + std::to_string(f));
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

ControlReport alternate_stimuli_control(const TrajectorySet& baseline,
                                        const TrajectorySet& alternate, LayerSelector layer,
                                        const AnalysisOptions& options) {
  ControlReport report;
  report.kind = ControlKind::alternate_stimuli;
  report.layer_index = layer.resolve(baseline);
  report.k = options.k;
  const std::size_t alt_layer = layer.resolve(alternate);

  const auto base = measure_layer(baseline, report.layer_index, options);
  const auto alt = measure_layer(alternate, alt_layer, options);
  std::map<std::string, const PromptMetrics*> alt_by_id;
  for (const auto& m : alt) {
    alt_by_id.emplace(m.prompt_id, &m);
  }
  for (const auto& m : base) {
    if (const auto it = alt_by_id.find(m.prompt_id); it != alt_by_id.end()) {
      report.prompts.push_back(pair_prompts(m, *it->second));
    } else {
      PromptDelta d;
      d.prompt_id = m.prompt_id;
      d.baseline = {m.id, m.volume};
      d.status = "skipped: no matching prompt in alternate set";
      report.prompts.push_back(std::move(d));
    }
  }
  finish_control(report);
  report.notes.push_back("alternate set: " + std::to_string(alt.size()) + " prompts at layer " +
                         std::to_string(alt_layer));
  return report;
}

}  // namespace manifold_probe
