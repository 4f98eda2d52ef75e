#include "manifold_probe/report.hpp"

#include "json.hpp"

#include <charconv>
#include <cmath>
#include <optional>
#include <sstream>

namespace manifold_probe {

using nlohmann::json;

namespace {

json number_or_null(double value) {
  return std::isfinite(value) ? json(value) : json(nullptr);
}

json optional_number(const std::optional<double>& value) {
  return value ? number_or_null(*value) : json(nullptr);
}

json ci_json(const BootstrapCI& ci) {
  return {{"point", number_or_null(ci.point)},
          {"lower", number_or_null(ci.lower)},
          {"upper", number_or_null(ci.upper)},
          {"level", ci.level},
          {"n_boot", ci.n_boot},
          {"seed", ci.seed}};
}

json prompt_json(const PromptMetrics& m) {
  return {{"prompt_id", m.prompt_id},   {"group_label", m.group_label},
          {"num_steps", m.num_steps},   {"id", optional_number(m.id)},
          {"volume", optional_number(m.volume)}, {"note", m.note}};
}

json pair_json(const MetricPair& p) {
  return {{"id", optional_number(p.id)}, {"volume", optional_number(p.volume)}};
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) {
    return text;
  }
  std::string quoted = "\"";
  for (const char c : text) {
    if (c == '"') {
      quoted += '"';
    }
    quoted += c;
  }
  return quoted + "\"";
}

std::string csv_optional(const std::optional<double>& value) {
  return value ? format_number(*value) : std::string();
}

class CsvWriter {
 public:
  explicit CsvWriter(std::initializer_list<std::string_view> header) {
    bool first = true;
    for (const auto h : header) {
      out_ << (first ? "" : ",") << h;
      first = false;
    }
    out_ << "\n";
  }

  CsvWriter& row(std::initializer_list<std::string> fields) {
    bool first = true;
    for (const auto& f : fields) {
      out_ << (first ? "" : ",") << csv_field(f);
      first = false;
    }
    out_ << "\n";
    return *this;
  }

  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) {
    return {};
  }
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::string validation_json(const ValidationReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"relative_path", e.relative_path},
                       {"prompt_id", e.prompt_id},
                       {"layer_index", e.layer_index ? json(*e.layer_index) : json(nullptr)},
                       {"passed", e.passed},
                       {"reason", e.reason}});
  }
  return dump({{"entries", entries},
               {"all_passed", report.all_passed()},
               {"num_failed", report.num_failed()}});
}

std::string validation_csv(const ValidationReport& report) {
  CsvWriter csv({"relative_path", "prompt_id", "layer_index", "passed", "reason"});
  for (const auto& e : report.entries) {
    csv.row({e.relative_path, e.prompt_id, e.layer_index ? std::to_string(*e.layer_index) : "",
             e.passed ? "true" : "false", e.reason});
  }
  return csv.str();
}

std::string health_json(const HealthReport& r) {
  json prompts = json::array();
  for (const auto& m : r.per_prompt) {
    prompts.push_back(prompt_json(m));
  }
  return dump({{"model_id", r.model_id},
               {"layer_index", r.layer_index},
               {"d_world", r.d_world},
               {"d_stim", r.d_stim},
               {"volume", r.volume},
               {"epsilon", r.epsilon},
               {"h_score", r.h_score},
               {"ci", {{"d_stim", ci_json(r.ci_d_stim)},
                       {"volume", ci_json(r.ci_volume)},
                       {"h_score", ci_json(r.ci_h_score)}}},
               {"median", {{"d_stim", r.median_d_stim}, {"volume", r.median_volume}}},
               {"k_used", r.k_used},
               {"num_prompts", r.num_prompts},
               {"world", {{"sample_size", r.world_sample_size}, {"vocab_size", r.vocab_size}}},
               {"per_prompt", prompts},
               {"warnings", r.warnings}});
}

std::string health_csv(const HealthReport& r) {
  CsvWriter csv({"model_id", "layer", "d_world", "d_stim", "volume", "epsilon", "h_score",
                 "d_stim_lo", "d_stim_hi", "volume_lo", "volume_hi", "h_lo", "h_hi", "k", "n"});
  csv.row({r.model_id, std::to_string(r.layer_index), format_number(r.d_world),
           format_number(r.d_stim), format_number(r.volume), format_number(r.epsilon),
           format_number(r.h_score), format_number(r.ci_d_stim.lower),
           format_number(r.ci_d_stim.upper), format_number(r.ci_volume.lower),
           format_number(r.ci_volume.upper), format_number(r.ci_h_score.lower),
           format_number(r.ci_h_score.upper), std::to_string(r.k_used),
           std::to_string(r.num_prompts)});
  return csv.str();
}

std::string profile_json(const LayerProfile& profile) {
  json layers = json::array();
  for (const auto& s : profile.layers) {
    layers.push_back({{"layer_index", s.layer_index},
                      {"mean_id", s.mean_id},
                      {"mean_volume", s.mean_volume},
                      {"median_id", s.median_id},
                      {"median_volume", s.median_volume},
                      {"ci_id", ci_json(s.ci_id)},
                      {"ci_volume", ci_json(s.ci_volume)},
                      {"num_prompts", s.num_prompts}});
  }
  return dump(
      {{"model_id", profile.model_id}, {"layers", layers}, {"notices", profile.notices}});
}

std::string profile_csv(const LayerProfile& profile) {
  CsvWriter csv({"layer", "mean_id", "id_lo", "id_hi", "mean_v", "v_lo", "v_hi", "n"});
  for (const auto& s : profile.layers) {
    csv.row({std::to_string(s.layer_index), format_number(s.mean_id),
             format_number(s.ci_id.lower), format_number(s.ci_id.upper),
             format_number(s.mean_volume), format_number(s.ci_volume.lower),
             format_number(s.ci_volume.upper), std::to_string(s.num_prompts)});
  }
  return csv.str();
}

std::string expansion_json(const ExpansionCurve& curve) {
  json stages = json::array();
  for (const auto& s : curve.stages) {
    stages.push_back({{"num_groups", s.num_groups},
                      {"added_group", s.added_group},
                      {"num_prompts", s.num_prompts},
                      {"num_points", s.num_points},
                      {"d_stim", s.d_stim},
                      {"ci", ci_json(s.ci)}});
  }
  return dump({{"model_id", curve.model_id},
               {"layer_index", curve.layer_index},
               {"group_order", curve.group_order},
               {"stages", stages}});
}

std::string expansion_csv(const ExpansionCurve& curve) {
  CsvWriter csv({"stage", "added_group", "num_prompts", "num_points", "d_stim", "d_stim_lo",
                 "d_stim_hi"});
  for (const auto& s : curve.stages) {
    csv.row({std::to_string(s.num_groups), s.added_group, std::to_string(s.num_prompts),
             std::to_string(s.num_points), format_number(s.d_stim), format_number(s.ci.lower),
             format_number(s.ci.upper)});
  }
  return csv.str();
}

std::string controls_json(std::span<const ControlReport> reports) {
  json controls = json::array();
  for (const auto& r : reports) {
    json prompts = json::array();
    for (const auto& p : r.prompts) {
      prompts.push_back({{"prompt_id", p.prompt_id},
                         {"baseline", pair_json(p.baseline)},
                         {"control", pair_json(p.control)},
                         {"delta_id", optional_number(p.delta_id)},
                         {"delta_volume", optional_number(p.delta_volume)},
                         {"status", p.status}});
    }
    controls.push_back(
        {{"kind", std::string(to_string(r.kind))},
         {"fraction", r.fraction ? json(*r.fraction) : json(nullptr)},
         {"seed", r.seed ? json(*r.seed) : json(nullptr)},
         {"layer_index", r.layer_index},
         {"k", r.k},
         {"baseline", pair_json(r.baseline)},
         {"control", pair_json(r.control)},
         {"prompts", prompts},
         {"num_skipped", r.num_skipped},
         {"max_abs_delta", r.max_abs_delta},
         {"invariance_ok", r.invariance_ok ? json(*r.invariance_ok) : json(nullptr)},
         {"notes", r.notes}});
  }
  return dump({{"controls", controls}});
}

std::string controls_csv(std::span<const ControlReport> reports) {
  CsvWriter csv({"control", "fraction", "prompt_id", "baseline_id", "control_id", "delta_id",
                 "baseline_v", "control_v", "delta_v", "status"});
  for (const auto& r : reports) {
    for (const auto& p : r.prompts) {
      csv.row({std::string(to_string(r.kind)), r.fraction ? format_number(*r.fraction) : "",
               p.prompt_id, csv_optional(p.baseline.id), csv_optional(p.control.id),
               csv_optional(p.delta_id), csv_optional(p.baseline.volume),
               csv_optional(p.control.volume), csv_optional(p.delta_volume), p.status});
    }
  }
  return csv.str();
}

std::string correlation_json(std::span<const CorrelationRow> rows, double epsilon) {
  json table = json::array();
  for (const auto& r : rows) {
    table.push_back({{"benchmark", r.benchmark},
                     {"predictor", std::string(to_string(r.predictor))},
                     {"rho", r.correlation.rho},
                     {"n", r.correlation.n},
                     {"num_ties_x", r.correlation.num_ties_x},
                     {"num_ties_y", r.correlation.num_ties_y},
                     {"ci", ci_json(r.ci)},
                     {"models", r.models}});
  }
  json predictors = json::object();
  for (const Predictor p : kPredictors) {
    predictors[std::string(to_string(p))] = std::string(formula(p));
  }
  return dump({{"epsilon", epsilon}, {"predictors", predictors}, {"correlations", table}});
}

std::string correlation_csv(std::span<const CorrelationRow> rows) {
  CsvWriter csv({"benchmark", "predictor", "rho", "rho_lo", "rho_hi", "n", "ties_x", "ties_y"});
  for (const auto& r : rows) {
    csv.row({r.benchmark, std::string(to_string(r.predictor)), format_number(r.correlation.rho),
             format_number(r.ci.lower), format_number(r.ci.upper),
             std::to_string(r.correlation.n), std::to_string(r.correlation.num_ties_x),
             std::to_string(r.correlation.num_ties_y)});
  }
  return csv.str();
}

}  // namespace manifold_probe
