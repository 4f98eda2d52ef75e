#include "manifold_probe/commands.hpp"

#include "manifold_probe/correlate.hpp"
#include "manifold_probe/parallel.hpp"
#include "manifold_probe/report.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace manifold_probe {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ignored;
    std::filesystem::create_directories(path.parent_path(), ignored);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw EnvironmentError("cannot write " + path.string());
  }
  file << text;
  file.close();
  if (!file) {
    throw EnvironmentError("cannot write " + path.string());
  }
}

// Writes the report in the configured format. JSON reports written to a file
// get a CSV mirror next to them. Returns true when the report went to a file.
bool emit(const RunConfig& config, const std::string& json_text, const std::string& csv_text,
          std::ostream& out) {
  const std::string& primary = config.format == OutputFormat::json ? json_text : csv_text;
  if (config.output.empty()) {
    out << primary;
    return false;
  }
  write_text(config.output, primary);
  if (config.format == OutputFormat::json) {
    auto mirror = config.output;
    mirror.replace_extension(".csv");
    if (mirror != config.output) {
      write_text(mirror, csv_text);
    }
  }
  return true;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << std::fixed << v;
  return s.str();
}

Dataset load(const RunConfig& config) {
  set_worker_limit(config.threads);
  return load_dataset(config.dataset_root, config.force);
}

}  // namespace

void RunConfig::check() const {
  if (k < 1) {
    throw DataError("k must be >= 1");
  }
  if (!(epsilon > 0.0)) {
    throw DataError("epsilon must be > 0");
  }
  if (n_boot < 1) {
    throw DataError("n-boot must be >= 1");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw DataError("level must lie in (0, 1)");
  }
  if (vocab_sample < 1) {
    throw DataError("vocab-sample must be >= 1");
  }
  LayerSelector::parse(layer);
}

AnalysisOptions RunConfig::analysis() const {
  AnalysisOptions o;
  o.k = k;
  o.fallback_k = fallback_k;
  o.epsilon = epsilon;
  o.bootstrap = BootstrapOptions{n_boot, level, seed};
  return o;
}

int cmd_validate(const RunConfig& config, std::ostream& out) {
  const ValidationReport report = validate_manifest(config.dataset_root);
  for (const auto& e : report.entries) {
    out << (e.passed ? "PASS " : "FAIL ") << e.relative_path;
    if (!e.passed) {
      out << ": " << e.reason;
    }
    out << "\n";
  }
  out << report.entries.size() << " entries, " << report.num_failed() << " failed\n";
  if (!config.output.empty()) {
    emit(config, validation_json(report), validation_csv(report), out);
  }
  return report.all_passed() ? 0 : 1;
}

int cmd_health(const RunConfig& config, std::ostream& out, std::ostream& err) {
  config.check();
  const Dataset data = load(config);
  if (!data.embedding) {
    throw DataError("missing embedding: the manifest lists no embedding file");
  }
  const HealthReport report =
      health_report(data.trajectories, *data.embedding, LayerSelector::parse(config.layer),
                    config.vocab_sample, config.analysis());
  const bool to_file = emit(config, health_json(report), health_csv(report), out);
  (to_file ? out : err) << report.model_id << " layer " << report.layer_index
                        << ": D_world=" << fixed(report.d_world)
                        << " D_stim=" << fixed(report.d_stim) << " V=" << fixed(report.volume)
                        << " H=" << fixed(report.h_score, 6) << " (" << report.num_prompts
                        << " prompts)\n";
  for (const auto& w : report.warnings) {
    err << "warning: " << w << "\n";
  }
  return 0;
}

int cmd_profile(const RunConfig& config, std::ostream& out, std::ostream& err) {
  config.check();
  const Dataset data = load(config);
  const LayerProfile profile = layer_profile(data.trajectories, config.analysis());
  const bool to_file = emit(config, profile_json(profile), profile_csv(profile), out);
  (to_file ? out : err) << profile.model_id << ": " << profile.layers.size() << " layers profiled\n";
  for (const auto& n : profile.notices) {
    err << "notice: " << n << "\n";
  }
  return 0;
}

int cmd_expand(const RunConfig& config, const std::vector<std::string>& group_order,
               std::ostream& out, std::ostream& err) {
  config.check();
  const Dataset data = load(config);
  const LayerSelector layer = LayerSelector::parse(config.layer);
  std::vector<std::string> order = group_order;
  if (order.empty()) {
    order = group_labels(data.trajectories, layer.resolve(data.trajectories));
  }
  const ExpansionCurve curve = expansion_curve(data.trajectories, order, layer, config.analysis());
  const bool to_file = emit(config, expansion_json(curve), expansion_csv(curve), out);
  auto& summary = to_file ? out : err;
  summary << curve.model_id << ": " << curve.stages.size() << " stages, d_stim";
  for (const auto& s : curve.stages) {
    summary << " " << fixed(s.d_stim, 3);
  }
  summary << "\n";
  return 0;
}

int cmd_controls(const RunConfig& config, const std::vector<double>& fractions,
                 const std::optional<std::filesystem::path>& alternate_root, std::ostream& out,
                 std::ostream& err) {
  config.check();
  const Dataset data = load(config);
  const LayerSelector layer = LayerSelector::parse(config.layer);
  const AnalysisOptions options = config.analysis();

  std::vector<ControlReport> reports;
  reports.push_back(shuffle_control(data.trajectories, config.seed, layer, options));
  for (auto& r : truncate_control(data.trajectories, fractions, layer, options)) {
    reports.push_back(std::move(r));
  }
  if (alternate_root) {
    const Dataset alternate = load_dataset(*alternate_root, config.force);
    reports.push_back(
        alternate_stimuli_control(data.trajectories, alternate.trajectories, layer, options));
  }

  const bool to_file = emit(config, controls_json(reports), controls_csv(reports), out);
  auto& summary = to_file ? out : err;
  for (const auto& r : reports) {
    summary << to_string(r.kind);
    if (r.fraction) {
      summary << " f=" << format_number(*r.fraction);
    }
    summary << ": max |delta| " << format_number(r.max_abs_delta) << ", " << r.num_skipped
            << " skipped";
    if (r.invariance_ok) {
      summary << (*r.invariance_ok ? ", invariance ok" : ", INVARIANCE FAILED");
    }
    summary << "\n";
  }
  return 0;
}

int cmd_correlate(const RunConfig& config, const std::filesystem::path& scores_file,
                  const std::filesystem::path& external_file, std::ostream& out,
                  std::ostream& err) {
  config.check();
  set_worker_limit(config.threads);
  const auto rows = correlate(read_model_scores(scores_file), read_benchmark_scores(external_file),
                              config.epsilon, config.analysis().bootstrap);
  const bool to_file =
      emit(config, correlation_json(rows, config.epsilon), correlation_csv(rows), out);
  auto& summary = to_file ? out : err;
  for (const auto& r : rows) {
    summary << r.benchmark << " " << to_string(r.predictor) << ": rho=" << fixed(r.correlation.rho, 3)
            << " [" << fixed(r.ci.lower, 3) << ", " << fixed(r.ci.upper, 3) << "] n="
            << r.correlation.n << "\n";
  }
  return 0;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Label-free geometry diagnostics for representation trajectories",
               "manifold-probe"};
  app.require_subcommand(1);

  RunConfig config;
  std::string format = "json";
  std::vector<std::string> group_order;
  std::vector<double> fractions(std::begin(kDefaultTruncationFractions),
                                std::end(kDefaultTruncationFractions));
  std::string alternate_root;
  std::string scores_file;
  std::string external_file;

  auto add_output = [&](CLI::App* sub) {
    sub->add_option("--output", config.output, "Report path (default: stdout)");
    sub->add_option("--format", format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
    sub->add_option("--threads", config.threads, "Worker threads (0: all cores)")
        ->capture_default_str();
  };
  auto add_bootstrap = [&](CLI::App* sub) {
    sub->add_option("--n-boot", config.n_boot, "Bootstrap resamples")->capture_default_str();
    sub->add_option("--level", config.level, "Confidence level")->capture_default_str();
    sub->add_option("--seed", config.seed, "Master seed")->capture_default_str();
  };
  auto add_analysis = [&](CLI::App* sub) {
    sub->add_option("--dataset-root", config.dataset_root, "Dataset directory")->required();
    sub->add_option("--k", config.k, "Neighbors for the ID estimator")->capture_default_str();
    sub->add_option("--epsilon", config.epsilon, "Dimensionality penalty")
        ->capture_default_str();
    sub->add_option("--layer", config.layer, "'final' or a layer index")->capture_default_str();
    sub->add_flag("--fallback-k", config.fallback_k,
                  "Shrink k for clouds with fewer than k+2 points");
    sub->add_flag("--force", config.force, "Analyze passing entries of a failing manifest");
    add_bootstrap(sub);
    add_output(sub);
  };

  auto* validate = app.add_subcommand("validate", "Check a dataset manifest and its files");
  validate->add_option("--dataset-root", config.dataset_root, "Dataset directory")->required();
  add_output(validate);

  auto* health = app.add_subcommand("health", "World/stimulus dimensionality, volume and H");
  add_analysis(health);
  health->add_option("--vocab-sample", config.vocab_sample, "Embedding rows sampled")
      ->capture_default_str();

  auto* profile = app.add_subcommand("profile", "Per-layer mean ID and volume");
  add_analysis(profile);

  auto* expand = app.add_subcommand("expand", "ID of cumulatively pooled prompt groups");
  add_analysis(expand);
  expand->add_option("--group-order", group_order, "Comma-separated group labels")
      ->delimiter(',');

  auto* controls = app.add_subcommand("controls", "Shuffle, truncation and alternate controls");
  add_analysis(controls);
  controls->add_option("--fractions", fractions, "Truncation fractions in (0, 1]")
      ->delimiter(',')
      ->capture_default_str();
  controls->add_option("--alternate-root", alternate_root, "Dataset from alternate prompts");

  auto* corr = app.add_subcommand("correlate", "Rank-correlate predictors with benchmarks");
  corr->add_option("--scores", scores_file, "CSV: model_id, d_stim, volume, h_score")
      ->required();
  corr->add_option("--external", external_file, "CSV: model_id, benchmark, score")->required();
  corr->add_option("--epsilon", config.epsilon, "Dimensionality penalty")->capture_default_str();
  add_bootstrap(corr);
  add_output(corr);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e, out, err);
    }
    err << "error: " << e.what() << "\n";
    return 2;
  }
  config.format = format == "csv" ? OutputFormat::csv : OutputFormat::json;

  try {
    if (validate->parsed()) {
      return cmd_validate(config, out);
    }
    if (health->parsed()) {
      return cmd_health(config, out, err);
    }
    if (profile->parsed()) {
      return cmd_profile(config, out, err);
    }
    if (expand->parsed()) {
      return cmd_expand(config, group_order, out, err);
    }
    if (controls->parsed()) {
      std::optional<std::filesystem::path> alt;
      if (!alternate_root.empty()) {
        alt = alternate_root;
      }
      return cmd_controls(config, fractions, alt, out, err);
    }
    return cmd_correlate(config, scores_file, external_file, out, err);
  } catch (const EnvironmentError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace manifold_probe
