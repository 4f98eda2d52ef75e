#pragma once

// Command-line front end. Every command is deterministic given its
// configuration; exit codes are 0 on success, 1 on data or contract errors and
// 2 on environment errors (missing files, bad invocation).

#include "manifold_probe/diagnostics.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace manifold_probe {

enum class OutputFormat { json, csv };

struct RunConfig {
  std::filesystem::path dataset_root;
  std::size_t k = kDefaultK;
  double epsilon = kDefaultEpsilon;
  std::string layer = "final";
  std::size_t n_boot = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  std::filesystem::path output;  // empty: write the report to stdout
  OutputFormat format = OutputFormat::json;
  std::size_t vocab_sample = kDefaultVocabSample;
  bool fallback_k = false;
  bool force = false;
  std::size_t threads = 0;

  /// Throws DataError when a field is outside its domain.
  void check() const;
  AnalysisOptions analysis() const;
};

int cmd_validate(const RunConfig& config, std::ostream& out);
int cmd_health(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_profile(const RunConfig& config, std::ostream& out, std::ostream& err);
/// An empty group order uses the labels in order of first appearance.
int cmd_expand(const RunConfig& config, const std::vector<std::string>& group_order,
               std::ostream& out, std::ostream& err);
/// Runs the shuffle and truncation controls, plus the alternate-stimuli control
/// when `alternate_root` is given, and writes them as one report.
int cmd_controls(const RunConfig& config, const std::vector<double>& fractions,
                 const std::optional<std::filesystem::path>& alternate_root, std::ostream& out,
                 std::ostream& err);
int cmd_correlate(const RunConfig& config, const std::filesystem::path& scores_file,
                  const std::filesystem::path& external_file, std::ostream& out,
                  std::ostream& err);

/// Parses arguments, dispatches to a command and maps exceptions to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace manifold_probe
