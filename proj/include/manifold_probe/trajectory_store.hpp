#pragma once

// On-disk trajectory datasets.
//
// Binary layout shared by trajectory and embedding files:
//
//   [5 bytes magic][u32 LE header length][UTF-8 JSON header][payload]
//
// The payload is rows*cols IEEE-754 binary32 values, little-endian, row-major.
// Trajectory files use magic "MTRJ1", embedding files "MEMB1". A dataset root
// holds one `manifest.json` that lists every file.

#include "manifold_probe/common.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace manifold_probe {

inline constexpr std::string_view kTrajectoryMagic = "MTRJ1";
inline constexpr std::string_view kEmbeddingMagic = "MEMB1";
inline constexpr std::string_view kManifestFileName = "manifest.json";

struct TrajectoryHeader {
  std::string prompt_id;
  std::size_t layer_index = 0;
  std::size_t num_steps = 0;
  std::size_t ambient_dim = 0;
  std::string model_id;
  std::string group_label;

  bool operator==(const TrajectoryHeader&) const = default;
};

/// Final-position hidden states of one prompt at one layer; row t is the state
/// after generation step t.
struct TrajectoryRecord {
  TrajectoryHeader header;
  Matrix states;

  /// Throws DataError when the shape disagrees with the header or an entry is
  /// not finite.
  void validate() const;
};

struct EmbeddingMatrix {
  std::string model_id;
  Matrix rows;

  std::size_t vocab_size() const { return static_cast<std::size_t>(rows.rows()); }
  std::size_t ambient_dim() const { return static_cast<std::size_t>(rows.cols()); }
};

struct DecodeConfig {
  double temperature = 0.7;
  std::size_t max_new_tokens = 128;
};

struct ManifestEntry {
  std::string relative_path;
  std::string prompt_id;
  std::size_t layer_index = 0;
  std::string group_label;
};

struct Manifest {
  std::string model_id;
  std::size_t num_layers = 0;
  DecodeConfig decode_config;
  std::vector<ManifestEntry> trajectories;
  std::optional<std::string> embedding_path;
};

void write_trajectory(const TrajectoryRecord& record, const std::filesystem::path& destination);
TrajectoryRecord read_trajectory(const std::filesystem::path& source);

void write_embedding(const EmbeddingMatrix& embedding, const std::filesystem::path& destination);
EmbeddingMatrix read_embedding(const std::filesystem::path& source);

/// Reads `<root>/manifest.json`. Throws EnvironmentError("missing manifest") when
/// absent and DataError("unparseable manifest: ...") on bad JSON or schema.
Manifest read_manifest(const std::filesystem::path& root);
void write_manifest(const Manifest& manifest, const std::filesystem::path& root);

struct EntryCheck {
  std::string relative_path;
  std::string prompt_id;
  std::optional<std::size_t> layer_index;  // absent for the embedding entry
  bool passed = false;
  std::string reason;
};

struct ValidationReport {
  std::vector<EntryCheck> entries;

  bool all_passed() const;
  std::size_t num_failed() const;
};

/// Checks every manifest entry without modifying anything under `root`.
ValidationReport validate_manifest(const std::filesystem::path& root);

/// Records of one model, grouped by (prompt, layer).
struct TrajectorySet {
  std::string model_id;
  std::size_t num_layers = 0;
  std::vector<TrajectoryRecord> records;

  /// Distinct layer indices present, ascending.
  std::vector<std::size_t> layers() const;
  /// Records at `layer`, in manifest order.
  std::vector<const TrajectoryRecord*> at_layer(std::size_t layer) const;
  std::size_t final_layer() const;
};

struct Dataset {
  Manifest manifest;
  ValidationReport validation;
  TrajectorySet trajectories;
  std::optional<EmbeddingMatrix> embedding;
};

/// Validates and loads a dataset root. A failing validation throws DataError
/// unless `force` is set, in which case only passing entries are loaded.
Dataset load_dataset(const std::filesystem::path& root, bool force = false);

}  // namespace manifold_probe
