#include "manifold_probe/trajectory_store.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <utility>

namespace manifold_probe {

namespace fs = std::filesystem;
using nlohmann::json;

bool all_finite(const Matrix& m) { return m.allFinite(); }

namespace {

constexpr std::size_t kMagicSize = 5;
constexpr std::size_t kPreambleSize = kMagicSize + 4;

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<char>((v >> shift) & 0xFFu));
  }
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
  }
  return v;
}

std::string encode(std::string_view magic, const json& header, const Matrix& values) {
  const std::string header_text = header.dump();
  std::string out;
  out.reserve(kPreambleSize + header_text.size() + 4 * static_cast<std::size_t>(values.size()));
  out.append(magic);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out.append(header_text);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const auto narrowed = static_cast<float>(values(r, c));
      if (!std::isfinite(narrowed)) {
        throw DataError("non-finite entry at row " + std::to_string(r) + ", column " +
                        std::to_string(c));
      }
      put_u32(out, std::bit_cast<std::uint32_t>(narrowed));
    }
  }
  return out;
}

void write_bytes(const std::string& bytes, const fs::path& destination) {
  std::ofstream out(destination, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw EnvironmentError("cannot write " + destination.string());
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw EnvironmentError("write failed for " + destination.string());
  }
}

std::string read_bytes(const fs::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) {
    throw EnvironmentError("cannot open " + source.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Decoded {
  json header;
  std::string payload;
};

Decoded decode(std::string_view magic, const std::string& bytes) {
  if (bytes.size() < kPreambleSize) {
    if (bytes.size() >= kMagicSize && std::string_view(bytes).substr(0, kMagicSize) != magic) {
      throw DataError("bad magic");
    }
    throw DataError("truncated file");
  }
  if (std::string_view(bytes).substr(0, kMagicSize) != magic) {
    throw DataError("bad magic");
  }
  const std::uint32_t header_len = get_u32(bytes, kMagicSize);
  if (bytes.size() - kPreambleSize < header_len) {
    throw DataError("truncated file");
  }
  Decoded out;
  try {
    out.header = json::parse(bytes.begin() + kPreambleSize,
                             bytes.begin() + kPreambleSize + header_len);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed header: ") + e.what());
  }
  if (!out.header.is_object()) {
    throw DataError("malformed header: not a JSON object");
  }
  out.payload = bytes.substr(kPreambleSize + header_len);
  return out;
}

Matrix decode_payload(const std::string& payload, std::size_t rows, std::size_t cols) {
  const std::size_t expected = rows * cols;
  if (payload.size() != expected * 4) {
    std::ostringstream msg;
    msg << "size mismatch: header declares " << rows << "x" << cols << " (" << expected
        << " values) but payload holds " << payload.size() / 4 << " values";
    if (payload.size() % 4 != 0) {
      msg << " plus " << payload.size() % 4 << " stray bytes";
    }
    throw DataError(msg.str());
  }
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t offset = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c, offset += 4) {
      const float v = std::bit_cast<float>(get_u32(payload, offset));
      if (!std::isfinite(v)) {
        throw DataError("non-finite entry at row " + std::to_string(r) + ", column " +
                        std::to_string(c));
      }
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return m;
}

template <typename T>
T field(const json& header, const char* key) {
  const auto it = header.find(key);
  if (it == header.end()) {
    throw DataError(std::string("malformed header: missing field '") + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string("malformed header: field '") + key + "' has wrong type");
  }
}

std::size_t positive_field(const json& header, const char* key) {
  const auto it = header.find(key);
  if (it == header.end() || !it->is_number_unsigned()) {
    throw DataError(std::string("malformed header: field '") + key +
                    "' must be a nonnegative integer");
  }
  return it->get<std::size_t>();
}

json manifest_to_json(const Manifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.trajectories) {
    entries.push_back({{"relative_path", e.relative_path},
                       {"prompt_id", e.prompt_id},
                       {"layer_index", e.layer_index},
                       {"group_label", e.group_label}});
  }
  json doc = {{"model_id", manifest.model_id},
              {"num_layers", manifest.num_layers},
              {"decode_config",
               {{"temperature", manifest.decode_config.temperature},
                {"max_new_tokens", manifest.decode_config.max_new_tokens}}},
              {"trajectories", entries}};
  if (manifest.embedding_path) {
    doc["embedding"] = {{"relative_path", *manifest.embedding_path}};
  }
  return doc;
}

Manifest manifest_from_json(const json& doc) {
  Manifest m;
  m.model_id = doc.at("model_id").get<std::string>();
  m.num_layers = doc.at("num_layers").get<std::size_t>();
  if (m.num_layers == 0) {
    throw DataError("num_layers must be positive");
  }
  if (const auto it = doc.find("decode_config"); it != doc.end()) {
    m.decode_config.temperature = it->value("temperature", m.decode_config.temperature);
    m.decode_config.max_new_tokens = it->value("max_new_tokens", m.decode_config.max_new_tokens);
  }
  for (const auto& e : doc.at("trajectories")) {
    ManifestEntry entry;
    entry.relative_path = e.at("relative_path").get<std::string>();
    entry.prompt_id = e.at("prompt_id").get<std::string>();
    entry.layer_index = e.at("layer_index").get<std::size_t>();
    entry.group_label = e.value("group_label", std::string());
    m.trajectories.push_back(std::move(entry));
  }
  if (const auto it = doc.find("embedding"); it != doc.end() && !it->is_null()) {
    m.embedding_path = it->at("relative_path").get<std::string>();
  }
  return m;
}

std::string check_trajectory_entry(const Manifest& manifest, const ManifestEntry& entry,
                                   const fs::path& root) {
  if (entry.layer_index >= manifest.num_layers) {
    return "layer index " + std::to_string(entry.layer_index) + " out of range (num_layers " +
           std::to_string(manifest.num_layers) + ")";
  }
  const fs::path path = root / entry.relative_path;
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    return "missing file";
  }
  try {
    const TrajectoryRecord record = read_trajectory(path);
    const auto& h = record.header;
    if (h.prompt_id != entry.prompt_id) {
      return "header mismatch: prompt_id '" + h.prompt_id + "'";
    }
    if (h.layer_index != entry.layer_index) {
      return "header mismatch: layer_index " + std::to_string(h.layer_index);
    }
    if (h.model_id != manifest.model_id) {
      return "header mismatch: model_id '" + h.model_id + "'";
    }
    if (h.group_label != entry.group_label) {
      return "header mismatch: group_label '" + h.group_label + "'";
    }
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

void TrajectoryRecord::validate() const {
  if (header.num_steps < 1 || header.ambient_dim < 1) {
    throw DataError("trajectory must have at least one step and one dimension");
  }
  if (static_cast<std::size_t>(states.rows()) != header.num_steps ||
      static_cast<std::size_t>(states.cols()) != header.ambient_dim) {
    throw DataError("size mismatch: header declares " + std::to_string(header.num_steps) + "x" +
                    std::to_string(header.ambient_dim) + " but states are " +
                    std::to_string(states.rows()) + "x" + std::to_string(states.cols()));
  }
  if (!all_finite(states)) {
    throw DataError("non-finite entry");
  }
}

void write_trajectory(const TrajectoryRecord& record, const fs::path& destination) {
  record.validate();
  const auto& h = record.header;
  const json header = {{"prompt_id", h.prompt_id},     {"layer_index", h.layer_index},
                       {"num_steps", h.num_steps},     {"ambient_dim", h.ambient_dim},
                       {"model_id", h.model_id},       {"group_label", h.group_label}};
  write_bytes(encode(kTrajectoryMagic, header, record.states), destination);
}

TrajectoryRecord read_trajectory(const fs::path& source) {
  const Decoded decoded = decode(kTrajectoryMagic, read_bytes(source));
  TrajectoryRecord record;
  auto& h = record.header;
  h.prompt_id = field<std::string>(decoded.header, "prompt_id");
  h.layer_index = positive_field(decoded.header, "layer_index");
  h.num_steps = positive_field(decoded.header, "num_steps");
  h.ambient_dim = positive_field(decoded.header, "ambient_dim");
  h.model_id = field<std::string>(decoded.header, "model_id");
  h.group_label = decoded.header.value("group_label", std::string());
  if (h.num_steps < 1 || h.ambient_dim < 1) {
    throw DataError("malformed header: num_steps and ambient_dim must be positive");
  }
  record.states = decode_payload(decoded.payload, h.num_steps, h.ambient_dim);
  return record;
}

void write_embedding(const EmbeddingMatrix& embedding, const fs::path& destination) {
  if (embedding.rows.rows() < 1 || embedding.rows.cols() < 1) {
    throw DataError("embedding matrix must be non-empty");
  }
  if (!all_finite(embedding.rows)) {
    throw DataError("non-finite entry");
  }
  const json header = {{"model_id", embedding.model_id},
                       {"vocab_size", embedding.vocab_size()},
                       {"ambient_dim", embedding.ambient_dim()}};
  write_bytes(encode(kEmbeddingMagic, header, embedding.rows), destination);
}

EmbeddingMatrix read_embedding(const fs::path& source) {
  const Decoded decoded = decode(kEmbeddingMagic, read_bytes(source));
  EmbeddingMatrix embedding;
  embedding.model_id = field<std::string>(decoded.header, "model_id");
  const std::size_t vocab = positive_field(decoded.header, "vocab_size");
  const std::size_t dim = positive_field(decoded.header, "ambient_dim");
  if (vocab < 1 || dim < 1) {
    throw DataError("malformed header: vocab_size and ambient_dim must be positive");
  }
  embedding.rows = decode_payload(decoded.payload, vocab, dim);
  return embedding;
}

Manifest read_manifest(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw EnvironmentError("missing dataset root " + root.string());
  }
  const fs::path path = root / kManifestFileName;
  if (!fs::is_regular_file(path, ec)) {
    throw EnvironmentError("missing manifest");
  }
  std::ifstream in(path);
  if (!in) {
    throw EnvironmentError("cannot open " + path.string());
  }
  try {
    return manifest_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError(std::string("unparseable manifest: ") + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string("unparseable manifest: ") + e.what());
  }
}

void write_manifest(const Manifest& manifest, const fs::path& root) {
  std::ofstream out(root / kManifestFileName, std::ios::trunc);
  if (!out) {
    throw EnvironmentError("cannot write " + (root / kManifestFileName).string());
  }
  out << manifest_to_json(manifest).dump(2) << '\n';
}

bool ValidationReport::all_passed() const { return num_failed() == 0; }

std::size_t ValidationReport::num_failed() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const EntryCheck& e) { return !e.passed; }));
}

ValidationReport validate_manifest(const fs::path& root) {
  const Manifest manifest = read_manifest(root);
  ValidationReport report;
  std::set<std::pair<std::string, std::size_t>> seen;
  for (const auto& entry : manifest.trajectories) {
    EntryCheck check{entry.relative_path, entry.prompt_id, entry.layer_index, false, {}};
    if (!seen.emplace(entry.prompt_id, entry.layer_index).second) {
      check.reason = "duplicate key";
    } else {
      check.reason = check_trajectory_entry(manifest, entry, root);
    }
    check.passed = check.reason.empty();
    report.entries.push_back(std::move(check));
  }
  if (manifest.embedding_path) {
    EntryCheck check{*manifest.embedding_path, {}, std::nullopt, false, {}};
    const fs::path path = root / *manifest.embedding_path;
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
      check.reason = "missing file";
    } else {
      try {
        const EmbeddingMatrix e = read_embedding(path);
        if (e.model_id != manifest.model_id) {
          check.reason = "header mismatch: model_id '" + e.model_id + "'";
        }
      } catch (const std::exception& e) {
        check.reason = e.what();
      }
    }
    check.passed = check.reason.empty();
    report.entries.push_back(std::move(check));
  }
  return report;
}

std::vector<std::size_t> TrajectorySet::layers() const {
  std::set<std::size_t> distinct;
  for (const auto& r : records) {
    distinct.insert(r.header.layer_index);
  }
  return {distinct.begin(), distinct.end()};
}

std::vector<const TrajectoryRecord*> TrajectorySet::at_layer(std::size_t layer) const {
  std::vector<const TrajectoryRecord*> out;
  for (const auto& r : records) {
    if (r.header.layer_index == layer) {
      out.push_back(&r);
    }
  }
  return out;
}

std::size_t TrajectorySet::final_layer() const {
  if (num_layers == 0) {
    throw DataError("trajectory set declares no layers");
  }
  return num_layers - 1;
}

Dataset load_dataset(const fs::path& root, bool force) {
  Dataset ds;
  ds.manifest = read_manifest(root);
  ds.validation = validate_manifest(root);
  if (!ds.validation.all_passed() && !force) {
    throw DataError("manifest validation failed for " +
                    std::to_string(ds.validation.num_failed()) +
                    " entries (run `validate` for details, or pass --force)");
  }
  ds.trajectories.model_id = ds.manifest.model_id;
  ds.trajectories.num_layers = ds.manifest.num_layers;
  const auto& checks = ds.validation.entries;
  for (std::size_t i = 0; i < ds.manifest.trajectories.size(); ++i) {
    if (!checks[i].passed) {
      continue;
    }
    TrajectoryRecord record = read_trajectory(root / ds.manifest.trajectories[i].relative_path);
    ds.trajectories.records.push_back(std::move(record));
  }
  if (ds.manifest.embedding_path && checks.back().passed) {
    ds.embedding = read_embedding(root / *ds.manifest.embedding_path);
  }
  return ds;
}

}  // namespace manifold_probe
