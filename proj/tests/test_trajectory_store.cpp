#include "doctest.h"

#include "manifold_probe/trajectory_store.hpp"
#include "synthetic.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>

namespace fs = std::filesystem;
using namespace manifold_probe;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    return false;
  }
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a.data()[i]) != std::bit_cast<std::uint64_t>(b.data()[i])) {
      return false;
    }
  }
  return true;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

TrajectoryRecord sample_record(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  return synth::make_record("q", 0, synth::as_stored(synth::gaussian(rows, cols, rng)), "g", "m");
}

synth::SyntheticDataset small_dataset() {
  synth::SyntheticDataset d;
  d.model_id = "m";
  d.num_layers = 2;
  Rng rng(3);
  for (const char* id : {"a", "b"}) {
    for (std::size_t layer = 0; layer < 2; ++layer) {
      d.records.push_back(synth::make_record(id, layer, synth::gaussian(5, 3, rng), "grp"));
    }
  }
  d.embedding = synth::gaussian(10, 3, rng);
  return d;
}

}  // namespace

TEST_CASE("1x1 zero record round-trips") {
  synth::TempDir dir("ts");
  auto rec = synth::make_record("p", 0, Matrix::Zero(1, 1));
  write_trajectory(rec, dir.path() / "a.mtrj");
  const auto back = read_trajectory(dir.path() / "a.mtrj");
  CHECK(back.header == rec.header);
  CHECK(bit_equal(back.states, rec.states));
}

TEST_CASE("3x4 zeros round-trip bit-exactly") {
  synth::TempDir dir("ts");
  auto rec = synth::make_record("p", 1, Matrix::Zero(3, 4), "grp", "model");
  write_trajectory(rec, dir.path() / "z.mtrj");
  const auto back = read_trajectory(dir.path() / "z.mtrj");
  CHECK(back.header == rec.header);
  CHECK(bit_equal(back.states, rec.states));
}

TEST_CASE("round-trip over random shapes") {
  synth::TempDir dir("ts");
  Rng shapes(11);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t rows = 1 + shapes.uniform_index(64);
    const std::size_t cols = 1 + shapes.uniform_index(256);
    const auto rec = sample_record(rows, cols, 100 + trial);
    const auto path = dir.path() / ("r" + std::to_string(trial) + ".mtrj");
    write_trajectory(rec, path);
    const auto back = read_trajectory(path);
    REQUIRE(back.header == rec.header);
    REQUIRE(bit_equal(back.states, rec.states));
  }
}

TEST_CASE("64-bit values are stored as the nearest float") {
  synth::TempDir dir("ts");
  Matrix m(1, 2);
  m << 0.1, 1.0 / 3.0;
  write_trajectory(synth::make_record("p", 0, m), dir.path() / "f.mtrj");
  const auto back = read_trajectory(dir.path() / "f.mtrj");
  CHECK(back.states(0, 0) == static_cast<double>(0.1f));
  CHECK(back.states(0, 1) == static_cast<double>(1.0f / 3.0f));
}

TEST_CASE("file layout is fixed") {
  synth::TempDir dir("ts");
  Matrix m(1, 2);
  m << 1.0, -2.0;
  write_trajectory(synth::make_record("p", 0, m), dir.path() / "l.mtrj");
  const std::string bytes = slurp(dir.path() / "l.mtrj");
  REQUIRE(bytes.size() > 9);
  CHECK(bytes.substr(0, 5) == "MTRJ1");
  const auto len = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[5])) |
                   static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[6])) << 8 |
                   static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[7])) << 16 |
                   static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[8])) << 24;
  REQUIRE(bytes.size() == 9 + len + 8);
  CHECK(bytes[9] == '{');
  const std::string payload = bytes.substr(9 + len);
  CHECK(payload == std::string("\x00\x00\x80\x3f\x00\x00\x00\xc0", 8));

  // Identical input, identical bytes.
  write_trajectory(synth::make_record("p", 0, m), dir.path() / "l2.mtrj");
  CHECK(slurp(dir.path() / "l2.mtrj") == bytes);
}

TEST_CASE("write rejects non-finite entries") {
  synth::TempDir dir("ts");
  Matrix m = Matrix::Zero(2, 2);
  m(1, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto msg = error_of([&] { write_trajectory(synth::make_record("p", 0, m), dir.path() / "n"); });
  CHECK(msg.find("non-finite entry") != std::string::npos);

  m(1, 0) = 1e300;  // overflows float
  const auto msg2 = error_of([&] { write_trajectory(synth::make_record("p", 0, m), dir.path() / "n"); });
  CHECK(msg2.find("non-finite entry") != std::string::npos);
}

TEST_CASE("read detects corruption") {
  synth::TempDir dir("ts");
  const auto path = dir.path() / "c.mtrj";
  write_trajectory(sample_record(5, 3, 1), path);
  const std::string good = slurp(path);

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    spit(path, bad);
    CHECK_THROWS_WITH_AS(read_trajectory(path), "bad magic", DataError);
  }
  SUBCASE("embedding magic in a trajectory file") {
    std::string bad = good;
    bad.replace(0, 5, "MEMB1");
    spit(path, bad);
    CHECK_THROWS_WITH_AS(read_trajectory(path), "bad magic", DataError);
  }
  SUBCASE("header claims 5 rows, payload holds 4") {
    spit(path, good.substr(0, good.size() - 3 * 4));
    const auto msg = error_of([&] { read_trajectory(path); });
    CHECK(msg.find("size mismatch") != std::string::npos);
  }
  SUBCASE("extra payload") {
    spit(path, good + std::string(4, '\0'));
    CHECK(error_of([&] { read_trajectory(path); }).find("size mismatch") != std::string::npos);
  }
  SUBCASE("truncated preamble") {
    spit(path, good.substr(0, 7));
    CHECK_THROWS_WITH_AS(read_trajectory(path), "truncated file", DataError);
  }
  SUBCASE("truncated header") {
    spit(path, good.substr(0, 12));
    CHECK_THROWS_WITH_AS(read_trajectory(path), "truncated file", DataError);
  }
  SUBCASE("NaN in payload") {
    std::string bad = good;
    bad.replace(bad.size() - 4, 4, std::string("\x00\x00\xc0\x7f", 4));
    spit(path, bad);
    CHECK(error_of([&] { read_trajectory(path); }).find("non-finite entry") != std::string::npos);
  }
  SUBCASE("missing file is an environment error") {
    CHECK_THROWS_AS(read_trajectory(dir.path() / "absent.mtrj"), EnvironmentError);
  }
}

TEST_CASE("embedding round-trip") {
  synth::TempDir dir("ts");
  Rng rng(4);
  EmbeddingMatrix e{"m", synth::as_stored(synth::gaussian(30, 7, rng))};
  write_embedding(e, dir.path() / "e.memb");
  CHECK(slurp(dir.path() / "e.memb").substr(0, 5) == "MEMB1");
  const auto back = read_embedding(dir.path() / "e.memb");
  CHECK(back.model_id == "m");
  CHECK(back.vocab_size() == 30);
  CHECK(back.ambient_dim() == 7);
  CHECK(bit_equal(back.rows, e.rows));
  CHECK_THROWS_WITH_AS(read_trajectory(dir.path() / "e.memb"), "bad magic", DataError);
}

TEST_CASE("manifest round-trip") {
  synth::TempDir dir("ts");
  Manifest m;
  m.model_id = "model";
  m.num_layers = 4;
  m.decode_config = {0.7, 15000};
  m.trajectories = {{"a.mtrj", "a", 3, "x"}, {"b.mtrj", "b", 0, ""}};
  m.embedding_path = "e.memb";
  write_manifest(m, dir.path());
  const auto back = read_manifest(dir.path());
  CHECK(back.model_id == "model");
  CHECK(back.num_layers == 4);
  CHECK(back.decode_config.temperature == 0.7);
  CHECK(back.decode_config.max_new_tokens == 15000);
  REQUIRE(back.trajectories.size() == 2);
  CHECK(back.trajectories[0].layer_index == 3);
  CHECK(back.trajectories[0].group_label == "x");
  CHECK(back.trajectories[1].group_label.empty());
  CHECK(back.embedding_path == std::optional<std::string>("e.memb"));
}

TEST_CASE("validate_manifest") {
  synth::TempDir dir("ts");
  const auto data = small_dataset();
  synth::write_dataset(data, dir.path());

  SUBCASE("all entries pass") {
    const auto report = validate_manifest(dir.path());
    CHECK(report.entries.size() == 5);
    CHECK(report.all_passed());
    CHECK(report.num_failed() == 0);
  }
  SUBCASE("missing file") {
    fs::remove(dir.path() / "traj/b_L1.mtrj");
    const auto report = validate_manifest(dir.path());
    CHECK(report.num_failed() == 1);
    for (const auto& e : report.entries) {
      if (e.relative_path == "traj/b_L1.mtrj") {
        CHECK_FALSE(e.passed);
        CHECK(e.reason == "missing file");
      } else {
        CHECK(e.passed);
      }
    }
  }
  SUBCASE("duplicate key") {
    auto m = read_manifest(dir.path());
    m.trajectories.push_back(m.trajectories.front());
    write_manifest(m, dir.path());
    const auto report = validate_manifest(dir.path());
    REQUIRE(report.entries.size() == 6);
    CHECK(report.num_failed() == 1);
    CHECK(report.entries[4].reason.find("duplicate key") != std::string::npos);
  }
  SUBCASE("layer out of range") {
    auto m = read_manifest(dir.path());
    m.num_layers = 1;
    write_manifest(m, dir.path());
    const auto report = validate_manifest(dir.path());
    CHECK(report.num_failed() == 2);
  }
  SUBCASE("header disagrees with manifest") {
    auto m = read_manifest(dir.path());
    m.trajectories[0].prompt_id = "other";
    write_manifest(m, dir.path());
    const auto report = validate_manifest(dir.path());
    CHECK(report.num_failed() == 1);
    CHECK(report.entries[0].reason.find("header mismatch") != std::string::npos);
  }
  SUBCASE("corrupt file") {
    spit(dir.path() / "traj/a_L0.mtrj", "garbage!!!!!");
    const auto report = validate_manifest(dir.path());
    CHECK(report.entries[0].reason == "bad magic");
  }
  SUBCASE("missing embedding") {
    fs::remove(dir.path() / "embedding.memb");
    const auto report = validate_manifest(dir.path());
    CHECK(report.num_failed() == 1);
    CHECK_FALSE(report.entries.back().layer_index.has_value());
  }
  SUBCASE("missing manifest") {
    fs::remove(dir.path() / "manifest.json");
    CHECK_THROWS_WITH_AS(validate_manifest(dir.path()), "missing manifest", EnvironmentError);
  }
  SUBCASE("unparseable manifest") {
    spit(dir.path() / "manifest.json", "{not json");
    CHECK(error_of([&] { validate_manifest(dir.path()); }).find("unparseable manifest") == 0);
    CHECK_THROWS_AS(validate_manifest(dir.path()), DataError);
  }
}

TEST_CASE("validate_manifest is read-only") {
  synth::TempDir dir("ts");
  synth::write_dataset(small_dataset(), dir.path());
  fs::remove(dir.path() / "traj/a_L1.mtrj");
  std::map<fs::path, std::pair<std::string, fs::file_time_type>> before;
  for (const auto& e : fs::recursive_directory_iterator(dir.path())) {
    if (e.is_regular_file()) {
      before[e.path()] = {slurp(e.path()), fs::last_write_time(e.path())};
    }
  }
  validate_manifest(dir.path());
  validate_manifest(dir.path());
  std::size_t count = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path())) {
    if (e.is_regular_file()) {
      ++count;
      REQUIRE(before.count(e.path()) == 1);
      CHECK(before[e.path()].first == slurp(e.path()));
      CHECK(before[e.path()].second == fs::last_write_time(e.path()));
    }
  }
  CHECK(count == before.size());
}

TEST_CASE("load_dataset") {
  synth::TempDir dir("ts");
  const auto data = small_dataset();
  synth::write_dataset(data, dir.path());

  const auto ds = load_dataset(dir.path());
  CHECK(ds.trajectories.model_id == "m");
  CHECK(ds.trajectories.records.size() == 4);
  REQUIRE(ds.embedding.has_value());
  CHECK(ds.embedding->vocab_size() == 10);
  CHECK(ds.trajectories.layers() == std::vector<std::size_t>{0, 1});
  CHECK(ds.trajectories.final_layer() == 1);
  const auto at1 = ds.trajectories.at_layer(1);
  REQUIRE(at1.size() == 2);
  CHECK(at1[0]->header.prompt_id == "a");
  CHECK(at1[1]->header.prompt_id == "b");
  CHECK(bit_equal(at1[0]->states, synth::as_stored(data.records[1].states)));

  fs::remove(dir.path() / "traj/a_L0.mtrj");
  CHECK_THROWS_AS(load_dataset(dir.path()), DataError);
  const auto forced = load_dataset(dir.path(), true);
  CHECK(forced.trajectories.records.size() == 3);
  CHECK(forced.validation.num_failed() == 1);

  CHECK_THROWS_AS(load_dataset(dir.path() / "nowhere"), EnvironmentError);
}
