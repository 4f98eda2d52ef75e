#include "synthetic.hpp"

#include <Eigen/QR>

#include <atomic>
#include <cmath>
#include <unistd.h>

namespace synth {

namespace fs = std::filesystem;
namespace mp = manifold_probe;

Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rng.normal();
    }
  }
  return m;
}

Matrix uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rng.uniform();
    }
  }
  return m;
}

Matrix random_orthogonal(std::size_t n, Rng& rng) {
  const Eigen::MatrixXd g = gaussian(n, n, rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0) {
      q.col(j) *= -1.0;
    }
  }
  return q;
}

Matrix embed(const Matrix& intrinsic, std::size_t ambient, Rng& rng) {
  const Matrix q = random_orthogonal(ambient, rng);
  return intrinsic * q.topRows(intrinsic.cols());
}

Matrix hypercube(std::size_t n, std::size_t d, std::size_t ambient, Rng& rng) {
  return embed(uniform(n, d, rng), ambient, rng);
}

Matrix as_stored(const Matrix& m) {
  return m.cast<float>().cast<double>();
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("mp_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ignored;
  fs::remove_all(path_, ignored);
}

mp::TrajectoryRecord make_record(const std::string& prompt_id, std::size_t layer, Matrix states,
                                 const std::string& group, const std::string& model_id) {
  mp::TrajectoryRecord r;
  r.header.prompt_id = prompt_id;
  r.header.layer_index = layer;
  r.header.num_steps = static_cast<std::size_t>(states.rows());
  r.header.ambient_dim = static_cast<std::size_t>(states.cols());
  r.header.model_id = model_id;
  r.header.group_label = group;
  r.states = std::move(states);
  return r;
}

void write_dataset(const SyntheticDataset& data, const fs::path& root) {
  fs::create_directories(root / "traj");
  mp::Manifest manifest;
  manifest.model_id = data.model_id;
  manifest.num_layers = data.num_layers;
  for (const auto& rec : data.records) {
    const std::string rel = "traj/" + rec.header.prompt_id + "_L" +
                            std::to_string(rec.header.layer_index) + ".mtrj";
    auto copy = rec;
    copy.header.model_id = data.model_id;
    mp::write_trajectory(copy, root / rel);
    manifest.trajectories.push_back(
        {rel, rec.header.prompt_id, rec.header.layer_index, rec.header.group_label});
  }
  if (data.embedding) {
    mp::write_embedding({data.model_id, *data.embedding}, root / "embedding.memb");
    manifest.embedding_path = "embedding.memb";
  }
  mp::write_manifest(manifest, root);
}

SyntheticDataset depth_suite(std::uint64_t seed, std::size_t prompts, std::size_t steps,
                             std::size_t ambient, double volume_step) {
  Rng rng(seed);
  SyntheticDataset data;
  data.model_id = "depth";
  data.num_layers = 9;
  for (std::size_t p = 0; p < prompts; ++p) {
    for (std::size_t layer = 0; layer < 9; ++layer) {
      const std::size_t dim = 9 - layer;
      const double target = 2.0 + volume_step * static_cast<double>(layer);
      const double variance =
          (std::exp(2.0 * target / static_cast<double>(dim)) - 1.0) / static_cast<double>(ambient);
      Matrix states = embed(gaussian(steps, dim, rng) * std::sqrt(variance), ambient, rng);
      states.rowwise() += gaussian(1, ambient, rng).row(0);
      data.records.push_back(make_record("p" + std::to_string(p), layer, std::move(states)));
    }
  }
  return data;
}

SyntheticDataset expansion_suite(std::uint64_t seed, std::size_t groups,
                                 std::size_t prompts_per_group, std::size_t steps,
                                 std::size_t ambient) {
  Rng rng(seed);
  SyntheticDataset data;
  data.model_id = "expansion";
  const Matrix basis = random_orthogonal(ambient, rng);
  for (std::size_t g = 0; g < groups; ++g) {
    const Matrix plane = basis.middleRows(static_cast<Eigen::Index>(2 * g), 2);
    for (std::size_t p = 0; p < prompts_per_group; ++p) {
      Matrix states = gaussian(steps, 2, rng) * plane;
      states.rowwise() += gaussian(1, ambient, rng).row(0);
      data.records.push_back(make_record("g" + std::to_string(g) + "p" + std::to_string(p), 0,
                                         std::move(states), "type" + std::to_string(g)));
    }
  }
  return data;
}

SyntheticDataset health_suite(std::uint64_t seed, std::size_t prompts, std::size_t steps,
                              std::size_t ambient, std::size_t vocab) {
  Rng rng(seed);
  SyntheticDataset data;
  data.model_id = "health";
  data.num_layers = 2;
  for (std::size_t p = 0; p < prompts; ++p) {
    for (std::size_t layer = 0; layer < 2; ++layer) {
      const std::size_t dim = layer == 0 ? 6 : 3;
      Matrix states = embed(gaussian(steps, dim, rng), ambient, rng);
      data.records.push_back(make_record("p" + std::to_string(p), layer, std::move(states),
                                         p % 2 == 0 ? "even" : "odd"));
    }
  }
  data.embedding = gaussian(vocab, ambient, rng);
  return data;
}

}  // namespace synth
