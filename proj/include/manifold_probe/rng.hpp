#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace manifold_probe {

std::uint64_t splitmix64(std::uint64_t& state);

/// Seed for stream `stream` of a master seed. Every resample, shuffle and
/// subsample draws from its own stream, so results never depend on how work is
/// scheduled across workers.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Portable generator. The engine and all distribution transforms are fully
/// specified here so that streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  std::size_t uniform_index(std::size_t n);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via Box-Muller.
  double normal();

  /// Fisher-Yates.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace manifold_probe
