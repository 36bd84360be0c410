#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "protex/config.hpp"
#include "protex/core_math.hpp"
#include "protex/data.hpp"
#include "protex/model.hpp"

namespace protex::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

inline std::vector<int> alternating_labels(std::size_t n) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 2);
  return y;
}

/// Small model used throughout: D=5, d=4, m=3 (one negative), K=2.
inline TrainConfig small_config() {
  TrainConfig c;
  c.num_prototypes = 3;
  c.neg_prototypes = 1;
  c.num_classes = 2;
  c.latent_dim = 4;
  return c;
}

/// A fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("protex-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Settings under which training converges on the default synthetic task in a
/// few seconds.
inline TrainConfig desk_config(Algorithm algo, bool normalize, std::uint64_t seed) {
  TrainConfig c;
  c.algorithm = algo;
  c.normalize = normalize;
  c.seed = seed;
  c.lr = 3e-3;
  c.encoder_lr = 3e-4;
  c.patience = 100;
  c.iterations = algo == Algorithm::Simple ? 200 : 100;
  return c;
}

/// Reciprocal-distance weights from products of the other distances, so no
/// division by a distance happens. Zero distances share the mass evenly.
inline std::vector<double> reciprocal_oracle(const std::vector<double>& d) {
  const std::size_t n = d.size();
  std::size_t zeros = 0;
  for (double v : d) zeros += v == 0.0 ? 1 : 0;
  std::vector<double> out(n, 0.0);
  if (zeros > 0) {
    for (std::size_t i = 0; i < n; ++i) out[i] = d[i] == 0.0 ? 1.0 / static_cast<double>(zeros) : 0.0;
    return out;
  }
  long double total = 0;
  std::vector<long double> prod(n, 1.0L);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) prod[i] *= d[k];
    }
    total += prod[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(prod[i] / total);
  return out;
}

}  // namespace protex::testing
