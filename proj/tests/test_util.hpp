#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "mvtrack/types.hpp"

namespace mvtrack::testutil {

inline MatrixD RandomMatrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  MatrixD m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = gauss(rng);
  return m;
}

// Random matrix whose entries are exactly representable as float32.
inline MatrixF RandomFloatMatrix(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> uni(-2.0f, 2.0f);
  MatrixF m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = uni(rng);
  return m;
}

inline MatrixD RandomSpd(int dim, std::mt19937_64& rng, double ridge = 0.1) {
  MatrixD a = RandomMatrix(dim, dim + 4, rng);
  return a * a.transpose() / static_cast<double>(dim) +
         ridge * MatrixD::Identity(dim, dim);
}

// Unique scratch directory under the test binary's working directory.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mvtrack_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace mvtrack::testutil
