#ifndef UQR_TESTS_TEST_UTIL_HPP_
#define UQR_TESTS_TEST_UTIL_HPP_

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "uqr/mask.hpp"

namespace uqr::testutil {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("uqr_test_" + tag + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
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

inline BinaryMask random_binary_mask(std::mt19937_64& rng, int w, int h, double density = 0.5) {
  BinaryMask m(w, h);
  std::bernoulli_distribution bit(density);
  for (auto& b : m.bits) b = bit(rng) ? 1 : 0;
  return m;
}

inline SoftMask random_soft_mask(std::mt19937_64& rng, int w, int h) {
  SoftMask m(w, h);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (auto& v : m.values) v = dist(rng);
  return m;
}

inline BinaryMask disk(int side, double cx, double cy, double r) {
  BinaryMask m(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r * r) m.at(x, y) = 1;
    }
  return m;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace uqr::testutil

#endif  // UQR_TESTS_TEST_UTIL_HPP_
