#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "xmodal/common.hpp"
#include "xmodal/error.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("xmodal-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline xmodal::Matrix gaussian(int rows, int cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  xmodal::Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

/// Runs `fn` and returns the ErrorCode it threw; fails the test if it throws nothing.
template <class Fn>
xmodal::ErrorCode error_of(Fn&& fn) {
  try {
    fn();
  } catch (const xmodal::Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected xmodal::Error, nothing was thrown");
}

}  // namespace testing
