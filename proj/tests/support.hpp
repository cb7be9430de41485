#pragma once

// Shared test helpers: random instances and the central finite-difference
// oracle used by every gradient check.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <span>
#include <vector>

#include <unistd.h>

#include "meel/numerics.hpp"
#include "meel/prng.hpp"

namespace meel::testing {

inline Vector random_vector(Prng& prng, std::size_t n, double scale = 1.0) {
  Vector v = prng.gaussian_vector(n);
  for (double& x : v) x *= scale;
  return v;
}

inline Vector random_unit(Prng& prng, std::size_t n) { return l2_normalize(random_vector(prng, n)); }

inline Matrix random_matrix(Prng& prng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * prng.gaussian();
  return m;
}

inline Matrix random_unit_rows(Prng& prng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const Vector u = random_unit(prng, cols);
    std::copy(u.begin(), u.end(), m.row(i).begin());
  }
  return m;
}

// Central differences of a scalar function, perturbing `x` in place.
inline Vector numeric_gradient(const std::function<double()>& f, std::span<double> x,
                               double step = 1e-6) {
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f();
    x[i] = saved - step;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(std::span<const double> a, std::span<const double> b,
                             double floor = 1e-8) {
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  const double scale = std::max({l2_norm(a), l2_norm(b), floor});
  return std::sqrt(diff) / scale;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("meel_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace meel::testing
