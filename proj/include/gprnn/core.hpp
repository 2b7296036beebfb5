// Common type aliases, RNG helpers and small numeric utilities.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace gprnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// All errors raised by the library derive from this.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Owned per-run RNG. mt19937_64 keeps draws reproducible across runs on
// the same platform; do not share one instance between concurrent runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double normal() { return normal_(eng_); }
  double uniform() { return unif_(eng_); }
  std::uint64_t raw() { return eng_(); }

  Matrix normal_matrix(int rows, int cols) {
    Matrix m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }
  Matrix uniform_matrix(int rows, int cols, double lo = 0.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = lo + (hi - lo) * uniform();
    return m;
  }
  int poisson(double rate) {
    std::poisson_distribution<int> d(rate);
    return d(eng_);
  }

  // Derive an independent stream, e.g. one per iteration or per trial.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27; x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
  }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kLog2Pi = 1.8378770664093454836;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace gprnn
