#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace sbi {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = std::vector<double>;

// Seeded random source. Draws are defined on top of the raw 64-bit
// Mersenne Twister output so a seed reproduces the same values with any
// standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // Uniform integer in [0, bound). bound > 0.
  std::uint64_t below(std::uint64_t bound);

  // Independent child stream, e.g. one per worker thread.
  Rng split() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

 private:
  std::mt19937_64 engine_;
};

// Bijection on {0, .., size-1}; image(i) is where index i is sent.
class Permutation {
 public:
  Permutation() = default;

  // Throws ConfigError unless `mapping` is a bijection.
  explicit Permutation(std::vector<std::uint32_t> mapping);

  static Permutation identity(std::size_t size);

  // Fisher-Yates.
  static Permutation random(std::size_t size, Rng& rng);

  std::size_t size() const { return mapping_.size(); }
  std::uint32_t image(std::size_t i) const { return mapping_[i]; }
  const std::vector<std::uint32_t>& mapping() const { return mapping_; }

  bool operator==(const Permutation&) const = default;

 private:
  std::vector<std::uint32_t> mapping_;
};

bool is_bijection(std::span<const std::uint32_t> mapping);

struct InvertiblePair {
  Matrix m;
  Matrix inv;
};

inline constexpr double kDefaultMinRcond = 1e-6;
inline constexpr int kDefaultMaxTries = 64;

// Draws M with entries uniform on [-1, 1] until 1/cond_1(M) >= min_rcond and
// the inverse residual max|M*Minv - I| <= 1e-9*dim. Throws ConditioningError
// after max_tries rejections.
InvertiblePair rand_invertible(std::size_t dim, Rng& rng, double min_rcond = kDefaultMinRcond,
                               int max_tries = kDefaultMaxTries);

// Unit diagonal, zeros above, strictly-lower entries uniform on [-1, 1].
Matrix rand_unit_lower_triangular(std::size_t dim, Rng& rng);

// w[pi(i)] = v[i].
Vector apply_permutation(const Permutation& pi, std::span<const double> v);

// Inverse of apply_permutation: v[i] = w[pi(i)].
Vector unapply_permutation(const Permutation& pi, std::span<const double> w);

// Tr(A*B) = sum_ij A(i,j)*B(j,i) in O(d^2), without forming the product.
double trace_product(const Matrix& a, const Matrix& b);

// sum_ij A(i,j)*B(i,j); both operands are streamed in storage order.
double frobenius_dot(const Matrix& a, const Matrix& b);

double norm1(const Matrix& m);

// 1 / (||M||_1 * ||Minv||_1).
double rcond_1norm(const Matrix& m, const Matrix& inv);

// max_ij |(M*Minv - I)(i,j)|.
double inverse_residual(const Matrix& m, const Matrix& inv);

bool all_finite(const Matrix& m);

}  // namespace sbi
