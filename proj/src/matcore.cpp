#include "sbi/matcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "sbi/errors.hpp"

namespace sbi {

std::uint64_t Rng::below(std::uint64_t bound) {
  // Rejection on the top of the range keeps the draw exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

bool is_bijection(std::span<const std::uint32_t> mapping) {
  std::vector<bool> seen(mapping.size(), false);
  for (auto idx : mapping) {
    if (idx >= mapping.size() || seen[idx]) return false;
    seen[idx] = true;
  }
  return true;
}

Permutation::Permutation(std::vector<std::uint32_t> mapping) : mapping_(std::move(mapping)) {
  if (mapping_.empty() || !is_bijection(mapping_)) {
    throw ConfigError("permutation mapping is not a bijection");
  }
}

Permutation Permutation::identity(std::size_t size) {
  std::vector<std::uint32_t> m(size);
  std::iota(m.begin(), m.end(), 0u);
  return Permutation(std::move(m));
}

Permutation Permutation::random(std::size_t size, Rng& rng) {
  std::vector<std::uint32_t> m(size);
  std::iota(m.begin(), m.end(), 0u);
  for (std::size_t i = size; i > 1; --i) {
    std::swap(m[i - 1], m[rng.below(i)]);
  }
  return Permutation(std::move(m));
}

InvertiblePair rand_invertible(std::size_t dim, Rng& rng, double min_rcond, int max_tries) {
  if (dim == 0) throw ConfigError("rand_invertible: dim must be positive");
  if (!(min_rcond > 0.0 && min_rcond < 1.0)) {
    throw ConfigError("rand_invertible: min_rcond must lie in (0, 1)");
  }
  const auto d = static_cast<Eigen::Index>(dim);
  const double residual_cap = 1e-9 * static_cast<double>(dim);
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    Matrix m(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    }
    Eigen::PartialPivLU<Matrix> lu(m);
    Matrix inv = lu.inverse();
    if (!all_finite(inv)) continue;
    if (rcond_1norm(m, inv) < min_rcond) continue;
    if (inverse_residual(m, inv) > residual_cap) continue;
    return {std::move(m), std::move(inv)};
  }
  throw ConditioningError("rand_invertible: no sample with rcond >= " + std::to_string(min_rcond) +
                          " after " + std::to_string(max_tries) + " tries (dim " +
                          std::to_string(dim) + ")");
}

Matrix rand_unit_lower_triangular(std::size_t dim, Rng& rng) {
  const auto d = static_cast<Eigen::Index>(dim);
  Matrix s = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) s(i, j) = rng.uniform(-1.0, 1.0);
    s(i, i) = 1.0;
  }
  return s;
}

Vector apply_permutation(const Permutation& pi, std::span<const double> v) {
  if (v.size() != pi.size()) {
    throw DimensionError("apply_permutation: vector length " + std::to_string(v.size()) +
                         " != permutation size " + std::to_string(pi.size()));
  }
  Vector w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[pi.image(i)] = v[i];
  return w;
}

Vector unapply_permutation(const Permutation& pi, std::span<const double> w) {
  if (w.size() != pi.size()) {
    throw DimensionError("unapply_permutation: size mismatch");
  }
  Vector v(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) v[i] = w[pi.image(i)];
  return v;
}

double trace_product(const Matrix& a, const Matrix& b) {
  const Eigen::Index d = a.rows();
  if (a.cols() != d || b.rows() != d || b.cols() != d) {
    throw DimensionError("trace_product: operands must be square and of equal size");
  }
  // Tiled so the column walk over b stays in cache.
  constexpr Eigen::Index kTile = 32;
  const double* pa = a.data();
  const double* pb = b.data();
  double acc = 0.0;
  for (Eigen::Index ib = 0; ib < d; ib += kTile) {
    const Eigen::Index ie = std::min(ib + kTile, d);
    for (Eigen::Index jb = 0; jb < d; jb += kTile) {
      const Eigen::Index je = std::min(jb + kTile, d);
      for (Eigen::Index i = ib; i < ie; ++i) {
        const double* row = pa + i * d;
        double s = 0.0;
        for (Eigen::Index j = jb; j < je; ++j) s += row[j] * pb[j * d + i];
        acc += s;
      }
    }
  }
  return acc;
}

double frobenius_dot(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("frobenius_dot: operand shapes differ");
  }
  return a.cwiseProduct(b).sum();
}

double norm1(const Matrix& m) {
  return m.cwiseAbs().colwise().sum().maxCoeff();
}

double rcond_1norm(const Matrix& m, const Matrix& inv) {
  return 1.0 / (norm1(m) * norm1(inv));
}

double inverse_residual(const Matrix& m, const Matrix& inv) {
  Matrix r = m * inv;
  r.diagonal().array() -= 1.0;
  return r.cwiseAbs().maxCoeff();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace sbi
