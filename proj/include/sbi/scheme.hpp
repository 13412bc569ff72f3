#pragma once

// Fixed-radius matching over masked templates.
//
// The data owner holds a SecretKey. Enrolled templates are extended to n+5
// coordinates, permuted, split additively into shares p and q, and each share
// is masked as M1 * S * diag(share) * M2. A query is extended, permuted and
// masked as M2^-1 * diag(y) * S * M1^-1. The evaluator computes
//
//   I = Tr(Cp * Cy) + Tr(Cq * Cy) = alpha * beta * (|x - y|^2 - theta^2)
//
// and reports a match iff I <= 0. Only the positive scalars alpha and beta
// survive the trace; padding, shares and triangular masks cancel.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sbi/matcore.hpp"

namespace sbi {

struct SystemParams {
  std::size_t n = 0;
  double theta = 0.0;
  // Public power-of-two rescaling of the extended vectors before masking.
  // Exact in floating point and inner-product preserving; it keeps the
  // large sum-of-squares slots from dominating rounding error.
  bool balance = true;

  std::size_t ext_dim() const { return n + 5; }
};

// Throws ConfigError for n == 0 or a negative / non-finite theta.
SystemParams setup(std::size_t n, double theta);

struct SecretKey {
  Matrix m1;
  Matrix m1inv;
  Matrix m2;
  Matrix m2inv;
  Permutation pi;

  std::size_t ext_dim() const { return pi.size(); }
};

SecretKey keygen(const SystemParams& params, Rng& rng, double min_rcond = kDefaultMinRcond);

struct PlainTemplate {
  std::uint64_t id = 0;
  Vector features;
};

struct EncryptedTemplate {
  std::uint64_t id = 0;
  Matrix cp;
  Matrix cq;
};

struct QueryToken {
  Matrix cy;
};

enum class ScalarDistribution { kUniform, kLogUniform };

// Switches for the three kinds of one-time randomness.
//   type 1: result-disguising scalars alpha (query) and beta (template)
//   type 2: extension padding r_x, r_y and the additive p/q split
//   type 3: unit-lower-triangular masks S_p, S_q, S_y
struct RandomnessConfig {
  bool type1_enabled = true;
  bool type2_enabled = true;
  bool type3_enabled = true;
  double scalar_low = 1.0;
  double scalar_high = 1024.0;
  ScalarDistribution scalar_dist = ScalarDistribution::kUniform;
  double pad_bound = 256.0;

  // Throws ConfigError on 0 < low <= high or pad_bound > 0 violations.
  void validate() const;

  static RandomnessConfig all_disabled();
};

struct MatchResult {
  std::uint64_t id = 0;
  bool lambda = false;
  std::optional<double> raw_value;
};

// Test-mode view of the one-time values behind a transform or token.
// Never persisted.
struct TransformTrace {
  double scalar = 0.0;  // beta for templates, alpha for queries
  double pad = 0.0;     // r_x or r_y
  Vector extended;      // x' / y' before balancing and permutation
  Vector permuted;      // x'' / y'' as fed to the mask
  Vector share_p;       // templates only
  Vector share_q;
};

// x' = (-2b x_1, .., -2b x_n, b*sum(x^2), b, -b*theta^2, r_x, 0)
Vector extend_enroll(std::span<const double> x, double theta, double beta, double r_x);

// y' = (a y_1, .., a y_n, a, a*sum(y^2), a, 0, r_y)
Vector extend_query(std::span<const double> y, double alpha, double r_y);

// Weights w with <w.x', y'/w> == <x', y'> term by term; all powers of two.
Vector balance_weights(const SystemParams& params);

EncryptedTemplate transform(const SecretKey& sk, const SystemParams& params, const PlainTemplate& x,
                            Rng& rng, const RandomnessConfig& cfg = {},
                            TransformTrace* trace = nullptr);

QueryToken token_gen(const SecretKey& sk, const SystemParams& params, const PlainTemplate& y, Rng& rng,
                     const RandomnessConfig& cfg = {}, TransformTrace* trace = nullptr);

enum class EvalMode { kProduction, kDebug };

// I = Tr(Cp Cy) + Tr(Cq Cy) via trace_product.
double evaluate_value(const EncryptedTemplate& ct, const QueryToken& tok);

MatchResult evaluate(const EncryptedTemplate& ct, const QueryToken& tok,
                     EvalMode mode = EvalMode::kProduction);

// A token held as Cy^T, so that Tr(C Cy) = frobenius_dot(C, Cy^T) reads each
// stored record once, front to back. Built once per query for a scan.
class PreparedToken {
 public:
  explicit PreparedToken(const QueryToken& tok) : cy_t_(tok.cy.transpose()) {}

  Eigen::Index dim() const { return cy_t_.rows(); }
  double value(const EncryptedTemplate& ct) const;

 private:
  Matrix cy_t_;
};

MatchResult evaluate(const EncryptedTemplate& ct, const PreparedToken& tok,
                     EvalMode mode = EvalMode::kProduction);

struct IdentifyOptions {
  unsigned jobs = 1;
  EvalMode mode = EvalMode::kProduction;
};

// Linear scan; returns the matching records in storage order. A record with
// the wrong shape raises RecordDimensionError naming its id.
std::vector<MatchResult> identify(std::span<const EncryptedTemplate> db, const QueryToken& tok,
                                  const IdentifyOptions& opts = {});
std::vector<MatchResult> identify(std::span<const EncryptedTemplate> db, const PreparedToken& tok,
                                  const IdentifyOptions& opts = {});

// Plaintext reference predicate |x - y|^2 <= theta^2.
double squared_distance(std::span<const double> x, std::span<const double> y);

}  // namespace sbi
