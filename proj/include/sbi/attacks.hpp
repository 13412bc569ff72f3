#pragma once

// Adversary harnesses run against an in-process deployment: the enrollment
// attack (inject known templates, solve for a hidden query from raw
// evaluation values), a chosen-plaintext distinguishability game on query
// tokens, and a rank-correlation probe of how much distance information the
// raw evaluation values carry.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sbi/scheme.hpp"

namespace sbi::attacks {

struct Observation {
  PlainTemplate injected;
  double value = 0.0;
};

struct AttackTranscript {
  std::vector<Observation> injected;
  std::optional<PlainTemplate> query_truth;
  Vector recovered;
};

// The cloud's view of a deployment it can inject templates into. Each
// injected template is enrolled by the data owner and evaluated against one
// hidden query token; the raw value I is revealed (debug-mode cloud).
class EnrollmentOracle {
 public:
  virtual ~EnrollmentOracle() = default;
  virtual const SystemParams& params() const = 0;
  virtual std::vector<double> enroll_and_observe(std::span<const PlainTemplate> injected) = 0;
};

class SimulatedDeployment final : public EnrollmentOracle {
 public:
  // Generates a key and the hidden query's token up front.
  SimulatedDeployment(const SystemParams& params, const RandomnessConfig& cfg,
                      PlainTemplate hidden_query, std::uint64_t seed,
                      std::size_t max_injections = SIZE_MAX);

  const SystemParams& params() const override { return params_; }
  std::vector<double> enroll_and_observe(std::span<const PlainTemplate> injected) override;

  const PlainTemplate& hidden_query() const { return query_; }

 private:
  SystemParams params_;
  RandomnessConfig cfg_;
  PlainTemplate query_;
  Rng rng_;
  SecretKey key_;
  QueryToken token_;
  std::size_t budget_;
};

// Injects x0 = 0 and x_i = delta * e_i, then estimates
// y_i = (delta^2 - (I_i - I_0)) / (2 delta). Exact when beta and alpha are 1.
AttackTranscript enrollment_attack(EnrollmentOracle& oracle, double delta = 1.0);

// max_i |est_i - y_i| / (1 + |y_i|)
double max_scaled_error(std::span<const double> estimate, std::span<const double> truth);

// |est - y|_2 / |y|_2 (|y| = 0 falls back to |est|).
double relative_error(std::span<const double> estimate, std::span<const double> truth);

// CSV with columns trial,index,estimate,truth,error.
std::string enrollment_report_csv(std::span<const AttackTranscript> trials);

// ---------------------------------------------------------------------------
// Distinguishability game.

class TokenOracle {
 public:
  virtual ~TokenOracle() = default;
  virtual const SystemParams& params() const = 0;
  virtual QueryToken tokenize(const PlainTemplate& y) = 0;
};

class OwnerTokenOracle final : public TokenOracle {
 public:
  OwnerTokenOracle(const SystemParams& params, const RandomnessConfig& cfg, std::uint64_t seed);

  const SystemParams& params() const override { return params_; }
  QueryToken tokenize(const PlainTemplate& y) override;

 private:
  SystemParams params_;
  RandomnessConfig cfg_;
  Rng rng_;
  SecretKey key_;
};

class Distinguisher {
 public:
  virtual ~Distinguisher() = default;
  virtual std::string name() const = 0;
  // A new challenge between candidates y0 and y1 starts.
  virtual void begin(const SystemParams& params, const PlainTemplate& y0, const PlainTemplate& y1) {
    (void)params, (void)y0, (void)y1;
  }
  // Chosen-plaintext phase: a token known to encode candidate `label`.
  virtual void observe(int label, const QueryToken& tok) { (void)label, (void)tok; }
  virtual int guess(const QueryToken& challenge) = 0;
};

class ConstantDistinguisher final : public Distinguisher {
 public:
  std::string name() const override { return "constant"; }
  int guess(const QueryToken&) override { return 0; }
};

// Learns the mean log-magnitude of a token statistic per candidate and
// answers with the nearer one. With no observations it always names the
// larger-norm candidate.
class StatisticDistinguisher : public Distinguisher {
 public:
  void begin(const SystemParams& params, const PlainTemplate& y0, const PlainTemplate& y1) override;
  void observe(int label, const QueryToken& tok) override;
  int guess(const QueryToken& challenge) override;

 protected:
  virtual double statistic(const QueryToken& tok) const = 0;

 private:
  double sum_[2] = {0.0, 0.0};
  std::size_t count_[2] = {0, 0};
  int larger_norm_ = 0;
};

class TokenNormDistinguisher final : public StatisticDistinguisher {
 public:
  std::string name() const override { return "token-norm"; }

 protected:
  double statistic(const QueryToken& tok) const override;
};

class MaxEntryDistinguisher final : public StatisticDistinguisher {
 public:
  std::string name() const override { return "max-entry"; }

 protected:
  double statistic(const QueryToken& tok) const override;
};

class TraceDistinguisher final : public StatisticDistinguisher {
 public:
  std::string name() const override { return "token-trace"; }

 protected:
  double statistic(const QueryToken& tok) const override;
};

// constant, token-norm, max-entry, token-trace
std::vector<std::unique_ptr<Distinguisher>> default_battery();

struct CandidatePair {
  PlainTemplate y0;
  PlainTemplate y1;
};

using CandidateSource = std::function<CandidatePair(Rng&)>;

// Two independent templates, features uniform on [0, 255].
CandidateSource uniform_candidates(std::size_t n);

// y0 uniform on [0, 255]^n and y1 = factor * y0.
CandidateSource scaled_candidates(std::size_t n, double factor);

struct GameOptions {
  std::size_t trials = 2000;
  // Chosen-plaintext tokens shown per candidate before each challenge.
  std::size_t learning_tokens = 4;
};

struct TrialRecord {
  int guess = 0;
  int truth = 0;
};

struct GameResult {
  std::size_t trials = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double ci95_halfwidth = 0.0;
  std::vector<TrialRecord> log;
};

// Throws ConfigError for zero trials.
GameResult distinguish_game(TokenOracle& oracle, Distinguisher& distinguisher,
                            const CandidateSource& candidates, const GameOptions& opts, Rng& rng);

// CSV with columns trial,guess,truth,error.
std::string game_report_csv(const GameResult& result);

// ---------------------------------------------------------------------------
// Leakage probe.

struct LeakageStats {
  double spearman_rho = 0.0;
  std::size_t records = 0;
  std::size_t matches = 0;
  // Every observed sign agreed with the plaintext radius predicate.
  bool signs_consistent = true;
};

// Enrolls `db` under a fresh key (beta drawn per record from cfg), evaluates
// one token for `query`, and correlates |I_i| with the true distances.
LeakageStats leakage_rank_test(std::span<const PlainTemplate> db, const PlainTemplate& query,
                               const SystemParams& params, const RandomnessConfig& cfg, Rng& rng);

// Average ranks for ties.
double spearman_rho(std::span<const double> a, std::span<const double> b);

}  // namespace sbi::attacks
