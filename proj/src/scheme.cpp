#include "sbi/scheme.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "sbi/errors.hpp"

namespace sbi {
namespace {

void check_template(const SystemParams& params, const PlainTemplate& t) {
  if (t.features.size() != params.n) {
    throw DimensionError("template " + std::to_string(t.id) + " has " +
                         std::to_string(t.features.size()) + " features, expected " +
                         std::to_string(params.n));
  }
  for (double v : t.features) {
    if (!std::isfinite(v)) {
      throw DimensionError("template " + std::to_string(t.id) + " has a non-finite feature");
    }
  }
}

void check_key(const SecretKey& sk, const SystemParams& params) {
  const auto d = static_cast<Eigen::Index>(params.ext_dim());
  if (sk.pi.size() != params.ext_dim() || sk.m1.rows() != d || sk.m2.rows() != d ||
      sk.m1inv.rows() != d || sk.m2inv.rows() != d) {
    throw DimensionError("secret key dimension does not match n+5 = " +
                         std::to_string(params.ext_dim()));
  }
}

double draw_scalar(const RandomnessConfig& cfg, Rng& rng) {
  if (!cfg.type1_enabled) return 1.0;
  if (cfg.scalar_low == cfg.scalar_high) return cfg.scalar_low;
  if (cfg.scalar_dist == ScalarDistribution::kLogUniform) {
    return std::exp(rng.uniform(std::log(cfg.scalar_low), std::log(cfg.scalar_high)));
  }
  return rng.uniform(cfg.scalar_low, cfg.scalar_high);
}

double draw_pad(const RandomnessConfig& cfg, Rng& rng) {
  return cfg.type2_enabled ? rng.uniform(-cfg.pad_bound, cfg.pad_bound) : 0.0;
}

Matrix draw_mask(std::size_t dim, Rng& rng, const RandomnessConfig& cfg) {
  if (!cfg.type3_enabled) {
    const auto d = static_cast<Eigen::Index>(dim);
    return Matrix::Identity(d, d);
  }
  return rand_unit_lower_triangular(dim, rng);
}

// Additive split with fl(p + q) == x bit-exactly for every entry.
void split_shares(std::span<const double> x, Rng& rng, const RandomnessConfig& cfg, Vector& p,
                  Vector& q) {
  p.assign(x.begin(), x.end());
  q.assign(x.size(), 0.0);
  if (!cfg.type2_enabled) return;
  for (std::size_t k = 0; k < x.size(); ++k) {
    for (int attempt = 0; attempt < 16; ++attempt) {
      const double p0 = rng.uniform(-cfg.pad_bound, cfg.pad_bound);
      const double qk = x[k] - p0;
      const double pk = x[k] - qk;
      if (pk + qk == x[k]) {
        p[k] = pk;
        q[k] = qk;
        break;
      }
    }
  }
}

auto as_eigen(const Vector& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double pow2_near(double v) { return std::ldexp(1.0, static_cast<int>(std::lround(std::log2(v)))); }

}  // namespace

SystemParams setup(std::size_t n, double theta) {
  if (n == 0) throw ConfigError("setup: template dimension n must be at least 1");
  if (!std::isfinite(theta) || theta < 0.0) {
    throw ConfigError("setup: theta must be finite and non-negative");
  }
  SystemParams p;
  p.n = n;
  p.theta = theta;
  return p;
}

SecretKey keygen(const SystemParams& params, Rng& rng, double min_rcond) {
  const std::size_t d = params.ext_dim();
  auto [m1, m1inv] = rand_invertible(d, rng, min_rcond);
  auto [m2, m2inv] = rand_invertible(d, rng, min_rcond);
  return SecretKey{std::move(m1), std::move(m1inv), std::move(m2), std::move(m2inv),
                   Permutation::random(d, rng)};
}

void RandomnessConfig::validate() const {
  if (!(scalar_low > 0.0 && scalar_low <= scalar_high && std::isfinite(scalar_high))) {
    throw ConfigError("randomness config: need 0 < scalar_low <= scalar_high");
  }
  if (!(pad_bound > 0.0 && std::isfinite(pad_bound))) {
    throw ConfigError("randomness config: pad_bound must be positive");
  }
}

RandomnessConfig RandomnessConfig::all_disabled() {
  RandomnessConfig cfg;
  cfg.type1_enabled = false;
  cfg.type2_enabled = false;
  cfg.type3_enabled = false;
  return cfg;
}

Vector extend_enroll(std::span<const double> x, double theta, double beta, double r_x) {
  if (!(beta > 0.0)) throw ConfigError("extend_enroll: beta must be positive");
  const std::size_t n = x.size();
  Vector out(n + 5);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = -2.0 * beta * x[i];
    sq += x[i] * x[i];
  }
  out[n] = beta * sq;
  out[n + 1] = beta;
  out[n + 2] = -beta * theta * theta;
  out[n + 3] = r_x;
  out[n + 4] = 0.0;
  return out;
}

Vector extend_query(std::span<const double> y, double alpha, double r_y) {
  if (!(alpha > 0.0)) throw ConfigError("extend_query: alpha must be positive");
  const std::size_t n = y.size();
  Vector out(n + 5);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = alpha * y[i];
    sq += y[i] * y[i];
  }
  out[n] = alpha;
  out[n + 1] = alpha * sq;
  out[n + 2] = alpha;
  out[n + 3] = 0.0;
  out[n + 4] = r_y;
  return out;
}

Vector balance_weights(const SystemParams& params) {
  const std::size_t n = params.n;
  Vector w(params.ext_dim(), 1.0);
  if (!params.balance) return w;
  // sum(x^2) for features of magnitude ~128 grows like (128 sqrt(n))^2.
  const double sigma = pow2_near(128.0 * std::sqrt(static_cast<double>(n)));
  w[n] = 1.0 / sigma;
  w[n + 1] = sigma;
  w[n + 2] = 1.0 / pow2_near(std::max(params.theta, 1.0));
  return w;
}

EncryptedTemplate transform(const SecretKey& sk, const SystemParams& params, const PlainTemplate& x,
                            Rng& rng, const RandomnessConfig& cfg, TransformTrace* trace) {
  cfg.validate();
  check_template(params, x);
  check_key(sk, params);
  const std::size_t d = params.ext_dim();

  const double beta = draw_scalar(cfg, rng);
  const double r_x = draw_pad(cfg, rng);
  Vector ext = extend_enroll(x.features, params.theta, beta, r_x);
  Vector scaled = ext;
  const Vector w = balance_weights(params);
  for (std::size_t k = 0; k < d; ++k) scaled[k] *= w[k];
  Vector permuted = apply_permutation(sk.pi, scaled);

  Vector p, q;
  split_shares(permuted, rng, cfg, p, q);
  const Matrix sp = draw_mask(d, rng, cfg);
  const Matrix sq = draw_mask(d, rng, cfg);

  EncryptedTemplate out;
  out.id = x.id;
  out.cp = sk.m1 * (sp * as_eigen(p).asDiagonal()) * sk.m2;
  out.cq = sk.m1 * (sq * as_eigen(q).asDiagonal()) * sk.m2;

  if (trace != nullptr) {
    trace->scalar = beta;
    trace->pad = r_x;
    trace->extended = std::move(ext);
    trace->permuted = std::move(permuted);
    trace->share_p = std::move(p);
    trace->share_q = std::move(q);
  }
  return out;
}

QueryToken token_gen(const SecretKey& sk, const SystemParams& params, const PlainTemplate& y, Rng& rng,
                     const RandomnessConfig& cfg, TransformTrace* trace) {
  cfg.validate();
  check_template(params, y);
  check_key(sk, params);
  const std::size_t d = params.ext_dim();

  const double alpha = draw_scalar(cfg, rng);
  const double r_y = draw_pad(cfg, rng);
  Vector ext = extend_query(y.features, alpha, r_y);
  Vector scaled = ext;
  const Vector w = balance_weights(params);
  for (std::size_t k = 0; k < d; ++k) scaled[k] /= w[k];
  Vector permuted = apply_permutation(sk.pi, scaled);
  const Matrix sy = draw_mask(d, rng, cfg);

  QueryToken tok;
  tok.cy = sk.m2inv * (as_eigen(permuted).asDiagonal() * sy) * sk.m1inv;

  if (trace != nullptr) {
    trace->scalar = alpha;
    trace->pad = r_y;
    trace->extended = std::move(ext);
    trace->permuted = std::move(permuted);
  }
  return tok;
}

double evaluate_value(const EncryptedTemplate& ct, const QueryToken& tok) {
  return trace_product(ct.cp, tok.cy) + trace_product(ct.cq, tok.cy);
}

namespace {

void check_record(const EncryptedTemplate& ct, Eigen::Index d) {
  if (ct.cp.rows() != d || ct.cp.cols() != d || ct.cq.rows() != d || ct.cq.cols() != d) {
    throw RecordDimensionError(ct.id, "record " + std::to_string(ct.id) +
                                          " dimension does not match the token");
  }
}

MatchResult decide(std::uint64_t id, double value, EvalMode mode) {
  MatchResult r;
  r.id = id;
  r.lambda = value <= 0.0;
  if (mode == EvalMode::kDebug) r.raw_value = value;
  return r;
}

}  // namespace

MatchResult evaluate(const EncryptedTemplate& ct, const QueryToken& tok, EvalMode mode) {
  check_record(ct, tok.cy.rows());
  return decide(ct.id, evaluate_value(ct, tok), mode);
}

double PreparedToken::value(const EncryptedTemplate& ct) const {
  return frobenius_dot(ct.cp, cy_t_) + frobenius_dot(ct.cq, cy_t_);
}

MatchResult evaluate(const EncryptedTemplate& ct, const PreparedToken& tok, EvalMode mode) {
  check_record(ct, tok.dim());
  return decide(ct.id, tok.value(ct), mode);
}

std::vector<MatchResult> identify(std::span<const EncryptedTemplate> db, const QueryToken& tok,
                                  const IdentifyOptions& opts) {
  return identify(db, PreparedToken(tok), opts);
}

std::vector<MatchResult> identify(std::span<const EncryptedTemplate> db, const PreparedToken& prepared,
                                  const IdentifyOptions& opts) {
  for (const auto& ct : db) check_record(ct, prepared.dim());

  std::vector<std::optional<MatchResult>> slots(db.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      MatchResult r = evaluate(db[i], prepared, opts.mode);
      if (r.lambda) slots[i] = std::move(r);
    }
  };

  const std::size_t jobs = std::clamp<std::size_t>(opts.jobs, 1, std::max<std::size_t>(db.size(), 1));
  if (jobs == 1) {
    work(0, db.size());
  } else {
    std::vector<std::thread> workers;
    const std::size_t chunk = (db.size() + jobs - 1) / jobs;
    for (std::size_t b = 0; b < db.size(); b += chunk) {
      workers.emplace_back(work, b, std::min(b + chunk, db.size()));
    }
    for (auto& t : workers) t.join();
  }

  std::vector<MatchResult> out;
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  return out;
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("squared_distance: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = x[i] - y[i];
    acc += t * t;
  }
  return acc;
}

}  // namespace sbi
