#include "sbi/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sbi/errors.hpp"

namespace sbi::attacks {

SimulatedDeployment::SimulatedDeployment(const SystemParams& params, const RandomnessConfig& cfg,
                                         PlainTemplate hidden_query, std::uint64_t seed,
                                         std::size_t max_injections)
    : params_(params),
      cfg_(cfg),
      query_(std::move(hidden_query)),
      rng_(seed),
      key_(keygen(params_, rng_)),
      token_(token_gen(key_, params_, query_, rng_, cfg_)),
      budget_(max_injections) {}

std::vector<double> SimulatedDeployment::enroll_and_observe(std::span<const PlainTemplate> injected) {
  if (injected.size() > budget_) {
    throw OracleError("deployment refuses further injections (budget exhausted)");
  }
  budget_ -= injected.size();
  std::vector<double> values;
  values.reserve(injected.size());
  for (const auto& t : injected) {
    const EncryptedTemplate ct = transform(key_, params_, t, rng_, cfg_);
    values.push_back(*evaluate(ct, token_, EvalMode::kDebug).raw_value);
  }
  return values;
}

AttackTranscript enrollment_attack(EnrollmentOracle& oracle, double delta) {
  if (!(delta > 0.0)) throw ConfigError("enrollment_attack: delta must be positive");
  const std::size_t n = oracle.params().n;

  std::vector<PlainTemplate> probes(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    probes[i].id = i;
    probes[i].features.assign(n, 0.0);
    if (i > 0) probes[i].features[i - 1] = delta;
  }
  const std::vector<double> values = oracle.enroll_and_observe(probes);
  if (values.size() != probes.size()) throw OracleError("oracle returned the wrong number of values");

  AttackTranscript tr;
  tr.recovered.resize(n);
  for (std::size_t i = 0; i <= n; ++i) {
    if (!std::isfinite(values[i])) throw OracleError("oracle returned a non-finite value");
    tr.injected.push_back({probes[i], values[i]});
  }
  // I_i - I_0 = |delta e_i - y|^2 - |y|^2 = delta^2 - 2 delta y_i when alpha = beta = 1.
  for (std::size_t i = 1; i <= n; ++i) {
    tr.recovered[i - 1] = (delta * delta - (values[i] - values[0])) / (2.0 * delta);
  }
  return tr;
}

double max_scaled_error(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) throw DimensionError("max_scaled_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    worst = std::max(worst, std::abs(estimate[i] - truth[i]) / (1.0 + std::abs(truth[i])));
  }
  return worst;
}

double relative_error(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) throw DimensionError("relative_error: length mismatch");
  double diff = 0.0, ref = 0.0, est = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    diff += (estimate[i] - truth[i]) * (estimate[i] - truth[i]);
    ref += truth[i] * truth[i];
    est += estimate[i] * estimate[i];
  }
  if (ref == 0.0) return std::sqrt(est);
  return std::sqrt(diff / ref);
}

std::string enrollment_report_csv(std::span<const AttackTranscript> trials) {
  std::ostringstream os;
  os.precision(17);
  os << "trial,index,estimate,truth,error\n";
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const auto& tr = trials[t];
    for (std::size_t i = 0; i < tr.recovered.size(); ++i) {
      const double truth = tr.query_truth ? tr.query_truth->features[i] : std::nan("");
      os << t << ',' << i << ',' << tr.recovered[i] << ',' << truth << ','
         << std::abs(tr.recovered[i] - truth) << '\n';
    }
  }
  return os.str();
}

OwnerTokenOracle::OwnerTokenOracle(const SystemParams& params, const RandomnessConfig& cfg,
                                   std::uint64_t seed)
    : params_(params), cfg_(cfg), rng_(seed), key_(keygen(params_, rng_)) {}

QueryToken OwnerTokenOracle::tokenize(const PlainTemplate& y) {
  return token_gen(key_, params_, y, rng_, cfg_);
}

void StatisticDistinguisher::begin(const SystemParams&, const PlainTemplate& y0,
                                   const PlainTemplate& y1) {
  sum_[0] = sum_[1] = 0.0;
  count_[0] = count_[1] = 0;
  auto sq = [](const Vector& v) { return std::inner_product(v.begin(), v.end(), v.begin(), 0.0); };
  larger_norm_ = sq(y1.features) > sq(y0.features) ? 1 : 0;
}

namespace {
double log_magnitude(double s) { return std::log(std::abs(s) + 1e-300); }
}  // namespace

void StatisticDistinguisher::observe(int label, const QueryToken& tok) {
  sum_[label] += log_magnitude(statistic(tok));
  ++count_[label];
}

int StatisticDistinguisher::guess(const QueryToken& challenge) {
  if (count_[0] == 0 || count_[1] == 0) return larger_norm_;
  const double s = log_magnitude(statistic(challenge));
  const double d0 = std::abs(s - sum_[0] / static_cast<double>(count_[0]));
  const double d1 = std::abs(s - sum_[1] / static_cast<double>(count_[1]));
  return d1 < d0 ? 1 : 0;
}

double TokenNormDistinguisher::statistic(const QueryToken& tok) const { return tok.cy.norm(); }

double MaxEntryDistinguisher::statistic(const QueryToken& tok) const {
  return tok.cy.cwiseAbs().maxCoeff();
}

double TraceDistinguisher::statistic(const QueryToken& tok) const { return tok.cy.trace(); }

std::vector<std::unique_ptr<Distinguisher>> default_battery() {
  std::vector<std::unique_ptr<Distinguisher>> out;
  out.push_back(std::make_unique<ConstantDistinguisher>());
  out.push_back(std::make_unique<TokenNormDistinguisher>());
  out.push_back(std::make_unique<MaxEntryDistinguisher>());
  out.push_back(std::make_unique<TraceDistinguisher>());
  return out;
}

namespace {
PlainTemplate uniform_template(std::size_t n, std::uint64_t id, Rng& rng) {
  PlainTemplate t;
  t.id = id;
  t.features.resize(n);
  for (auto& f : t.features) f = rng.uniform(0.0, 255.0);
  return t;
}
}  // namespace

CandidateSource uniform_candidates(std::size_t n) {
  return [n](Rng& rng) { return CandidatePair{uniform_template(n, 0, rng), uniform_template(n, 1, rng)}; };
}

CandidateSource scaled_candidates(std::size_t n, double factor) {
  return [n, factor](Rng& rng) {
    CandidatePair c{uniform_template(n, 0, rng), {}};
    c.y1 = c.y0;
    c.y1.id = 1;
    for (auto& f : c.y1.features) f *= factor;
    return c;
  };
}

GameResult distinguish_game(TokenOracle& oracle, Distinguisher& distinguisher,
                            const CandidateSource& candidates, const GameOptions& opts, Rng& rng) {
  if (opts.trials == 0) throw ConfigError("distinguish_game: trials must be positive");
  GameResult res;
  res.trials = opts.trials;
  res.log.reserve(opts.trials);
  for (std::size_t t = 0; t < opts.trials; ++t) {
    const CandidatePair c = candidates(rng);
    distinguisher.begin(oracle.params(), c.y0, c.y1);
    for (std::size_t k = 0; k < opts.learning_tokens; ++k) {
      distinguisher.observe(0, oracle.tokenize(c.y0));
      distinguisher.observe(1, oracle.tokenize(c.y1));
    }
    const int b = static_cast<int>(rng.below(2));
    const int g = distinguisher.guess(oracle.tokenize(b == 0 ? c.y0 : c.y1));
    res.log.push_back({g, b});
    if (g == b) ++res.successes;
  }
  res.success_rate = static_cast<double>(res.successes) / static_cast<double>(res.trials);
  res.ci95_halfwidth = 1.96 * std::sqrt(0.25 / static_cast<double>(res.trials));
  return res;
}

std::string game_report_csv(const GameResult& result) {
  std::ostringstream os;
  os << "trial,guess,truth,error\n";
  for (std::size_t t = 0; t < result.log.size(); ++t) {
    const auto& r = result.log[t];
    os << t << ',' << r.guess << ',' << r.truth << ',' << (r.guess != r.truth ? 1 : 0) << '\n';
  }
  return os.str();
}

namespace {
std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}
}  // namespace

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("spearman_rho: length mismatch");
  if (a.size() < 2) throw ConfigError("spearman_rho: need at least 2 samples");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

LeakageStats leakage_rank_test(std::span<const PlainTemplate> db, const PlainTemplate& query,
                               const SystemParams& params, const RandomnessConfig& cfg, Rng& rng) {
  if (db.size() < 2) throw ConfigError("leakage_rank_test: need at least 2 records");
  const SecretKey key = keygen(params, rng);
  const QueryToken tok = token_gen(key, params, query, rng, cfg);
  const double theta2 = params.theta * params.theta;

  LeakageStats st;
  st.records = db.size();
  std::vector<double> magnitudes, distances;
  magnitudes.reserve(db.size());
  distances.reserve(db.size());
  for (const auto& rec : db) {
    const MatchResult r = evaluate(transform(key, params, rec, rng, cfg), tok, EvalMode::kDebug);
    const double d2 = squared_distance(rec.features, query.features);
    magnitudes.push_back(std::abs(*r.raw_value));
    distances.push_back(std::sqrt(d2));
    if (r.lambda) ++st.matches;
    const bool outside_band = std::abs(d2 - theta2) >= 1e-6 * (d2 + theta2 + 1.0);
    if (outside_band && r.lambda != (d2 <= theta2)) st.signs_consistent = false;
  }
  st.spearman_rho = spearman_rho(magnitudes, distances);
  return st;
}

}  // namespace sbi::attacks
