#include "sbi/scheme.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sbi/errors.hpp"
#include "test_util.hpp"

namespace sbi {
namespace {

PlainTemplate make(std::uint64_t id, Vector f) { return PlainTemplate{id, std::move(f)}; }

PlainTemplate random_template(std::size_t n, std::uint64_t id, Rng& rng) {
  PlainTemplate t{id, Vector(n)};
  for (auto& v : t.features) v = rng.uniform(0.0, 255.0);
  return t;
}

// Key whose masks are all identity.
SecretKey identity_key(std::size_t d) {
  const auto e = static_cast<Eigen::Index>(d);
  return SecretKey{Matrix::Identity(e, e), Matrix::Identity(e, e), Matrix::Identity(e, e),
                   Matrix::Identity(e, e), Permutation::identity(d)};
}

RandomnessConfig pinned(double scalar) {
  RandomnessConfig cfg;
  cfg.scalar_low = cfg.scalar_high = scalar;
  return cfg;
}

double dot(const Vector& a, const Vector& b) {
  return static_cast<double>(std::inner_product(a.begin(), a.end(), b.begin(), 0.0L));
}

TEST(SetupTest, ExtendedDimension) {
  EXPECT_EQ(setup(2, 5).ext_dim(), 7u);
  EXPECT_EQ(setup(640, 100).ext_dim(), 645u);
  EXPECT_THROW(setup(0, 1), ConfigError);
  EXPECT_THROW(setup(3, -1), ConfigError);
  EXPECT_THROW(setup(3, std::nan("")), ConfigError);
}

TEST(KeygenTest, ShapesAndInverses) {
  const SystemParams params = setup(2, 5);
  Rng rng(1);
  const SecretKey sk = keygen(params, rng);
  for (const Matrix* m : {&sk.m1, &sk.m1inv, &sk.m2, &sk.m2inv}) {
    EXPECT_EQ(m->rows(), 7);
    EXPECT_EQ(m->cols(), 7);
  }
  EXPECT_EQ(sk.pi.size(), 7u);
  EXPECT_TRUE(is_bijection(sk.pi.mapping()));

  for (const auto& [m, inv] : {std::pair{&sk.m1, &sk.m1inv}, std::pair{&sk.m2, &sk.m2inv}}) {
    Matrix r = testing::naive_multiply(*m, *inv);
    r.diagonal().array() -= 1.0;
    EXPECT_LE(r.cwiseAbs().maxCoeff(), 1e-9 * 7);
  }
}

TEST(KeygenTest, DistinctSeedsGiveDistinctKeys) {
  const SystemParams params = setup(2, 5);
  Rng a(1), b(2);
  EXPECT_NE(keygen(params, a).m1, keygen(params, b).m1);
}

TEST(ExtendTest, EnrollLayout) {
  EXPECT_EQ(extend_enroll(Vector{1}, 1.0, 1.0, 5.0), (Vector{-2, 1, 1, -1, 5, 0}));
  EXPECT_EQ(extend_enroll(Vector{0, 0}, 4.0, 3.0, 0.0), (Vector{0, 0, 0, 3, -48, 0, 0}));
  EXPECT_THROW(extend_enroll(Vector{1}, 1.0, 0.0, 0.0), ConfigError);
  EXPECT_THROW(extend_enroll(Vector{1}, 1.0, -2.0, 0.0), ConfigError);
}

TEST(ExtendTest, QueryLayout) {
  EXPECT_EQ(extend_query(Vector{2}, 1.0, 7.0), (Vector{2, 1, 4, 1, 0, 7}));
  EXPECT_EQ(extend_query(Vector{0, 0, 0}, 1.0, 9.0), (Vector{0, 0, 0, 1, 0, 1, 0, 9}));
  EXPECT_THROW(extend_query(Vector{1}, 0.0, 0.0), ConfigError);
}

TEST(ExtendTest, InnerProductIsScaledDistanceGap) {
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng.below(64);
    const auto x = random_template(n, 0, rng).features;
    const auto y = random_template(n, 1, rng).features;
    const double theta = rng.uniform(0, 500), alpha = rng.uniform(1, 1024), beta = rng.uniform(1, 1024);
    const double rx = rng.uniform(-256, 256), ry = rng.uniform(-256, 256);
    const Vector xe = extend_enroll(x, theta, beta, rx);
    const Vector ye = extend_query(y, alpha, ry);
    const double d2 = squared_distance(x, y);
    const double expect = alpha * beta * (d2 - theta * theta);
    const double scale = alpha * beta * (d2 + theta * theta + 1.0 + 2.0 * dot(x, x) + 2.0 * dot(y, y));
    EXPECT_NEAR(dot(xe, ye), expect, 1e-12 * scale);
    // Padding slots never meet.
    EXPECT_EQ(xe[n + 3] * ye[n + 3] + xe[n + 4] * ye[n + 4], 0.0);
  }
}

TEST(BalanceTest, WeightsArePowersOfTwoAndPreserveEveryTerm) {
  Rng rng(4);
  for (std::size_t n : {1u, 2u, 8u, 64u, 640u, 2000u}) {
    SystemParams params = setup(n, rng.uniform(0, 5000));
    const Vector w = balance_weights(params);
    ASSERT_EQ(w.size(), n + 5);
    for (double v : w) {
      int e;
      EXPECT_EQ(std::frexp(v, &e), 0.5);
    }
    const auto x = random_template(n, 0, rng).features;
    const auto y = random_template(n, 1, rng).features;
    const Vector xe = extend_enroll(x, params.theta, rng.uniform(1, 1024), 3.0);
    const Vector ye = extend_query(y, rng.uniform(1, 1024), -3.0);
    for (std::size_t k = 0; k < n + 5; ++k) {
      EXPECT_EQ((xe[k] * w[k]) * (ye[k] / w[k]), xe[k] * ye[k]);
    }
    params.balance = false;
    for (double v : balance_weights(params)) EXPECT_EQ(v, 1.0);
  }
}

TEST(RandomnessConfigTest, Validation) {
  RandomnessConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.scalar_low = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.scalar_low = 5.0;
  cfg.scalar_high = 4.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.scalar_high = 5.0;
  EXPECT_NO_THROW(cfg.validate());
  cfg.pad_bound = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TransformTest, ShapeAndTrace) {
  const SystemParams params = setup(4, 30);
  Rng rng(5);
  const SecretKey sk = keygen(params, rng);
  TransformTrace tr;
  const auto x = random_template(4, 77, rng);
  const EncryptedTemplate ct = transform(sk, params, x, rng, {}, &tr);
  EXPECT_EQ(ct.id, 77u);
  EXPECT_EQ(ct.cp.rows(), 9);
  EXPECT_EQ(ct.cq.cols(), 9);
  EXPECT_GE(tr.scalar, 1.0);
  EXPECT_LE(tr.scalar, 1024.0);
  EXPECT_LE(std::abs(tr.pad), 256.0);
  EXPECT_EQ(tr.extended, extend_enroll(x.features, 30, tr.scalar, tr.pad));
  // Split completeness, bit for bit.
  ASSERT_EQ(tr.share_p.size(), 9u);
  for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(tr.share_p[k] + tr.share_q[k], tr.permuted[k]);
}

TEST(TransformTest, SplitIsExactOverManyDraws) {
  const SystemParams params = setup(64, 1000);
  Rng rng(6);
  const SecretKey sk = keygen(params, rng);
  for (int rep = 0; rep < 20; ++rep) {
    TransformTrace tr;
    transform(sk, params, random_template(64, 0, rng), rng, {}, &tr);
    for (std::size_t k = 0; k < tr.permuted.size(); ++k) {
      ASSERT_EQ(tr.share_p[k] + tr.share_q[k], tr.permuted[k]);
    }
  }
}

TEST(TransformTest, FullyDegenerateMaskingExposesDiagonal) {
  SystemParams params = setup(3, 2);
  params.balance = false;
  const SecretKey sk = identity_key(8);
  Rng rng(7);
  const auto x = make(1, {1, 2, 3});
  const EncryptedTemplate ct = transform(sk, params, x, rng, RandomnessConfig::all_disabled());
  const Vector xe = extend_enroll(x.features, 2, 1.0, 0.0);
  EXPECT_EQ(ct.cp, Matrix(Eigen::Map<const Eigen::VectorXd>(xe.data(), 8).asDiagonal()));
  EXPECT_EQ(ct.cq, Matrix::Zero(8, 8));
}

TEST(TokenGenTest, DegenerateKeyGivesDiagonalOfExtendedQuery) {
  SystemParams params = setup(3, 2);
  params.balance = false;
  const SecretKey sk = identity_key(8);
  Rng rng(8);
  const auto y = make(0, {4, 5, 6});
  const QueryToken tok = token_gen(sk, params, y, rng, RandomnessConfig::all_disabled());
  const Vector ye = extend_query(y.features, 1.0, 0.0);
  EXPECT_EQ(tok.cy, Matrix(Eigen::Map<const Eigen::VectorXd>(ye.data(), 8).asDiagonal()));
}

TEST(TransformTest, RejectsWrongDimension) {
  const SystemParams params = setup(3, 2);
  Rng rng(9);
  const SecretKey sk = keygen(params, rng);
  EXPECT_THROW(transform(sk, params, make(0, {1, 2}), rng), DimensionError);
  EXPECT_THROW(token_gen(sk, params, make(0, {1, 2, 3, 4}), rng), DimensionError);
  EXPECT_THROW(transform(sk, params, make(0, {1, 2, std::nan("")}), rng), DimensionError);
  const SecretKey other = keygen(setup(4, 2), rng);
  EXPECT_THROW(transform(other, params, make(0, {1, 2, 3}), rng), DimensionError);
  RandomnessConfig bad;
  bad.pad_bound = -1;
  EXPECT_THROW(transform(sk, params, make(0, {1, 2, 3}), rng, bad), ConfigError);
}

TEST(TransformTest, FreshRandomnessSameDecision) {
  const SystemParams params = setup(8, 300);
  Rng rng(10);
  const SecretKey sk = keygen(params, rng);
  const auto x = random_template(8, 1, rng);
  const EncryptedTemplate a = transform(sk, params, x, rng);
  const EncryptedTemplate b = transform(sk, params, x, rng);
  EXPECT_NE(a.cp(0, 0), b.cp(0, 0));
  for (int rep = 0; rep < 50; ++rep) {
    PlainTemplate y = x;
    for (auto& f : y.features) f += rng.uniform(-150, 150);
    const double d2 = squared_distance(x.features, y.features);
    if (std::abs(d2 - 300.0 * 300.0) < 1e-6 * (d2 + 300.0 * 300.0 + 1)) continue;
    const QueryToken tok = token_gen(sk, params, y, rng);
    EXPECT_EQ(evaluate(a, tok).lambda, evaluate(b, tok).lambda);
    EXPECT_EQ(evaluate(a, tok).lambda, d2 <= 300.0 * 300.0);
  }
}

TEST(TokenGenTest, FreshTokensSameDecision) {
  const SystemParams params = setup(8, 300);
  Rng rng(11);
  const SecretKey sk = keygen(params, rng);
  const auto y = random_template(8, 0, rng);
  const QueryToken t1 = token_gen(sk, params, y, rng);
  const QueryToken t2 = token_gen(sk, params, y, rng);
  EXPECT_NE(t1.cy(0, 0), t2.cy(0, 0));
  for (int rep = 0; rep < 50; ++rep) {
    PlainTemplate x = y;
    for (auto& f : x.features) f += rng.uniform(-150, 150);
    const EncryptedTemplate ct = transform(sk, params, x, rng);
    EXPECT_EQ(evaluate(ct, t1).lambda, evaluate(ct, t2).lambda);
  }
}

TEST(EvaluateTest, IdenticalTemplatesMatch) {
  const SystemParams params = setup(5, 10);
  Rng rng(12);
  const SecretKey sk = keygen(params, rng);
  const auto x = random_template(5, 3, rng);
  TransformTrace tx, ty;
  const EncryptedTemplate ct = transform(sk, params, x, rng, {}, &tx);
  const QueryToken tok = token_gen(sk, params, x, rng, {}, &ty);
  const MatchResult r = evaluate(ct, tok, EvalMode::kDebug);
  EXPECT_TRUE(r.lambda);
  EXPECT_EQ(r.id, 3u);
  const double expect = -tx.scalar * ty.scalar * 100.0;
  EXPECT_NEAR(*r.raw_value, expect, 1e-6 * tx.scalar * ty.scalar * (100.0 + 1.0));
}

TEST(EvaluateTest, ExactBoundaryCountsAsMatch) {
  SystemParams params = setup(2, 5);
  const SecretKey sk = identity_key(7);
  Rng rng(13);
  for (bool balance : {false, true}) {
    params.balance = balance;
    const auto cfg = RandomnessConfig::all_disabled();
    const EncryptedTemplate ct = transform(sk, params, make(0, {0, 0}), rng, cfg);
    const QueryToken tok = token_gen(sk, params, make(1, {3, 4}), rng, cfg);
    const MatchResult r = evaluate(ct, tok, EvalMode::kDebug);
    EXPECT_EQ(*r.raw_value, 0.0);
    EXPECT_TRUE(r.lambda);
  }
}

TEST(EvaluateTest, BoundaryUnderRealKeyIsNearZero) {
  const SystemParams params = setup(2, 5);
  Rng rng(14);
  const SecretKey sk = keygen(params, rng);
  TransformTrace tx, ty;
  const EncryptedTemplate ct = transform(sk, params, make(0, {0, 0}), rng, {}, &tx);
  const QueryToken tok = token_gen(sk, params, make(1, {3, 4}), rng, {}, &ty);
  EXPECT_NEAR(evaluate_value(ct, tok), 0.0, 1e-6 * tx.scalar * ty.scalar * 51.0);
}

TEST(EvaluateTest, PinnedScalarsGiveKnownValue) {
  // alpha = 2, beta = 3, d^2 = 25, theta^2 = 16 -> I = 6 * 9 = 54.
  const SystemParams params = setup(2, 4);
  Rng rng(15);
  const SecretKey sk = keygen(params, rng);
  const EncryptedTemplate ct = transform(sk, params, make(0, {0, 0}), rng, pinned(3.0));
  const QueryToken tok = token_gen(sk, params, make(1, {3, 4}), rng, pinned(2.0));
  const MatchResult r = evaluate(ct, tok, EvalMode::kDebug);
  EXPECT_NEAR(*r.raw_value, 54.0, 1e-6 * 6.0 * (25.0 + 16.0 + 1.0));
  EXPECT_FALSE(r.lambda);
  EXPECT_FALSE(evaluate(ct, tok).raw_value.has_value());
}

TEST(EvaluateTest, DimensionMismatchThrows) {
  Rng rng(16);
  const SystemParams p2 = setup(2, 4), p3 = setup(3, 4);
  const SecretKey k2 = keygen(p2, rng), k3 = keygen(p3, rng);
  const EncryptedTemplate ct = transform(k2, p2, make(9, {0, 0}), rng);
  const QueryToken tok = token_gen(k3, p3, make(1, {3, 4, 5}), rng);
  EXPECT_THROW(evaluate(ct, tok), DimensionError);
}

TEST(EvaluateTest, TraceRouteEqualsFullMultiply) {
  Rng rng(17);
  for (std::size_t n : {1u, 10u, 59u, 123u}) {
    const SystemParams params = setup(n, 100);
    const SecretKey sk = keygen(params, rng);
    const EncryptedTemplate ct = transform(sk, params, random_template(n, 0, rng), rng);
    const QueryToken tok = token_gen(sk, params, random_template(n, 1, rng), rng);
    const double full = testing::naive_trace(testing::naive_multiply(ct.cp, tok.cy)) +
                        testing::naive_trace(testing::naive_multiply(ct.cq, tok.cy));
    const double scale = (ct.cp.cwiseAbs() * tok.cy.cwiseAbs()).trace() +
                         (ct.cq.cwiseAbs() * tok.cy.cwiseAbs()).trace();
    EXPECT_NEAR(evaluate_value(ct, tok), full, 1e-10 * scale) << "n=" << n;
  }
}

TEST(EvaluateTest, PreparedTokenAgreesWithDirectRoute) {
  Rng rng(24);
  const SystemParams params = setup(20, 150);
  const SecretKey sk = keygen(params, rng);
  const QueryToken tok = token_gen(sk, params, random_template(20, 0, rng), rng);
  const PreparedToken prepared(tok);
  EXPECT_EQ(prepared.dim(), 25);
  for (int rep = 0; rep < 10; ++rep) {
    const EncryptedTemplate ct = transform(sk, params, random_template(20, rep, rng), rng);
    const double scale = (ct.cp.cwiseAbs() * tok.cy.cwiseAbs()).trace() +
                         (ct.cq.cwiseAbs() * tok.cy.cwiseAbs()).trace();
    EXPECT_NEAR(prepared.value(ct), evaluate_value(ct, tok), 1e-12 * scale);
    const MatchResult r = evaluate(ct, prepared, EvalMode::kDebug);
    EXPECT_EQ(r.id, static_cast<std::uint64_t>(rep));
    EXPECT_EQ(r.lambda, *r.raw_value <= 0.0);
  }
  const SecretKey other = keygen(setup(3, 1), rng);
  const EncryptedTemplate small = transform(other, setup(3, 1), make(5, {1, 2, 3}), rng);
  EXPECT_THROW(evaluate(small, prepared), RecordDimensionError);
}

TEST(IdentifyTest, ScanSemantics) {
  const double theta = 40.0;
  const SystemParams params = setup(6, theta);
  Rng rng(18);
  const SecretKey sk = keygen(params, rng);
  const auto y = random_template(6, 0, rng);

  const QueryToken tok = token_gen(sk, params, y, rng);
  EXPECT_TRUE(identify({}, tok).empty());

  // Records at distance 0, theta/2 and 2 theta along the first axis.
  std::vector<EncryptedTemplate> db;
  for (auto [id, off] : {std::pair{10u, 0.0}, {11u, theta / 2}, {12u, 2 * theta}}) {
    PlainTemplate x = y;
    x.id = id;
    x.features[0] += off;
    db.push_back(transform(sk, params, x, rng));
  }
  auto hits = identify(db, tok);
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].id, 10u);
  EXPECT_EQ(hits[1].id, 11u);

  // Same template enrolled twice.
  PlainTemplate dup = y;
  dup.id = 20;
  db.push_back(transform(sk, params, dup, rng));
  dup.id = 21;
  db.push_back(transform(sk, params, dup, rng));
  hits = identify(db, tok);
  ASSERT_EQ(hits.size(), 4u);
  EXPECT_EQ(hits[2].id, 20u);
  EXPECT_EQ(hits[3].id, 21u);

  IdentifyOptions par;
  par.jobs = 3;
  const auto par_hits = identify(db, PreparedToken(tok), par);
  ASSERT_EQ(par_hits.size(), hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) EXPECT_EQ(par_hits[i].id, hits[i].id);
}

TEST(IdentifyTest, MismatchedRecordNamesItsId) {
  Rng rng(19);
  const SystemParams p2 = setup(2, 4), p3 = setup(3, 4);
  const SecretKey k2 = keygen(p2, rng), k3 = keygen(p3, rng);
  std::vector<EncryptedTemplate> db{transform(k2, p2, make(1, {0, 0}), rng),
                                    transform(k3, p3, make(42, {0, 0, 0}), rng)};
  const QueryToken tok = token_gen(k2, p2, make(0, {0, 0}), rng);
  try {
    identify(db, tok);
    FAIL() << "expected RecordDimensionError";
  } catch (const RecordDimensionError& e) {
    EXPECT_EQ(e.id(), 42u);
  }
}

TEST(SchemePropertyTest, EvaluationMatchesScaledDistanceGap) {
  Rng rng(20);
  for (std::size_t n : {1u, 2u, 8u, 64u}) {
    for (int key_rep = 0; key_rep < 3; ++key_rep) {
      const double theta = rng.uniform(0.0, 120.0 * std::sqrt(static_cast<double>(n)));
      const SystemParams params = setup(n, theta);
      const SecretKey sk = keygen(params, rng);
      for (int rep = 0; rep < 10; ++rep) {
        const auto x = random_template(n, 0, rng);
        PlainTemplate y = x;
        const double spread = rng.uniform(0.0, 255.0);
        for (auto& f : y.features) f = std::clamp(f + rng.uniform(-spread, spread), 0.0, 255.0);
        TransformTrace tx, ty;
        const EncryptedTemplate ct = transform(sk, params, x, rng, {}, &tx);
        const QueryToken tok = token_gen(sk, params, y, rng, {}, &ty);
        const double ab = tx.scalar * ty.scalar;
        const double d2 = squared_distance(x.features, y.features);
        const double t2 = theta * theta;
        const double value = evaluate_value(ct, tok);
        EXPECT_LE(std::abs(value - ab * (d2 - t2)), 1e-6 * ab * (d2 + t2 + 1.0)) << "n=" << n;
        if (std::abs(d2 - t2) >= 1e-6 * (d2 + t2 + 1.0)) {
          EXPECT_EQ(value <= 0.0, d2 <= t2) << "n=" << n;
        }
      }
    }
  }
}

TEST(SchemePropertyTest, TypeTwoAndThreeCancel) {
  Rng rng(21);
  const SystemParams params = setup(8, 200);
  const SecretKey sk = keygen(params, rng);
  const auto x = random_template(8, 0, rng);
  const auto y = random_template(8, 1, rng);
  const double base = evaluate_value(transform(sk, params, x, rng, pinned(7.0)),
                                     token_gen(sk, params, y, rng, pinned(11.0)));
  for (int rep = 0; rep < 30; ++rep) {
    const double v = evaluate_value(transform(sk, params, x, rng, pinned(7.0)),
                                    token_gen(sk, params, y, rng, pinned(11.0)));
    EXPECT_TRUE(testing::rel_close(v, base, 1e-6)) << v << " vs " << base;
  }
}

TEST(SchemePropertyTest, TypeOneScalesTheResult) {
  Rng rng(22);
  const SystemParams params = setup(8, 200);
  const SecretKey sk = keygen(params, rng);
  const auto x = random_template(8, 0, rng);
  const auto y = random_template(8, 1, rng);
  const QueryToken tok = token_gen(sk, params, y, rng, pinned(5.0));
  for (double c : {0.25, 3.0, 1000.0}) {
    // Same seed: every other draw repeats.
    Rng r1(77), r2(77);
    const double v1 = evaluate_value(transform(sk, params, x, r1, pinned(2.0)), tok);
    const double vc = evaluate_value(transform(sk, params, x, r2, pinned(2.0 * c)), tok);
    EXPECT_TRUE(testing::rel_close(vc, c * v1, 1e-6)) << "c=" << c;
    EXPECT_EQ(vc <= 0.0, v1 <= 0.0);
  }
}

TEST(SchemePropertyTest, TriangularMasksLeaveDiagonalIntact) {
  Rng rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t d = 1 + rng.below(60);
    const Matrix sp = rand_unit_lower_triangular(d, rng);
    const Matrix sy = rand_unit_lower_triangular(d, rng);
    Eigen::VectorXd p(d), y(d);
    for (std::size_t i = 0; i < d; ++i) {
      p[i] = rng.uniform(-1e5, 1e5);
      y[i] = rng.uniform(-1e5, 1e5);
    }
    const Matrix masked = sp * p.asDiagonal() * y.asDiagonal() * sy;
    for (std::size_t i = 0; i < d; ++i) EXPECT_EQ(masked(i, i), p[i] * y[i]);
  }
}

}  // namespace
}  // namespace sbi
