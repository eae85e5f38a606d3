#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "relcomp/theorem_lab.hpp"

using namespace relcomp;

namespace {

// Exact E||r(h,t) - r(h',t')||^2 for A = 0 over all 2^(4d) Rademacher quadruples.
double enumerate_rademacher(const Matrix& P, const Matrix& Q) {
  const auto d = P.rows();
  const int bits = static_cast<int>(4 * d);
  double sum = 0.0;
  for (long mask = 0; mask < (1L << bits); ++mask) {
    Vector v(4 * d);
    for (int b = 0; b < bits; ++b) v[b] = (mask >> b) & 1 ? 1.0 : -1.0;
    Vector h = v.segment(0, d), t = v.segment(d, d), h2 = v.segment(2 * d, d), t2 = v.segment(3 * d, d);
    sum += (P * (h - h2) + Q * (t - t2)).squaredNorm();
  }
  return sum / static_cast<double>(1L << bits);
}

Matrix I(Eigen::Index d) { return Matrix::Identity(d, d); }

}  // namespace

TEST(Synth, RademacherSupportAndDeterminism) {
  auto a = synth_embeddings(100, 5, Distribution::rademacher, 4);
  for (Eigen::Index i = 0; i < a.vectors().size(); ++i) {
    const double v = a.vectors().data()[i];
    EXPECT_TRUE(v == 1.0 || v == -1.0);
  }
  auto b = synth_embeddings(100, 5, Distribution::rademacher, 4);
  EXPECT_EQ(a.vectors(), b.vectors());
  EXPECT_NE(synth_embeddings(100, 5, Distribution::rademacher, 5).vectors(), a.vectors());
}

TEST(Synth, ColumnMomentsAtLargeM) {
  auto e = synth_embeddings(100000, 10, Distribution::standard_normal, 77);
  const auto& x = e.vectors();
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const double mean = x.col(k).mean();
    const double var = (x.col(k).array() - mean).square().sum() / static_cast<double>(x.rows());
    EXPECT_LE(std::abs(mean), 0.02);
    EXPECT_LE(std::abs(var - 1.0), 0.05);
  }
}

TEST(Synth, OffsetRelationsConstruction) {
  auto noiseless = synth_offset_relations(5, 3, 2, 0.0, 1);
  ASSERT_EQ(noiseless.groups.size(), 2u);
  EXPECT_EQ(noiseless.groups[1].pairs[3].head, "r1_p3_h");
  auto op = BilinearOperator::pairdiff(3);
  const auto& e = noiseless.embeddings;
  const auto& g = noiseless.groups[0].pairs;
  for (std::size_t i = 1; i < g.size(); ++i) {
    Vector d0 = e.lookup(g[0].tail) - e.lookup(g[0].head);
    Vector di = e.lookup(g[i].tail) - e.lookup(g[i].head);
    EXPECT_NEAR((d0 - di).norm(), 0.0, 1e-12);
    EXPECT_NEAR(relational_distance_sq(op, e.lookup(g[0].head), e.lookup(g[0].tail),
                                       e.lookup(g[i].head), e.lookup(g[i].tail)),
                0.0, 1e-20);
  }
  EXPECT_THROW(synth_offset_relations(5, 3, 1, 0.0, 1), InputError);
}

TEST(Synth, AntiparallelOffsetsGiveMinusOne) {
  // offsets v and -v: build by hand from one draw
  auto data = synth_offset_relations(1, 4, 2, 0.0, 3);
  Vector v = data.offsets.row(0).transpose();
  Vector h1 = Vector::Ones(4), h2 = Vector::Zero(4);
  auto op = BilinearOperator::pairdiff(4);
  EXPECT_NEAR(relational_similarity(op, h1, h1 + v, h2, h2 - v).value, -1.0, 1e-12);
}

TEST(MonteCarlo, ZeroOperatorIsExactlyZero) {
  SamplerSpec s{4, PairCoupling::independent, Distribution::standard_normal, 1};
  auto rep = mc_expected_positive_loss(BilinearOperator::zero(4), s, 5000);
  EXPECT_EQ(rep.estimate, 0.0);
  EXPECT_EQ(rep.std_error, 0.0);
  auto z = zero_expected_loss_check(Matrix::Zero(4, 4), Matrix::Zero(4, 4), s, 5000);
  EXPECT_EQ(z.difference.estimate, 0.0);
  EXPECT_TRUE(z.pass);
}

TEST(MonteCarlo, ExhaustiveRademacherOracle) {
  EXPECT_DOUBLE_EQ(enumerate_rademacher(I(2), -I(2)), 8.0);
  Rng rng = make_rng(6);
  for (int i = 0; i < 3; ++i) {
    Matrix P = random_matrix(2, rng), Q = random_matrix(2, rng);
    EXPECT_NEAR(enumerate_rademacher(P, Q), analytic_positive_loss(P, Q), 1e-12);
  }
  SamplerSpec s{2, PairCoupling::independent, Distribution::rademacher, 8};
  auto rep = mc_expected_positive_loss(BilinearOperator::pairdiff(2), s, 100000);
  EXPECT_LE(std::abs(rep.estimate - 8.0), 3.0 * rep.std_error);
}

TEST(MonteCarlo, PairDiffPositiveTermIsTwenty) {
  SamplerSpec s{5, PairCoupling::independent, Distribution::standard_normal, 2};
  auto op = BilinearOperator::general(Tensor3(5), I(5), -I(5));
  auto rep = mc_expected_positive_loss(op, s, 100000);
  EXPECT_EQ(analytic_positive_loss(I(5), -I(5)), 20.0);
  EXPECT_LE(std::abs(rep.estimate - 20.0), 3.0 * rep.std_error);
  EXPECT_EQ(rep.n_samples, 100000u);
  EXPECT_EQ(rep.operator_digest, op.digest());
}

TEST(MonteCarlo, StdErrorScalesWithSampleCount) {
  auto op = BilinearOperator::pairdiff(3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SamplerSpec s{3, PairCoupling::independent, Distribution::standard_normal, seed};
    const double v1 = std::pow(mc_expected_positive_loss(op, s, 20000).std_error, 2);
    const double v2 = std::pow(mc_expected_positive_loss(op, s, 40000).std_error, 2);
    const double ratio = v1 / v2;
    EXPECT_GT(ratio, 1.0);
    EXPECT_LT(ratio, 4.0);
  }
}

TEST(MonteCarlo, ThreadCountDoesNotChangeResults) {
  SamplerSpec s{4, PairCoupling::independent, Distribution::standard_normal, 12};
  Rng rng = make_rng(1);
  auto op = BilinearOperator::general(Tensor3(4), random_matrix(4, rng), random_matrix(4, rng));
  auto one = mc_expected_loss_difference(op, s, 30000, 1);
  auto many = mc_expected_loss_difference(op, s, 30000, 7);
  EXPECT_EQ(one.estimate, many.estimate);
  EXPECT_EQ(one.std_error, many.std_error);
}

TEST(MonteCarlo, RunningStatsMergeMatchesSinglePass) {
  RunningStats all, a, b;
  Rng rng = make_rng(3);
  std::normal_distribution<double> n(2.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = n(rng);
    all.push(x);
    (i < 377 ? a : b).push(x);
  }
  a.merge(b);
  EXPECT_EQ(a.n, all.n);
  EXPECT_NEAR(a.mean, all.mean, 1e-12);
  EXPECT_NEAR(a.variance(), all.variance(), 1e-10);
}

TEST(Theorem1, ZeroScaleDrawsAreIdentical) {
  SamplerSpec s{4, PairCoupling::independent, Distribution::standard_normal, 5};
  auto rep = theorem1_independence_check(I(4), -I(4), s, 5000, 4, 0.0, 9);
  for (const auto& d : rep.draws) EXPECT_EQ(d.estimate, rep.draws[0].estimate);
  EXPECT_TRUE(rep.pass);
}

TEST(Theorem1, AcceptanceConfigurationPasses) {
  SamplerSpec s{10, PairCoupling::independent, Distribution::standard_normal, 20180101};
  auto rep = theorem1_independence_check(I(10), -I(10), s, 50000, 20, 1.0, 17);
  EXPECT_TRUE(rep.pass);
  EXPECT_TRUE(rep.mutually_consistent);
  EXPECT_TRUE(rep.all_near_zero);
  EXPECT_FALSE(rep.low_power);
  EXPECT_EQ(rep.draws.size(), 20u);
  std::set<double> norms;
  for (const auto& d : rep.draws) norms.insert(d.frob_A);
  EXPECT_EQ(norms.size(), 20u);
}

TEST(Theorem1, TinySampleWarnsInsteadOfFailing) {
  SamplerSpec s{3, PairCoupling::independent, Distribution::rademacher, 1};
  auto rep = theorem1_independence_check(I(3), -I(3), s, 10, 5, 1.0, 2);
  EXPECT_TRUE(rep.low_power);
  EXPECT_TRUE(rep.pass);
  EXPECT_FALSE(rep.warnings.empty());
  EXPECT_THROW(theorem1_independence_check(I(3), -I(3), s, 10, 1, 1.0, 2), InputError);
}

TEST(ZeroLoss, PairDiffAndDenseMatricesPass) {
  SamplerSpec s{5, PairCoupling::independent, Distribution::standard_normal, 31};
  EXPECT_TRUE(zero_expected_loss_check(I(5), -I(5), s, 100000).pass);
  Rng rng = make_rng(4);
  EXPECT_TRUE(zero_expected_loss_check(random_matrix(5, rng), random_matrix(5, rng), s, 100000).pass);
}

TEST(ClosedForm, RandomMatricesWithinFiveSigma) {
  Rng rng = make_rng(14);
  for (int i = 0; i < 5; ++i) {
    SamplerSpec s{5, PairCoupling::independent, Distribution::standard_normal,
                  static_cast<std::uint64_t>(100 + i)};
    auto rep = closed_form_check(random_matrix(5, rng), random_matrix(5, rng), s, 100000);
    EXPECT_TRUE(rep.pass) << "z=" << rep.z;
  }
}

TEST(CouplingProbe, MatchesFourthMomentOracle) {
  // Gaussian fourth moments give, for t = h,
  //   E||A(x - x')||^2 = 2(||A||^2 + sum_kij A_kij A_kji),  E||(P + Q)(h - h')||^2 = 2||P + Q||^2
  // against 2||A||^2 + 2(||P||^2 + ||Q||^2) for independent tails.
  const std::size_t d = 3;
  Tensor3 a(d);
  Rng rng = make_rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& v : a.values()) v = u(rng);
  Matrix P = random_matrix(d, rng), Q = random_matrix(d, rng);
  double swap = 0.0;
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) swap += a.values()[(k * d + i) * d + j] * a.values()[(k * d + j) * d + i];
  const double expected = 2.0 * swap + 2.0 * (P + Q).squaredNorm() - 2.0 * (P.squaredNorm() + Q.squaredNorm());

  auto op = BilinearOperator::general(a, P, Q);
  SamplerSpec s{d, PairCoupling::independent, Distribution::standard_normal, 6};
  auto probe = coupling_probe(op, s, 200000);
  const double se = std::hypot(probe.independent.std_error, probe.identical_tail.std_error);
  EXPECT_LE(std::abs(probe.discrepancy - expected), 5.0 * se) << "expected " << expected;

  // with t = h, the PairDiff part vanishes and only the bilinear term remains
  auto pd = coupling_probe(BilinearOperator::pairdiff(3), s, 2000);
  EXPECT_EQ(pd.identical_tail.estimate, 0.0);
}

TEST(Manifest, SmallRunIsDeterministic) {
  VerifyConfig cfg;
  cfg.theorem_d = 3;
  cfg.theorem_n = 4000;
  cfg.n_operators = 4;
  cfg.closed_form_d = 3;
  cfg.closed_form_n = 4000;
  cfg.random_pq_draws = 2;
  cfg.zero_loss_n = 4000;
  auto a = to_json(run_verification(cfg), cfg);
  cfg.threads = 3;
  auto b = to_json(run_verification(cfg), cfg);
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(a["checks"].size(), 2u + 3u + 3u + 1u);
}
