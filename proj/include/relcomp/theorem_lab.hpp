#pragma once

// Monte Carlo checks of the expected-loss identities for the bilinear
// operator over synthetic embeddings that are standardized, uncorrelated and
// relationally independent by construction.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "relcomp/common.hpp"
#include "relcomp/embedding_store.hpp"
#include "relcomp/relation_compose.hpp"
#include "relcomp/training.hpp"

namespace relcomp {

enum class PairCoupling { independent, identical_tail };
enum class Distribution { standard_normal, rademacher };

inline const char* to_string(PairCoupling c) {
  return c == PairCoupling::independent ? "independent" : "identical-tail";
}
inline const char* to_string(Distribution d) {
  return d == Distribution::standard_normal ? "standard-normal" : "rademacher";
}
inline Distribution parse_distribution(std::string_view s) {
  if (s == "standard-normal" || s == "normal") return Distribution::standard_normal;
  if (s == "rademacher") return Distribution::rademacher;
  throw InputError("unknown distribution '" + std::string(s) + "'");
}
inline PairCoupling parse_pair_coupling(std::string_view s) {
  if (s == "independent") return PairCoupling::independent;
  if (s == "identical-tail") return PairCoupling::identical_tail;
  throw InputError("unknown pair coupling '" + std::string(s) + "'");
}

/// How quadruples (h, t, h', t') are drawn. Distinct pairs are always
/// independent of each other.
struct SamplerSpec {
  std::size_t d = 10;
  PairCoupling pair_coupling = PairCoupling::independent;
  Distribution distribution = Distribution::standard_normal;
  std::uint64_t seed = 0;

  std::string describe() const {
    return std::string(to_string(distribution)) + ",d=" + std::to_string(d) + "," +
           to_string(pair_coupling) + ",cross-pair=independent,seed=" + std::to_string(seed);
  }
  nlohmann::json to_json() const {
    return {{"d", d},
            {"pair_coupling", to_string(pair_coupling)},
            {"cross_pair_coupling", "independent"},
            {"distribution", to_string(distribution)},
            {"seed", seed}};
  }
};

/// Welford accumulator; merge() is Chan's pairwise update.
struct RunningStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  void merge(const RunningStats& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double total = static_cast<double>(n + o.n);
    const double delta = o.mean - mean;
    mean += delta * static_cast<double>(o.n) / total;
    m2 += o.m2 + delta * delta * static_cast<double>(n) * static_cast<double>(o.n) / total;
    n += o.n;
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double std_error() const { return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

struct MonteCarloReport {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
  std::string sampler;
  std::string operator_digest;
};

namespace detail {

enum LabStream : std::uint64_t {
  kPositiveStream = 11,
  kNegativeStream = 12,
  kTensorDraws = 13,
  kMatrixDraws = 14,
};

inline constexpr std::size_t kChunkSize = 4096;

inline void draw_vector(Distribution dist, Rng& rng, std::normal_distribution<double>& normal,
                        Vector& out) {
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out[i] = dist == Distribution::standard_normal ? normal(rng) : ((rng() >> 63) ? 1.0 : -1.0);
}

inline std::size_t resolve_threads(std::size_t threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  return threads;
}

/// Runs `work(chunk)` for every chunk on `threads` workers.
template <typename Work>
void for_each_chunk(std::size_t n_chunks, std::size_t threads, Work&& work) {
  threads = std::min(resolve_threads(threads), std::max<std::size_t>(n_chunks, 1));
  if (threads <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) work(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < n_chunks; c = next++) work(c);
    });
}

}  // namespace detail

/// Loss ||r(h,t) - r(h',t')||^2 of every operator on the same `n` sampled
/// quadruples. Samples come in fixed-size chunks, each from its own substream
/// of (sampler.seed, stream), and are merged in chunk order, so the result
/// does not depend on the thread count.
inline std::vector<RunningStats> sample_losses(std::span<const BilinearOperator> ops,
                                               const SamplerSpec& sampler, std::size_t n,
                                               std::uint64_t stream, std::size_t threads = 0) {
  for (const auto& op : ops)
    if (op.dim() != sampler.d) throw DimensionError("operator and sampler dimensionality differ");
  const std::size_t n_chunks = (n + detail::kChunkSize - 1) / detail::kChunkSize;
  std::vector<std::vector<RunningStats>> per_chunk(n_chunks,
                                                   std::vector<RunningStats>(ops.size()));
  const auto d = static_cast<Eigen::Index>(sampler.d);
  const std::uint64_t base = detail::splitmix64(sampler.seed) ^ detail::splitmix64(stream);

  detail::for_each_chunk(n_chunks, threads, [&](std::size_t c) {
    Rng rng = make_rng(base, c);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector h(d), t(d), h2(d), t2(d), x1, x2, xdiff, r;
    const std::size_t count = std::min(detail::kChunkSize, n - c * detail::kChunkSize);
    auto& stats = per_chunk[c];
    for (std::size_t s = 0; s < count; ++s) {
      detail::draw_vector(sampler.distribution, rng, normal, h);
      if (sampler.pair_coupling == PairCoupling::independent)
        detail::draw_vector(sampler.distribution, rng, normal, t);
      else
        t = h;
      detail::draw_vector(sampler.distribution, rng, normal, h2);
      if (sampler.pair_coupling == PairCoupling::independent)
        detail::draw_vector(sampler.distribution, rng, normal, t2);
      else
        t2 = h2;
      detail::outer_features(h, t, x1);
      detail::outer_features(h2, t2, x2);
      xdiff = x1 - x2;
      const Vector dh = h - h2;
      const Vector dt = t - t2;
      // r(h,t) - r(h',t') = A (x - x') + P (h - h') + Q (t - t')
      for (std::size_t k = 0; k < ops.size(); ++k) {
        const auto& op = ops[k];
        r.noalias() = op.tensor().unfolded() * xdiff;
        if (op.mode() == ConstraintMode::diagonal) {
          r += op.p() * dh;
          r += op.q() * dt;
        } else {
          r.noalias() += op.P_matrix() * dh;
          r.noalias() += op.Q_matrix() * dt;
        }
        stats[k].push(r.squaredNorm());
      }
    }
  });

  std::vector<RunningStats> merged(ops.size());
  for (const auto& chunk : per_chunk)
    for (std::size_t k = 0; k < ops.size(); ++k) merged[k].merge(chunk[k]);
  return merged;
}

namespace detail {

inline MonteCarloReport make_report(const RunningStats& s, const SamplerSpec& sampler,
                                    std::string digest) {
  return {s.mean, s.std_error(), s.n, sampler.describe(), std::move(digest)};
}

inline std::string combined_digest(std::span<const BilinearOperator> ops) {
  Fnv1a h;
  for (const auto& op : ops) {
    auto d = op.digest();
    h.update(d.data(), d.size());
  }
  return h.hex();
}

inline void require_samples(std::size_t n) {
  if (n < 2) throw InputError("Monte Carlo estimates need n >= 2");
}

}  // namespace detail

/// i.i.d. zero-mean unit-variance entries; words are named w0, w1, ...
inline EmbeddingMatrix synth_embeddings(std::size_t m, std::size_t d, Distribution dist,
                                        std::uint64_t seed) {
  if (m < 2) throw InputError("synth_embeddings needs m >= 2");
  if (d < 1) throw InputError("synth_embeddings needs d >= 1");
  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  Vector row(static_cast<Eigen::Index>(d));
  std::vector<std::string> vocab;
  vocab.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    detail::draw_vector(dist, rng, normal, row);
    x.row(static_cast<Eigen::Index>(i)) = row.transpose();
    vocab.push_back("w" + std::to_string(i));
  }
  return EmbeddingMatrix(std::move(vocab), std::move(x));
}

struct OffsetRelations {
  EmbeddingMatrix embeddings;
  std::vector<RelationGroup> groups;
  /// Row r is the offset vector of relation r.
  RowMatrix offsets;
};

/// Synthetic relation data where PairDiff is optimal by construction: each
/// relation r has an offset v_r ~ N(0, I); its pairs have heads h ~ N(0, I)
/// and tails t = h + v_r + noise_scale * N(0, I). Words are r{i}_p{j}_h and
/// r{i}_p{j}_t.
inline OffsetRelations synth_offset_relations(std::size_t pairs_per_relation, std::size_t d,
                                              std::size_t n_relations, double noise_scale,
                                              std::uint64_t seed) {
  if (n_relations < 2) throw InputError("synth_offset_relations needs n_relations >= 2");
  if (pairs_per_relation < 1 || d < 1) throw InputError("synth_offset_relations: empty request");
  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(d);

  RowMatrix offsets(static_cast<Eigen::Index>(n_relations), n);
  for (Eigen::Index r = 0; r < offsets.rows(); ++r)
    for (Eigen::Index k = 0; k < n; ++k) offsets(r, k) = normal(rng);

  const std::size_t rows = 2 * pairs_per_relation * n_relations;
  RowMatrix x(static_cast<Eigen::Index>(rows), n);
  std::vector<std::string> vocab;
  vocab.reserve(rows);
  std::vector<RelationGroup> groups;
  Eigen::Index row = 0;
  for (std::size_t r = 0; r < n_relations; ++r) {
    RelationGroup g{"r" + std::to_string(r), {}};
    for (std::size_t p = 0; p < pairs_per_relation; ++p) {
      const std::string stem = "r" + std::to_string(r) + "_p" + std::to_string(p);
      for (Eigen::Index k = 0; k < n; ++k) x(row, k) = normal(rng);
      for (Eigen::Index k = 0; k < n; ++k)
        x(row + 1, k) = x(row, k) + offsets(static_cast<Eigen::Index>(r), k) +
                        noise_scale * normal(rng);
      vocab.push_back(stem + "_h");
      vocab.push_back(stem + "_t");
      g.pairs.push_back({stem + "_h", stem + "_t"});
      row += 2;
    }
    groups.push_back(std::move(g));
  }
  return {EmbeddingMatrix(std::move(vocab), std::move(x)), std::move(groups), std::move(offsets)};
}

/// Sample mean of ||r(h,t) - r(h',t')||^2 over n quadruples.
inline MonteCarloReport mc_expected_positive_loss(const BilinearOperator& op,
                                                  const SamplerSpec& sampler, std::size_t n,
                                                  std::size_t threads = 0) {
  detail::require_samples(n);
  auto stats = sample_losses(std::span(&op, 1), sampler, n, detail::kPositiveStream, threads);
  return detail::make_report(stats[0], sampler, op.digest());
}

/// Estimate of E_{p+}[J] - E_{p-}[J], positives and negatives drawn from
/// independent substreams of the same sampler.
struct DifferenceReport {
  MonteCarloReport positive;
  MonteCarloReport negative;
  double estimate = 0.0;
  double std_error = 0.0;
};

namespace detail {

inline DifferenceReport difference(const RunningStats& pos, const RunningStats& neg,
                                   const SamplerSpec& sampler, const std::string& digest) {
  DifferenceReport r{make_report(pos, sampler, digest), make_report(neg, sampler, digest), 0.0,
                     0.0};
  r.estimate = pos.mean - neg.mean;
  r.std_error = std::hypot(pos.std_error(), neg.std_error());
  return r;
}

}  // namespace detail

inline DifferenceReport mc_expected_loss_difference(const BilinearOperator& op,
                                                    const SamplerSpec& sampler, std::size_t n,
                                                    std::size_t threads = 0) {
  detail::require_samples(n);
  auto pos = sample_losses(std::span(&op, 1), sampler, n, detail::kPositiveStream, threads);
  auto neg = sample_losses(std::span(&op, 1), sampler, n, detail::kNegativeStream, threads);
  return detail::difference(pos[0], neg[0], sampler, op.digest());
}

/// Below this many samples a failed statistical test is reported as a
/// low-power warning instead of a failure.
inline constexpr std::size_t kMinSamplesForPower = 1000;
inline constexpr double kSigmaThreshold = 3.0;

struct TensorDrawEstimate {
  double frob_A = 0.0;
  double positive_term = 0.0;
  double negative_term = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
};

struct Theorem1Report {
  std::vector<TensorDrawEstimate> draws;
  double max_pairwise_deviation = 0.0;
  /// max over pairs of |e_i - e_j| / sqrt(se_i^2 + se_j^2)
  double max_pairwise_z = 0.0;
  /// max over draws of |e_i| / se_i
  double max_abs_z = 0.0;
  bool mutually_consistent = false;
  bool all_near_zero = false;
  bool low_power = false;
  bool pass = false;
  std::size_t n_samples = 0;
  std::string sampler;
  std::string operator_digest;
  std::vector<std::string> warnings;
};

namespace detail {

inline double z_score(double diff, double se) {
  if (se == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(diff) / se;
}

}  // namespace detail

/// Draws `n_operators` tensors with entries U[-a_scale, a_scale] and, for each
/// operator (A, P, Q), estimates E_{p+}[J] - E_{p-}[J]. All operators are
/// scored on the same positive and the same negative samples. Passes when
/// every pair of estimates agrees within 3 combined standard errors.
inline Theorem1Report theorem1_independence_check(const Matrix& P, const Matrix& Q,
                                                  const SamplerSpec& sampler, std::size_t n,
                                                  std::size_t n_operators, double a_scale,
                                                  std::uint64_t seed, std::size_t threads = 0) {
  detail::require_samples(n);
  if (n_operators < 2) throw InputError("theorem1 check needs n_operators >= 2");
  if (!(a_scale >= 0.0)) throw InputError("a_scale must be >= 0");

  Rng rng = make_rng(seed, detail::kTensorDraws);
  std::uniform_real_distribution<double> dist(-a_scale, a_scale);
  std::vector<BilinearOperator> ops;
  for (std::size_t o = 0; o < n_operators; ++o) {
    Tensor3 a(sampler.d);
    if (a_scale > 0.0)
      for (double& v : a.values()) v = dist(rng);
    ops.push_back(BilinearOperator::general(std::move(a), P, Q));
  }

  auto pos = sample_losses(ops, sampler, n, detail::kPositiveStream, threads);
  auto neg = sample_losses(ops, sampler, n, detail::kNegativeStream, threads);

  Theorem1Report rep;
  rep.n_samples = n;
  rep.sampler = sampler.describe();
  rep.operator_digest = detail::combined_digest(ops);
  for (std::size_t o = 0; o < n_operators; ++o) {
    TensorDrawEstimate e;
    e.frob_A = ops[o].tensor().frobenius_norm();
    e.positive_term = pos[o].mean;
    e.negative_term = neg[o].mean;
    e.estimate = pos[o].mean - neg[o].mean;
    e.std_error = std::hypot(pos[o].std_error(), neg[o].std_error());
    rep.draws.push_back(e);
  }
  for (std::size_t i = 0; i < rep.draws.size(); ++i) {
    const auto& a = rep.draws[i];
    rep.max_abs_z = std::max(rep.max_abs_z, detail::z_score(a.estimate, a.std_error));
    for (std::size_t j = i + 1; j < rep.draws.size(); ++j) {
      const auto& b = rep.draws[j];
      const double diff = a.estimate - b.estimate;
      rep.max_pairwise_deviation = std::max(rep.max_pairwise_deviation, std::abs(diff));
      rep.max_pairwise_z =
          std::max(rep.max_pairwise_z, detail::z_score(diff, std::hypot(a.std_error, b.std_error)));
    }
  }
  rep.mutually_consistent = rep.max_pairwise_z <= kSigmaThreshold;
  rep.all_near_zero = rep.max_abs_z <= kSigmaThreshold;
  rep.low_power = n < kMinSamplesForPower;
  rep.pass = rep.mutually_consistent;
  if (rep.low_power) {
    rep.warnings.push_back("low statistical power: n=" + std::to_string(n) + " < " +
                           std::to_string(kMinSamplesForPower));
    rep.pass = true;
  }
  return rep;
}

struct ZeroLossReport {
  DifferenceReport difference;
  double z = 0.0;
  bool low_power = false;
  bool pass = false;
  std::vector<std::string> warnings;
};

/// With A = 0, checks |E_{p+}[J] - E_{p-}[J]| <= 3 standard errors.
inline ZeroLossReport zero_expected_loss_check(const Matrix& P, const Matrix& Q,
                                               const SamplerSpec& sampler, std::size_t n,
                                               std::size_t threads = 0) {
  auto op = BilinearOperator::general(Tensor3(sampler.d), P, Q);
  ZeroLossReport rep{mc_expected_loss_difference(op, sampler, n, threads), 0.0, false, false, {}};
  rep.z = detail::z_score(rep.difference.estimate, rep.difference.std_error);
  rep.pass = rep.z <= kSigmaThreshold;
  rep.low_power = n < kMinSamplesForPower;
  if (rep.low_power) {
    rep.warnings.push_back("low statistical power: n=" + std::to_string(n));
    rep.pass = true;
  }
  return rep;
}

/// 2 (tr P^T P + tr Q^T Q): expected positive-term loss of (0, P, Q) under
/// independent standardized, uncorrelated sampling.
inline double analytic_positive_loss(const Matrix& P, const Matrix& Q) {
  return 2.0 * ((P.transpose() * P).trace() + (Q.transpose() * Q).trace());
}

struct ClosedFormReport {
  MonteCarloReport positive;
  double analytic = 0.0;
  double z = 0.0;
  double tolerance_se = 5.0;
  bool pass = false;
};

/// Positive-term estimate of (0, P, Q) against analytic_positive_loss.
inline ClosedFormReport closed_form_check(const Matrix& P, const Matrix& Q,
                                          const SamplerSpec& sampler, std::size_t n,
                                          double tolerance_se = 5.0, std::size_t threads = 0) {
  auto op = BilinearOperator::general(Tensor3(sampler.d), P, Q);
  ClosedFormReport rep;
  rep.positive = mc_expected_positive_loss(op, sampler, n, threads);
  rep.analytic = analytic_positive_loss(P, Q);
  rep.tolerance_se = tolerance_se;
  rep.z = detail::z_score(rep.positive.estimate - rep.analytic, rep.positive.std_error);
  rep.pass = rep.z <= tolerance_se;
  return rep;
}

/// Positive-term estimate of one operator under the independent and the
/// identical-tail (t = h) couplings. Informational only.
struct CouplingProbe {
  MonteCarloReport independent;
  MonteCarloReport identical_tail;
  double discrepancy = 0.0;
};

inline CouplingProbe coupling_probe(const BilinearOperator& op, SamplerSpec sampler, std::size_t n,
                                    std::size_t threads = 0) {
  CouplingProbe probe;
  sampler.pair_coupling = PairCoupling::independent;
  probe.independent = mc_expected_positive_loss(op, sampler, n, threads);
  sampler.pair_coupling = PairCoupling::identical_tail;
  probe.identical_tail = mc_expected_positive_loss(op, sampler, n, threads);
  probe.discrepancy = probe.identical_tail.estimate - probe.independent.estimate;
  return probe;
}

/// Dense matrix with entries U[-1, 1].
inline Matrix random_matrix(std::size_t d, Rng& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const auto n = static_cast<Eigen::Index>(d);
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = dist(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Verification manifest

struct VerifyConfig {
  std::uint64_t seed = 20180101;
  std::size_t theorem_d = 10;
  std::size_t theorem_n = 50000;
  std::size_t n_operators = 20;
  double a_scale = 1.0;
  std::size_t closed_form_d = 5;
  std::size_t closed_form_n = 100000;
  std::size_t random_pq_draws = 5;
  std::size_t zero_loss_n = 100000;
  /// Also require every theorem-1 estimate to lie within 3 sigma of zero.
  bool strict = false;
  std::size_t threads = 0;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  bool informational = false;
  std::vector<std::string> warnings;
  nlohmann::json body;
};

struct VerificationManifest {
  std::vector<CheckResult> checks;

  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
  }
};

namespace detail {

inline nlohmann::json report_json(const std::string& check, const SamplerSpec& sampler,
                                  const std::string& digest, double estimate, double se,
                                  std::size_t n, bool pass) {
  return {{"check", check},       {"sampler", sampler.to_json()}, {"operator_digest", digest},
          {"estimate", estimate}, {"std_error", se},              {"n", n},
          {"pass", pass}};
}

}  // namespace detail

inline CheckResult run_theorem1(const std::string& name, const VerifyConfig& cfg,
                                Distribution dist, std::uint64_t sampler_seed) {
  const auto d = static_cast<Eigen::Index>(cfg.theorem_d);
  const Matrix I = Matrix::Identity(d, d);
  SamplerSpec sampler{cfg.theorem_d, PairCoupling::independent, dist, sampler_seed};
  auto rep = theorem1_independence_check(I, -I, sampler, cfg.theorem_n, cfg.n_operators,
                                         cfg.a_scale, detail::splitmix64(sampler_seed + 1),
                                         cfg.threads);
  CheckResult c;
  c.name = name;
  c.pass = rep.pass && (!cfg.strict || rep.all_near_zero || rep.low_power);
  c.warnings = rep.warnings;
  double mean = 0.0, max_se = 0.0;
  auto draws = nlohmann::json::array();
  for (const auto& e : rep.draws) {
    mean += e.estimate / static_cast<double>(rep.draws.size());
    max_se = std::max(max_se, e.std_error);
    draws.push_back({{"frob_A", e.frob_A},
                     {"positive_term", e.positive_term},
                     {"negative_term", e.negative_term},
                     {"estimate", e.estimate},
                     {"std_error", e.std_error}});
  }
  c.body = detail::report_json(name, sampler, rep.operator_digest, mean, max_se, cfg.theorem_n,
                               c.pass);
  c.body["draws"] = std::move(draws);
  c.body["max_pairwise_deviation"] = rep.max_pairwise_deviation;
  c.body["max_pairwise_z"] = rep.max_pairwise_z;
  c.body["max_abs_z"] = rep.max_abs_z;
  c.body["mutually_consistent"] = rep.mutually_consistent;
  c.body["all_near_zero"] = rep.all_near_zero;
  c.body["low_power"] = rep.low_power;
  return c;
}

/// Every theorem-lab check with seeds derived from cfg.seed.
inline VerificationManifest run_verification(const VerifyConfig& cfg) {
  VerificationManifest m;
  auto seed_for = [&](std::uint64_t i) { return detail::splitmix64(cfg.seed + i); };

  m.checks.push_back(
      run_theorem1("theorem1_independence_normal", cfg, Distribution::standard_normal, seed_for(1)));
  m.checks.push_back(
      run_theorem1("theorem1_independence_rademacher", cfg, Distribution::rademacher, seed_for(2)));

  const auto cd = static_cast<Eigen::Index>(cfg.closed_form_d);
  const Matrix I = Matrix::Identity(cd, cd);
  Rng pq_rng = make_rng(cfg.seed, detail::kMatrixDraws);
  std::vector<std::pair<std::string, std::pair<Matrix, Matrix>>> pq_cases;
  pq_cases.push_back({"pairdiff", {I, -I}});
  for (std::size_t i = 0; i < cfg.random_pq_draws; ++i) {
    Matrix P = random_matrix(cfg.closed_form_d, pq_rng);
    Matrix Q = random_matrix(cfg.closed_form_d, pq_rng);
    pq_cases.push_back({"random_pq_" + std::to_string(i), {std::move(P), std::move(Q)}});
  }

  std::uint64_t k = 10;
  for (const auto& [label, pq] : pq_cases) {
    SamplerSpec sampler{cfg.closed_form_d, PairCoupling::independent,
                        Distribution::standard_normal, seed_for(k++)};
    auto rep = closed_form_check(pq.first, pq.second, sampler, cfg.closed_form_n, 5.0, cfg.threads);
    CheckResult c;
    c.name = "closed_form_positive_loss_" + label;
    c.pass = rep.pass;
    c.body = detail::report_json(c.name, sampler, rep.positive.operator_digest,
                                 rep.positive.estimate, rep.positive.std_error,
                                 rep.positive.n_samples, rep.pass);
    c.body["analytic"] = rep.analytic;
    c.body["z"] = rep.z;
    c.body["tolerance_se"] = rep.tolerance_se;
    m.checks.push_back(std::move(c));
  }

  const auto zero = Matrix::Zero(cd, cd);
  std::vector<std::pair<std::string, std::pair<Matrix, Matrix>>> zero_cases{
      {"pairdiff", pq_cases[0].second},
      {"random_dense", pq_cases.size() > 1 ? pq_cases[1].second : pq_cases[0].second},
      {"zero_operator", {zero, zero}}};
  for (const auto& [label, pq] : zero_cases) {
    SamplerSpec sampler{cfg.closed_form_d, PairCoupling::independent,
                        Distribution::standard_normal, seed_for(k++)};
    auto rep = zero_expected_loss_check(pq.first, pq.second, sampler, cfg.zero_loss_n, cfg.threads);
    CheckResult c;
    c.name = "zero_expected_loss_" + label;
    c.pass = rep.pass;
    c.warnings = rep.warnings;
    c.body = detail::report_json(c.name, sampler, rep.difference.positive.operator_digest,
                                 rep.difference.estimate, rep.difference.std_error,
                                 cfg.zero_loss_n, rep.pass);
    c.body["positive_term"] = rep.difference.positive.estimate;
    c.body["negative_term"] = rep.difference.negative.estimate;
    c.body["z"] = rep.z;
    m.checks.push_back(std::move(c));
  }

  {
    // Positive term under t = h versus independent tails, for a fixed random A.
    const auto td = static_cast<Eigen::Index>(cfg.theorem_d);
    Rng a_rng = make_rng(cfg.seed, detail::kTensorDraws);
    std::uniform_real_distribution<double> dist(-cfg.a_scale, cfg.a_scale);
    Tensor3 a(cfg.theorem_d);
    for (double& v : a.values()) v = dist(a_rng);
    const Matrix Id = Matrix::Identity(td, td);
    auto op = BilinearOperator::general(std::move(a), Id, -Id);
    SamplerSpec sampler{cfg.theorem_d, PairCoupling::independent, Distribution::standard_normal,
                        seed_for(k++)};
    auto probe = coupling_probe(op, sampler, cfg.theorem_n, cfg.threads);
    CheckResult c;
    c.name = "coupling_probe_identical_tail";
    c.pass = true;
    c.informational = true;
    c.body = detail::report_json(c.name, sampler, op.digest(), probe.discrepancy,
                                 std::hypot(probe.independent.std_error,
                                            probe.identical_tail.std_error),
                                 cfg.theorem_n, true);
    c.body["informational"] = true;
    c.body["positive_term_independent"] = probe.independent.estimate;
    c.body["positive_term_identical_tail"] = probe.identical_tail.estimate;
    c.body["frob_A"] = op.tensor().frobenius_norm();
    m.checks.push_back(std::move(c));
  }
  return m;
}

inline nlohmann::json to_json(const VerificationManifest& m, const VerifyConfig& cfg) {
  nlohmann::json j;
  j["config"] = {{"seed", cfg.seed},
                 {"theorem_d", cfg.theorem_d},
                 {"theorem_n", cfg.theorem_n},
                 {"n_operators", cfg.n_operators},
                 {"a_scale", cfg.a_scale},
                 {"closed_form_d", cfg.closed_form_d},
                 {"closed_form_n", cfg.closed_form_n},
                 {"random_pq_draws", cfg.random_pq_draws},
                 {"zero_loss_n", cfg.zero_loss_n},
                 {"strict", cfg.strict}};
  auto checks = nlohmann::json::array();
  for (const auto& c : m.checks) {
    auto body = c.body;
    body["pass"] = c.pass;
    body["warnings"] = c.warnings;
    checks.push_back(std::move(body));
  }
  j["checks"] = std::move(checks);
  j["all_pass"] = m.all_pass();
  return j;
}

}  // namespace relcomp
