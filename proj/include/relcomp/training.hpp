#pragma once

// Analogy instance generation from relation groups and AdaGrad training of
// the bilinear operator against the signed l2 analogy loss.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "relcomp/common.hpp"
#include "relcomp/embedding_store.hpp"
#include "relcomp/error.hpp"
#include "relcomp/relation_compose.hpp"

namespace relcomp {

struct RelationGroup {
  std::string relation_id;
  std::vector<WordPair> pairs;
};

inline void validate_group(const RelationGroup& g) {
  if (g.pairs.empty()) throw InputError("relation group '" + g.relation_id + "' is empty");
  std::set<WordPair> seen;
  for (const auto& p : g.pairs)
    if (!seen.insert(p).second)
      throw InputError("relation group '" + g.relation_id + "' repeats pair (" + p.head + ", " +
                       p.tail + ")");
}

namespace detail {

inline std::optional<WordPair> parse_pair_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto fields = split_fields(line);
  if (fields.empty()) return std::nullopt;
  if (fields.size() != 2) return WordPair{};
  return WordPair{std::string(fields[0]), std::string(fields[1])};
}

inline std::vector<RelationGroup> load_groups_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<RelationGroup> groups;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw InputError("cannot open " + f.string());
    RelationGroup g{f.stem().string(), {}};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto pair = parse_pair_line(line);
      if (!pair) continue;
      if (pair->head.empty()) throw ParseError(f.string(), line_no, "expected 'head<TAB>tail'");
      g.pairs.push_back(std::move(*pair));
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

inline std::vector<RelationGroup> load_groups_jsonl(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open " + file.string());
  std::vector<RelationGroup> groups;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto rel = j.at("relation").get<std::string>();
      auto [it, inserted] = index.emplace(rel, groups.size());
      if (inserted) groups.push_back({rel, {}});
      groups[it->second].pairs.push_back(
          {j.at("head").get<std::string>(), j.at("tail").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(file.string(), line_no, e.what());
    }
  }
  return groups;
}

}  // namespace detail

/// Reads relation groups from a directory of `head<TAB>tail` files (file stem
/// is the relation id, files in name order) or from a JSONL file of
/// {relation, head, tail} records (groups in order of first appearance).
inline std::vector<RelationGroup> load_relation_groups(const std::filesystem::path& path) {
  std::vector<RelationGroup> groups;
  if (std::filesystem::is_directory(path))
    groups = detail::load_groups_dir(path);
  else if (std::filesystem::is_regular_file(path))
    groups = detail::load_groups_jsonl(path);
  else
    throw InputError("relation groups not found: " + path.string());
  for (const auto& g : groups) validate_group(g);
  return groups;
}

/// Row indices of every word that occurs in `groups` and in `e`, ascending.
inline std::vector<std::size_t> task_rows(const EmbeddingMatrix& e,
                                          std::span<const RelationGroup> groups) {
  std::set<std::size_t> rows;
  for (const auto& g : groups)
    for (const auto& p : g.pairs) {
      auto h = e.index_of(p.head);
      auto t = e.index_of(p.tail);
      if (h) rows.insert(*h);
      if (t) rows.insert(*t);
    }
  return {rows.begin(), rows.end()};
}

enum class NegativeStrategy { uniform, nearest_in_pool };

inline NegativeStrategy parse_negative_strategy(std::string_view s) {
  if (s == "uniform") return NegativeStrategy::uniform;
  if (s == "nearest-in-pool") return NegativeStrategy::nearest_in_pool;
  throw InputError("unknown negative strategy '" + std::string(s) + "'");
}

inline const char* to_string(NegativeStrategy s) {
  return s == NegativeStrategy::uniform ? "uniform" : "nearest-in-pool";
}

struct TrainingConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 100;
  double lambda_A = 0.01;
  std::size_t negatives_per_pair = 10;
  NegativeStrategy negative_strategy = NegativeStrategy::nearest_in_pool;
  std::size_t candidate_pool = 50;
  /// Cap on within-group positive pairings; larger groups are subsampled
  /// uniformly without replacement.
  std::size_t max_positives_per_group = 1200;
  std::uint64_t seed = 0;
  double init_lo = -1.0;
  double init_hi = 1.0;
  double adagrad_epsilon = 1e-8;
  std::size_t batch_size = 64;
  bool allow_unstandardized = false;
  /// Fit dense P and Q instead of pI and qI.
  bool fit_full_pq = false;
  bool record_wall_clock = false;

  void validate() const {
    auto fail = [](const std::string& what) { throw InputError("training config: " + what); };
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
    if (!(lambda_A >= 0.0) || !std::isfinite(lambda_A)) fail("lambda_A must be >= 0");
    if (negatives_per_pair == 0) fail("negatives_per_pair must be > 0");
    if (candidate_pool == 0) fail("candidate_pool must be > 0");
    if (max_positives_per_group == 0) fail("max_positives_per_group must be > 0");
    if (!(init_lo < init_hi)) fail("init range needs lo < hi");
    if (!(adagrad_epsilon > 0.0)) fail("adagrad_epsilon must be > 0");
    if (batch_size == 0) fail("batch_size must be > 0");
  }
};

/// ((h, t), (h', t')) labelled +1 (same relation) or -1 (different
/// relations). Words are stored as rows of the embedding matrix the instance
/// set was built from.
struct AnalogyInstance {
  std::array<std::size_t, 4> rows{};
  int sign = 1;
  std::uint32_t source_relation = 0;
  std::uint32_t contrast_relation = 0;
};

struct InstanceSet {
  std::vector<AnalogyInstance> instances;
  std::vector<std::string> relation_ids;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t skipped_pairs = 0;
  std::vector<std::string> warnings;
};

namespace detail {

enum Stream : std::uint64_t { kStreamInstances = 1, kStreamInit = 2, kStreamShuffle = 3 };

struct ResolvedGroup {
  std::uint32_t relation = 0;
  std::vector<std::array<std::size_t, 2>> pairs;
};

// `k` distinct uniform draws from [0, n) when n >= k, else k draws with
// replacement.
inline std::vector<std::size_t> draw_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  std::vector<std::size_t> out;
  out.reserve(k);
  if (n < k) {
    for (std::size_t i = 0; i < k; ++i) out.push_back(dist(rng));
    return out;
  }
  while (out.size() < k) {
    auto v = dist(rng);
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

}  // namespace detail

/// Positive instances pair distinct word-pairs within a group (all C(n,2)
/// pairings, or a uniform sample of `max_positives_per_group` of them);
/// each word-pair also anchors `negatives_per_pair` negatives drawn from
/// other groups by `negative_strategy`. Pairs with an unknown word are
/// skipped and counted.
inline InstanceSet build_instances(std::span<const RelationGroup> groups, const EmbeddingMatrix& e,
                                   const TrainingConfig& cfg) {
  cfg.validate();
  InstanceSet out;
  std::vector<detail::ResolvedGroup> resolved;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    out.relation_ids.push_back(groups[g].relation_id);
    detail::ResolvedGroup rg{static_cast<std::uint32_t>(g), {}};
    for (const auto& p : groups[g].pairs) {
      auto h = e.index_of(p.head);
      auto t = e.index_of(p.tail);
      if (!h || !t) {
        ++out.skipped_pairs;
        continue;
      }
      rg.pairs.push_back({*h, *t});
    }
    if (rg.pairs.empty()) {
      out.warnings.push_back("relation '" + groups[g].relation_id + "' has no resolvable pairs");
      continue;
    }
    if (rg.pairs.size() < 2)
      out.warnings.push_back("relation '" + groups[g].relation_id +
                             "' has fewer than 2 resolvable pairs; no positives");
    resolved.push_back(std::move(rg));
  }
  if (resolved.size() < 2)
    throw InputError("need at least 2 relation groups with resolvable pairs, have " +
                     std::to_string(resolved.size()));

  Rng rng = make_rng(cfg.seed, detail::kStreamInstances);

  for (const auto& rg : resolved) {
    const std::size_t n = rg.pairs.size();
    if (n < 2) continue;
    const std::size_t total = n * (n - 1) / 2;
    auto emit = [&](std::size_t a, std::size_t b) {
      out.instances.push_back({{rg.pairs[a][0], rg.pairs[a][1], rg.pairs[b][0], rg.pairs[b][1]},
                               +1, rg.relation, rg.relation});
      ++out.positives;
    };
    if (total <= cfg.max_positives_per_group) {
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) emit(a, b);
    } else {
      // selection sampling: keeps `remaining` of the unseen pairings uniformly, in order
      std::size_t remaining = cfg.max_positives_per_group;
      std::size_t a = 0, b = 1;
      for (std::size_t idx = 0; idx < total && remaining > 0; ++idx) {
        std::uniform_int_distribution<std::size_t> dist(0, total - idx - 1);
        if (dist(rng) < remaining) {
          emit(a, b);
          --remaining;
        }
        if (++b == n) {
          ++a;
          b = a + 1;
        }
      }
    }
  }

  // Flat, group-contiguous pool of every resolved pair with its PairDiff vector.
  std::vector<std::size_t> group_begin;
  std::vector<std::pair<std::size_t, std::size_t>> pool;  // (resolved group, pair)
  for (std::size_t g = 0; g < resolved.size(); ++g) {
    group_begin.push_back(pool.size());
    for (std::size_t p = 0; p < resolved[g].pairs.size(); ++p) pool.emplace_back(g, p);
  }
  group_begin.push_back(pool.size());
  RowMatrix offsets(static_cast<Eigen::Index>(pool.size()), static_cast<Eigen::Index>(e.dim()));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& rp = resolved[pool[i].first].pairs[pool[i].second];
    offsets.row(static_cast<Eigen::Index>(i)) = (e.row(rp[0]) - e.row(rp[1])).transpose();
  }

  const std::size_t k = cfg.negatives_per_pair;
  for (std::size_t g = 0; g < resolved.size(); ++g) {
    const std::size_t begin = group_begin[g];
    const std::size_t own = group_begin[g + 1] - begin;
    const std::size_t others = pool.size() - own;
    // index into the pool with group g's block removed
    auto other_at = [&](std::size_t i) { return i < begin ? i : i + own; };

    for (std::size_t p = 0; p < own; ++p) {
      std::vector<std::size_t> chosen;
      if (cfg.negative_strategy == NegativeStrategy::uniform) {
        chosen = detail::draw_indices(others, k, rng);
      } else {
        const std::size_t pool_size = others < k ? cfg.candidate_pool
                                                 : std::max(k, std::min(cfg.candidate_pool, others));
        auto cands = detail::draw_indices(others, pool_size, rng);
        const auto anchor = offsets.row(static_cast<Eigen::Index>(begin + p));
        std::vector<std::pair<double, std::size_t>> scored;
        scored.reserve(cands.size());
        for (auto c : cands)
          scored.emplace_back(
              (offsets.row(static_cast<Eigen::Index>(other_at(c))) - anchor).squaredNorm(), c);
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& x, const auto& y) { return x.first < y.first; });
        for (std::size_t i = 0; i < k && i < scored.size(); ++i) chosen.push_back(scored[i].second);
      }
      const auto& anchor_rows = resolved[g].pairs[p];
      for (auto c : chosen) {
        const auto [cg, cp] = pool[other_at(c)];
        const auto& rows = resolved[cg].pairs[cp];
        out.instances.push_back({{anchor_rows[0], anchor_rows[1], rows[0], rows[1]},
                                 -1,
                                 resolved[g].relation,
                                 resolved[cg].relation});
        ++out.negatives;
      }
    }
  }
  return out;
}

namespace detail {

inline void check_operator_dim(const BilinearOperator& op, const EmbeddingMatrix& e) {
  if (op.dim() != e.dim())
    throw DimensionError("operator dimension " + std::to_string(op.dim()) +
                         " does not match embedding dimension " + std::to_string(e.dim()));
}

}  // namespace detail

/// sign * ||r(h, t) - r(h', t')||^2.
inline double instance_loss(const BilinearOperator& op, const EmbeddingMatrix& e,
                            const AnalogyInstance& inst) {
  detail::check_operator_dim(op, e);
  const auto& r = inst.rows;
  return inst.sign * relational_distance_sq(op, e.row(r[0]), e.row(r[1]), e.row(r[2]), e.row(r[3]));
}

/// Sum of instance losses plus lambda_A * ||A||_F^2.
inline double total_loss(const BilinearOperator& op, const EmbeddingMatrix& e,
                         std::span<const AnalogyInstance> instances, double lambda_A) {
  double sum = 0.0;
  for (const auto& inst : instances) sum += instance_loss(op, e, inst);
  return sum + lambda_A * op.tensor().squared_norm();
}

/// Gradient of (sum of batch instance losses + lambda_A ||A||_F^2). dP/dQ are
/// filled only for general-mode operators, dp/dq only for diagonal ones.
struct GradientRecord {
  Tensor3 dA;
  double dp = 0.0;
  double dq = 0.0;
  Matrix dP;
  Matrix dQ;
  /// Batch objective at the point the gradient was taken.
  double loss = 0.0;
};

namespace detail {

inline GradientRecord accumulate_gradients(const BilinearOperator& op, const EmbeddingMatrix& e,
                                           std::span<const AnalogyInstance> batch,
                                           double lambda_A) {
  check_operator_dim(op, e);
  const std::size_t d = op.dim();
  const auto n = static_cast<Eigen::Index>(d);
  const bool diagonal = op.mode() == ConstraintMode::diagonal;

  GradientRecord g{Tensor3(d), 0.0, 0.0, {}, {}, 0.0};
  if (!diagonal) {
    g.dP = Matrix::Zero(n, n);
    g.dQ = Matrix::Zero(n, n);
  }
  auto dA = g.dA.unfolded();

  Vector r1, r2, x1, x2;
  for (const auto& inst : batch) {
    const auto h = e.row(inst.rows[0]);
    const auto t = e.row(inst.rows[1]);
    const auto h2 = e.row(inst.rows[2]);
    const auto t2 = e.row(inst.rows[3]);
    compose_into(op, h, t, r1, x1);
    compose_into(op, h2, t2, r2, x2);
    const Vector delta = r1 - r2;
    const double w = 2.0 * inst.sign;
    g.loss += inst.sign * delta.squaredNorm();
    dA.noalias() += (w * delta) * (x1 - x2).transpose();
    if (diagonal) {
      g.dp += w * delta.dot(h - h2);
      g.dq += w * delta.dot(t - t2);
    } else {
      g.dP.noalias() += (w * delta) * (h - h2).transpose();
      g.dQ.noalias() += (w * delta) * (t - t2).transpose();
    }
  }
  auto a = op.tensor().values();
  auto ga = g.dA.values();
  for (std::size_t i = 0; i < a.size(); ++i) ga[i] += 2.0 * lambda_A * a[i];
  g.loss += lambda_A * op.tensor().squared_norm();
  return g;
}

}  // namespace detail

/// Analytic gradient for a diagonal-mode operator (P = pI, Q = qI).
inline GradientRecord gradients(const BilinearOperator& op, const EmbeddingMatrix& e,
                                std::span<const AnalogyInstance> batch, double lambda_A) {
  if (op.mode() != ConstraintMode::diagonal)
    throw UnsupportedModeError("gradients: operator must be in diagonal mode");
  return detail::accumulate_gradients(op, e, batch, lambda_A);
}

/// Analytic gradient for a general-mode operator with dense P and Q.
inline GradientRecord full_gradients(const BilinearOperator& op, const EmbeddingMatrix& e,
                                     std::span<const AnalogyInstance> batch, double lambda_A) {
  if (op.mode() != ConstraintMode::general)
    throw UnsupportedModeError("full_gradients: operator must be in general mode");
  return detail::accumulate_gradients(op, e, batch, lambda_A);
}

/// One AdaGrad update: G += g^2; theta -= lr * g / (sqrt(G) + eps).
inline void adagrad_step(std::span<double> params, std::span<const double> grads,
                         std::span<double> accumulators, double learning_rate, double epsilon) {
  if (params.size() != grads.size() || params.size() != accumulators.size())
    throw DimensionError("adagrad_step: parameter, gradient and accumulator sizes differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    accumulators[i] += g * g;
    params[i] -= learning_rate * g / (std::sqrt(accumulators[i]) + epsilon);
  }
}

struct TrainingRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double frob_A = 0.0;
  double p = 0.0;
  double q = 0.0;
  std::optional<double> sat_acc;
  std::optional<double> maxdiff_acc;
  std::optional<double> seconds;

  friend bool operator==(const TrainingRecord&, const TrainingRecord&) = default;
};

struct TrainingTrace {
  std::vector<TrainingRecord> records;

  friend bool operator==(const TrainingTrace&, const TrainingTrace&) = default;
};

inline void write_trace_csv(std::ostream& out, const TrainingTrace& trace) {
  out << "epoch,loss,frob_A,p,q,sat_acc,maxdiff_acc,seconds\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  for (const auto& r : trace.records)
    out << r.epoch << ',' << num(r.loss) << ',' << num(r.frob_A) << ',' << num(r.p) << ','
        << num(r.q) << ',' << opt(r.sat_acc) << ',' << opt(r.maxdiff_acc) << ','
        << opt(r.seconds) << '\n';
}

struct BenchmarkScores {
  std::optional<double> sat;
  std::optional<double> maxdiff;
};

/// Called after every epoch with the current operator.
using EpochEvaluator = std::function<BenchmarkScores(const BilinearOperator&)>;

struct TrainResult {
  BilinearOperator op;
  BilinearOperator initial;
  TrainingTrace trace;
};

/// Uniform initialization of every parameter from cfg's init range.
inline BilinearOperator initialize_operator(std::size_t d, const TrainingConfig& cfg) {
  Rng rng = make_rng(cfg.seed, detail::kStreamInit);
  std::uniform_real_distribution<double> dist(cfg.init_lo, cfg.init_hi);
  Tensor3 a(d);
  for (double& v : a.values()) v = dist(rng);
  if (!cfg.fit_full_pq) {
    const double p = dist(rng);
    const double q = dist(rng);
    return BilinearOperator::diagonal(std::move(a), p, q);
  }
  const auto n = static_cast<Eigen::Index>(d);
  Matrix P(n, n), Q(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) P(i, j) = dist(rng);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) Q(i, j) = dist(rng);
  return BilinearOperator::general(std::move(a), std::move(P), std::move(Q));
}

/// Mini-batch AdaGrad over a fixed instance set. Each recorded loss is the
/// epoch objective (sum of instance losses plus one regularizer term per
/// batch) at the end-of-epoch parameters, divided by the instance count.
inline TrainResult train_on_instances(const EmbeddingMatrix& e, const InstanceSet& set,
                                      const TrainingConfig& cfg,
                                      const EpochEvaluator& evaluate = {}) {
  cfg.validate();
  if (!e.standardized() && !cfg.allow_unstandardized)
    throw InputError("training requires standardized embeddings (set allow_unstandardized to override)");

  BilinearOperator op = initialize_operator(e.dim(), cfg);
  TrainResult result{op, op, {}};
  const std::size_t n = set.instances.size();
  if (cfg.epochs == 0) return result;
  if (n == 0) throw InputError("no training instances");

  std::vector<double> acc_A(op.tensor().size(), 0.0);
  std::vector<double> acc_first(cfg.fit_full_pq ? 2 * e.dim() * e.dim() : 2, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<AnalogyInstance> batch;
  batch.reserve(cfg.batch_size);
  Rng shuffle_rng = make_rng(cfg.seed, detail::kStreamShuffle);
  const std::size_t n_batches = (n + cfg.batch_size - 1) / cfg.batch_size;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t b = 0; b < n_batches; ++b) {
      batch.clear();
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(n, lo + cfg.batch_size);
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(set.instances[order[i]]);

      auto g = detail::accumulate_gradients(op, e, batch, cfg.lambda_A);
      if (!std::isfinite(g.loss) || !g.dA.all_finite()) throw DivergenceError(epoch, b);

      adagrad_step(op.tensor().values(), g.dA.values(), acc_A, cfg.learning_rate,
                   cfg.adagrad_epsilon);
      if (op.mode() == ConstraintMode::diagonal) {
        std::array<double, 2> params{op.p(), op.q()};
        const std::array<double, 2> grads{g.dp, g.dq};
        adagrad_step(params, grads, acc_first, cfg.learning_rate, cfg.adagrad_epsilon);
        op.set_scalars(params[0], params[1]);
      } else {
        const std::size_t dd = e.dim() * e.dim();
        std::span<double> acc(acc_first);
        adagrad_step({op.P_matrix().data(), dd}, {g.dP.data(), dd}, acc.first(dd),
                     cfg.learning_rate, cfg.adagrad_epsilon);
        adagrad_step({op.Q_matrix().data(), dd}, {g.dQ.data(), dd}, acc.last(dd),
                     cfg.learning_rate, cfg.adagrad_epsilon);
      }
      if (!op.all_finite()) throw DivergenceError(epoch, b);
    }

    double data_loss = 0.0;
    for (const auto& inst : set.instances) data_loss += instance_loss(op, e, inst);
    const double loss =
        (data_loss + static_cast<double>(n_batches) * cfg.lambda_A * op.tensor().squared_norm()) /
        static_cast<double>(n);
    if (!std::isfinite(loss)) throw DivergenceError(epoch, n_batches);

    TrainingRecord rec;
    rec.epoch = epoch;
    rec.loss = loss;
    rec.frob_A = frobenius_norm_A(op);
    rec.p = op.p();
    rec.q = op.q();
    if (evaluate) {
      auto scores = evaluate(op);
      rec.sat_acc = scores.sat;
      rec.maxdiff_acc = scores.maxdiff;
    }
    if (cfg.record_wall_clock)
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.trace.records.push_back(rec);
  }
  result.op = std::move(op);
  return result;
}

/// build_instances followed by train_on_instances.
inline TrainResult train(const EmbeddingMatrix& e, std::span<const RelationGroup> groups,
                         const TrainingConfig& cfg, const EpochEvaluator& evaluate = {}) {
  if (!e.standardized() && !cfg.allow_unstandardized)
    throw InputError("training requires standardized embeddings (set allow_unstandardized to override)");
  auto set = build_instances(groups, e, cfg);
  return train_on_instances(e, set, cfg, evaluate);
}

}  // namespace relcomp
