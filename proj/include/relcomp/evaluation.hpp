#pragma once

// Scoring of relation operators on SAT-style multiple choice, SemEval-style
// MaxDiff questions and held-out relation classification.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "relcomp/common.hpp"
#include "relcomp/embedding_store.hpp"
#include "relcomp/error.hpp"
#include "relcomp/relation_compose.hpp"
#include "relcomp/training.hpp"

namespace relcomp {

struct SatQuestion {
  std::string id;
  WordPair stem;
  std::array<WordPair, 5> candidates;
  std::size_t answer = 0;
};

struct MaxDiffQuestion {
  std::array<WordPair, 4> choices;
  std::size_t most = 0;
  std::size_t least = 1;
};

struct SemEvalRelation {
  std::string relation_id;
  std::vector<WordPair> prototypes;
  std::vector<WordPair> members;
  std::vector<MaxDiffQuestion> questions;
};

enum class OovPolicy { skip, count_wrong };

inline OovPolicy parse_oov_policy(std::string_view s) {
  if (s == "skip") return OovPolicy::skip;
  if (s == "count-wrong") return OovPolicy::count_wrong;
  throw InputError("unknown OOV policy '" + std::string(s) + "' (expected skip or count-wrong)");
}

inline const char* to_string(OovPolicy p) {
  return p == OovPolicy::skip ? "skip" : "count-wrong";
}

// ---------------------------------------------------------------------------
// Input formats

namespace detail {

inline WordPair pair_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw InputError("word pair must be a 2-element array");
  return {j[0].get<std::string>(), j[1].get<std::string>()};
}

inline std::size_t index_from_json(const nlohmann::json& j, std::size_t bound, const char* what) {
  if (!j.is_number_integer()) throw InputError(std::string(what) + " must be an integer");
  const auto v = j.get<std::int64_t>();
  if (v < 0 || static_cast<std::uint64_t>(v) >= bound)
    throw InputError(std::string(what) + " out of range: " + std::to_string(v));
  return static_cast<std::size_t>(v);
}

inline SatQuestion sat_from_json(const nlohmann::json& j, std::size_t line_no) {
  SatQuestion q;
  q.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
                          : "q" + std::to_string(line_no);
  q.stem = pair_from_json(j.at("stem"));
  const auto& c = j.at("candidates");
  if (!c.is_array() || c.size() != 5) throw InputError("SAT question needs exactly 5 candidates");
  for (std::size_t i = 0; i < 5; ++i) q.candidates[i] = pair_from_json(c[i]);
  q.answer = index_from_json(j.at("answer"), 5, "answer");
  return q;
}

inline SemEvalRelation semeval_from_json(const nlohmann::json& j) {
  SemEvalRelation r;
  r.relation_id = j.at("relation").get<std::string>();
  for (const auto& p : j.at("prototypes")) r.prototypes.push_back(pair_from_json(p));
  if (r.prototypes.empty()) throw InputError("relation '" + r.relation_id + "' has no prototypes");
  if (j.contains("members"))
    for (const auto& p : j["members"]) r.members.push_back(pair_from_json(p));
  if (j.contains("questions")) {
    for (const auto& qj : j["questions"]) {
      MaxDiffQuestion q;
      const auto& c = qj.at("choices");
      if (!c.is_array() || c.size() != 4) throw InputError("MaxDiff question needs exactly 4 choices");
      for (std::size_t i = 0; i < 4; ++i) q.choices[i] = pair_from_json(c[i]);
      for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a + 1; b < 4; ++b)
          if (q.choices[a] == q.choices[b]) throw InputError("MaxDiff choices must be distinct");
      q.most = index_from_json(qj.at("most"), 4, "most");
      q.least = index_from_json(qj.at("least"), 4, "least");
      if (q.most == q.least) throw InputError("MaxDiff gold most and least must differ");
      r.questions.push_back(std::move(q));
    }
  }
  return r;
}

}  // namespace detail

/// One JSON object per line: {id, stem:[a,b], candidates:[[c,d] x5], answer}.
inline std::vector<SatQuestion> parse_sat_questions(std::istream& in,
                                                    const std::string& source = "<stream>") {
  std::vector<SatQuestion> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(detail::sat_from_json(nlohmann::json::parse(line), line_no));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const InputError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return out;
}

inline std::vector<SatQuestion> load_sat_questions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_sat_questions(in, path.string());
}

/// A JSON array of relations, a single relation object, or JSONL.
inline std::vector<SemEvalRelation> parse_semeval(std::istream& in,
                                                  const std::string& source = "<stream>") {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<SemEvalRelation> out;
  try {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (!j.is_discarded()) {
      if (j.is_array())
        for (const auto& r : j) out.push_back(detail::semeval_from_json(r));
      else
        out.push_back(detail::semeval_from_json(j));
      return out;
    }
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      std::string_view line(text.data() + pos, end - pos);
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
        auto rj = nlohmann::json::parse(line, nullptr, false);
        if (rj.is_discarded()) throw ParseError(source, line_no, "invalid JSON");
        out.push_back(detail::semeval_from_json(rj));
      }
      pos = end + 1;
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(source + ": " + e.what());
  }
  return out;
}

inline std::vector<SemEvalRelation> load_semeval(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_semeval(in, path.string());
}

// ---------------------------------------------------------------------------
// Reports

struct EvalItem {
  std::string id;
  bool skipped = false;
  /// Chosen and gold indices; MaxDiff records {most, least}.
  std::vector<std::size_t> chosen;
  std::vector<std::size_t> gold;
  std::vector<double> scores;
  bool degenerate = false;
};

/// score = correct / decisions. attempted + skipped = total (questions).
struct EvalReport {
  std::string metric;
  double score = 0.0;
  std::size_t correct = 0;
  std::size_t decisions = 0;
  std::size_t attempted = 0;
  std::size_t skipped = 0;
  std::size_t oov = 0;
  std::size_t total = 0;
  std::vector<EvalItem> items;
  std::vector<std::string> warnings;

  void finish() {
    score = decisions == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(decisions);
  }
};

inline nlohmann::json to_json(const EvalReport& r, bool include_items = true) {
  nlohmann::json j{{"metric", r.metric},       {"score", r.score},     {"correct", r.correct},
                   {"decisions", r.decisions}, {"attempted", r.attempted},
                   {"skipped", r.skipped},     {"oov", r.oov},         {"total", r.total},
                   {"warnings", r.warnings}};
  if (include_items) {
    auto items = nlohmann::json::array();
    for (const auto& it : r.items)
      items.push_back({{"id", it.id},
                       {"skipped", it.skipped},
                       {"chosen", it.chosen},
                       {"gold", it.gold},
                       {"scores", it.scores},
                       {"degenerate", it.degenerate}});
    j["items"] = std::move(items);
  }
  return j;
}

inline void write_tsv_header(std::ostream& out) {
  out << "metric\tscore\tcorrect\tattempted\tskipped\ttotal\n";
}

inline void write_tsv_row(std::ostream& out, const EvalReport& r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", r.score);
  out << r.metric << '\t' << buf << '\t' << r.correct << '\t' << r.attempted << '\t' << r.skipped
      << '\t' << r.total << '\n';
}

// ---------------------------------------------------------------------------
// Scoring

namespace detail {

inline std::optional<Vector> relation_vector(const BilinearOperator& op, const EmbeddingMatrix& e,
                                             const WordPair& p) {
  auto h = e.index_of(p.head);
  auto t = e.index_of(p.tail);
  if (!h || !t) return std::nullopt;
  return compose(op, e.row(*h), e.row(*t));
}

/// Lowest index among maxima.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace detail

inline EvalReport eval_sat(const BilinearOperator& op, const EmbeddingMatrix& e,
                           std::span<const SatQuestion> questions,
                           OovPolicy policy = OovPolicy::skip) {
  detail::check_operator_dim(op, e);
  EvalReport rep;
  rep.metric = "sat_accuracy";
  rep.total = questions.size();
  for (const auto& q : questions) {
    EvalItem item{q.id, false, {}, {q.answer}, {}, false};
    auto stem = detail::relation_vector(op, e, q.stem);
    std::vector<Vector> cands;
    bool oov = !stem;
    for (const auto& c : q.candidates) {
      auto v = detail::relation_vector(op, e, c);
      if (!v) {
        oov = true;
        break;
      }
      cands.push_back(std::move(*v));
    }
    if (oov) {
      ++rep.oov;
      if (policy == OovPolicy::skip) {
        item.skipped = true;
        ++rep.skipped;
      } else {
        ++rep.attempted;
        ++rep.decisions;
      }
      rep.items.push_back(std::move(item));
      continue;
    }
    for (const auto& c : cands) {
      auto s = cosine(*stem, c);
      item.scores.push_back(s.value);
      item.degenerate = item.degenerate || s.degenerate;
    }
    const std::size_t chosen = detail::argmax(item.scores);
    item.chosen = {chosen};
    ++rep.attempted;
    ++rep.decisions;
    if (chosen == q.answer) ++rep.correct;
    rep.items.push_back(std::move(item));
  }
  rep.finish();
  return rep;
}

struct PairScore {
  double value = 0.0;
  bool degenerate = false;
  std::size_t prototypes_used = 0;
  std::size_t prototypes_dropped = 0;
};

/// Mean relational similarity between `pair` and the relation's resolvable
/// prototypes.
inline PairScore semeval_pair_score(const BilinearOperator& op, const EmbeddingMatrix& e,
                                    const SemEvalRelation& rel, const WordPair& pair) {
  detail::check_operator_dim(op, e);
  auto r = detail::relation_vector(op, e, pair);
  if (!r) throw MissingWordError(e.contains(pair.head) ? pair.tail : pair.head);
  PairScore out;
  double sum = 0.0;
  for (const auto& proto : rel.prototypes) {
    auto v = detail::relation_vector(op, e, proto);
    if (!v) {
      ++out.prototypes_dropped;
      continue;
    }
    auto s = cosine(*r, *v);
    sum += s.value;
    out.degenerate = out.degenerate || s.degenerate;
    ++out.prototypes_used;
  }
  if (out.prototypes_used == 0)
    throw InputError("relation '" + rel.relation_id + "' has no resolvable prototypes");
  out.value = sum / static_cast<double>(out.prototypes_used);
  return out;
}

/// most = argmax, least = argmin over the other three; lowest index on ties.
inline std::array<std::size_t, 2> maxdiff_decisions(std::span<const double> scores) {
  const std::size_t most = detail::argmax(scores);
  std::size_t least = most == 0 ? 1 : 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (i != most && scores[i] < scores[least]) least = i;
  return {most, least};
}

inline EvalReport eval_maxdiff(const BilinearOperator& op, const EmbeddingMatrix& e,
                               std::span<const SemEvalRelation> relations,
                               OovPolicy policy = OovPolicy::skip) {
  detail::check_operator_dim(op, e);
  EvalReport rep;
  rep.metric = "maxdiff_accuracy";
  for (const auto& rel : relations) {
    std::size_t dropped = 0;
    for (const auto& p : rel.prototypes)
      if (!e.contains(p.head) || !e.contains(p.tail)) ++dropped;
    const bool no_prototypes = dropped == rel.prototypes.size();
    if (dropped > 0)
      rep.warnings.push_back("relation '" + rel.relation_id + "': " + std::to_string(dropped) +
                             " unresolvable prototype(s) dropped");
    for (std::size_t qi = 0; qi < rel.questions.size(); ++qi) {
      const auto& q = rel.questions[qi];
      ++rep.total;
      EvalItem item{rel.relation_id + "#" + std::to_string(qi), false, {}, {q.most, q.least}, {},
                    false};
      bool oov = no_prototypes;
      for (const auto& c : q.choices)
        if (!e.contains(c.head) || !e.contains(c.tail)) oov = true;
      if (oov) {
        ++rep.oov;
        if (policy == OovPolicy::skip) {
          item.skipped = true;
          ++rep.skipped;
        } else {
          ++rep.attempted;
          rep.decisions += 2;
        }
        rep.items.push_back(std::move(item));
        continue;
      }
      for (const auto& c : q.choices) {
        auto s = semeval_pair_score(op, e, rel, c);
        item.scores.push_back(s.value);
        item.degenerate = item.degenerate || s.degenerate;
      }
      auto [most, least] = maxdiff_decisions(item.scores);
      item.chosen = {most, least};
      ++rep.attempted;
      rep.decisions += 2;
      if (most == q.most) ++rep.correct;
      if (least == q.least) ++rep.correct;
      rep.items.push_back(std::move(item));
    }
  }
  rep.finish();
  return rep;
}

/// k-fold held-out relation classification. Each held-out pair is assigned to
/// the group whose training pairs in the other folds have the highest mean
/// cosine with it.
inline EvalReport eval_bats_holdout(const BilinearOperator& op, const EmbeddingMatrix& e,
                                    std::span<const RelationGroup> groups, std::size_t k,
                                    std::uint64_t seed) {
  detail::check_operator_dim(op, e);
  if (k < 2) throw InputError("eval_bats_holdout needs k >= 2 folds");
  if (groups.size() < 2) throw InputError("eval_bats_holdout needs at least 2 groups");
  EvalReport rep;
  rep.metric = "bats_holdout_accuracy";

  struct Eligible {
    std::size_t group;
    std::vector<Vector> unit;   // unit relation vectors (zero when degenerate)
    std::vector<bool> degenerate;
    std::vector<std::size_t> fold;
    std::vector<std::size_t> pair_index;
  };
  std::vector<Eligible> eligible;
  Rng rng = make_rng(seed, 21);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    Eligible el{g, {}, {}, {}, {}};
    for (std::size_t i = 0; i < groups[g].pairs.size(); ++i) {
      ++rep.total;
      auto v = detail::relation_vector(op, e, groups[g].pairs[i]);
      if (!v) {
        ++rep.oov;
        ++rep.skipped;
        continue;
      }
      const double n = v->norm();
      el.degenerate.push_back(n == 0.0);
      el.unit.push_back(n == 0.0 ? Vector::Zero(v->size()).eval() : Vector(*v / n));
      el.pair_index.push_back(i);
    }
    if (el.unit.size() < k) {
      rep.warnings.push_back("group '" + groups[g].relation_id + "' has " +
                             std::to_string(el.unit.size()) + " resolvable pairs, fewer than " +
                             std::to_string(k) + " folds; skipped");
      rep.skipped += el.unit.size();
      continue;
    }
    std::vector<std::size_t> perm(el.unit.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    el.fold.assign(el.unit.size(), 0);
    for (std::size_t pos = 0; pos < perm.size(); ++pos) el.fold[perm[pos]] = pos % k;
    eligible.push_back(std::move(el));
  }
  if (eligible.size() < 2)
    throw InputError("eval_bats_holdout: fewer than 2 groups have enough pairs for " +
                     std::to_string(k) + " folds");

  const auto d = static_cast<Eigen::Index>(e.dim());
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<Vector> centroid(eligible.size(), Vector::Zero(d));
    for (std::size_t c = 0; c < eligible.size(); ++c) {
      std::size_t count = 0;
      for (std::size_t i = 0; i < eligible[c].unit.size(); ++i) {
        if (eligible[c].fold[i] == f) continue;
        centroid[c] += eligible[c].unit[i];
        ++count;
      }
      centroid[c] /= static_cast<double>(count);
    }
    for (std::size_t c = 0; c < eligible.size(); ++c) {
      const auto& el = eligible[c];
      for (std::size_t i = 0; i < el.unit.size(); ++i) {
        if (el.fold[i] != f) continue;
        const auto& pair = groups[el.group].pairs[el.pair_index[i]];
        EvalItem item{groups[el.group].relation_id + ":" + pair.head + ":" + pair.tail, false, {},
                      {el.group}, {}, static_cast<bool>(el.degenerate[i])};
        for (const auto& cen : centroid) item.scores.push_back(el.unit[i].dot(cen));
        const std::size_t chosen = detail::argmax(item.scores);
        item.chosen = {eligible[chosen].group};
        ++rep.attempted;
        ++rep.decisions;
        if (chosen == c) ++rep.correct;
        rep.items.push_back(std::move(item));
      }
    }
  }
  rep.finish();
  return rep;
}

}  // namespace relcomp
