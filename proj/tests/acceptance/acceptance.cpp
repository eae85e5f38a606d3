// Acceptance runner: one [PASS]/[FAIL] line per criterion, nonzero exit if any fails.
// usage: acceptance <relcomp binary> <work dir>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcomp/evaluation.hpp"
#include "relcomp/theorem_lab.hpp"
#include "relcomp/training.hpp"
#include "support/gradient_check.hpp"
#include "support/oracles.hpp"

using namespace relcomp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_cli;
fs::path g_work;
const fs::path kFixtures = RELCOMP_FIXTURES;
const fs::path kAcceptance = RELCOMP_ACCEPTANCE_DIR;
int g_failed = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failed;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

int run(const std::string& args, const std::string& log) {
  const std::string cmd = "'" + g_cli + "' " + args + " >'" + (g_work / log).string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_embeddings(const fs::path& p, const EmbeddingMatrix& e) {
  std::ofstream out(p);
  char buf[64];
  for (std::size_t i = 0; i < e.size(); ++i) {
    out << e.vocab()[i];
    for (Eigen::Index k = 0; k < e.vectors().cols(); ++k) {
      std::snprintf(buf, sizeof buf, " %.17g", e.vectors()(static_cast<Eigen::Index>(i), k));
      out << buf;
    }
    out << '\n';
  }
}

void write_groups(const fs::path& p, const std::vector<RelationGroup>& groups) {
  std::ofstream out(p);
  for (const auto& g : groups)
    for (const auto& pair : g.pairs)
      out << json{{"relation", g.relation_id}, {"head", pair.head}, {"tail", pair.tail}}.dump() << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const json* find_check(const json& manifest, const std::string& name) {
  for (const auto& c : manifest["checks"])
    if (c["check"] == name) return &c;
  return nullptr;
}

// ---------------------------------------------------------------------------

json g_manifest;
int g_verify_exit = -1;

void verify_run() {
  const auto t0 = std::chrono::steady_clock::now();
  g_verify_exit = run("verify --config '" + (kAcceptance / "verify.cfg").string() + "' --out '" +
                          (g_work / "verify").string() + "'",
                      "verify.log");
  std::printf("       verify run: exit %d, %.1f s\n", g_verify_exit, seconds_since(t0));
  if (fs::exists(g_work / "verify" / "manifest.json"))
    g_manifest = json::parse(slurp(g_work / "verify" / "manifest.json"));
}

void criterion_theorem1() {
  const json* c = g_manifest.is_null() ? nullptr : find_check(g_manifest, "theorem1_independence_normal");
  if (!c) return report(1, "theorem1 independence", false, "no manifest entry");
  const bool ok = (*c)["mutually_consistent"].get<bool>() && (*c)["all_near_zero"].get<bool>() &&
                  !(*c)["low_power"].get<bool>() && (*c)["draws"].size() == 20 &&
                  (*c)["sampler"]["d"] == 10 && (*c)["n"] == 50000;
  report(1, "theorem1 independence", ok,
         fmt("20 draws, max pairwise z %.3f, max |z| vs 0 %.3f (limit 3)",
             (*c)["max_pairwise_z"].get<double>(), (*c)["max_abs_z"].get<double>()));
}

void criterion_closed_form() {
  if (g_manifest.is_null()) return report(2, "closed form", false, "no manifest");
  std::size_t count = 0, passed = 0;
  double worst = 0.0;
  bool pairdiff20 = false;
  for (const auto& c : g_manifest["checks"]) {
    const auto name = c["check"].get<std::string>();
    if (name.rfind("closed_form_positive_loss_", 0) != 0) continue;
    ++count;
    if (c["pass"].get<bool>() && c["n"] == 100000 && c["sampler"]["d"] == 5) ++passed;
    worst = std::max(worst, std::abs(c["z"].get<double>()));
    if (name == "closed_form_positive_loss_pairdiff") pairdiff20 = c["analytic"].get<double>() == 20.0;
  }
  report(2, "closed form", count == 6 && passed == 6 && pairdiff20,
         fmt("%.0f/%.0f within 5 SE, worst |z| %.3f", static_cast<double>(passed),
             static_cast<double>(count), worst));
}

void criterion_gradients() {
  auto r = relcomp::test_support::finite_difference_check(100, 5, 20180101);
  report(3, "gradient check", r.max_rel_error <= 1e-4,
         fmt("100 trials, %.0f coordinates, max rel error %.3g (limit 1e-4)",
             static_cast<double>(r.coordinates), r.max_rel_error));
}

void criterion_convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  auto data = synth_offset_relations(60, 10, 8, 0.1, 7);
  auto e = standardize(data.embeddings).embeddings;
  TrainingConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 0.01;
  cfg.lambda_A = 0.01;
  cfg.seed = 107;
  auto res = train(e, data.groups, cfg);
  const double secs = seconds_since(t0);

  const auto& recs = res.trace.records;
  const double a0 = frobenius_norm_A(res.initial);
  const double a1 = recs.back().frob_A;
  const double p = recs.back().p, q = recs.back().q;
  const double pq = std::abs(p + q) / std::max(std::abs(p), std::abs(q));
  bool windows_ok = true;
  double prev = INFINITY;
  for (std::size_t w = 0; w + 10 <= recs.size(); w += 10) {
    double mean = 0.0;
    for (std::size_t i = w; i < w + 10; ++i) mean += recs[i].loss / 10.0;
    if (mean > prev) windows_ok = false;
    prev = mean;
  }
  const bool a_ok = a1 <= 0.1 * a0;
  const bool pq_ok = pq <= 0.2;
  report(4, "training convergence", a_ok && pq_ok && windows_ok && secs < 300.0,
         fmt("|A| %.3f -> %.3f (ratio %.3f, limit 0.1); ", a0, a1, a1 / a0) +
             fmt("|p+q|/max %.3f (limit 0.2, p=%.3f q=%.3f); ", pq, p, q) +
             std::string("window losses nonincreasing: ") + (windows_ok ? "yes" : "no") +
             fmt("; %.1f s", secs));
}

void criterion_pairdiff() {
  Rng rng = make_rng(5);
  std::normal_distribution<double> normal;
  bool exact = true;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t d = 1 + static_cast<std::size_t>(i % 50);
    Vector h(d), t(d);
    for (auto& v : h) v = normal(rng);
    for (auto& v : t) v = normal(rng);
    auto op = BilinearOperator::general(Tensor3(d), Matrix::Identity(d, d), -Matrix::Identity(d, d));
    Vector r = compose(op, h, t);
    if (!(r == pairdiff(h, t))) exact = false;
  }

  auto e = load_embeddings(kFixtures / "embeddings.txt", EmbeddingFormat::text_no_header);
  auto sat = load_sat_questions(kFixtures / "sat.jsonl");
  auto rels = load_semeval(kFixtures / "semeval.json");
  auto op1 = BilinearOperator::pairdiff(e.dim());
  auto sat1 = eval_sat(op1, e, sat);
  auto md1 = eval_maxdiff(op1, e, rels);
  // same strict order between every pair of scores, ties resolved by index
  auto same_ranking = [](const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a.size(); ++j) {
        const double da = a[i] - a[j], db = b[i] - b[j];
        if (std::abs(da) <= 1e-12) {
          if (std::abs(db) > 1e-12) return false;
        } else if ((da > 0) != (db > 0)) {
          return false;
        }
      }
    return true;
  };
  bool rankings = true;
  for (double c : {1e-3, 0.25, 2.0, 10.0, 1e4}) {
    auto op = BilinearOperator::general(Tensor3(e.dim()), c * Matrix::Identity(e.dim(), e.dim()),
                                        -c * Matrix::Identity(e.dim(), e.dim()));
    auto s = eval_sat(op, e, sat);
    auto m = eval_maxdiff(op, e, rels);
    for (std::size_t i = 0; i < sat.size(); ++i)
      rankings &= s.items[i].chosen == sat1.items[i].chosen &&
                  same_ranking(s.items[i].scores, sat1.items[i].scores);
    for (std::size_t i = 0; i < m.items.size(); ++i)
      rankings &= m.items[i].chosen == md1.items[i].chosen &&
                  same_ranking(m.items[i].scores, md1.items[i].scores);
    rankings &= s.score == sat1.score && m.score == md1.score;
  }
  report(5, "pairdiff equivalence", exact && rankings,
         std::string("exact on 1000 vectors: ") + (exact ? "yes" : "no") +
             "; SAT/MaxDiff rankings identical for c in {1e-3, 0.25, 2, 10, 1e4}: " +
             (rankings ? "yes" : "no"));
}

void criterion_correlation() {
  auto small = synth_embeddings(10000, 50, Distribution::standard_normal, 20180101);
  const double mao = correlation_report(small).mean_abs_offdiag;
  const double bound = 3.0 / std::sqrt(10000.0);
  auto big = synth_embeddings(100000, 50, Distribution::standard_normal, 20180102);
  const auto& x = big.vectors();
  double worst_mean = 0.0, worst_var = 0.0;
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const double mean = x.col(k).mean();
    const double var = (x.col(k).array() - mean).square().sum() / static_cast<double>(x.rows());
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_var = std::max(worst_var, std::abs(var - 1.0));
  }
  report(6, "correlation diagnostics", mao <= bound && worst_mean <= 0.02 && worst_var <= 0.05,
         fmt("mean |r| %.5f (limit %.5f); max |mean| %.4f, max |var-1| %.4f at m=1e5", mao, bound,
             worst_mean, worst_var));
}

void criterion_determinism() {
  const auto inputs = g_work / "inputs";
  fs::create_directories(inputs);
  write_embeddings(inputs / "iid.txt", synth_embeddings(500, 8, Distribution::standard_normal, 3));
  auto data = synth_offset_relations(20, 6, 4, 0.1, 9);
  write_embeddings(inputs / "rel.txt", data.embeddings);
  write_groups(inputs / "groups.jsonl", data.groups);
  const auto fx = [](const char* f) { return "'" + (kFixtures / f).string() + "'"; };
  const auto in = [&](const char* f) { return "'" + (inputs / f).string() + "'"; };

  std::vector<std::pair<std::string, std::string>> commands{
      {"correlate", "correlate --embeddings " + in("iid.txt") + " --standardize --include-matrix"},
      {"train", "train --embeddings " + in("rel.txt") + " --groups " + in("groups.jsonl") +
                    " --epochs 5 --seed 4"},
      {"eval_fixture", "eval --pairdiff --embeddings " + fx("embeddings.txt") + " --sat " +
                           fx("sat.jsonl") + " --semeval " + fx("semeval.json")},
      {"compose", "compose --pairdiff --embeddings " + fx("embeddings.txt") +
                      " --head s0_h --tail s0_t"},
      {"verify", "verify --seed 3 --theorem-d 4 --theorem-n 5000 --operators 4 --closed-form-d 3 "
                 "--closed-form-n 5000 --random-pq 2 --zero-loss-n 5000"}};

  // identical argument lists both times, so the first run's outputs are moved aside
  bool ok = true;
  std::size_t files = 0;
  std::string bad;
  const auto live = g_work / "determinism" / "run";
  const auto first = g_work / "determinism" / "first";
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& [name, args] : commands) {
      const int code = run(args + " --out '" + (live / name).string() + "'", "det_" + name + ".log");
      if (code != 0) {
        ok = false;
        bad += name + " exit " + std::to_string(code) + "; ";
      }
    }
    // evaluation with the operator trained in this pass
    if (run("eval --operator '" + (live / "train" / "operator.json").string() + "' --embeddings " +
                in("rel.txt") + " --groups " + in("groups.jsonl") + " --folds 4 --seed 2 --out '" +
                (live / "eval_trained").string() + "'",
            "det_eval_trained.log") != 0) {
      ok = false;
      bad += "eval_trained failed; ";
    }
    if (pass == 0) fs::rename(live, first);
  }
  for (const auto& entry : fs::recursive_directory_iterator(first)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), first);
    ++files;
    if (!fs::exists(live / rel) || slurp(entry.path()) != slurp(live / rel)) {
      ok = false;
      bad += rel.string() + " differs; ";
    }
  }
  ok &= g_verify_exit == 0;
  report(7, "determinism", ok,
         fmt("%.0f output files from 6 commands compared byte for byte", static_cast<double>(files)) +
             "; acceptance verify exit " + std::to_string(g_verify_exit) +
             (bad.empty() ? "" : "; " + bad));
}

void criterion_fixtures() {
  auto e = load_embeddings(kFixtures / "embeddings.txt", EmbeddingFormat::text_no_header);
  auto sat = load_sat_questions(kFixtures / "sat.jsonl");
  auto rels = load_semeval(kFixtures / "semeval.json");
  auto expected = json::parse(slurp(kFixtures / "expected.json"));

  const auto out = g_work / "fixtures";
  const int code = run("eval --pairdiff --embeddings '" + (kFixtures / "embeddings.txt").string() +
                           "' --sat '" + (kFixtures / "sat.jsonl").string() + "' --semeval '" +
                           (kFixtures / "semeval.json").string() + "' --out '" + out.string() + "'",
                       "fixtures.log");
  if (code != 0) return report(8, "evaluation fixtures", false, "eval exit " + std::to_string(code));
  auto sat_rep = json::parse(slurp(out / "sat_report.json"));
  auto md_rep = json::parse(slurp(out / "maxdiff_report.json"));

  const double sat_expected = expected["sat_pairdiff_accuracy_num"].get<double>() /
                              expected["sat_pairdiff_accuracy_den"].get<double>();
  bool ok = sat_rep["score"].get<double>() == sat_expected &&
            md_rep["correct"] == expected["maxdiff_pairdiff_correct"] &&
            md_rep["decisions"] == expected["maxdiff_pairdiff_decisions"];
  std::size_t oracle_agree = 0, oracle_total = 0;
  for (std::size_t i = 0; i < sat.size(); ++i) {
    ++oracle_total;
    if (sat_rep["items"][i]["chosen"][0].get<std::size_t>() == relcomp::test_support::sat_oracle_choice(e, sat[i]))
      ++oracle_agree;
  }
  std::size_t item = 0;
  for (const auto& rel : rels)
    for (const auto& q : rel.questions) {
      ++oracle_total;
      auto o = relcomp::test_support::maxdiff_oracle_choice(e, rel, q);
      const auto& chosen = md_rep["items"][item++]["chosen"];
      if (chosen[0].get<std::size_t>() == o[0] && chosen[1].get<std::size_t>() == o[1]) ++oracle_agree;
    }
  ok &= oracle_agree == oracle_total;
  report(8, "evaluation fixtures", ok,
         fmt("SAT %.17g (expected %.17g); MaxDiff %.0f/%.0f; ", sat_rep["score"].get<double>(),
             sat_expected, md_rep["correct"].get<double>(), md_rep["decisions"].get<double>()) +
             fmt("oracle agreement %.0f/%.0f", static_cast<double>(oracle_agree),
                 static_cast<double>(oracle_total)));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: acceptance <relcomp binary> <work dir>\n");
    return 2;
  }
  g_cli = argv[1];
  g_work = argv[2];
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  try {
    verify_run();
    criterion_theorem1();
    criterion_closed_form();
    criterion_gradients();
    criterion_convergence();
    criterion_pairdiff();
    criterion_correlation();
    criterion_determinism();
    criterion_fixtures();
  } catch (const std::exception& e) {
    std::printf("[FAIL] aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
