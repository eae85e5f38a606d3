// relcomp: command-line front end for correlation diagnostics, training,
// evaluation, Monte Carlo verification and one-off composition.
//
// Exit codes: 0 success, 2 input error, 3 numerical divergence,
// 4 verification failure.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relcomp/embedding_store.hpp"
#include "relcomp/error.hpp"
#include "relcomp/evaluation.hpp"
#include "relcomp/relation_compose.hpp"
#include "relcomp/theorem_lab.hpp"
#include "relcomp/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace relcomp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitVerify = 4;

/// Remembers every bound option so the effective parameters can be echoed.
class Echo {
 public:
  template <typename T>
  CLI::Option* option(CLI::App* app, const std::string& name, T& var, const std::string& desc) {
    fields_.emplace_back(name, [&var] { return json(var); });
    return app->add_option("--" + name, var, desc)->capture_default_str();
  }

  CLI::Option* flag(CLI::App* app, const std::string& name, bool& var, const std::string& desc) {
    fields_.emplace_back(name, [&var] { return json(var); });
    return app->add_flag("--" + name, var, desc);
  }

  json to_json() const {
    json j = json::object();
    for (const auto& [name, get] : fields_) j[name] = get();
    return j;
  }

 private:
  std::vector<std::pair<std::string, std::function<json()>>> fields_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path prepare_out_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory " + out);
  return dir;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw InputError(std::string(what) + " not found: " + path);
}

// ---------------------------------------------------------------------------
// Config files: flat key=value lines or one JSON object. Keys are long option
// names; entries are injected ahead of the command line, so flags win.

std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::map<std::string, std::string> kv;

  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    auto j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw InputError("config " + path + " is not a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (value.is_string())
        kv[key] = value.get<std::string>();
      else if (value.is_primitive() && !value.is_null())
        kv[key] = value.dump();
      else
        throw InputError("config " + path + ": value for '" + key + "' must be a scalar");
    }
    return kv;
  }

  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(lines, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path, line_no, "expected key=value");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(path, line_no, "empty key");
    kv[key] = value;
  }
  return kv;
}

/// Finds --config on the command line, falling back to RELCOMP_CONFIG.
std::optional<std::string> config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  if (const char* env = std::getenv("RELCOMP_CONFIG"); env && *env) return std::string(env);
  return std::nullopt;
}

/// argv with config entries placed right after the subcommand name.
std::vector<std::string> with_config(const std::vector<std::string>& args,
                                     const std::map<std::string, std::string>& kv,
                                     const std::vector<std::string>& subcommands) {
  std::size_t at = args.size();
  for (std::size_t i = 0; i < args.size(); ++i)
    if (std::find(subcommands.begin(), subcommands.end(), args[i]) != subcommands.end()) {
      at = i + 1;
      break;
    }
  std::vector<std::string> out(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(at));
  for (const auto& [key, value] : kv) {
    if (key == "config") continue;
    out.push_back("--" + key + "=" + value);
  }
  out.insert(out.end(), args.begin() + static_cast<std::ptrdiff_t>(at), args.end());
  return out;
}

// ---------------------------------------------------------------------------
// Commands

struct Common {
  std::size_t threads = 0;
  std::string config;
};

struct CorrelateArgs {
  std::string embeddings;
  std::string format = "text-no-header";
  std::size_t bins = 100;
  bool standardize = false;
  bool include_matrix = false;
  std::string out;
};

int cmd_correlate(const CorrelateArgs& a, const json& echo) {
  require_file(a.embeddings, "embeddings");
  auto dir = prepare_out_dir(a.out);
  write_json(dir / "config_echo.json", echo);
  auto e = load_embeddings(a.embeddings, parse_embedding_format(a.format));
  if (a.standardize) e = standardize(e).embeddings;
  auto rep = correlation_report(e, a.bins);
  write_json(dir / "correlation.json", to_json(rep, a.include_matrix));
  std::ofstream hist(dir / "histogram.csv", std::ios::binary);
  if (!hist) throw InputError("cannot write histogram.csv");
  write_histogram_csv(hist, rep);
  std::fprintf(stderr, "mean_abs_offdiag %.6g  sd_offdiag %.6g\n", rep.mean_abs_offdiag,
               rep.sd_offdiag);
  return kExitOk;
}

struct TrainArgs {
  std::string embeddings;
  std::string format = "text-no-header";
  std::string groups;
  std::string out;
  std::string standardize_over = "all";
  std::string negative_strategy = "nearest-in-pool";
  std::string sat;
  std::string semeval;
  TrainingConfig cfg;
};

EmbeddingMatrix standardize_for_training(const EmbeddingMatrix& e,
                                         std::span<const RelationGroup> groups,
                                         const std::string& over) {
  if (over == "all") return standardize(e).embeddings;
  if (over == "task") {
    auto rows = task_rows(e, groups);
    return standardize(e, rows).embeddings;
  }
  if (over == "none") return e;
  throw InputError("--standardize-over must be all, task or none");
}

int cmd_train(TrainArgs a, const json& echo) {
  require_file(a.embeddings, "embeddings");
  require_file(a.groups, "relation groups");
  if (!a.sat.empty()) require_file(a.sat, "SAT questions");
  if (!a.semeval.empty()) require_file(a.semeval, "SemEval relations");
  a.cfg.negative_strategy = parse_negative_strategy(a.negative_strategy);
  if (a.standardize_over == "none") a.cfg.allow_unstandardized = true;
  a.cfg.validate();
  auto dir = prepare_out_dir(a.out);
  write_json(dir / "config_echo.json", echo);

  auto raw = load_embeddings(a.embeddings, parse_embedding_format(a.format));
  auto groups = load_relation_groups(a.groups);
  auto e = standardize_for_training(raw, groups, a.standardize_over);

  std::vector<SatQuestion> sat;
  std::vector<SemEvalRelation> semeval;
  if (!a.sat.empty()) sat = load_sat_questions(a.sat);
  if (!a.semeval.empty()) semeval = load_semeval(a.semeval);
  EpochEvaluator evaluate;
  if (!sat.empty() || !semeval.empty()) {
    evaluate = [&](const BilinearOperator& op) {
      BenchmarkScores s;
      if (!sat.empty()) s.sat = eval_sat(op, e, sat).score;
      if (!semeval.empty()) s.maxdiff = eval_maxdiff(op, e, semeval).score;
      return s;
    };
  }

  auto set = build_instances(groups, e, a.cfg);
  for (const auto& w : set.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  auto result = train_on_instances(e, set, a.cfg, evaluate);

  save_operator(dir / "operator.json", result.op);
  save_operator(dir / "initial_operator.json", result.initial);
  std::ofstream trace(dir / "trace.csv", std::ios::binary);
  if (!trace) throw InputError("cannot write trace.csv");
  write_trace_csv(trace, result.trace);
  json summary{{"positives", set.positives},
               {"negatives", set.negatives},
               {"skipped_pairs", set.skipped_pairs},
               {"warnings", set.warnings},
               {"initial_frob_A", frobenius_norm_A(result.initial)},
               {"final_frob_A", frobenius_norm_A(result.op)},
               {"p", result.op.p()},
               {"q", result.op.q()}};
  if (!result.trace.records.empty()) summary["final_loss"] = result.trace.records.back().loss;
  write_json(dir / "train_summary.json", summary);
  return kExitOk;
}

struct OperatorChoice {
  std::string operator_path;
  bool pairdiff = false;
};

BilinearOperator resolve_operator(const OperatorChoice& c, std::size_t d) {
  if (c.pairdiff && !c.operator_path.empty())
    throw InputError("--operator and --pairdiff are mutually exclusive");
  if (c.pairdiff) return BilinearOperator::pairdiff(d);
  if (c.operator_path.empty()) throw InputError("one of --operator or --pairdiff is required");
  require_file(c.operator_path, "operator");
  return load_operator(c.operator_path);
}

struct EvalArgs {
  OperatorChoice op;
  std::string embeddings;
  std::string format = "text-no-header";
  bool standardize = false;
  std::string sat;
  std::string semeval;
  std::string groups;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::string oov = "skip";
  std::string out;
};

int cmd_eval(const EvalArgs& a, const json& echo) {
  require_file(a.embeddings, "embeddings");
  if (a.sat.empty() && a.semeval.empty() && a.groups.empty())
    throw InputError("eval needs at least one of --sat, --semeval, --groups");
  if (!a.sat.empty()) require_file(a.sat, "SAT questions");
  if (!a.semeval.empty()) require_file(a.semeval, "SemEval relations");
  if (!a.groups.empty()) require_file(a.groups, "relation groups");
  const auto policy = parse_oov_policy(a.oov);
  auto dir = prepare_out_dir(a.out);
  write_json(dir / "config_echo.json", echo);

  auto e = load_embeddings(a.embeddings, parse_embedding_format(a.format));
  if (a.standardize) e = standardize(e).embeddings;
  auto op = resolve_operator(a.op, e.dim());
  detail::check_operator_dim(op, e);

  std::vector<EvalReport> reports;
  if (!a.sat.empty()) {
    auto qs = load_sat_questions(a.sat);
    reports.push_back(eval_sat(op, e, qs, policy));
    write_json(dir / "sat_report.json", to_json(reports.back()));
  }
  if (!a.semeval.empty()) {
    auto rels = load_semeval(a.semeval);
    reports.push_back(eval_maxdiff(op, e, rels, policy));
    write_json(dir / "maxdiff_report.json", to_json(reports.back()));
  }
  if (!a.groups.empty()) {
    auto groups = load_relation_groups(a.groups);
    reports.push_back(eval_bats_holdout(op, e, groups, a.folds, a.seed));
    write_json(dir / "bats_report.json", to_json(reports.back()));
  }
  std::ostringstream tsv;
  write_tsv_header(tsv);
  for (const auto& r : reports) {
    write_tsv_row(tsv, r);
    for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  }
  write_text(dir / "summary.tsv", tsv.str());
  std::cout << tsv.str();
  return kExitOk;
}

struct VerifyArgs {
  VerifyConfig cfg;
  std::string out;
};

int cmd_verify(VerifyArgs a, std::size_t threads, const json& echo) {
  a.cfg.threads = threads;
  auto dir = prepare_out_dir(a.out);
  write_json(dir / "config_echo.json", echo);
  auto manifest = run_verification(a.cfg);
  write_json(dir / "manifest.json", to_json(manifest, a.cfg));
  for (const auto& c : manifest.checks) {
    std::fprintf(stderr, "%-44s %s\n", c.name.c_str(),
                 c.informational ? "info" : (c.pass ? "pass" : "FAIL"));
    for (const auto& w : c.warnings) std::fprintf(stderr, "  warning: %s\n", w.c_str());
  }
  return manifest.all_pass() ? kExitOk : kExitVerify;
}

struct ComposeArgs {
  OperatorChoice op;
  std::string embeddings;
  std::string format = "text-no-header";
  bool standardize = false;
  std::string head;
  std::string tail;
  std::string out;
};

int cmd_compose(const ComposeArgs& a, const json& echo) {
  require_file(a.embeddings, "embeddings");
  if (a.head.empty() || a.tail.empty()) throw InputError("compose needs --head and --tail");
  if (!a.out.empty()) write_json(prepare_out_dir(a.out) / "config_echo.json", echo);
  auto e = load_embeddings(a.embeddings, parse_embedding_format(a.format));
  if (a.standardize) e = standardize(e).embeddings;
  auto op = resolve_operator(a.op, e.dim());
  detail::check_operator_dim(op, e);
  Vector r = compose(op, e.lookup(a.head), e.lookup(a.tail));
  json j{{"head", a.head},
         {"tail", a.tail},
         {"d", r.size()},
         {"relation", std::vector<double>(r.data(), r.data() + r.size())}};
  const auto text = j.dump() + "\n";
  std::cout << text;
  if (!a.out.empty()) write_text(fs::path(a.out) / "relation.json", text);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relcomp: bilinear relation composition toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;
  app.add_option("--threads", common.threads, "worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--config", common.config, "key=value or JSON config; env RELCOMP_CONFIG");

  auto sub = [&](const char* name, const char* desc) {
    auto* s = app.add_subcommand(name, desc);
    s->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    return s;
  };

  Echo correlate_echo, train_echo, eval_echo, verify_echo, compose_echo;

  CorrelateArgs ca;
  auto* correlate = sub("correlate", "cross-dimensional Pearson correlation summary");
  correlate_echo.option(correlate, "embeddings", ca.embeddings, "embedding file")->required();
  correlate_echo.option(correlate, "format", ca.format, "text-no-header | text-with-header");
  correlate_echo.option(correlate, "bins", ca.bins, "histogram bins on [-1, 1]");
  correlate_echo.flag(correlate, "standardize", ca.standardize, "standardize columns first");
  correlate_echo.flag(correlate, "include-matrix", ca.include_matrix, "write the full matrix");
  correlate_echo.option(correlate, "out", ca.out, "output directory")->required();

  TrainArgs ta;
  auto* train_cmd = sub("train", "fit the operator with AdaGrad");
  train_echo.option(train_cmd, "embeddings", ta.embeddings, "embedding file")->required();
  train_echo.option(train_cmd, "format", ta.format, "text-no-header | text-with-header");
  train_echo.option(train_cmd, "groups", ta.groups, "relation group directory or JSONL")->required();
  train_echo.option(train_cmd, "out", ta.out, "output directory")->required();
  train_echo.option(train_cmd, "seed", ta.cfg.seed, "random seed");
  train_echo.option(train_cmd, "epochs", ta.cfg.epochs, "training epochs");
  train_echo.option(train_cmd, "learning-rate", ta.cfg.learning_rate, "AdaGrad learning rate");
  train_echo.option(train_cmd, "lambda", ta.cfg.lambda_A, "Frobenius penalty on A");
  train_echo.option(train_cmd, "negatives", ta.cfg.negatives_per_pair, "negatives per pair");
  train_echo.option(train_cmd, "negative-strategy", ta.negative_strategy,
                    "uniform | nearest-in-pool");
  train_echo.option(train_cmd, "candidate-pool", ta.cfg.candidate_pool,
                    "candidates drawn for nearest-in-pool");
  train_echo.option(train_cmd, "max-positives", ta.cfg.max_positives_per_group,
                    "positive pairing cap per group");
  train_echo.option(train_cmd, "batch-size", ta.cfg.batch_size, "mini-batch size");
  train_echo.option(train_cmd, "init-lo", ta.cfg.init_lo, "lower init bound");
  train_echo.option(train_cmd, "init-hi", ta.cfg.init_hi, "upper init bound");
  train_echo.option(train_cmd, "epsilon", ta.cfg.adagrad_epsilon, "AdaGrad epsilon");
  train_echo.flag(train_cmd, "full-pq", ta.cfg.fit_full_pq, "fit dense P and Q");
  train_echo.option(train_cmd, "standardize-over", ta.standardize_over, "all | task | none");
  train_echo.option(train_cmd, "sat", ta.sat, "SAT questions scored every epoch");
  train_echo.option(train_cmd, "semeval", ta.semeval, "MaxDiff relations scored every epoch");
  train_echo.flag(train_cmd, "record-wall-clock", ta.cfg.record_wall_clock,
                  "fill the trace seconds column");

  EvalArgs ea;
  auto* eval_cmd = sub("eval", "score an operator on analogy benchmarks");
  eval_echo.option(eval_cmd, "operator", ea.op.operator_path, "operator JSON");
  eval_echo.flag(eval_cmd, "pairdiff", ea.op.pairdiff, "use the fixed h - t operator");
  eval_echo.option(eval_cmd, "embeddings", ea.embeddings, "embedding file")->required();
  eval_echo.option(eval_cmd, "format", ea.format, "text-no-header | text-with-header");
  eval_echo.flag(eval_cmd, "standardize", ea.standardize, "standardize embeddings first");
  eval_echo.option(eval_cmd, "sat", ea.sat, "SAT-style JSONL");
  eval_echo.option(eval_cmd, "semeval", ea.semeval, "SemEval-style JSON");
  eval_echo.option(eval_cmd, "groups", ea.groups, "relation groups for held-out classification");
  eval_echo.option(eval_cmd, "folds", ea.folds, "folds for held-out classification");
  eval_echo.option(eval_cmd, "seed", ea.seed, "random seed");
  eval_echo.option(eval_cmd, "oov", ea.oov, "skip | count-wrong");
  eval_echo.option(eval_cmd, "out", ea.out, "output directory")->required();

  VerifyArgs va;
  auto* verify = sub("verify", "Monte Carlo verification manifest");
  verify_echo.option(verify, "seed", va.cfg.seed, "master seed");
  verify_echo.option(verify, "theorem-d", va.cfg.theorem_d, "dimension for the independence check");
  verify_echo.option(verify, "theorem-n", va.cfg.theorem_n, "samples per estimate");
  verify_echo.option(verify, "operators", va.cfg.n_operators, "random tensor draws");
  verify_echo.option(verify, "a-scale", va.cfg.a_scale, "tensor entries from U[-s, s]");
  verify_echo.option(verify, "closed-form-d", va.cfg.closed_form_d, "dimension for closed forms");
  verify_echo.option(verify, "closed-form-n", va.cfg.closed_form_n, "samples per closed form");
  verify_echo.option(verify, "random-pq", va.cfg.random_pq_draws, "random (P, Q) draws");
  verify_echo.option(verify, "zero-loss-n", va.cfg.zero_loss_n, "samples per zero-loss check");
  verify_echo.flag(verify, "strict", va.cfg.strict, "also require every estimate near zero");
  verify_echo.option(verify, "out", va.out, "output directory")->required();

  ComposeArgs co;
  auto* compose_cmd = sub("compose", "relation vector for one word pair");
  compose_echo.option(compose_cmd, "operator", co.op.operator_path, "operator JSON");
  compose_echo.flag(compose_cmd, "pairdiff", co.op.pairdiff, "use the fixed h - t operator");
  compose_echo.option(compose_cmd, "embeddings", co.embeddings, "embedding file")->required();
  compose_echo.option(compose_cmd, "format", co.format, "text-no-header | text-with-header");
  compose_echo.flag(compose_cmd, "standardize", co.standardize, "standardize embeddings first");
  compose_echo.option(compose_cmd, "head", co.head, "head word")->required();
  compose_echo.option(compose_cmd, "tail", co.tail, "tail word")->required();
  compose_echo.option(compose_cmd, "out", co.out, "optional directory for echo and output");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (auto path = config_path(args)) {
      auto kv = read_config(*path);
      args = with_config(args, kv, {"correlate", "train", "eval", "verify", "compose"});
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }

  auto with_threads = [&](json j) {
    j["threads"] = common.threads;
    return j;
  };

  try {
    if (*correlate) return cmd_correlate(ca, with_threads(correlate_echo.to_json()));
    if (*train_cmd) return cmd_train(ta, with_threads(train_echo.to_json()));
    if (*eval_cmd) return cmd_eval(ea, with_threads(eval_echo.to_json()));
    if (*verify) return cmd_verify(va, common.threads, with_threads(verify_echo.to_json()));
    if (*compose_cmd) return cmd_compose(co, with_threads(compose_echo.to_json()));
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const UnsupportedModeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitInput;
}
