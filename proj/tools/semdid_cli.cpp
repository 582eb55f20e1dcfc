// Command-line front end: wires configs, backends, decoders, and the
// evaluation harness together.
//
//   semdid decode    --lm <table.json|URL> --query 1,2,3 --method semdid ...
//   semdid bench     --suite <dir> --methods semdid,sample --n-grid 4,8 ...
//   semdid fit-bias  --samples <csv> --out <json>
//
// Exit codes: 0 success, 2 configuration/input error, 3 backend error,
// 4 enumeration budget exceeded.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "semdid/baselines.hpp"
#include "semdid/core.hpp"
#include "semdid/engine.hpp"
#include "semdid/errors.hpp"
#include "semdid/eval.hpp"
#include "semdid/models.hpp"
#include "semdid/quality.hpp"
#include "semdid/remote.hpp"

namespace fs = std::filesystem;
using namespace semdid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitBudget = 4;

std::vector<TokenId> parse_id_list(const std::string& text) {
  std::vector<TokenId> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.empty()) continue;
    out.push_back(static_cast<TokenId>(std::stol(cell)));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (TokenId id : parse_id_list(text)) out.push_back(static_cast<int>(id));
  return out;
}

std::vector<std::string> parse_string_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ','))
    if (!cell.empty()) out.push_back(cell);
  return out;
}

bool is_url(const std::string& s) {
  return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0;
}

DecoderConfig load_config(const std::string& path) {
  DecoderConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open " + path);
    nlohmann::json j;
    in >> j;
    cfg = j.get<DecoderConfig>();
  }
  return cfg;
}

struct Backends {
  std::unique_ptr<LanguageModel> lm;
  std::unique_ptr<Embedder> embedder;
};

Backends make_backends(const std::string& lm_spec,
                       const std::string& embedder_spec,
                       const DecoderConfig& cfg, TokenId remote_eos,
                       std::uint64_t embedder_seed) {
  Backends b;
  if (is_url(lm_spec)) {
    b.lm = std::make_unique<remote::RemoteLM>(lm_spec, remote_eos);
  } else {
    b.lm = std::make_unique<TableLM>(TableLM::from_file(lm_spec));
  }
  if (is_url(embedder_spec)) {
    b.embedder = std::make_unique<remote::RemoteEmbedder>(embedder_spec);
  } else if (embedder_spec == "hash") {
    b.embedder = std::make_unique<HashEmbedder>(cfg.embed_dim, embedder_seed);
  } else {
    throw ConfigError("embedder", "expected 'hash' or a URL");
  }
  return b;
}

// Produce n outputs with the named method. Counting wrappers feed the
// lm_calls/embed_calls columns; the engine additionally returns its audit.
struct MethodRun {
  std::vector<GenSequence> outputs;
  long long lm_calls = 0;
  long long embed_calls = 0;
  std::optional<engine::AuditLog> audit;
};

MethodRun run_method(const std::string& method,
                     const std::vector<TokenId>& query,
                     const LanguageModel& lm, const Embedder& embedder,
                     DecoderConfig cfg, int n, int max_tokens, int pool,
                     double dbs_penalty) {
  CountingLM clm(lm);
  CountingEmbedder cemb(embedder);
  MethodRun run;
  if (method == "semdid") {
    cfg.k = std::max(2, n);
    auto result = engine::decode(query, clm, cemb, cfg);
    run.outputs = std::move(result.outputs);
    run.audit = std::move(result.audit);
  } else if (method == "greedy") {
    run.outputs = {baselines::greedy_decode(clm, query, max_tokens,
                                            cfg.punct_tokens)};
  } else if (method == "sample") {
    run.outputs =
        baselines::sample_n(clm, query, n, max_tokens, cfg, cfg.seed);
  } else if (method == "dbs") {
    run.outputs = baselines::diverse_beam_search(
        clm, query, std::max(2, n), cfg.b, dbs_penalty, max_tokens,
        cfg.punct_tokens);
  } else if (method == "cluster") {
    auto samples = baselines::sample_n(clm, query, std::max(pool, n),
                                       max_tokens, cfg, cfg.seed);
    std::vector<double> logprobs;
    logprobs.reserve(samples.size());
    for (const auto& s : samples) {
      double sum = 0.0;
      for (double lp : s.token_logprobs) sum += lp;
      logprobs.push_back(sum);
    }
    run.outputs =
        baselines::cluster_select(samples, logprobs, cemb, n, cfg.seed);
  } else {
    throw ConfigError("method", "unknown method " + method);
  }
  run.lm_calls = clm.calls();
  run.embed_calls = cemb.calls();
  return run;
}

// ============================================================================
// decode
// ============================================================================

int cmd_decode(const std::string& config_path, const std::string& lm_spec,
               const std::string& embedder_spec, const std::string& query_str,
               const std::string& method, int n, long long seed_flag,
               bool seed_given, const std::string& out_path, TokenId remote_eos,
               std::uint64_t embedder_seed, int max_tokens_flag, int pool,
               double dbs_penalty) {
  DecoderConfig cfg = load_config(config_path);
  if (seed_given) cfg.seed = static_cast<std::uint64_t>(seed_flag);
  validate_config(cfg);

  Backends backends =
      make_backends(lm_spec, embedder_spec, cfg, remote_eos, embedder_seed);
  const std::vector<TokenId> query = parse_id_list(query_str);
  const int max_tokens =
      max_tokens_flag > 0 ? max_tokens_flag : cfg.t_max * cfg.l_max;

  MethodRun run = run_method(method, query, *backends.lm, *backends.embedder,
                             cfg, n, max_tokens, pool, dbs_penalty);

  nlohmann::json out{{"method", method},
                     {"query", query},
                     {"seed", cfg.seed},
                     {"outputs", run.outputs},
                     {"lm_calls", run.lm_calls},
                     {"embed_calls", run.embed_calls}};
  std::ofstream ofs(out_path);
  if (!ofs) throw ConfigError("out", "cannot write " + out_path);
  ofs << out.dump(2) << "\n";

  if (run.audit) {
    std::ofstream audit_ofs(out_path + ".audit.jsonl");
    if (!audit_ofs)
      throw ConfigError("out", "cannot write " + out_path + ".audit.jsonl");
    engine::write_jsonl(*run.audit, audit_ofs);
  }
  return kExitOk;
}

// ============================================================================
// bench
// ============================================================================

int cmd_bench(const std::string& suite_dir, const std::string& methods_str,
              const std::string& n_grid_str, long long seed_flag,
              bool seed_given, const std::string& out_path,
              const std::string& config_path, std::uint64_t embedder_seed,
              int pool, double dbs_penalty) {
  DecoderConfig base_cfg = load_config(config_path);
  if (seed_given) base_cfg.seed = static_cast<std::uint64_t>(seed_flag);

  std::vector<std::string> task_files;
  if (!fs::is_directory(suite_dir))
    throw ConfigError("suite", "not a directory: " + suite_dir);
  for (const auto& entry : fs::directory_iterator(suite_dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.size() > 10 &&
        name.rfind(".task.json") == name.size() - 10)
      task_files.push_back(entry.path().string());
  }
  std::sort(task_files.begin(), task_files.end());
  if (task_files.empty())
    throw ConfigError("suite", "no *.task.json files in " + suite_dir);

  const auto methods = parse_string_list(methods_str);
  const auto n_grid = parse_int_list(n_grid_str);
  if (methods.empty()) throw ConfigError("methods", "empty method list");
  if (n_grid.empty()) throw ConfigError("n-grid", "empty N grid");

  std::vector<eval::MetricRow> rows;
  for (const auto& task_file : task_files) {
    const eval::ToyTask task = eval::ToyTask::from_file(task_file);
    const fs::path task_dir = fs::path(task_file).parent_path();
    const std::string lm_path = (task_dir / task.lm_file).string();
    const TableLM lm = TableLM::from_file(lm_path);
    const HashEmbedder embedder(base_cfg.embed_dim, embedder_seed);

    DecoderConfig cfg = base_cfg;
    cfg.punct_tokens = task.punct_tokens;
    cfg.t_max = task.max_len;

    const auto enumeration =
        eval::enumerate_all(lm, task.query, task.max_len, task.punct_tokens);

    for (const auto& method : methods) {
      for (int n : n_grid) {
        MethodRun run = run_method(method, task.query, lm, embedder, cfg, n,
                                   task.max_len, pool, dbs_penalty);
        const auto oracle = eval::oracle_select(
            enumeration, embedder,
            std::min<int>(n, static_cast<int>(enumeration.size())), cfg.seed,
            lm.eos());

        eval::MetricRow row;
        row.method = method;
        row.task = task.name;
        row.n = n;
        row.coverage =
            eval::coverage({run.outputs}, {task}, {lm.eos()});
        if (run.outputs.size() >= 2) {
          const auto div =
              eval::pairwise_diversity(run.outputs, embedder, lm.eos());
          row.ngram_dist = div.ngram_dist;
          row.semantic_dist = div.semantic_dist;
        }
        row.regret =
            eval::semantic_regret(run.outputs, oracle, embedder, lm.eos());
        row.lm_calls = run.lm_calls;
        row.embed_calls = run.embed_calls;
        rows.push_back(std::move(row));
      }
    }
  }

  std::ofstream ofs(out_path);
  if (!ofs) throw ConfigError("out", "cannot write " + out_path);
  eval::write_metrics_csv(ofs, rows);
  return kExitOk;
}

// ============================================================================
// fit-bias
// ============================================================================

int cmd_fit_bias(const std::string& samples_path, const std::string& out_path) {
  const auto samples = quality::read_bias_samples_file(samples_path);
  const auto [beta_seq, beta_sent] = quality::fit_bias_params(samples);
  nlohmann::json out{{"beta_seq", beta_seq}, {"beta_sent", beta_sent}};
  std::ofstream ofs(out_path);
  if (!ofs) throw ConfigError("out", "cannot write " + out_path);
  ofs << out.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SemDiD decoding engine and evaluation harness"};
  app.require_subcommand(1);

  // decode
  auto* decode = app.add_subcommand("decode", "Decode one query");
  std::string config_path, lm_spec, embedder_spec = "hash", query_str;
  std::string method = "semdid", out_path;
  int n = 4, max_tokens_flag = 0, pool = 100;
  long long seed_flag = 0;
  TokenId remote_eos = 0;
  std::uint64_t embedder_seed = 42;
  double dbs_penalty = 1.0;
  decode->add_option("--config", config_path, "DecoderConfig JSON file");
  decode->add_option("--lm", lm_spec, "TableLM JSON file or remote URL")
      ->required();
  decode->add_option("--embedder", embedder_spec,
                     "'hash' or remote URL (default hash)");
  decode->add_option("--query", query_str, "comma-separated token ids");
  decode->add_option("--method", method,
                     "semdid|greedy|sample|dbs|cluster (default semdid)");
  decode->add_option("--n", n, "number of outputs (k for semdid)");
  auto* seed_opt = decode->add_option("--seed", seed_flag, "RNG seed override");
  decode->add_option("--out", out_path, "output JSON path")->required();
  decode->add_option("--eos", remote_eos, "EOS token id for remote LMs");
  decode->add_option("--embedder-seed", embedder_seed,
                     "seed for the hash embedder (default 42)");
  decode->add_option("--max-tokens", max_tokens_flag,
                     "token cap for token-level decoders (default T_max*L_max)");
  decode->add_option("--pool", pool,
                     "sample pool size for method=cluster (default 100)");
  decode->add_option("--dbs-penalty", dbs_penalty,
                     "Hamming penalty weight for method=dbs (default 1.0)");

  // bench
  auto* bench = app.add_subcommand("bench", "Run a task suite");
  std::string suite_dir, methods_str = "semdid,sample", n_grid_str = "4,8";
  std::string bench_out, bench_config;
  long long bench_seed = 0;
  std::uint64_t bench_embedder_seed = 42;
  int bench_pool = 100;
  double bench_dbs_penalty = 1.0;
  bench->add_option("--suite", suite_dir, "directory of *.task.json files")
      ->required();
  bench->add_option("--methods", methods_str,
                    "comma-separated methods (default semdid,sample)");
  bench->add_option("--n-grid", n_grid_str,
                    "comma-separated N values (default 4,8)");
  auto* bench_seed_opt =
      bench->add_option("--seed", bench_seed, "RNG seed override");
  bench->add_option("--out", bench_out, "output CSV path")->required();
  bench->add_option("--config", bench_config, "DecoderConfig JSON file");
  bench->add_option("--embedder-seed", bench_embedder_seed,
                    "seed for the hash embedder (default 42)");
  bench->add_option("--pool", bench_pool,
                    "sample pool size for method=cluster (default 100)");
  bench->add_option("--dbs-penalty", bench_dbs_penalty,
                    "Hamming penalty weight for method=dbs (default 1.0)");

  // fit-bias
  auto* fit = app.add_subcommand("fit-bias", "Fit decay rates from samples");
  std::string samples_path, fit_out;
  fit->add_option("--samples", samples_path, "CSV of columns i,d,logp")
      ->required();
  fit->add_option("--out", fit_out, "output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (decode->parsed()) {
      return cmd_decode(config_path, lm_spec, embedder_spec, query_str, method,
                        n, seed_flag, seed_opt->count() > 0, out_path,
                        remote_eos, embedder_seed, max_tokens_flag, pool,
                        dbs_penalty);
    }
    if (bench->parsed()) {
      return cmd_bench(suite_dir, methods_str, n_grid_str, bench_seed,
                       bench_seed_opt->count() > 0, bench_out, bench_config,
                       bench_embedder_seed, bench_pool, bench_dbs_penalty);
    }
    if (fit->parsed()) return cmd_fit_bias(samples_path, fit_out);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const DegenerateFit& e) {
    std::cerr << "degenerate fit: " << e.what() << "\n";
    return kExitConfig;
  } catch (const RemoteError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const BudgetExceeded& e) {
    std::cerr << "budget exceeded: " << e.what() << "\n";
    return kExitBudget;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "invalid JSON: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
