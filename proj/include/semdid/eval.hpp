#pragma once

// Desk-scale ground truth and metrics: exhaustive enumeration of toy
// language models, the enumerate/embed/cluster/select oracle, Best-of-N
// coverage, and pairwise diversity metrics.
//
// Metric convention: trailing EOS tokens are stripped before set membership,
// n-gram extraction, and embedding, so two answers differing only in the
// terminator compare as identical content.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "semdid/baselines.hpp"
#include "semdid/core.hpp"
#include "semdid/errors.hpp"
#include "semdid/models.hpp"

namespace semdid::eval {

// ============================================================================
// ToyTask
// ============================================================================

// One benchmark item: a TableLM file, a query, the correct-answer set (full
// sequences and/or accepted final tokens), and a length bound small enough
// to keep the task exhaustively enumerable.
struct ToyTask {
  std::string name;
  std::string lm_file;
  std::vector<TokenId> query;
  std::vector<std::vector<TokenId>> correct;  // complete token sequences
  std::set<TokenId> correct_last;             // or a final-token predicate
  int max_len = 8;
  TokenSet punct_tokens;

  static ToyTask from_json(const nlohmann::json& j) {
    ToyTask t;
    t.name = j.value("name", std::string{});
    t.lm_file = j.at("lm_file").get<std::string>();
    t.query = j.at("query").get<std::vector<TokenId>>();
    if (j.contains("correct") && !j.at("correct").is_null())
      t.correct = j.at("correct").get<std::vector<std::vector<TokenId>>>();
    if (j.contains("correct_last") && !j.at("correct_last").is_null()) {
      auto v = j.at("correct_last").get<std::vector<TokenId>>();
      t.correct_last = std::set<TokenId>(v.begin(), v.end());
    }
    t.max_len = j.at("max_len").get<int>();
    if (j.contains("punct_tokens")) {
      auto v = j.at("punct_tokens").get<std::vector<TokenId>>();
      t.punct_tokens = TokenSet(v.begin(), v.end());
    }
    return t;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"name", name},
        {"lm_file", lm_file},
        {"query", query},
        {"correct", correct},
        {"correct_last",
         std::vector<TokenId>(correct_last.begin(), correct_last.end())},
        {"max_len", max_len},
        {"punct_tokens",
         std::vector<TokenId>(punct_tokens.begin(), punct_tokens.end())}};
  }

  static ToyTask from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("task", "cannot open " + path);
    nlohmann::json j;
    in >> j;
    ToyTask t = from_json(j);
    if (t.name.empty()) {
      auto slash = path.find_last_of('/');
      t.name = slash == std::string::npos ? path : path.substr(slash + 1);
    }
    return t;
  }
};

// Strip the trailing EOS, if present, for content comparisons.
inline std::vector<TokenId> content_tokens(const GenSequence& seq,
                                           TokenId eos) {
  std::vector<TokenId> toks = seq.tokens;
  if (!toks.empty() && toks.back() == eos) toks.pop_back();
  return toks;
}

inline bool is_correct(const GenSequence& seq, const ToyTask& task,
                       TokenId eos) {
  const auto content = content_tokens(seq, eos);
  for (const auto& c : task.correct) {
    std::vector<TokenId> want = c;
    if (!want.empty() && want.back() == eos) want.pop_back();
    if (content == want) return true;
  }
  if (!task.correct_last.empty() && !content.empty() &&
      task.correct_last.count(content.back()))
    return true;
  return false;
}

// ============================================================================
// Exhaustive enumeration
// ============================================================================

struct EnumeratedSequence {
  GenSequence sequence;
  double logprob = 0.0;  // exact log-probability under the model
};

// Every sequence that ends with EOS or reaches max_len, with its exact
// log-probability. The leaves partition the outcome space, so the total
// probability mass over all returned sequences is 1. Throws once the
// sequence count passes the 10^6 budget.
inline std::vector<EnumeratedSequence> enumerate_all(
    const LanguageModel& lm, const std::vector<TokenId>& query, int max_len,
    const TokenSet& punct_tokens = {},
    std::size_t budget = 1000000) {
  std::vector<EnumeratedSequence> out;
  GenSequence current;
  std::vector<TokenId> prefix = query;

  // Depth-first over token choices; -inf branches carry no mass and are
  // skipped.
  auto recurse = [&](auto&& self, double logprob) -> void {
    if (!current.empty() &&
        (current.complete || static_cast<int>(current.size()) >= max_len)) {
      if (out.size() >= budget)
        throw BudgetExceeded("enumeration budget exceeded");
      out.push_back(EnumeratedSequence{current, logprob});
      return;
    }
    const auto lp = lm.next_logprobs(prefix);
    for (std::size_t tok = 0; tok < lp.size(); ++tok) {
      if (std::isinf(lp[tok]) && lp[tok] < 0) continue;
      current.push_token(static_cast<TokenId>(tok), lp[tok], punct_tokens);
      prefix.push_back(static_cast<TokenId>(tok));
      if (static_cast<TokenId>(tok) == lm.eos()) current.complete = true;
      self(self, logprob + lp[tok]);
      current.complete = false;
      current.tokens.pop_back();
      current.token_logprobs.pop_back();
      current.punct_distances.pop_back();
      prefix.pop_back();
    }
  };
  recurse(recurse, 0.0);
  return out;
}

// logsumexp of the enumerated mass; 0 within 1e-6 when enumeration is sound.
inline double total_logmass(const std::vector<EnumeratedSequence>& all) {
  double max_lp = -std::numeric_limits<double>::infinity();
  for (const auto& e : all) max_lp = std::max(max_lp, e.logprob);
  double sum = 0.0;
  for (const auto& e : all) sum += std::exp(e.logprob - max_lp);
  return max_lp + std::log(sum);
}

// Cluster-select over the full enumeration: the "ideal" pipeline that
// samples everything, embeds, clusters, and keeps the most probable member
// of each cluster.
inline std::vector<GenSequence> oracle_select(
    const std::vector<EnumeratedSequence>& enumeration, const Embedder& emb,
    int k, std::uint64_t seed, TokenId eos) {
  std::vector<GenSequence> seqs;
  std::vector<double> logprobs;
  seqs.reserve(enumeration.size());
  for (const auto& e : enumeration) {
    GenSequence content;
    content.tokens = content_tokens(e.sequence, eos);
    content.token_logprobs.assign(content.tokens.size(), 0.0);
    content.punct_distances =
        recompute_punct_distances(content.tokens, {});
    content.complete = e.sequence.complete;
    seqs.push_back(std::move(content));
    logprobs.push_back(e.logprob);
  }
  return baselines::cluster_select(seqs, logprobs, emb, k, seed);
}

// ============================================================================
// Metrics
// ============================================================================

// Fraction of tasks with at least one correct output.
inline double coverage(
    const std::vector<std::vector<GenSequence>>& output_sets,
    const std::vector<ToyTask>& tasks, const std::vector<TokenId>& eos_ids) {
  if (output_sets.size() != tasks.size() || tasks.size() != eos_ids.size())
    throw std::invalid_argument("coverage inputs must align");
  if (tasks.empty()) return 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (const auto& seq : output_sets[i]) {
      if (is_correct(seq, tasks[i], eos_ids[i])) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(tasks.size());
}

struct DiversityMetrics {
  double ngram_dist = 0.0;     // mean pairwise 1 - Jaccard of token 4-grams
  double semantic_dist = 0.0;  // mean pairwise 1 - cosine of embeddings
};

namespace detail {
inline std::set<std::vector<TokenId>> token_ngrams(
    const std::vector<TokenId>& tokens, std::size_t n) {
  std::set<std::vector<TokenId>> grams;
  if (tokens.size() < n) {
    // Shorter than one gram: the whole sequence is the single gram.
    grams.insert(tokens);
    return grams;
  }
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    grams.insert(std::vector<TokenId>(tokens.begin() + i,
                                      tokens.begin() + i + n));
  return grams;
}

inline double jaccard(const std::set<std::vector<TokenId>>& a,
                      const std::set<std::vector<TokenId>>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& g : a) inter += b.count(g);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}
}  // namespace detail

// Mean over unordered output pairs of token-4-gram Jaccard distance and
// embedding cosine distance.
inline DiversityMetrics pairwise_diversity(
    const std::vector<GenSequence>& outputs, const Embedder& emb,
    TokenId eos) {
  if (outputs.size() < 2)
    throw std::invalid_argument("pairwise_diversity needs >= 2 outputs");
  std::vector<std::vector<TokenId>> contents;
  std::vector<std::set<std::vector<TokenId>>> grams;
  std::vector<EmbeddingVec> embs;
  for (const auto& seq : outputs) {
    contents.push_back(content_tokens(seq, eos));
    grams.push_back(detail::token_ngrams(contents.back(), 4));
    embs.push_back(emb.embed(contents.back()));
  }
  double ngram_sum = 0.0, sem_sum = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    for (std::size_t j = i + 1; j < outputs.size(); ++j) {
      ngram_sum += 1.0 - detail::jaccard(grams[i], grams[j]);
      sem_sum += 1.0 - dot(embs[i], embs[j]);
      ++pairs;
    }
  }
  return DiversityMetrics{ngram_sum / pairs, sem_sum / pairs};
}

// Mean over oracle representatives of the minimum cosine distance to any
// output; 0 when the outputs cover every representative exactly.
inline double semantic_regret(const std::vector<GenSequence>& outputs,
                              const std::vector<GenSequence>& oracle_outputs,
                              const Embedder& emb, TokenId eos) {
  if (outputs.empty() || oracle_outputs.empty())
    throw std::invalid_argument("semantic_regret needs non-empty inputs");
  std::vector<EmbeddingVec> out_embs;
  for (const auto& seq : outputs)
    out_embs.push_back(emb.embed(content_tokens(seq, eos)));
  double regret_sum = 0.0;
  for (const auto& oracle : oracle_outputs) {
    const EmbeddingVec oe = emb.embed(content_tokens(oracle, eos));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& out : out_embs)
      best = std::min(best, 1.0 - dot(oe, out));
    regret_sum += best;
  }
  return regret_sum / static_cast<double>(oracle_outputs.size());
}

// ============================================================================
// Metric rows
// ============================================================================

struct MetricRow {
  std::string method;
  std::string task;
  int n = 0;
  double coverage = 0.0;
  double ngram_dist = 0.0;
  double semantic_dist = 0.0;
  double regret = 0.0;
  long long lm_calls = 0;
  long long embed_calls = 0;
};

inline void write_metrics_csv(std::ostream& out,
                              const std::vector<MetricRow>& rows) {
  out << "method,task,N,coverage,ngram_dist,semantic_dist,regret,"
         "lm_calls,embed_calls\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.17g,%.17g,%.17g,%.17g,%lld,%lld\n",
                  r.method.c_str(), r.task.c_str(), r.n, r.coverage,
                  r.ngram_dist, r.semantic_dist, r.regret, r.lm_calls,
                  r.embed_calls);
    out << buf;
  }
}

}  // namespace semdid::eval
