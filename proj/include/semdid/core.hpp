#pragma once

// Domain types shared by every module: token sequences with probability and
// punctuation bookkeeping, unit-norm embedding vectors, the decoder
// configuration, and the per-candidate score bundle. No behavior beyond
// construction, validation, and JSON serialization lives here.
//
// Conventions fixed across the library:
//  - token probabilities are natural logs, stored per generated token with
//    the prompt excluded;
//  - positions i are 1-based over generated tokens;
//  - punct_distances[i] is 0 on a sentence-ending punctuation token itself,
//    and grows by 1 per token after it (first token of a run has d = 1).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "semdid/errors.hpp"

namespace semdid {

using TokenId = std::int32_t;
using TokenSet = std::set<TokenId>;

// ============================================================================
// GenSequence
// ============================================================================

// A growing generated-token sequence. The three parallel lists stay equal
// length; use push_token to keep the punctuation distances consistent.
struct GenSequence {
  std::vector<TokenId> tokens;
  std::vector<double> token_logprobs;   // ln p(token | prefix), each <= 0
  std::vector<int> punct_distances;     // d_i per token
  bool complete = false;                // EOS emitted

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }

  void push_token(TokenId tok, double logprob, const TokenSet& punct_tokens) {
    int d;
    if (punct_tokens.count(tok)) {
      d = 0;
    } else if (punct_distances.empty()) {
      d = 1;
    } else {
      d = punct_distances.back() + 1;
    }
    tokens.push_back(tok);
    token_logprobs.push_back(logprob);
    punct_distances.push_back(d);
  }

  bool operator==(const GenSequence& o) const {
    return tokens == o.tokens && token_logprobs == o.token_logprobs &&
           punct_distances == o.punct_distances && complete == o.complete;
  }
};

// Recompute the distance list from scratch; the stored list must match.
inline std::vector<int> recompute_punct_distances(
    const std::vector<TokenId>& tokens, const TokenSet& punct_tokens) {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (TokenId tok : tokens) {
    if (punct_tokens.count(tok)) {
      out.push_back(0);
    } else if (out.empty()) {
      out.push_back(1);
    } else {
      out.push_back(out.back() + 1);
    }
  }
  return out;
}

// ============================================================================
// EmbeddingVec
// ============================================================================

struct EmbeddingVec {
  std::vector<double> components;

  EmbeddingVec() = default;
  explicit EmbeddingVec(std::vector<double> c) : components(std::move(c)) {}

  std::size_t dim() const { return components.size(); }

  bool operator==(const EmbeddingVec& o) const {
    return components == o.components;
  }
};

inline double dot(const EmbeddingVec& a, const EmbeddingVec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.components.size(); ++i)
    s += a.components[i] * b.components[i];
  return s;
}

inline double norm(const EmbeddingVec& v) { return std::sqrt(dot(v, v)); }

inline EmbeddingVec normalized(const EmbeddingVec& v) {
  const double n = norm(v);
  EmbeddingVec out = v;
  if (n > 0.0) {
    for (auto& c : out.components) c /= n;
  }
  return out;
}

inline EmbeddingVec subtract(const EmbeddingVec& a, const EmbeddingVec& b) {
  EmbeddingVec out = a;
  for (std::size_t i = 0; i < out.components.size(); ++i)
    out.components[i] -= b.components[i];
  return out;
}

// ============================================================================
// DecoderConfig
// ============================================================================

// Every SemDiD hyperparameter. Defaults follow the reference settings:
// b=5, E_base=4, L_max=10, T_trans=10, gamma=0.25, lambda=2.0,
// beta_seq=0.001, beta_sent=0.005, tau=-0.8, temperature=1.0, top_p=0.95,
// mu_p=1.5, mu_n=0.7. T_update defaults to 10 (one lookahead window).
struct DecoderConfig {
  int k = 4;                   // group count (group 1 is greedy)
  int b = 5;                   // beam size per diverse group
  int e_base = 4;              // base exploration width
  double mu_p = 1.5;           // width multiplier after punctuation
  double mu_n = 0.7;           // width multiplier elsewhere
  int l_max = 10;              // max lookahead depth (tokens per block)
  int t_trans = 10;            // alpha-schedule transition step
  int t_update = 10;           // direction refresh period (steps)
  double gamma = 0.25;         // quality relaxation, in (0,1]
  double lambda = 2.0;         // harmonic gain strength, > 0
  double beta_seq = 0.001;     // sequence-position decay rate, >= 0
  double beta_sent = 0.005;    // sentence-position decay rate, >= 0
  double tau = -0.8;           // saturation threshold (log domain), < 0
  double temperature = 1.0;    // sampling temperature, > 0
  double top_p = 0.95;         // nucleus threshold, in (0,1]
  int t_max = 64;              // max decoding steps (selection rounds)
  std::uint64_t seed = 0;      // RNG seed
  TokenSet punct_tokens;       // sentence-ending punctuation token ids
  int embed_dim = 16;          // embedding dimension D
};

inline void validate_config(const DecoderConfig& cfg) {
  if (cfg.k < 2) throw ConfigError("k", "need at least 2 groups");
  if (cfg.b < 1) throw ConfigError("b", "beam size must be >= 1");
  if (cfg.e_base < 1) throw ConfigError("E_base", "must be >= 1");
  if (!(cfg.mu_p > 0.0)) throw ConfigError("mu_p", "must be > 0");
  if (!(cfg.mu_n > 0.0)) throw ConfigError("mu_n", "must be > 0");
  if (cfg.l_max < 1) throw ConfigError("L_max", "must be >= 1");
  if (cfg.t_trans < 1) throw ConfigError("T_trans", "must be >= 1");
  if (cfg.t_update < 1) throw ConfigError("T_update", "must be >= 1");
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0))
    throw ConfigError("gamma", "must be in (0,1]");
  if (!(cfg.lambda > 0.0)) throw ConfigError("lambda", "must be > 0");
  if (!(cfg.beta_seq >= 0.0)) throw ConfigError("beta_seq", "must be >= 0");
  if (!(cfg.beta_sent >= 0.0)) throw ConfigError("beta_sent", "must be >= 0");
  if (!(cfg.tau < 0.0)) throw ConfigError("tau", "must be < 0 (log domain)");
  if (!(cfg.temperature > 0.0)) throw ConfigError("temperature", "must be > 0");
  if (!(cfg.top_p > 0.0 && cfg.top_p <= 1.0))
    throw ConfigError("top_p", "must be in (0,1]");
  if (cfg.t_max < 1) throw ConfigError("T_max", "must be >= 1");
  if (cfg.embed_dim < 1) throw ConfigError("embed_dim", "must be >= 1");
  for (TokenId tok : cfg.punct_tokens)
    if (tok < 0) throw ConfigError("punct_tokens", "token ids must be >= 0");
}

// ============================================================================
// ScoreBundle / Candidate / GroupState
// ============================================================================

// Raw and normalized scores for one candidate. s_combined carries the
// REJECTED sentinel (rejected == true) exactly when the raw quality fell
// below the epsilon threshold in force when the pool was combined.
struct ScoreBundle {
  double s_quality_raw = 0.0;
  std::optional<double> s_quality_norm;
  double s_dir = 0.0;                    // in [-1, 1]
  double s_rep = 0.0;
  std::optional<double> s_dir_norm;
  std::optional<double> s_rep_norm;
  std::optional<double> s_div_norm;
  std::optional<double> s_combined;
  bool rejected = false;

  bool operator==(const ScoreBundle& o) const {
    return s_quality_raw == o.s_quality_raw &&
           s_quality_norm == o.s_quality_norm && s_dir == o.s_dir &&
           s_rep == o.s_rep && s_dir_norm == o.s_dir_norm &&
           s_rep_norm == o.s_rep_norm && s_div_norm == o.s_div_norm &&
           s_combined == o.s_combined && rejected == o.rejected;
  }
};

struct Candidate {
  GenSequence sequence;
  std::optional<EmbeddingVec> embedding;
  ScoreBundle scores;
  int group = 0;

  bool operator==(const Candidate& o) const {
    return sequence == o.sequence && embedding == o.embedding &&
           scores == o.scores && group == o.group;
  }
};

// One search group: its beams, assigned direction, and seeded random vector.
struct GroupState {
  int g = 1;                             // 1-based group index
  std::vector<Candidate> beams;
  std::optional<EmbeddingVec> d_g;       // assigned direction, set on refresh
  EmbeddingVec r_g;                      // seeded random unit vector
  bool is_greedy = false;                // true iff g == 1
};

// ============================================================================
// JSON encodings
// ============================================================================

// Field names mirror the type definitions exactly. Floats go through the
// shortest round-trip representation, so parsing back reproduces the exact
// value. s_combined encodes the sentinel as the string "REJECTED".

inline void to_json(nlohmann::json& j, const GenSequence& s) {
  j = nlohmann::json{{"tokens", s.tokens},
                     {"token_logprobs", s.token_logprobs},
                     {"punct_distances", s.punct_distances},
                     {"complete", s.complete}};
}

inline void from_json(const nlohmann::json& j, GenSequence& s) {
  j.at("tokens").get_to(s.tokens);
  j.at("token_logprobs").get_to(s.token_logprobs);
  j.at("punct_distances").get_to(s.punct_distances);
  j.at("complete").get_to(s.complete);
}

inline void to_json(nlohmann::json& j, const EmbeddingVec& v) {
  j = nlohmann::json{{"components", v.components}};
}

inline void from_json(const nlohmann::json& j, EmbeddingVec& v) {
  j.at("components").get_to(v.components);
}

inline void to_json(nlohmann::json& j, const DecoderConfig& c) {
  j = nlohmann::json{
      {"k", c.k},
      {"b", c.b},
      {"E_base", c.e_base},
      {"mu_p", c.mu_p},
      {"mu_n", c.mu_n},
      {"L_max", c.l_max},
      {"T_trans", c.t_trans},
      {"T_update", c.t_update},
      {"gamma", c.gamma},
      {"lambda", c.lambda},
      {"beta_seq", c.beta_seq},
      {"beta_sent", c.beta_sent},
      {"tau", c.tau},
      {"temperature", c.temperature},
      {"top_p", c.top_p},
      {"T_max", c.t_max},
      {"seed", c.seed},
      {"punct_tokens", std::vector<TokenId>(c.punct_tokens.begin(),
                                            c.punct_tokens.end())},
      {"embed_dim", c.embed_dim}};
}

inline void from_json(const nlohmann::json& j, DecoderConfig& c) {
  DecoderConfig defaults;
  c = defaults;
  if (j.contains("k")) j.at("k").get_to(c.k);
  if (j.contains("b")) j.at("b").get_to(c.b);
  if (j.contains("E_base")) j.at("E_base").get_to(c.e_base);
  if (j.contains("mu_p")) j.at("mu_p").get_to(c.mu_p);
  if (j.contains("mu_n")) j.at("mu_n").get_to(c.mu_n);
  if (j.contains("L_max")) j.at("L_max").get_to(c.l_max);
  if (j.contains("T_trans")) j.at("T_trans").get_to(c.t_trans);
  if (j.contains("T_update")) j.at("T_update").get_to(c.t_update);
  if (j.contains("gamma")) j.at("gamma").get_to(c.gamma);
  if (j.contains("lambda")) j.at("lambda").get_to(c.lambda);
  if (j.contains("beta_seq")) j.at("beta_seq").get_to(c.beta_seq);
  if (j.contains("beta_sent")) j.at("beta_sent").get_to(c.beta_sent);
  if (j.contains("tau")) j.at("tau").get_to(c.tau);
  if (j.contains("temperature")) j.at("temperature").get_to(c.temperature);
  if (j.contains("top_p")) j.at("top_p").get_to(c.top_p);
  if (j.contains("T_max")) j.at("T_max").get_to(c.t_max);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("punct_tokens")) {
    std::vector<TokenId> v;
    j.at("punct_tokens").get_to(v);
    c.punct_tokens = TokenSet(v.begin(), v.end());
  }
  if (j.contains("embed_dim")) j.at("embed_dim").get_to(c.embed_dim);
}

namespace detail {
inline nlohmann::json opt_to_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}
inline std::optional<double> opt_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}
}  // namespace detail

inline void to_json(nlohmann::json& j, const ScoreBundle& s) {
  j = nlohmann::json{
      {"s_quality_raw", s.s_quality_raw},
      {"s_quality_norm", detail::opt_to_json(s.s_quality_norm)},
      {"s_dir", s.s_dir},
      {"s_rep", s.s_rep},
      {"s_dir_norm", detail::opt_to_json(s.s_dir_norm)},
      {"s_rep_norm", detail::opt_to_json(s.s_rep_norm)},
      {"s_div_norm", detail::opt_to_json(s.s_div_norm)},
      {"s_combined", s.rejected ? nlohmann::json("REJECTED")
                                : detail::opt_to_json(s.s_combined)}};
}

inline void from_json(const nlohmann::json& j, ScoreBundle& s) {
  j.at("s_quality_raw").get_to(s.s_quality_raw);
  s.s_quality_norm = detail::opt_from_json(j.at("s_quality_norm"));
  j.at("s_dir").get_to(s.s_dir);
  j.at("s_rep").get_to(s.s_rep);
  s.s_dir_norm = detail::opt_from_json(j.at("s_dir_norm"));
  s.s_rep_norm = detail::opt_from_json(j.at("s_rep_norm"));
  s.s_div_norm = detail::opt_from_json(j.at("s_div_norm"));
  const auto& c = j.at("s_combined");
  if (c.is_string() && c.get<std::string>() == "REJECTED") {
    s.rejected = true;
    s.s_combined = std::nullopt;
  } else {
    s.rejected = false;
    s.s_combined = detail::opt_from_json(c);
  }
}

inline void to_json(nlohmann::json& j, const Candidate& c) {
  j = nlohmann::json{{"sequence", c.sequence},
                     {"embedding", c.embedding ? nlohmann::json(*c.embedding)
                                               : nlohmann::json(nullptr)},
                     {"scores", c.scores},
                     {"group", c.group}};
}

inline void from_json(const nlohmann::json& j, Candidate& c) {
  j.at("sequence").get_to(c.sequence);
  if (j.at("embedding").is_null()) {
    c.embedding = std::nullopt;
  } else {
    c.embedding = j.at("embedding").get<EmbeddingVec>();
  }
  j.at("scores").get_to(c.scores);
  j.at("group").get_to(c.group);
}

inline void to_json(nlohmann::json& j, const GroupState& g) {
  j = nlohmann::json{{"g", g.g},
                     {"beams", g.beams},
                     {"d_g", g.d_g ? nlohmann::json(*g.d_g)
                                   : nlohmann::json(nullptr)},
                     {"r_g", g.r_g},
                     {"is_greedy", g.is_greedy}};
}

inline void from_json(const nlohmann::json& j, GroupState& g) {
  j.at("g").get_to(g.g);
  j.at("beams").get_to(g.beams);
  if (j.at("d_g").is_null()) {
    g.d_g = std::nullopt;
  } else {
    g.d_g = j.at("d_g").get<EmbeddingVec>();
  }
  j.at("r_g").get_to(g.r_g);
  j.at("is_greedy").get_to(g.is_greedy);
}

}  // namespace semdid
