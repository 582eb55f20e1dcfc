#pragma once

// The SemDiD decoder: k parallel groups, the first advancing greedily to
// anchor the quality threshold and reference direction, the rest exploring
// with sampled multi-token lookaheads scored for quality, directional
// alignment, and inter-group repulsion.
//
// Step semantics: t counts selection rounds (lookahead blocks), not tokens.
// Per round every incomplete beam emits up to E_t lookahead extensions of at
// most L_max tokens, cut short at sentence-ending punctuation or EOS; whole
// extensions are scored and the winning extensions are adopted as-is.
//
// Determinism: every random draw comes from a substream keyed on
// (seed, round, group, beam, exploration index), and candidates are
// generated and merged in that canonical order, so identical inputs and
// seed give bit-identical outputs and logs regardless of scheduling.
// Backend calls are memoized per decode; the audit counters report exact
// backend invocations.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "semdid/balance.hpp"
#include "semdid/core.hpp"
#include "semdid/diversity.hpp"
#include "semdid/errors.hpp"
#include "semdid/models.hpp"
#include "semdid/quality.hpp"
#include "semdid/rng.hpp"

namespace semdid::engine {

// ============================================================================
// Audit log
// ============================================================================

struct AuditCandidate {
  int group = 0;
  int beam_origin = 0;   // beam index the candidate extended
  int expl_index = 0;    // 1-based exploration slot; 0 = carried-over beam
  ScoreBundle scores;
};

struct AuditKeptBeam {
  int group = 0;
  std::vector<TokenId> tokens;
  ScoreBundle scores;
  bool complete = false;
};

struct AuditStep {
  int t = 0;
  double alpha = 0.0;
  double epsilon = 0.0;
  bool directions_refreshed = false;
  std::vector<AuditCandidate> candidates;
  std::vector<AuditKeptBeam> kept;
  std::vector<int> fallback_groups;  // groups rescued from an all-rejected pool
  long long lm_calls = 0;            // backend calls made during this step
  long long embed_calls = 0;
};

struct AuditLog {
  std::vector<AuditStep> steps;
  long long total_lm_calls = 0;
  long long total_embed_calls = 0;
};

inline void to_json(nlohmann::json& j, const AuditCandidate& c) {
  j = nlohmann::json{{"group", c.group},
                     {"beam_origin", c.beam_origin},
                     {"expl_index", c.expl_index},
                     {"scores", c.scores}};
}

inline void to_json(nlohmann::json& j, const AuditKeptBeam& b) {
  j = nlohmann::json{{"group", b.group},
                     {"tokens", b.tokens},
                     {"scores", b.scores},
                     {"complete", b.complete}};
}

inline void to_json(nlohmann::json& j, const AuditStep& s) {
  j = nlohmann::json{{"t", s.t},
                     {"alpha", s.alpha},
                     {"epsilon", s.epsilon},
                     {"directions_refreshed", s.directions_refreshed},
                     {"candidates", s.candidates},
                     {"kept", s.kept},
                     {"fallback_groups", s.fallback_groups},
                     {"lm_calls", s.lm_calls},
                     {"embed_calls", s.embed_calls}};
}

// One JSON object per step, one step per line.
inline void write_jsonl(const AuditLog& log, std::ostream& out) {
  for (const auto& step : log.steps) out << nlohmann::json(step).dump() << "\n";
}

// ============================================================================
// Memoizing backend adapters
// ============================================================================

// Identical prefixes hit the memo table instead of the backend, standing in
// for prefix/KV reuse in a real serving stack. Purity of the backends makes
// this sound. calls() reports actual backend invocations.

class MemoLM {
public:
  explicit MemoLM(const LanguageModel& lm) : lm_(lm) {}
  TokenId eos() const { return lm_.eos(); }
  int vocab_size() const { return lm_.vocab_size(); }
  const std::vector<double>& next_logprobs(const std::vector<TokenId>& prefix) {
    auto it = cache_.find(prefix);
    if (it == cache_.end()) {
      ++calls_;
      it = cache_.emplace(prefix, lm_.next_logprobs(prefix)).first;
    }
    return it->second;
  }
  long long calls() const { return calls_; }

private:
  const LanguageModel& lm_;
  std::map<std::vector<TokenId>, std::vector<double>> cache_;
  long long calls_ = 0;
};

class MemoEmbedder {
public:
  explicit MemoEmbedder(const Embedder& emb) : emb_(emb) {}
  const EmbeddingVec& embed(const std::vector<TokenId>& tokens) {
    auto it = cache_.find(tokens);
    if (it == cache_.end()) {
      ++calls_;
      it = cache_.emplace(tokens, emb_.embed(tokens)).first;
    }
    return it->second;
  }
  long long calls() const { return calls_; }

private:
  const Embedder& emb_;
  std::map<std::vector<TokenId>, EmbeddingVec> cache_;
  long long calls_ = 0;
};

// ============================================================================
// Lookahead generation
// ============================================================================

// Argmax over a log-distribution, ties to the lowest token id.
inline TokenId argmax_token(const std::vector<double>& logprobs) {
  TokenId best = 0;
  for (std::size_t i = 1; i < logprobs.size(); ++i)
    if (logprobs[i] > logprobs[best]) best = static_cast<TokenId>(i);
  return best;
}

// Nucleus draw: temperature rescale, keep the smallest head of the sorted
// distribution reaching top_p, renormalize, sample. Returns the token and
// its base-model log-probability.
inline std::pair<TokenId, double> sample_token(
    const std::vector<double>& base_logprobs, double temperature, double top_p,
    Rng& rng) {
  const std::size_t n = base_logprobs.size();
  std::vector<double> adj(n);
  double max_adj = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    adj[i] = base_logprobs[i] / temperature;
    max_adj = std::max(max_adj, adj[i]);
  }
  double lse = 0.0;
  for (std::size_t i = 0; i < n; ++i) lse += std::exp(adj[i] - max_adj);
  lse = max_adj + std::log(lse);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (adj[a] != adj[b]) return adj[a] > adj[b];
                     return a < b;
                   });

  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) probs[i] = std::exp(adj[i] - lse);

  std::size_t kept = 0;
  double kept_mass = 0.0;
  while (kept < n && kept_mass < top_p) {
    kept_mass += probs[order[kept]];
    ++kept;
  }
  if (kept == 0) kept = 1, kept_mass = probs[order[0]];

  const double u = rng.u01() * kept_mass;
  double acc = 0.0;
  for (std::size_t i = 0; i < kept; ++i) {
    acc += probs[order[i]];
    if (u < acc) {
      const std::size_t tok = order[i];
      return {static_cast<TokenId>(tok), base_logprobs[tok]};
    }
  }
  const std::size_t tok = order[kept - 1];
  return {static_cast<TokenId>(tok), base_logprobs[tok]};
}

// Extend by argmax tokens until l tokens are added, punctuation is emitted,
// or EOS closes the sequence.
template <typename Model>
GenSequence greedy_lookahead(Model& lm, const std::vector<TokenId>& prompt,
                             GenSequence seq, int l,
                             const TokenSet& punct_tokens) {
  if (l < 1) throw std::invalid_argument("lookahead depth must be >= 1");
  std::vector<TokenId> prefix = prompt;
  prefix.insert(prefix.end(), seq.tokens.begin(), seq.tokens.end());
  for (int step = 0; step < l && !seq.complete; ++step) {
    const auto& lp = lm.next_logprobs(prefix);
    const TokenId tok = argmax_token(lp);
    seq.push_token(tok, lp[tok], punct_tokens);
    prefix.push_back(tok);
    if (tok == lm.eos()) {
      seq.complete = true;
      break;
    }
    if (punct_tokens.count(tok)) break;
  }
  return seq;
}

// Sampled analogue of greedy_lookahead; the punctuation cut implements the
// depth rule min(L_max, steps to next punctuation).
template <typename Model>
GenSequence sample_lookahead(Model& lm, const std::vector<TokenId>& prompt,
                             GenSequence seq, int l, Rng& rng,
                             const DecoderConfig& cfg) {
  if (l < 1) throw std::invalid_argument("lookahead depth must be >= 1");
  std::vector<TokenId> prefix = prompt;
  prefix.insert(prefix.end(), seq.tokens.begin(), seq.tokens.end());
  for (int step = 0; step < l && !seq.complete; ++step) {
    const auto& lp = lm.next_logprobs(prefix);
    auto [tok, base_logp] = sample_token(lp, cfg.temperature, cfg.top_p, rng);
    seq.push_token(tok, base_logp, cfg.punct_tokens);
    prefix.push_back(tok);
    if (tok == lm.eos()) {
      seq.complete = true;
      break;
    }
    if (cfg.punct_tokens.count(tok)) break;
  }
  return seq;
}

// Lookahead candidates per beam: wider right after punctuation (and at the
// sequence start), narrower mid-sentence. Round half up, floor at 1.
inline int exploration_width(bool prev_token_is_punct,
                             const DecoderConfig& cfg) {
  const double mult = prev_token_is_punct ? cfg.mu_p : cfg.mu_n;
  const int width =
      static_cast<int>(std::floor(cfg.e_base * mult + 0.5));
  return std::max(1, width);
}

// ============================================================================
// Selection
// ============================================================================

namespace detail {
// Ranking used everywhere a "best" candidate is needed: combined score,
// then raw quality, then lexicographic token order. Unset combined scores
// rank below any set one; rejected candidates rank below everything.
inline bool better_candidate(const Candidate& a, const Candidate& b) {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  const double ca = a.scores.rejected
                        ? -std::numeric_limits<double>::max()
                        : a.scores.s_combined.value_or(neg_inf);
  const double cb = b.scores.rejected
                        ? -std::numeric_limits<double>::max()
                        : b.scores.s_combined.value_or(neg_inf);
  if (ca != cb) return ca > cb;
  if (a.scores.s_quality_raw != b.scores.s_quality_raw)
    return a.scores.s_quality_raw > b.scores.s_quality_raw;
  return a.sequence.tokens < b.sequence.tokens;
}
}  // namespace detail

// Top b by combined score; ties broken by raw quality, then lexicographic
// token order. Rejected candidates are never selected.
inline std::vector<Candidate> select_top_b(std::vector<Candidate> candidates,
                                           int b) {
  candidates.erase(std::remove_if(candidates.begin(), candidates.end(),
                                  [](const Candidate& c) {
                                    return c.scores.rejected;
                                  }),
                   candidates.end());
  if (candidates.empty())
    throw AllRejected();
  std::stable_sort(candidates.begin(), candidates.end(),
                   detail::better_candidate);
  if (static_cast<int>(candidates.size()) > b)
    candidates.resize(static_cast<std::size_t>(b));
  return candidates;
}

// ============================================================================
// Budgets
// ============================================================================

struct CallBudget {
  long long lm = 0;
  long long embed = 0;
};

// Worst-case backend calls for a full run: per round the greedy block costs
// up to L_max forward passes and each diverse beam up to E_max lookaheads of
// L_max passes plus one embedding; k embeddings per round cover direction
// refresh and repulsion anchors.
inline CallBudget call_budget(const DecoderConfig& cfg) {
  const long long e_max = exploration_width(true, cfg);
  CallBudget budget;
  budget.lm = static_cast<long long>(cfg.t_max) *
              (cfg.l_max + static_cast<long long>(cfg.k - 1) * cfg.b * e_max *
                               cfg.l_max);
  budget.embed = static_cast<long long>(cfg.k - 1) * cfg.b * e_max * cfg.t_max +
                 static_cast<long long>(cfg.k) * cfg.t_max;
  return budget;
}

// ============================================================================
// Decode
// ============================================================================

struct DecodeResult {
  std::vector<GenSequence> outputs;  // greedy first, then best of each group
  AuditLog audit;
};

namespace detail {

inline const Candidate& best_of(const std::vector<Candidate>& beams) {
  const Candidate* best = &beams.front();
  for (const auto& c : beams)
    if (better_candidate(c, *best)) best = &c;
  return *best;
}

inline std::vector<TokenId> full_tokens(const std::vector<TokenId>& prompt,
                                        const GenSequence& seq) {
  std::vector<TokenId> out = prompt;
  out.insert(out.end(), seq.tokens.begin(), seq.tokens.end());
  return out;
}

}  // namespace detail

inline DecodeResult decode(const std::vector<TokenId>& query,
                           const LanguageModel& lm, const Embedder& emb,
                           const DecoderConfig& cfg) {
  validate_config(cfg);
  for (TokenId tok : query)
    if (tok < 0 || tok >= lm.vocab_size()) throw UnknownToken(tok);

  MemoLM mlm(lm);
  MemoEmbedder memb(emb);
  const EmbeddingVec emb_q = memb.embed(query);
  const int dim = static_cast<int>(emb_q.dim());

  std::vector<GroupState> groups(static_cast<std::size_t>(cfg.k));
  for (int g = 1; g <= cfg.k; ++g) {
    GroupState& gs = groups[static_cast<std::size_t>(g - 1)];
    gs.g = g;
    gs.is_greedy = (g == 1);
    Rng rvec_rng = Rng::substream(cfg.seed, {0x7256u, static_cast<std::uint64_t>(g)});
    gs.r_g = EmbeddingVec(random_unit_vector(dim, rvec_rng));
    Candidate seed_beam;
    seed_beam.group = g;
    const int n_beams = gs.is_greedy ? 1 : cfg.b;
    gs.beams.assign(static_cast<std::size_t>(n_beams), seed_beam);
  }

  quality::QualityThreshold th;
  AuditLog audit;

  for (int t = 1; t <= cfg.t_max; ++t) {
    AuditStep step;
    step.t = t;
    step.alpha = diversity::alpha(t, cfg.t_trans);
    const long long lm_before = mlm.calls();
    const long long embed_before = memb.calls();

    // Periodic direction refresh, from previous-round state. A degenerate
    // reference direction (partial answer still at the query embedding)
    // falls back to the group-1 random vector.
    step.directions_refreshed = ((t - 1) % cfg.t_update == 0);
    if (step.directions_refreshed) {
      const EmbeddingVec& emb_y1 = memb.embed(
          detail::full_tokens(query, groups[0].beams[0].sequence));
      EmbeddingVec d1;
      try {
        d1 = diversity::reference_direction(emb_y1, emb_q);
      } catch (const ZeroDirection&) {
        d1 = groups[0].r_g;
      }
      std::vector<EmbeddingVec> rvecs;
      for (int g = 2; g <= cfg.k; ++g)
        rvecs.push_back(groups[static_cast<std::size_t>(g - 1)].r_g);
      Rng gs_rng = Rng::substream(cfg.seed, {0x6523u, static_cast<std::uint64_t>(t)});
      diversity::DirectionSet dirs =
          diversity::orthogonal_directions(rvecs, d1, gs_rng, t);
      for (int g = 1; g <= cfg.k; ++g)
        groups[static_cast<std::size_t>(g - 1)].d_g =
            dirs.dirs[static_cast<std::size_t>(g - 1)];
    }

    // Repulsion anchors: best beam of every group at the end of the
    // previous round.
    std::vector<EmbeddingVec> best_emb;
    best_emb.reserve(static_cast<std::size_t>(cfg.k));
    for (const auto& gs : groups)
      best_emb.push_back(memb.embed(
          detail::full_tokens(query, detail::best_of(gs.beams).sequence)));

    // Greedy group: one argmax block, then tighten the threshold.
    {
      Candidate& beam = groups[0].beams[0];
      if (!beam.sequence.complete) {
        beam.sequence = greedy_lookahead(mlm, query, beam.sequence, cfg.l_max,
                                         cfg.punct_tokens);
        beam.scores = ScoreBundle{};
        beam.scores.s_quality_raw = quality::sequence_quality(beam.sequence, cfg);
        th = quality::update_epsilon(th, beam.scores.s_quality_raw, cfg);
      }
    }
    step.epsilon = th.epsilon;

    // Diverse groups.
    for (int g = 2; g <= cfg.k; ++g) {
      GroupState& gs = groups[static_cast<std::size_t>(g - 1)];

      std::vector<Candidate> pool;
      std::vector<std::pair<int, int>> origin;  // (beam index, expl index)
      for (int beam_idx = 0;
           beam_idx < static_cast<int>(gs.beams.size()); ++beam_idx) {
        const Candidate& beam = gs.beams[static_cast<std::size_t>(beam_idx)];
        if (beam.sequence.complete) {
          Candidate carried;
          carried.sequence = beam.sequence;
          carried.group = g;
          pool.push_back(std::move(carried));
          origin.emplace_back(beam_idx, 0);
          continue;
        }
        const bool after_punct =
            beam.sequence.empty() ||
            cfg.punct_tokens.count(beam.sequence.tokens.back()) > 0;
        const int width = exploration_width(after_punct, cfg);
        for (int e = 1; e <= width; ++e) {
          Rng sample_rng = Rng::substream(
              cfg.seed,
              {0x5Au, static_cast<std::uint64_t>(t),
               static_cast<std::uint64_t>(g),
               static_cast<std::uint64_t>(beam_idx),
               static_cast<std::uint64_t>(e)});
          Candidate cand;
          cand.group = g;
          cand.sequence = sample_lookahead(mlm, query, beam.sequence,
                                           cfg.l_max, sample_rng, cfg);
          pool.push_back(std::move(cand));
          origin.emplace_back(beam_idx, e);
        }
      }

      std::vector<EmbeddingVec> others;
      for (int gp = 1; gp <= cfg.k; ++gp)
        if (gp != g) others.push_back(best_emb[static_cast<std::size_t>(gp - 1)]);

      for (auto& cand : pool) {
        cand.embedding = memb.embed(detail::full_tokens(query, cand.sequence));
        cand.scores.s_quality_raw = quality::sequence_quality(cand.sequence, cfg);
        cand.scores.s_dir =
            diversity::directional_score(*cand.embedding, emb_q, *gs.d_g);
        cand.scores.s_rep = diversity::repulsion_score(*cand.embedding, others);
      }

      try {
        std::vector<Candidate> scored =
            balance::combine_pool(pool, th.epsilon, step.alpha, cfg.lambda);
        for (std::size_t i = 0; i < scored.size(); ++i)
          step.candidates.push_back(AuditCandidate{
              g, origin[i].first, origin[i].second, scored[i].scores});
        gs.beams = select_top_b(std::move(scored), cfg.b);
      } catch (const AllRejected&) {
        // Keep the search alive with the least-bad candidate.
        for (std::size_t i = 0; i < pool.size(); ++i) {
          pool[i].scores.rejected = true;
          step.candidates.push_back(AuditCandidate{
              g, origin[i].first, origin[i].second, pool[i].scores});
        }
        std::size_t best = 0;
        for (std::size_t i = 1; i < pool.size(); ++i) {
          if (pool[i].scores.s_quality_raw > pool[best].scores.s_quality_raw ||
              (pool[i].scores.s_quality_raw == pool[best].scores.s_quality_raw &&
               pool[i].sequence.tokens < pool[best].sequence.tokens))
            best = i;
        }
        gs.beams = {pool[best]};
        step.fallback_groups.push_back(g);
      }
    }

    for (const auto& gs : groups)
      for (const auto& beam : gs.beams)
        step.kept.push_back(AuditKeptBeam{gs.g, beam.sequence.tokens,
                                          beam.scores, beam.sequence.complete});

    step.lm_calls = mlm.calls() - lm_before;
    step.embed_calls = memb.calls() - embed_before;
    audit.steps.push_back(std::move(step));

    bool all_complete = true;
    for (const auto& gs : groups)
      for (const auto& beam : gs.beams)
        all_complete = all_complete && beam.sequence.complete;
    if (all_complete) break;
  }

  audit.total_lm_calls = mlm.calls();
  audit.total_embed_calls = memb.calls();

  DecodeResult result;
  result.outputs.push_back(groups[0].beams[0].sequence);
  for (int g = 2; g <= cfg.k; ++g)
    result.outputs.push_back(
        detail::best_of(groups[static_cast<std::size_t>(g - 1)].beams).sequence);
  result.audit = std::move(audit);
  return result;
}

}  // namespace semdid::engine
