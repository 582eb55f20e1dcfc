#pragma once

// Reference decoders the engine is compared against: plain greedy decoding,
// independent nucleus sampling, Hamming-penalty diverse beam search, and the
// post-hoc sample/embed/cluster/select pipeline.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "semdid/core.hpp"
#include "semdid/engine.hpp"
#include "semdid/errors.hpp"
#include "semdid/models.hpp"
#include "semdid/rng.hpp"

namespace semdid::baselines {

// Argmax chain with lowest-id tie-break until EOS or max_tokens.
inline GenSequence greedy_decode(const LanguageModel& lm,
                                 const std::vector<TokenId>& query,
                                 int max_tokens,
                                 const TokenSet& punct_tokens = {}) {
  GenSequence seq;
  std::vector<TokenId> prefix = query;
  for (int i = 0; i < max_tokens; ++i) {
    const auto lp = lm.next_logprobs(prefix);
    const TokenId tok = engine::argmax_token(lp);
    seq.push_token(tok, lp[tok], punct_tokens);
    prefix.push_back(tok);
    if (tok == lm.eos()) {
      seq.complete = true;
      break;
    }
  }
  return seq;
}

// n independent nucleus-sampled completions; draw i uses the substream
// (seed, i), so single draws are reproducible in isolation.
inline std::vector<GenSequence> sample_n(const LanguageModel& lm,
                                         const std::vector<TokenId>& query,
                                         int n, int max_tokens,
                                         const DecoderConfig& cfg,
                                         std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  std::vector<GenSequence> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::substream(seed, {0x3A17u, static_cast<std::uint64_t>(i)});
    GenSequence seq;
    std::vector<TokenId> prefix = query;
    for (int step = 0; step < max_tokens; ++step) {
      const auto lp = lm.next_logprobs(prefix);
      auto [tok, base_logp] =
          engine::sample_token(lp, cfg.temperature, cfg.top_p, rng);
      seq.push_token(tok, base_logp, cfg.punct_tokens);
      prefix.push_back(tok);
      if (tok == lm.eos()) {
        seq.complete = true;
        break;
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

// ============================================================================
// Hamming-penalty diverse beam search
// ============================================================================

// Group-sequential beam search: groups decode one token per outer step in
// order, and a token's score in group g is reduced by penalty_weight times
// the number of earlier groups' beams that chose the same token at the same
// position during this step. penalty_weight = 0 collapses every group to
// vanilla beam search.
inline std::vector<GenSequence> diverse_beam_search(
    const LanguageModel& lm, const std::vector<TokenId>& query, int groups,
    int b, double penalty_weight, int max_tokens,
    const TokenSet& punct_tokens = {}) {
  if (groups < 2) throw std::invalid_argument("need at least 2 groups");
  if (b < 1) throw std::invalid_argument("beam size must be >= 1");

  struct Beam {
    GenSequence seq;
    double cum_logprob = 0.0;
    double penalized = 0.0;  // cumulative score including diversity penalties
  };
  std::vector<std::vector<Beam>> active(static_cast<std::size_t>(groups),
                                        {Beam{}});
  std::vector<std::vector<Beam>> done(static_cast<std::size_t>(groups));

  for (int pos = 0; pos < max_tokens; ++pos) {
    // Token choices made at this position by earlier groups, this step.
    std::map<TokenId, int> chosen_counts;
    bool any_active = false;
    for (int g = 0; g < groups; ++g) {
      auto& beams = active[static_cast<std::size_t>(g)];
      if (beams.empty()) continue;
      any_active = true;

      struct Expansion {
        std::size_t beam;
        TokenId tok;
        double tok_logprob;
        double cum_logprob;
        double penalized;
      };
      std::vector<Expansion> expansions;
      for (std::size_t bi = 0; bi < beams.size(); ++bi) {
        std::vector<TokenId> prefix = query;
        prefix.insert(prefix.end(), beams[bi].seq.tokens.begin(),
                      beams[bi].seq.tokens.end());
        const auto lp = lm.next_logprobs(prefix);
        for (std::size_t tok = 0; tok < lp.size(); ++tok) {
          if (std::isinf(lp[tok]) && lp[tok] < 0) continue;
          const auto hit = chosen_counts.find(static_cast<TokenId>(tok));
          const double penalty =
              hit == chosen_counts.end()
                  ? 0.0
                  : penalty_weight * static_cast<double>(hit->second);
          expansions.push_back(Expansion{
              bi, static_cast<TokenId>(tok), lp[tok],
              beams[bi].cum_logprob + lp[tok],
              beams[bi].penalized + lp[tok] - penalty});
        }
      }
      std::stable_sort(expansions.begin(), expansions.end(),
                       [&](const Expansion& x, const Expansion& y) {
                         if (x.penalized != y.penalized)
                           return x.penalized > y.penalized;
                         if (x.tok != y.tok) return x.tok < y.tok;
                         return beams[x.beam].seq.tokens <
                                beams[y.beam].seq.tokens;
                       });
      if (static_cast<int>(expansions.size()) > b)
        expansions.resize(static_cast<std::size_t>(b));

      std::vector<Beam> next;
      for (const auto& ex : expansions) {
        Beam nb = beams[ex.beam];
        nb.seq.push_token(ex.tok, ex.tok_logprob, punct_tokens);
        nb.cum_logprob = ex.cum_logprob;
        nb.penalized = ex.penalized;
        chosen_counts[ex.tok] += 1;
        if (ex.tok == lm.eos()) {
          nb.seq.complete = true;
          done[static_cast<std::size_t>(g)].push_back(std::move(nb));
        } else {
          next.push_back(std::move(nb));
        }
      }
      beams = std::move(next);
    }
    if (!any_active) break;
  }

  // Best finished hypothesis per group by cumulative log-probability;
  // fall back to the best active beam when nothing finished.
  std::vector<GenSequence> out;
  for (int g = 0; g < groups; ++g) {
    const auto& fin = done[static_cast<std::size_t>(g)];
    const auto& act = active[static_cast<std::size_t>(g)];
    const Beam* best = nullptr;
    for (const auto& beam : fin)
      if (!best || beam.cum_logprob > best->cum_logprob ||
          (beam.cum_logprob == best->cum_logprob &&
           beam.seq.tokens < best->seq.tokens))
        best = &beam;
    if (!best) {
      for (const auto& beam : act)
        if (!best || beam.cum_logprob > best->cum_logprob ||
            (beam.cum_logprob == best->cum_logprob &&
             beam.seq.tokens < best->seq.tokens))
          best = &beam;
    }
    out.push_back(best ? best->seq : GenSequence{});
  }
  return out;
}

// ============================================================================
// K-means and cluster-select
// ============================================================================

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<int> assignments;
};

namespace detail {
inline double sq_dist(const std::vector<double>& a,
                      const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}
}  // namespace detail

// Standard k-means with spread-out (D^2-weighted) seeding, at most
// max_iters Lloyd iterations or until centroids move less than tol.
inline KMeansResult kmeans(const std::vector<EmbeddingVec>& points, int k,
                           std::uint64_t seed, int max_iters = 100,
                           double tol = 1e-6) {
  const std::size_t n = points.size();
  if (k < 1 || static_cast<std::size_t>(k) > n)
    throw std::invalid_argument("kmeans needs 1 <= k <= n");
  Rng rng = Rng::substream(seed, {0x6B6Du});

  std::vector<std::vector<double>> centroids;
  centroids.push_back(points[rng.index(n)].components);
  std::vector<double> d2(n);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids)
        best = std::min(best, detail::sq_dist(points[i].components, c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick;
    if (total <= 0.0) {
      pick = rng.index(n);  // all points coincide with a centroid
    } else {
      const double u = rng.u01() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(points[pick].components);
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = detail::sq_dist(points[i].components, centroids[0]);
      for (int c = 1; c < k; ++c) {
        const double d = detail::sq_dist(points[i].components,
                                         centroids[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[i] = best;
    }

    const std::size_t dim = points[0].components.size();
    std::vector<std::vector<double>> next(
        static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& c = next[static_cast<std::size_t>(assign[i])];
      for (std::size_t j = 0; j < dim; ++j) c[j] += points[i].components[j];
      counts[static_cast<std::size_t>(assign[i])]++;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) {
        // Reseed an empty cluster at the point farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = detail::sq_dist(
              points[i].components,
              centroids[static_cast<std::size_t>(assign[i])]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        next[static_cast<std::size_t>(c)] = points[far].components;
        counts[static_cast<std::size_t>(c)] = 1;
      } else {
        for (auto& v : next[static_cast<std::size_t>(c)])
          v /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }

    double movement = 0.0;
    for (int c = 0; c < k; ++c)
      movement = std::max(movement,
                          std::sqrt(detail::sq_dist(
                              centroids[static_cast<std::size_t>(c)],
                              next[static_cast<std::size_t>(c)])));
    centroids = std::move(next);
    if (movement < tol) break;
  }

  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    double best_d = detail::sq_dist(points[i].components, centroids[0]);
    for (int c = 1; c < k; ++c) {
      const double d = detail::sq_dist(points[i].components,
                                       centroids[static_cast<std::size_t>(c)]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    assign[i] = best;
  }
  return KMeansResult{std::move(centroids), std::move(assign)};
}

// Embed the samples, k-means them, and return the highest-probability member
// of each cluster. When fewer than k distinct embeddings exist, returns one
// representative per distinct point and pads with the next-highest-probability
// remaining samples, so the output size is always exactly k.
inline std::vector<GenSequence> cluster_select(
    const std::vector<GenSequence>& samples, const std::vector<double>& probs,
    const Embedder& emb, int k, std::uint64_t seed) {
  if (samples.size() != probs.size())
    throw std::invalid_argument("samples and probs must align");
  if (static_cast<int>(samples.size()) < k)
    throw std::invalid_argument("need at least k samples");
  if (k < 1) throw std::invalid_argument("k must be >= 1");

  std::vector<EmbeddingVec> points;
  points.reserve(samples.size());
  for (const auto& s : samples) points.push_back(emb.embed(s.tokens));

  // Rank by probability descending, deterministic tie-break.
  auto prob_rank = [&](std::size_t a, std::size_t b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return samples[a].tokens < samples[b].tokens;
  };

  std::map<std::vector<double>, int> distinct;
  for (const auto& p : points)
    if (!distinct.count(p.components))
      distinct.emplace(p.components, static_cast<int>(distinct.size()));

  std::vector<std::size_t> reps;
  if (static_cast<int>(distinct.size()) < k) {
    // Degenerate-clusters path: one representative per distinct embedding.
    std::map<int, std::size_t> best_per_point;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const int key = distinct.at(points[i].components);
      auto it = best_per_point.find(key);
      if (it == best_per_point.end() || prob_rank(i, it->second))
        best_per_point[key] = i;
    }
    for (const auto& [key, idx] : best_per_point) reps.push_back(idx);
  } else {
    const KMeansResult km = kmeans(points, k, seed);
    std::map<int, std::size_t> best_per_cluster;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto it = best_per_cluster.find(km.assignments[i]);
      if (it == best_per_cluster.end() || prob_rank(i, it->second))
        best_per_cluster[km.assignments[i]] = i;
    }
    for (const auto& [cluster, idx] : best_per_cluster) reps.push_back(idx);
  }

  std::sort(reps.begin(), reps.end(), prob_rank);
  if (static_cast<int>(reps.size()) > k)
    reps.resize(static_cast<std::size_t>(k));

  // Pad with the next-highest-probability unused samples.
  if (static_cast<int>(reps.size()) < k) {
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (std::find(reps.begin(), reps.end(), i) == reps.end())
        rest.push_back(i);
    std::sort(rest.begin(), rest.end(), prob_rank);
    for (std::size_t i = 0; i < rest.size() &&
                            static_cast<int>(reps.size()) < k; ++i)
      reps.push_back(rest[i]);
  }

  std::vector<GenSequence> out;
  out.reserve(reps.size());
  for (std::size_t idx : reps) out.push_back(samples[idx]);
  return out;
}

}  // namespace semdid::baselines
