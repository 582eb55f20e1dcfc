#pragma once

// Quality/diversity balancing over a candidate pool: percentile
// normalization of each score family, the hard epsilon filter, and the
// harmonic gain that rewards whichever of the two normalized objectives is
// weaker.

#include <algorithm>
#include <numeric>
#include <vector>

#include "semdid/core.hpp"
#include "semdid/diversity.hpp"
#include "semdid/errors.hpp"

namespace semdid::balance {

// Average-rank percentiles: sort ascending, ties share the mean of their
// ranks, scale to [0,1]. A singleton pool maps to 1.0. Invariant to any
// strictly increasing transform of the inputs.
inline std::vector<double> percentile_normalize(
    const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n == 0)
    throw std::invalid_argument("percentile_normalize needs a non-empty list");
  if (n == 1) return {1.0};

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return values[a] < values[b];
                   });

  std::vector<double> out(n, 0.0);
  std::size_t run_start = 0;
  while (run_start < n) {
    std::size_t run_end = run_start;
    while (run_end + 1 < n &&
           values[order[run_end + 1]] == values[order[run_start]])
      ++run_end;
    const double mean_rank =
        0.5 * (static_cast<double>(run_start) + static_cast<double>(run_end));
    for (std::size_t r = run_start; r <= run_end; ++r)
      out[order[r]] = mean_rank / static_cast<double>(n - 1);
    run_start = run_end + 1;
  }
  return out;
}

// lambda * q * d / (q + d) over nonnegative normalized surpluses; 0 when
// both vanish. Prioritizes improving the weaker factor.
inline double harmonic_gain(double q, double d, double lambda) {
  if (q < 0.0 || d < 0.0)
    throw std::invalid_argument("harmonic_gain inputs must be >= 0");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  const double sum = q + d;
  if (sum == 0.0) return 0.0;
  return lambda * q * d / sum;
}

// Score a pool: (1) reject candidates whose raw quality falls below epsilon,
// (2) percentile-normalize quality/directional/repulsion over the survivors,
// (3) combine the diversity pair under weight a, (4) harmonic-combine with
// the normalized quality. The epsilon test runs on the raw scale; survivors'
// normalized quality then serves directly as the surplus.
inline std::vector<Candidate> combine_pool(std::vector<Candidate> candidates,
                                           double epsilon, double a,
                                           double lambda) {
  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& sc = candidates[i].scores;
    if (sc.s_quality_raw < epsilon) {
      sc.rejected = true;
      sc.s_combined.reset();
      sc.s_quality_norm.reset();
      sc.s_dir_norm.reset();
      sc.s_rep_norm.reset();
      sc.s_div_norm.reset();
    } else {
      sc.rejected = false;
      survivors.push_back(i);
    }
  }
  if (survivors.empty()) throw AllRejected();

  std::vector<double> quality, dir, rep;
  quality.reserve(survivors.size());
  dir.reserve(survivors.size());
  rep.reserve(survivors.size());
  for (std::size_t i : survivors) {
    quality.push_back(candidates[i].scores.s_quality_raw);
    dir.push_back(candidates[i].scores.s_dir);
    rep.push_back(candidates[i].scores.s_rep);
  }
  const auto q_norm = percentile_normalize(quality);
  const auto dir_norm = percentile_normalize(dir);
  const auto rep_norm = percentile_normalize(rep);

  for (std::size_t s = 0; s < survivors.size(); ++s) {
    auto& sc = candidates[survivors[s]].scores;
    sc.s_quality_norm = q_norm[s];
    sc.s_dir_norm = dir_norm[s];
    sc.s_rep_norm = rep_norm[s];
    sc.s_div_norm = diversity::diversity_combine(dir_norm[s], rep_norm[s], a);
    sc.s_combined = harmonic_gain(*sc.s_quality_norm, *sc.s_div_norm, lambda);
  }
  return candidates;
}

}  // namespace semdid::balance
