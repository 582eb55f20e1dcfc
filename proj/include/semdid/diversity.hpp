#pragma once

// Semantic diversity machinery: the greedy group's reference direction, the
// Gram-Schmidt construction of pairwise-orthogonal group directions, the
// directional and inter-group repulsion scores, and the time schedule that
// shifts weight from guidance to repulsion.

#include <cmath>
#include <string>
#include <vector>

#include "semdid/core.hpp"
#include "semdid/errors.hpp"
#include "semdid/rng.hpp"

namespace semdid::diversity {

// Orthonormal group directions d_1..d_k; pairwise dots stay within 1e-9.
struct DirectionSet {
  std::vector<EmbeddingVec> dirs;
  int step_assigned = 0;
};

// normalize(emb_y1 - emb_q). Throws ZeroDirection when the difference has
// no usable magnitude; the engine substitutes the group-1 random vector.
inline EmbeddingVec reference_direction(const EmbeddingVec& emb_y1,
                                        const EmbeddingVec& emb_q) {
  EmbeddingVec diff = subtract(emb_y1, emb_q);
  if (norm(diff) < 1e-9) throw ZeroDirection();
  return normalized(diff);
}

// Gram-Schmidt orthogonalization of the k-1 random vectors against d_1 and
// each other. Two projection passes per vector keep the residual
// orthogonality at machine precision. A vector that collapses is resampled
// from rng (deterministically) up to 8 times before the dimension is
// declared exhausted.
inline DirectionSet orthogonal_directions(const std::vector<EmbeddingVec>& r,
                                          const EmbeddingVec& d1, Rng& rng,
                                          int step = 0) {
  const int dim = static_cast<int>(d1.dim());
  DirectionSet set;
  set.step_assigned = step;
  set.dirs.push_back(normalized(d1));
  for (std::size_t gi = 0; gi < r.size(); ++gi) {
    EmbeddingVec candidate = r[gi];
    bool placed = false;
    for (int attempt = 0; attempt < 8 && !placed; ++attempt) {
      EmbeddingVec v = candidate;
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& d : set.dirs) {
          const double proj = dot(v, d);
          for (std::size_t c = 0; c < v.components.size(); ++c)
            v.components[c] -= proj * d.components[c];
        }
      }
      const double n = norm(v);
      if (n >= 1e-6) {
        for (auto& c : v.components) c /= n;
        set.dirs.push_back(std::move(v));
        placed = true;
      } else {
        candidate = EmbeddingVec(random_unit_vector(dim, rng));
      }
    }
    if (!placed)
      throw DimensionExhausted(
          "no orthogonal direction for group " + std::to_string(gi + 2) +
          " in dimension " + std::to_string(dim));
  }
  return set;
}

// cos(emb_y - emb_q, d_g); neutral 0 when the difference vector vanishes.
inline double directional_score(const EmbeddingVec& emb_y,
                                const EmbeddingVec& emb_q,
                                const EmbeddingVec& d_g) {
  EmbeddingVec diff = subtract(emb_y, emb_q);
  const double n_diff = norm(diff);
  const double n_dir = norm(d_g);
  if (n_diff < 1e-12 || n_dir < 1e-12) return 0.0;
  const double c = dot(diff, d_g) / (n_diff * n_dir);
  return std::min(1.0, std::max(-1.0, c));
}

// -max over the other groups' best embeddings of the dot product; grows as
// the candidate moves away from every other group's region.
inline double repulsion_score(const EmbeddingVec& emb_y,
                              const std::vector<EmbeddingVec>& others) {
  if (others.empty())
    throw std::invalid_argument("repulsion_score needs at least one other");
  double max_dot = -std::numeric_limits<double>::infinity();
  for (const auto& other : others) max_dot = std::max(max_dot, dot(emb_y, other));
  return -max_dot;
}

// Guidance-to-repulsion ramp: min(1, t / T_trans).
inline double alpha(int t, int t_trans) {
  if (t < 1) throw std::invalid_argument("step t must be >= 1");
  if (t_trans < 1) throw std::invalid_argument("T_trans must be >= 1");
  return std::min(1.0, static_cast<double>(t) / static_cast<double>(t_trans));
}

// (1 - a) * s_dir_norm + a * s_rep_norm over normalized scores.
inline double diversity_combine(double s_dir_norm, double s_rep_norm,
                                double a) {
  if (s_dir_norm < 0.0 || s_dir_norm > 1.0 || s_rep_norm < 0.0 ||
      s_rep_norm > 1.0 || a < 0.0 || a > 1.0)
    throw std::invalid_argument("diversity_combine inputs must be in [0,1]");
  return (1.0 - a) * s_dir_norm + a * s_rep_norm;
}

}  // namespace semdid::diversity
