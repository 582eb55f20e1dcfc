#pragma once

// Quality scoring in the log domain: position/length-debiased token
// log-probabilities with a saturation cap, sequence aggregation by
// arithmetic mean, the running epsilon threshold derived from the greedy
// baseline, and least-squares fitting of the decay rates from
// (position, distance, logprob) samples.

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "semdid/core.hpp"
#include "semdid/errors.hpp"

namespace semdid::quality {

// min(logp - beta_seq*i - beta_sent*d, tau). Positions are 1-based over
// generated tokens; d is the distance to the last sentence-ending
// punctuation. Non-increasing in both i and d, and never above tau.
inline double debias_token_logprob(double logp, int i, int d,
                                   const DecoderConfig& cfg) {
  if (logp > 0.0)
    throw std::invalid_argument("token logprob must be <= 0");
  if (i < 1) throw std::invalid_argument("position i must be >= 1");
  if (d < 0) throw std::invalid_argument("distance d must be >= 0");
  return std::min(logp - cfg.beta_seq * i - cfg.beta_sent * d, cfg.tau);
}

// Arithmetic mean of the capped debiased token log-probabilities.
inline double sequence_quality(const GenSequence& seq,
                               const DecoderConfig& cfg) {
  if (seq.empty()) throw EmptySequence();
  double sum = 0.0;
  for (std::size_t idx = 0; idx < seq.size(); ++idx) {
    sum += debias_token_logprob(seq.token_logprobs[idx],
                                static_cast<int>(idx) + 1,
                                seq.punct_distances[idx], cfg);
  }
  return sum / static_cast<double>(seq.size());
}

// ============================================================================
// Epsilon threshold
// ============================================================================

// Running quality floor: epsilon = min over greedy steps of the greedy
// partial-sequence quality, relaxed by ln(gamma). Scores are log-domain, so
// the multiplicative relaxation becomes additive.
struct QualityThreshold {
  double greedy_min = std::numeric_limits<double>::infinity();
  double epsilon = std::numeric_limits<double>::infinity();
};

inline QualityThreshold update_epsilon(const QualityThreshold& th,
                                       double greedy_step_quality,
                                       const DecoderConfig& cfg) {
  QualityThreshold out;
  out.greedy_min = std::min(th.greedy_min, greedy_step_quality);
  out.epsilon = out.greedy_min + std::log(cfg.gamma);
  return out;
}

// ============================================================================
// Bias-parameter fitting
// ============================================================================

struct BiasSample {
  int i = 0;       // sequence position, 1-based
  int d = 0;       // distance to previous punctuation
  double logp = 0; // observed token log-probability
};

// Least-squares plane fit logp ~ c - beta_seq*i - beta_sent*d, solved via
// the 3x3 normal equations. Estimates are clamped at 0 from below.
inline std::pair<double, double> fit_bias_params(
    const std::vector<BiasSample>& samples) {
  if (samples.size() < 10)
    throw std::invalid_argument("need at least 10 samples");

  // Normal equations for design matrix columns [1, -i, -d].
  long double a00 = 0, a01 = 0, a02 = 0, a11 = 0, a12 = 0, a22 = 0;
  long double b0 = 0, b1 = 0, b2 = 0;
  for (const auto& s : samples) {
    const long double x1 = -static_cast<long double>(s.i);
    const long double x2 = -static_cast<long double>(s.d);
    a00 += 1;
    a01 += x1;
    a02 += x2;
    a11 += x1 * x1;
    a12 += x1 * x2;
    a22 += x2 * x2;
    b0 += s.logp;
    b1 += x1 * s.logp;
    b2 += x2 * s.logp;
  }
  long double a[3][4] = {{a00, a01, a02, b0},
                         {a01, a11, a12, b1},
                         {a02, a12, a22, b2}};

  // Gaussian elimination with partial pivoting; a pivot collapsing to ~0
  // relative to the matrix scale means the design matrix is rank-deficient
  // (e.g. every sample shares one position).
  long double scale = 0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) scale = std::max(scale, std::abs(a[r][c]));
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-12L * scale)
      throw DegenerateFit("design matrix is rank-deficient");
    if (pivot != col)
      for (int c = col; c < 4; ++c) std::swap(a[pivot][c], a[col][c]);
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const long double f = a[r][col] / a[col][col];
      for (int c = col; c < 4; ++c) a[r][c] -= f * a[col][c];
    }
  }
  const double beta_seq = static_cast<double>(a[1][3] / a[1][1]);
  const double beta_sent = static_cast<double>(a[2][3] / a[2][2]);
  return {std::max(0.0, beta_seq), std::max(0.0, beta_sent)};
}

// CSV of columns i,d,logp with a header row.
inline std::vector<BiasSample> read_bias_samples_csv(std::istream& in) {
  std::vector<BiasSample> samples;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("i,", 0) == 0) continue;  // header
    }
    std::istringstream ss(line);
    std::string cell;
    BiasSample s;
    if (!std::getline(ss, cell, ',')) continue;
    s.i = std::stoi(cell);
    if (!std::getline(ss, cell, ',')) continue;
    s.d = std::stoi(cell);
    if (!std::getline(ss, cell, ',')) continue;
    s.logp = std::stod(cell);
    samples.push_back(s);
  }
  return samples;
}

inline std::vector<BiasSample> read_bias_samples_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("samples", "cannot open " + path);
  return read_bias_samples_csv(in);
}

inline void write_bias_samples_csv(std::ostream& out,
                                   const std::vector<BiasSample>& samples) {
  out << "i,d,logp\n";
  char buf[64];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", s.i, s.d, s.logp);
    out << buf;
  }
}

}  // namespace semdid::quality
