#pragma once

// Model backends: the LanguageModel / Embedder interfaces, a table-driven
// toy LM, and a deterministic bag-of-tokens embedder. Remote HTTP backends
// live in remote.hpp.
//
// Backends are pure: a fixed input always produces the same output, which
// lets the engine memoize calls freely. Implementations must be safe for
// concurrent read-only use.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "semdid/core.hpp"
#include "semdid/errors.hpp"
#include "semdid/rng.hpp"

namespace semdid {

// ============================================================================
// Interfaces
// ============================================================================

class LanguageModel {
public:
  virtual ~LanguageModel() = default;
  virtual int vocab_size() const = 0;
  virtual TokenId eos() const = 0;
  // Normalized log-distribution over the next token: logsumexp == 0.
  virtual std::vector<double> next_logprobs(
      const std::vector<TokenId>& prefix) const = 0;
};

class Embedder {
public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  // Unit-norm vector; the empty token list is allowed.
  virtual EmbeddingVec embed(const std::vector<TokenId>& tokens) const = 0;
};

// ============================================================================
// TableLM
// ============================================================================

// Explicit conditional tables keyed by the last `order` tokens of the
// prefix. Lookup tries the longest stored suffix first; unlisted contexts
// fall back to the declared default vector, or to the uniform distribution
// when the file declares none. Small enough tasks stay exhaustively
// enumerable, which is what makes brute-force oracles possible.
class TableLM : public LanguageModel {
public:
  TableLM(int vocab_size, TokenId eos, int order,
          std::map<std::vector<TokenId>, std::vector<double>> entries,
          std::optional<std::vector<double>> default_probs = std::nullopt)
      : vocab_size_(vocab_size), eos_(eos), order_(order) {
    if (vocab_size_ < 1)
      throw ConfigError("vocab_size", "must be >= 1");
    if (eos_ < 0 || eos_ >= vocab_size_)
      throw ConfigError("eos", "must be a valid token id");
    if (order_ < 0) throw ConfigError("order", "must be >= 0");
    for (auto& [ctx, probs] : entries) {
      if (static_cast<int>(ctx.size()) > order_)
        throw ConfigError("entries", "context longer than order");
      for (TokenId tok : ctx)
        if (tok < 0 || tok >= vocab_size_) throw UnknownToken(tok);
      table_.emplace(ctx, make_logprobs(probs));
    }
    if (default_probs) {
      default_ = make_logprobs(*default_probs);
    } else {
      default_ = std::vector<double>(
          static_cast<std::size_t>(vocab_size_),
          -std::log(static_cast<double>(vocab_size_)));
    }
  }

  int vocab_size() const override { return vocab_size_; }
  TokenId eos() const override { return eos_; }

  std::vector<double> next_logprobs(
      const std::vector<TokenId>& prefix) const override {
    for (TokenId tok : prefix)
      if (tok < 0 || tok >= vocab_size_) throw UnknownToken(tok);
    const int max_len =
        std::min<int>(order_, static_cast<int>(prefix.size()));
    for (int len = max_len; len >= 0; --len) {
      std::vector<TokenId> ctx(prefix.end() - len, prefix.end());
      auto it = table_.find(ctx);
      if (it != table_.end()) return it->second;
    }
    return default_;
  }

  static TableLM from_json(const nlohmann::json& j) {
    std::map<std::vector<TokenId>, std::vector<double>> entries;
    for (const auto& e : j.at("entries")) {
      entries[e.at("ctx").get<std::vector<TokenId>>()] =
          e.at("p").get<std::vector<double>>();
    }
    std::optional<std::vector<double>> def;
    if (!j.at("default").is_null())
      def = j.at("default").get<std::vector<double>>();
    return TableLM(j.at("vocab_size").get<int>(),
                   j.at("eos").get<TokenId>(), j.at("order").get<int>(),
                   std::move(entries), std::move(def));
  }

  static TableLM from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("lm_file", "cannot open " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

private:
  // Validate a stored probability vector and convert it to exact logs.
  // The raw vector must sum to 1 within 1e-9; it is then renormalized so
  // the log-distribution satisfies logsumexp == 0 to machine precision.
  std::vector<double> make_logprobs(const std::vector<double>& probs) const {
    if (static_cast<int>(probs.size()) != vocab_size_)
      throw ConfigError("entries", "probability vector length != vocab_size");
    double sum = 0.0;
    for (double p : probs) {
      if (p < 0.0) throw ConfigError("entries", "negative probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("entries", "probabilities do not sum to 1");
    std::vector<double> logs(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i)
      logs[i] = std::log(probs[i] / sum);
    return logs;
  }

  int vocab_size_;
  TokenId eos_;
  int order_;
  std::map<std::vector<TokenId>, std::vector<double>> table_;
  std::vector<double> default_;
};

// ============================================================================
// HashEmbedder
// ============================================================================

// Bag-of-tokens embedder: each token id gets a seeded unit Gaussian base
// vector and a sequence embeds to the normalized sum. Deliberately
// order-insensitive so toy-task semantics are controlled purely by token
// multisets. The empty list embeds to the normalized all-ones vector.
class HashEmbedder : public Embedder {
public:
  HashEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ < 1) throw ConfigError("embed_dim", "must be >= 1");
  }

  int dim() const override { return dim_; }

  EmbeddingVec base_vector(TokenId tok) const {
    Rng rng = Rng::substream(seed_, {0x42a5u, static_cast<std::uint64_t>(tok)});
    return EmbeddingVec(random_unit_vector(dim_, rng));
  }

  EmbeddingVec embed(const std::vector<TokenId>& tokens) const override {
    std::vector<double> sum(static_cast<std::size_t>(dim_), 0.0);
    for (TokenId tok : tokens) {
      if (tok < 0) throw UnknownToken(tok);
      EmbeddingVec base = base_vector(tok);
      for (int i = 0; i < dim_; ++i) sum[i] += base.components[i];
    }
    EmbeddingVec v(std::move(sum));
    if (tokens.empty() || norm(v) < 1e-12) {
      return normalized(
          EmbeddingVec(std::vector<double>(static_cast<std::size_t>(dim_), 1.0)));
    }
    return normalized(v);
  }

private:
  int dim_;
  std::uint64_t seed_;
};

// ============================================================================
// Call-counting wrappers
// ============================================================================

// Forward every call and count it. The engine layers its memo tables on top,
// so the counters report exact backend invocations.

class CountingLM : public LanguageModel {
public:
  explicit CountingLM(const LanguageModel& inner) : inner_(inner) {}
  int vocab_size() const override { return inner_.vocab_size(); }
  TokenId eos() const override { return inner_.eos(); }
  std::vector<double> next_logprobs(
      const std::vector<TokenId>& prefix) const override {
    ++calls_;
    return inner_.next_logprobs(prefix);
  }
  long long calls() const { return calls_; }

private:
  const LanguageModel& inner_;
  mutable long long calls_ = 0;
};

class CountingEmbedder : public Embedder {
public:
  explicit CountingEmbedder(const Embedder& inner) : inner_(inner) {}
  int dim() const override { return inner_.dim(); }
  EmbeddingVec embed(const std::vector<TokenId>& tokens) const override {
    ++calls_;
    return inner_.embed(tokens);
  }
  long long calls() const { return calls_; }

private:
  const Embedder& inner_;
  mutable long long calls_ = 0;
};

}  // namespace semdid
