#pragma once

// Error types shared across the library. Every named failure mode is a
// distinct exception so callers (and the CLI exit-code mapping) can tell
// them apart without string matching.

#include <stdexcept>
#include <string>

namespace semdid {

// Invalid DecoderConfig; `field` names the offending entry.
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error("config error [" + field + "]: " + what),
        field_(std::move(field)) {}
  const std::string& field() const { return field_; }

private:
  std::string field_;
};

class EmptySequence : public std::runtime_error {
public:
  EmptySequence() : std::runtime_error("sequence is empty") {}
};

// Bias-parameter fit has a rank-deficient design matrix.
class DegenerateFit : public std::runtime_error {
public:
  explicit DegenerateFit(const std::string& what) : std::runtime_error(what) {}
};

// Reference direction undefined: answer and query embeddings coincide.
class ZeroDirection : public std::runtime_error {
public:
  ZeroDirection() : std::runtime_error("zero-norm direction vector") {}
};

// Gram-Schmidt cannot produce another orthogonal direction in this dimension.
class DimensionExhausted : public std::runtime_error {
public:
  explicit DimensionExhausted(const std::string& what)
      : std::runtime_error(what) {}
};

// Every candidate in a pool fell below the quality threshold.
class AllRejected : public std::runtime_error {
public:
  AllRejected() : std::runtime_error("all candidates rejected by epsilon filter") {}
};

// Transport or decoding failure talking to a remote backend.
class RemoteError : public std::runtime_error {
public:
  explicit RemoteError(const std::string& what) : std::runtime_error(what) {}
};

class UnknownToken : public std::runtime_error {
public:
  explicit UnknownToken(long long id)
      : std::runtime_error("token id out of range: " + std::to_string(id)) {}
};

// Enumeration exceeded the sequence budget.
class BudgetExceeded : public std::runtime_error {
public:
  explicit BudgetExceeded(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace semdid
