#pragma once

// JSON/HTTP remote-model protocol: message encodings, client backends, and
// the matching server wiring used by the bundled toy server.
//
// Protocol:
//   POST /v1/logprobs  {"prefix": [ids]}  ->  {"logprobs": [reals]}
//   POST /v1/embed     {"tokens": [ids]}  ->  {"vector":   [reals]}
// Content-type application/json; any non-200 status maps to RemoteError.

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "semdid/core.hpp"
#include "semdid/errors.hpp"
#include "semdid/models.hpp"

namespace semdid::remote {

// ============================================================================
// Protocol messages
// ============================================================================

struct LogprobsRequest {
  std::vector<TokenId> prefix;
};
struct LogprobsResponse {
  std::vector<double> logprobs;
};
struct EmbedRequest {
  std::vector<TokenId> tokens;
};
struct EmbedResponse {
  std::vector<double> vector;
};

inline std::string encode(const LogprobsRequest& r) {
  return nlohmann::json{{"prefix", r.prefix}}.dump();
}
inline std::string encode(const LogprobsResponse& r) {
  return nlohmann::json{{"logprobs", r.logprobs}}.dump();
}
inline std::string encode(const EmbedRequest& r) {
  return nlohmann::json{{"tokens", r.tokens}}.dump();
}
inline std::string encode(const EmbedResponse& r) {
  return nlohmann::json{{"vector", r.vector}}.dump();
}

namespace detail {
inline nlohmann::json parse(const std::string& body) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw RemoteError("malformed JSON body");
  return j;
}
}  // namespace detail

inline LogprobsRequest decode_logprobs_request(const std::string& body) {
  auto j = detail::parse(body);
  if (!j.contains("prefix")) throw RemoteError("missing field: prefix");
  return {j.at("prefix").get<std::vector<TokenId>>()};
}
inline LogprobsResponse decode_logprobs_response(const std::string& body) {
  auto j = detail::parse(body);
  if (!j.contains("logprobs")) throw RemoteError("missing field: logprobs");
  return {j.at("logprobs").get<std::vector<double>>()};
}
inline EmbedRequest decode_embed_request(const std::string& body) {
  auto j = detail::parse(body);
  if (!j.contains("tokens")) throw RemoteError("missing field: tokens");
  return {j.at("tokens").get<std::vector<TokenId>>()};
}
inline EmbedResponse decode_embed_response(const std::string& body) {
  auto j = detail::parse(body);
  if (!j.contains("vector")) throw RemoteError("missing field: vector");
  return {j.at("vector").get<std::vector<double>>()};
}

// ============================================================================
// Clients
// ============================================================================

namespace detail {
// One POST with the shared error mapping. httplib clients are not
// thread-safe, so calls are serialized; per-call determinism is preserved.
class HttpJsonClient {
public:
  explicit HttpJsonClient(const std::string& base_url) : cli_(base_url) {
    cli_.set_connection_timeout(5, 0);
    cli_.set_read_timeout(30, 0);
  }

  std::string post(const std::string& path, const std::string& body) {
    std::lock_guard<std::mutex> lock(mu_);
    auto res = cli_.Post(path, body, "application/json");
    if (!res)
      throw RemoteError("transport failure on " + path + ": " +
                        httplib::to_string(res.error()));
    if (res->status != 200)
      throw RemoteError("HTTP " + std::to_string(res->status) + " on " + path);
    return res->body;
  }

private:
  std::mutex mu_;
  httplib::Client cli_;
};
}  // namespace detail

// Remote language model. The protocol carries no metadata endpoint, so the
// EOS id comes from the caller and the vocabulary size is discovered from
// the first response.
class RemoteLM : public LanguageModel {
public:
  RemoteLM(const std::string& base_url, TokenId eos)
      : cli_(std::make_unique<detail::HttpJsonClient>(base_url)), eos_(eos) {}

  TokenId eos() const override { return eos_; }

  int vocab_size() const override {
    if (vocab_size_ == 0) {
      auto resp = decode_logprobs_response(
          cli_->post("/v1/logprobs", encode(LogprobsRequest{{}})));
      vocab_size_ = static_cast<int>(resp.logprobs.size());
    }
    return vocab_size_;
  }

  std::vector<double> next_logprobs(
      const std::vector<TokenId>& prefix) const override {
    for (TokenId tok : prefix)
      if (tok < 0) throw UnknownToken(tok);
    auto resp = decode_logprobs_response(
        cli_->post("/v1/logprobs", encode(LogprobsRequest{prefix})));
    if (resp.logprobs.empty()) throw RemoteError("empty logprobs vector");
    if (vocab_size_ == 0) vocab_size_ = static_cast<int>(resp.logprobs.size());
    return resp.logprobs;
  }

private:
  std::unique_ptr<detail::HttpJsonClient> cli_;
  TokenId eos_;
  mutable int vocab_size_ = 0;
};

class RemoteEmbedder : public Embedder {
public:
  explicit RemoteEmbedder(const std::string& base_url)
      : cli_(std::make_unique<detail::HttpJsonClient>(base_url)) {}

  int dim() const override {
    if (dim_ == 0) embed({});
    return dim_;
  }

  EmbeddingVec embed(const std::vector<TokenId>& tokens) const override {
    auto resp = decode_embed_response(
        cli_->post("/v1/embed", encode(EmbedRequest{tokens})));
    if (resp.vector.empty()) throw RemoteError("empty embedding vector");
    if (dim_ == 0) dim_ = static_cast<int>(resp.vector.size());
    return EmbeddingVec(std::move(resp.vector));
  }

private:
  std::unique_ptr<detail::HttpJsonClient> cli_;
  mutable int dim_ = 0;
};

// ============================================================================
// Server wiring
// ============================================================================

// Mount the protocol endpoints onto an httplib server, backed by local
// implementations. Used by the toy server tool and by tests that need a
// live endpoint.
inline void attach_backends(httplib::Server& srv, const LanguageModel& lm,
                            const Embedder& emb) {
  srv.Post("/v1/logprobs",
           [&lm](const httplib::Request& req, httplib::Response& res) {
             try {
               auto in = decode_logprobs_request(req.body);
               LogprobsResponse out{lm.next_logprobs(in.prefix)};
               res.set_content(encode(out), "application/json");
             } catch (const std::exception& e) {
               res.status = 400;
               res.set_content(nlohmann::json{{"error", e.what()}}.dump(),
                               "application/json");
             }
           });
  srv.Post("/v1/embed",
           [&emb](const httplib::Request& req, httplib::Response& res) {
             try {
               auto in = decode_embed_request(req.body);
               EmbedResponse out{emb.embed(in.tokens).components};
               res.set_content(encode(out), "application/json");
             } catch (const std::exception& e) {
               res.status = 400;
               res.set_content(nlohmann::json{{"error", e.what()}}.dump(),
                               "application/json");
             }
           });
}

}  // namespace semdid::remote
