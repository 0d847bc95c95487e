#pragma once

#include <httplib.h>
// <resolv.h> defines _res, which collides with Eigen parameter names.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include <cstdlib>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/ensemble/evidence.hpp"

namespace scino {

/// What a prior provider sees at one selection step.
struct PriorRequest {
  std::size_t step = 0;
  std::vector<std::string> remaining;  // candidate names, in node order
  std::vector<std::string> chosen;     // leaves already removed, in order
};

/// Nonnegative weight per remaining candidate; need not be normalized.
class PriorProvider {
 public:
  virtual ~PriorProvider() = default;
  virtual std::string kind() const = 0;
  virtual std::vector<double> prior(const PriorRequest& req) = 0;
};

class UniformPrior final : public PriorProvider {
 public:
  std::string kind() const override { return "uniform"; }
  std::vector<double> prior(const PriorRequest& req) override { return std::vector<double>(req.remaining.size(), 1.0); }
};

/// Precomputed per-step weights keyed by candidate name; names absent from
/// a step's table get weight 0.
class TablePrior final : public PriorProvider {
 public:
  explicit TablePrior(std::vector<std::map<std::string, double>> steps) : steps_(std::move(steps)) {
    for (const auto& s : steps_)
      for (const auto& [name, w] : s)
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("table prior: weight for '" + name + "' must be finite and >= 0");
  }

  static TablePrior from_json(const nlohmann::json& j) {
    try {
      return TablePrior(j.at("steps").get<std::vector<std::map<std::string, double>>>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("table prior: ") + e.what());
    }
  }

  std::string kind() const override { return "table"; }

  std::vector<double> prior(const PriorRequest& req) override {
    if (req.step >= steps_.size()) throw ConfigError("table prior: no entry for step " + std::to_string(req.step));
    std::vector<double> out;
    for (const auto& n : req.remaining) {
      const auto it = steps_[req.step].find(n);
      out.push_back(it == steps_[req.step].end() ? 0.0 : it->second);
    }
    return out;
  }

 private:
  std::vector<std::map<std::string, double>> steps_;
};

inline constexpr const char* kCandidatePrefix = "node_";
inline constexpr const char* kPriorUrlEnv = "SCINO_PRIOR_URL";
inline constexpr const char* kPriorTokenEnv = "SCINO_PRIOR_TOKEN";

struct RemotePriorConfig {
  std::string url;    // http://host[:port]/path
  std::string token;  // sent as a bearer token when non-empty
  double timeout_seconds = 30.0;
  double alpha = 1.0;  // length-normalization exponent

  /// Endpoint and token from the environment.
  static RemotePriorConfig from_env() {
    RemotePriorConfig c;
    if (const char* u = std::getenv(kPriorUrlEnv)) c.url = u;
    if (const char* t = std::getenv(kPriorTokenEnv)) c.token = t;
    return c;
  }
};

/// Builds the question sent with the candidate list.
inline std::string leaf_prompt(const PriorRequest& req) {
  std::string p = "Variables: ";
  for (std::size_t i = 0; i < req.remaining.size(); ++i) p += (i ? ", " : "") + std::string(kCandidatePrefix) + req.remaining[i];
  p += ". ";
  if (!req.chosen.empty()) {
    p += "Already identified as effects (latest last): ";
    for (std::size_t i = 0; i < req.chosen.size(); ++i) p += (i ? ", " : "") + std::string(kCandidatePrefix) + req.chosen[i];
    p += ". ";
  }
  p += "Which variable is not a cause of any other listed variable? Answer: ";
  return p;
}

/// Token-logprob endpoint. Request {"prompt", "candidates"}; response
/// {"candidates": [{"name", "token_logprobs": [...]}, ...]}.
class RemotePrior final : public PriorProvider {
 public:
  explicit RemotePrior(RemotePriorConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.url.empty()) throw ConfigError(std::string("remote prior: endpoint URL not set (") + kPriorUrlEnv + ")");
    if (!(cfg_.timeout_seconds > 0.0)) throw ConfigError("remote prior: timeout must be > 0");
    if (!(cfg_.alpha > 0.0 && cfg_.alpha <= 1.0)) throw ConfigError("remote prior: alpha must lie in (0, 1]");
    const auto scheme_end = cfg_.url.find("://");
    const auto path_start = cfg_.url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    base_ = path_start == std::string::npos ? cfg_.url : cfg_.url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : cfg_.url.substr(path_start);
  }

  std::string kind() const override { return "remote"; }

  std::vector<double> prior(const PriorRequest& req) override {
    nlohmann::json body = {{"prompt", leaf_prompt(req)}, {"candidates", nlohmann::json::array()}};
    for (const auto& n : req.remaining) body["candidates"].push_back(kCandidatePrefix + n);

    httplib::Client cli(base_);
    const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
    const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!cfg_.token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.token);
    const auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw ProviderError("remote prior: request failed (" + httplib::to_string(res.error()) + ")");
    if (res->status != 200) throw ProviderError("remote prior: HTTP status " + std::to_string(res->status));

    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("remote prior: malformed response: ") + e.what());
    }
    responses_.push_back({{"step", req.step}, {"request", body}, {"response", reply}});

    std::map<std::string, double> by_name;
    try {
      for (const auto& c : reply.at("candidates")) {
        const auto lps = c.at("token_logprobs").get<std::vector<double>>();
        by_name[c.at("name").get<std::string>()] = length_normalized_prior(lps, cfg_.alpha);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("remote prior: unexpected response shape: ") + e.what());
    } catch (const DataError& e) {
      throw ProviderError(std::string("remote prior: ") + e.what());
    }
    std::vector<double> out;
    for (const auto& n : req.remaining) {
      const auto it = by_name.find(kCandidatePrefix + n);
      if (it == by_name.end()) throw ProviderError("remote prior: response lacks candidate " + std::string(kCandidatePrefix) + n);
      out.push_back(it->second);
    }
    return out;
  }

  /// Raw request/response pairs, kept for replay.
  const std::vector<nlohmann::json>& responses() const noexcept { return responses_; }

 private:
  RemotePriorConfig cfg_;
  std::string base_, path_;
  std::vector<nlohmann::json> responses_;
};

}  // namespace scino
