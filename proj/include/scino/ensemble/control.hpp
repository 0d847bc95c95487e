#pragma once

#include <json.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/ensemble/evidence.hpp"
#include "scino/ensemble/prior.hpp"
#include "scino/ordering/order.hpp"
#include "scino/stein/probe.hpp"

namespace scino {

enum class EvidenceKind { rank, ci };
NLOHMANN_JSON_SERIALIZE_ENUM(EvidenceKind, {{EvidenceKind::rank, "rank"}, {EvidenceKind::ci, "ci"}})

struct ControlConfig {
  EvidenceKind evidence = EvidenceKind::rank;
  std::optional<double> tau;          // unset: evidence used as is
  std::vector<std::string> context;   // names receiving soft supervision
  std::size_t members = 30;
  double confidence = 0.95;
  double alpha = 1.0;

  void validate() const {
    if (members == 0) throw ConfigError("ControlConfig: members must be >= 1");
    if (tau && !(*tau >= 0.0 && *tau <= 5.0)) throw ConfigError("ControlConfig: tau must lie in [0, 5]");
    if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("ControlConfig: confidence must lie in (0, 1)");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("ControlConfig: alpha must lie in (0, 1]");
    if (evidence == EvidenceKind::ci && members < 2) throw ConfigError("ControlConfig: CI evidence needs at least two members");
  }
};

inline void to_json(nlohmann::json& j, const ControlConfig& c) {
  j = {{"evidence", c.evidence}, {"context", c.context}, {"members", c.members}, {"confidence", c.confidence}, {"alpha", c.alpha}};
  j["tau"] = c.tau ? nlohmann::json(*c.tau) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, ControlConfig& c) {
  const ControlConfig d;
  c.evidence = j.value("evidence", d.evidence);
  c.context = j.value("context", d.context);
  c.members = j.value("members", d.members);
  c.confidence = j.value("confidence", d.confidence);
  c.alpha = j.value("alpha", d.alpha);
  c.tau.reset();
  if (j.contains("tau") && !j.at("tau").is_null()) c.tau = j.at("tau").get<double>();
}

/// M members sharing a frozen trunk; member m's head is re-drawn from
/// substream index m and probed on every column.
inline std::vector<TrainedScoreModel> probe_ensemble(const TrainedScoreModel& base, const RealTensor& data, std::size_t m,
                                                     const ProbeConfig& cfg) {
  std::vector<std::size_t> all(base.dim());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  std::vector<TrainedScoreModel> out;
  for (std::size_t i = 0; i < m; ++i) {
    try {
      out.push_back(probe_final_layer(base, all, data, cfg, nullptr, i));
    } catch (const Error& e) {
      rethrow_with_context(e, "ensemble member " + std::to_string(i));
    }
  }
  return out;
}

/// Derivative caches of every member at fixed rows, reused across steps.
class EnsembleEvidence {
 public:
  EnsembleEvidence(const std::vector<TrainedScoreModel>& members, const RealTensor& x, const std::vector<std::size_t>& rows,
                   ResidueSign sign = ResidueSign::corrected, bool with_mixed = true)
      : sign_(sign) {
    if (members.empty()) throw ConfigError("ensemble: at least one member required");
    for (std::size_t m = 0; m < members.size(); ++m) {
      try {
        caches_.push_back(derivative_caches(members[m], x, rows, with_mixed));
      } catch (const Error& e) {
        rethrow_with_context(e, "ensemble member " + std::to_string(m));
      }
    }
  }

  std::size_t members() const noexcept { return caches_.size(); }

  /// Hessian-diagonal table of one member after removing `removed`.
  HessianDiagTable table(std::size_t member, const std::vector<std::size_t>& removed, std::size_t step = 0) const {
    return deciduous_table(caches_.at(member), removed, sign_, step);
  }

  /// sigma_i^(m): sample standard deviation of member m's estimates of node i.
  EnsembleStats stats(const std::vector<std::size_t>& removed) const {
    std::vector<std::size_t> nodes;
    RealTensor sig;
    for (std::size_t m = 0; m < caches_.size(); ++m) {
      HessianDiagTable t;
      try {
        t = table(m, removed);
      } catch (const Error& e) {
        rethrow_with_context(e, "ensemble member " + std::to_string(m));
      }
      if (m == 0) {
        nodes = t.nodes;
        sig = RealTensor::matrix(caches_.size(), nodes.size());
      }
      for (std::size_t c = 0; c < nodes.size(); ++c) sig(m, c) = std::sqrt(t.variance[c]);
    }
    return EnsembleStats::from_sigmas(std::move(nodes), std::move(sig));
  }

 private:
  ResidueSign sign_;
  std::vector<std::vector<DerivativeCache>> caches_;
};

inline std::vector<double> evidence_from(const EnsembleStats& s, const ControlConfig& cfg) {
  std::vector<double> e = cfg.evidence == EvidenceKind::rank ? rank_evidence(s) : ci_evidence(s, cfg.confidence);
  if (cfg.tau) e = temperature_soften(e, *cfg.tau);
  return e;
}

struct PosteriorRow {
  std::size_t step = 0;
  std::size_t node = 0;
  double prior = 0.0, evidence = 0.0, posterior = 0.0;
  bool chosen = false;
};

struct ControlResult {
  CausalOrder order;
  std::vector<PosteriorRow> log;
  bool degraded = false;
  std::vector<std::string> warnings;
};

/// Evidence over the remaining nodes (in node order) given those removed.
using EvidenceSource = std::function<std::vector<double>(const std::vector<std::size_t>& remaining, const std::vector<std::size_t>& removed)>;

/// Per step: context nodes get prior(v)·evidence(v), the others
/// evidence(v)/|remaining|; the prior is first normalized over the remaining
/// nodes so both branches share a scale. The argmax (smallest id on ties) is
/// removed. A failing provider degrades the run to a uniform prior.
inline ControlResult control_order(const std::vector<std::string>& names, PriorProvider& provider, const EvidenceSource& evidence,
                                   const ControlConfig& cfg) {
  cfg.validate();
  const std::size_t d = names.size();
  if (d == 0) throw DataError("control_order: no variables");
  std::vector<char> in_context(d, 0);
  for (const auto& c : cfg.context) {
    const auto it = std::find(names.begin(), names.end(), c);
    if (it == names.end()) throw ConfigError("control_order: context variable '" + c + "' is not a dataset column");
    in_context[static_cast<std::size_t>(it - names.begin())] = 1;
  }

  ControlResult res;
  std::vector<std::size_t> removed;
  bool uniform_fallback = false;
  for (std::size_t step = 0; removed.size() < d; ++step) {
    const std::vector<std::size_t> rem = remaining_nodes(d, removed);
    const std::size_t k = rem.size();
    std::vector<double> ev = k == 1 ? std::vector<double>{1.0} : evidence(rem, removed);
    if (ev.size() != k) throw std::logic_error("control_order: evidence size mismatch");

    PriorRequest req{step, {}, {}};
    for (std::size_t v : rem) req.remaining.push_back(names[v]);
    for (std::size_t v : removed) req.chosen.push_back(names[v]);
    std::vector<double> pr(k, 1.0);
    if (!uniform_fallback) {
      try {
        pr = provider.prior(req);
        if (pr.size() != k) throw ProviderError("prior provider returned " + std::to_string(pr.size()) + " weights for " + std::to_string(k) + " candidates");
        for (double w : pr)
          if (!(w >= 0.0) || !std::isfinite(w)) throw ProviderError("prior provider returned an invalid weight");
      } catch (const ProviderError& e) {
        res.degraded = uniform_fallback = true;
        res.warnings.push_back(std::string("prior provider failed at step ") + std::to_string(step) + "; using a uniform prior: " + e.what());
        pr.assign(k, 1.0);
      }
    }
    double zp = 0.0;
    for (double w : pr) zp += w;
    if (!(zp > 0.0)) {
      res.warnings.push_back("prior has no mass at step " + std::to_string(step) + "; using a uniform prior");
      pr.assign(k, 1.0);
      zp = static_cast<double>(k);
    }

    std::vector<double> factor(k), post(k);
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      factor[i] = in_context[rem[i]] ? pr[i] / zp : 1.0 / static_cast<double>(k);
      z += post[i] = factor[i] * ev[i];
    }
    if (!(z > 0.0)) {
      res.warnings.push_back("posterior has no mass at step " + std::to_string(step) + "; falling back to the prior factors");
      z = 0.0;
      for (std::size_t i = 0; i < k; ++i) z += post[i] = factor[i];
    }
    std::size_t best = 0;
    for (std::size_t i = 0; i < k; ++i) {
      post[i] /= z;
      if (post[i] > post[best]) best = i;
    }
    for (std::size_t i = 0; i < k; ++i) res.log.push_back({step, rem[i], factor[i], ev[i], post[i], i == best});
    removed.push_back(rem[best]);
  }
  res.order.removal = removed;
  return res;
}

inline void write_posterior_log(std::ostream& out, const std::vector<PosteriorRow>& log, const std::vector<std::string>& names) {
  out << "step,node,prior,evidence,posterior,chosen\n" << std::setprecision(17);
  for (const auto& r : log)
    out << r.step << "," << names.at(r.node) << "," << r.prior << "," << r.evidence << "," << r.posterior << "," << (r.chosen ? 1 : 0) << "\n";
}

}  // namespace scino
