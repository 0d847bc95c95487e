#pragma once

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/diffcore/tensor.hpp"

namespace scino {

/// Per-member spreads sigma_i^(m) of the Hessian diagonal over the remaining
/// nodes, with the rank and confidence-interval summaries derived from them.
struct EnsembleStats {
  std::vector<std::size_t> nodes;
  RealTensor sigmas;                  // M×k
  std::vector<std::vector<std::size_t>> ranks;  // M×k, 1-based
  std::vector<double> average_rank;
  std::vector<double> mean_sq, sd_sq;  // across members, of sigma^2
  std::vector<std::size_t> member_min;  // column index of each member's minimizer
  std::size_t global_min = 0;           // column index minimizing mean sigma^2

  std::size_t members() const { return sigmas.rows(); }
  std::size_t size() const { return nodes.size(); }

  static EnsembleStats from_sigmas(std::vector<std::size_t> nodes, RealTensor sigmas) {
    if (sigmas.rank() != 2 || sigmas.cols() != nodes.size()) throw std::invalid_argument("EnsembleStats: shape mismatch");
    if (sigmas.rows() == 0 || nodes.empty()) throw ConfigError("EnsembleStats: need at least one member and one node");
    require_finite(sigmas, "EnsembleStats");
    EnsembleStats s;
    s.nodes = std::move(nodes);
    s.sigmas = std::move(sigmas);
    const std::size_t m = s.sigmas.rows(), k = s.nodes.size();
    s.average_rank.assign(k, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      std::vector<std::size_t> idx(k);
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.sigmas(r, a) < s.sigmas(r, b); });
      std::vector<std::size_t> rank(k);
      for (std::size_t p = 0; p < k; ++p) rank[idx[p]] = p + 1;
      for (std::size_t c = 0; c < k; ++c) s.average_rank[c] += static_cast<double>(rank[c]) / static_cast<double>(m);
      s.ranks.push_back(std::move(rank));
      s.member_min.push_back(idx.front());
    }
    s.mean_sq.assign(k, 0.0);
    s.sd_sq.assign(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t r = 0; r < m; ++r) s.mean_sq[c] += s.sigmas(r, c) * s.sigmas(r, c) / static_cast<double>(m);
      if (m > 1) {
        double v = 0.0;
        for (std::size_t r = 0; r < m; ++r) v += std::pow(s.sigmas(r, c) * s.sigmas(r, c) - s.mean_sq[c], 2);
        s.sd_sq[c] = std::sqrt(v / static_cast<double>(m - 1));
      }
    }
    s.global_min = static_cast<std::size_t>(std::min_element(s.mean_sq.begin(), s.mean_sq.end()) - s.mean_sq.begin());
    return s;
  }

  /// Two-sided normal interval on the member mean of sigma^2.
  std::pair<double, double> interval(std::size_t c, double confidence) const {
    if (members() < 2) throw ConfigError("confidence interval needs at least two ensemble members");
    if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
    const double z = boost::math::quantile(boost::math::normal(), 0.5 + confidence / 2.0);
    const double half = z * sd_sq[c] / std::sqrt(static_cast<double>(members()));
    return {mean_sq[c] - half, mean_sq[c] + half};
  }
};

/// P(i) proportional to exp(-average rank of i).
inline std::vector<double> rank_evidence(const EnsembleStats& s) {
  const double lo = *std::min_element(s.average_rank.begin(), s.average_rank.end());
  std::vector<double> p;
  double z = 0.0;
  for (double r : s.average_rank) z += p.emplace_back(std::exp(-(r - lo)));
  for (double& v : p) v /= z;
  return p;
}

/// P(i) = fraction of members m with CI_lower(i) <= CI_upper(j_min^(m)).
inline std::vector<double> ci_evidence(const EnsembleStats& s, double confidence = 0.95) {
  const std::size_t k = s.size(), m = s.members();
  std::vector<std::pair<double, double>> ci;
  for (std::size_t c = 0; c < k; ++c) ci.push_back(s.interval(c, confidence));
  std::vector<double> p(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t r = 0; r < m; ++r)
      if (ci[c].first <= ci[s.member_min[r]].second) p[c] += 1.0;
    p[c] /= static_cast<double>(m);
  }
  return p;
}

/// exp(sum(log p) / n^alpha) for a candidate spelled with n tokens.
inline double length_normalized_prior(std::span<const double> token_logprobs, double alpha) {
  if (token_logprobs.empty()) throw DataError("length_normalized_prior: empty token list");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("length_normalized_prior: alpha must lie in (0, 1]");
  double s = 0.0;
  for (double lp : token_logprobs) {
    if (std::isnan(lp) || lp > 0.0) throw DataError("length_normalized_prior: token log-probability must be <= 0");
    s += lp;
  }
  return std::exp(s / std::pow(static_cast<double>(token_logprobs.size()), alpha));
}

/// softmax(evidence^tau).
inline std::vector<double> temperature_soften(std::span<const double> evidence, double tau) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ConfigError("temperature_soften: tau must be >= 0");
  if (evidence.empty()) return {};
  std::vector<double> e;
  for (double v : evidence) e.push_back(tau == 0.0 ? 1.0 : std::pow(v, tau));
  const double hi = *std::max_element(e.begin(), e.end());
  double z = 0.0;
  for (double& v : e) z += (v = std::exp(v - hi));
  for (double& v : e) v /= z;
  return e;
}

}  // namespace scino
