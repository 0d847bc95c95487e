#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/diffcore/hyperdual.hpp"
#include "scino/diffusion/train.hpp"

namespace scino {

/// Sign s in front of the residue sum. `paper` is +1 as printed; `corrected`
/// is -1, which carries the inner derivative of the noise term.
enum class ResidueSign { paper, corrected };

inline double sign_value(ResidueSign s) { return s == ResidueSign::paper ? 1.0 : -1.0; }

inline constexpr double kDegenerateDenominator = 1e-8;

/// Every derivative of the score at one point that the residue formulas need.
/// jac(j, l) = d_j S_l; curv(j, l) = d_j d_j S_l; mixed(j, l) = d_j d_l S_l.
struct DerivativeCache {
  std::size_t d = 0;
  std::vector<double> value;
  std::vector<double> jac, curv, mixed;
  bool has_mixed = false;

  double J(std::size_t j, std::size_t l) const { return jac[j * d + l]; }
  double C2(std::size_t j, std::size_t l) const { return curv[j * d + l]; }
  double M(std::size_t j, std::size_t l) const {
    if (!has_mixed) throw std::logic_error("DerivativeCache: mixed derivatives were not computed");
    return mixed[j * d + l];
  }
};

/// `eval(x, a, b)` returns the hyper-dual evaluation of the score along
/// (e_a, e_b). D passes with (e_j, e_j) and, when `with_mixed`, one pass per
/// unordered pair (e_j, e_l).
template <class Eval>
DerivativeCache build_derivative_cache(Eval&& eval, std::span<const double> x, bool with_mixed = true) {
  const std::size_t d = x.size();
  DerivativeCache c;
  c.d = d;
  c.jac.assign(d * d, 0.0);
  c.curv.assign(d * d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const HyperDualResult r = eval(x, j, j);
    if (r.value.size() != d) throw DataError("derivative cache: score width does not match input");
    if (j == 0) c.value = r.value;
    for (std::size_t l = 0; l < d; ++l) {
      c.jac[j * d + l] = r.d_a[l];
      c.curv[j * d + l] = r.d_ab[l];
    }
  }
  if (with_mixed) {
    c.mixed.assign(d * d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      c.mixed[j * d + j] = c.curv[j * d + j];
      for (std::size_t l = j + 1; l < d; ++l) {
        const HyperDualResult r = eval(x, j, l);
        c.mixed[j * d + l] = r.d_ab[l];
        c.mixed[l * d + j] = r.d_ab[j];
      }
    }
    c.has_mixed = true;
  }
  return c;
}

inline DerivativeCache build_derivative_cache(const TrainedScoreModel& model, std::span<const double> x, bool with_mixed = true) {
  return build_derivative_cache(
      [&](std::span<const double> p, std::size_t a, std::size_t b) { return model.score_hyperdual(p, a, b); }, x, with_mixed);
}

inline std::vector<std::size_t> remaining_nodes(std::size_t d, const std::vector<std::size_t>& removed) {
  std::vector<char> gone(d, 0);
  for (std::size_t l : removed) {
    if (l >= d) throw std::out_of_range("removed node out of range");
    if (gone[l]) throw std::invalid_argument("removed node listed twice");
    gone[l] = 1;
  }
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < d; ++j)
    if (!gone[j]) out.push_back(j);
  if (out.empty()) throw std::invalid_argument("every node is removed");
  return out;
}

namespace detail {

inline double residue_denominator(const DerivativeCache& c, std::size_t l) {
  const double den = c.J(l, l);
  if (!(std::abs(den) >= kDegenerateDenominator))
    throw NumericError("deciduous residue: degenerate denominator d_l S_l for node " + std::to_string(l));
  return den;
}

}  // namespace detail

/// S_j(x_{-removed}) = S_j + s * sum_l d_j S_l * S_l / d_l S_l, per remaining j.
inline std::vector<double> deciduous_score(const DerivativeCache& c, const std::vector<std::size_t>& removed, ResidueSign sign) {
  const std::vector<std::size_t> rem = remaining_nodes(c.d, removed);
  const double s = sign_value(sign);
  std::vector<double> out;
  for (std::size_t j : rem) {
    double v = c.value[j];
    for (std::size_t l : removed) v += s * c.J(j, l) * c.value[l] / detail::residue_denominator(c, l);
    out.push_back(v);
  }
  return out;
}

/// d_j of the deciduous score, per remaining j (quotient rule on each residue).
inline std::vector<double> deciduous_hessian_diag(const DerivativeCache& c, const std::vector<std::size_t>& removed,
                                                  ResidueSign sign) {
  const std::vector<std::size_t> rem = remaining_nodes(c.d, removed);
  const double s = sign_value(sign);
  std::vector<double> out;
  for (std::size_t j : rem) {
    double v = c.J(j, j);
    for (std::size_t l : removed) {
      const double a = c.J(j, l), den = detail::residue_denominator(c, l), sl = c.value[l];
      v += s * (c.C2(j, l) * sl / den + a * a / den - a * sl * c.M(j, l) / (den * den));
    }
    out.push_back(v);
  }
  return out;
}

inline std::vector<double> deciduous_score(const TrainedScoreModel& model, std::span<const double> x,
                                           const std::vector<std::size_t>& removed, ResidueSign sign) {
  return deciduous_score(build_derivative_cache(model, x, false), removed, sign);
}

inline std::vector<double> deciduous_hessian_diag(const TrainedScoreModel& model, std::span<const double> x,
                                                  const std::vector<std::size_t>& removed, ResidueSign sign) {
  return deciduous_hessian_diag(build_derivative_cache(model, x, !removed.empty()), removed, sign);
}

}  // namespace scino
