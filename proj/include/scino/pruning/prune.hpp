#pragma once

#include <json.hpp>

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/data/dag.hpp"
#include "scino/data/dataset.hpp"

namespace scino {

struct PruneConfig {
  std::size_t basis_degree = 3;
  double alpha = 0.001;

  void validate() const {
    if (basis_degree < 1) throw ConfigError("PruneConfig: basis_degree must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("PruneConfig: alpha must lie in (0, 1)");
  }
};

inline void to_json(nlohmann::json& j, const PruneConfig& c) { j = {{"basis_degree", c.basis_degree}, {"alpha", c.alpha}}; }

inline void from_json(const nlohmann::json& j, PruneConfig& c) {
  const PruneConfig d;
  c.basis_degree = j.value("basis_degree", d.basis_degree);
  c.alpha = j.value("alpha", d.alpha);
}

using PruneWarning = std::function<void(const std::string&)>;

namespace detail {

struct LeastSquares {
  double rss = 0.0;
  Eigen::Index rank = 0;
};

inline LeastSquares least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  const Eigen::VectorXd beta = qr.solve(y);
  return {(y - a * beta).squaredNorm(), qr.rank()};
}

// Columns x, x^2, ..., x^degree of the standardized predictor.
inline void fill_basis(Eigen::MatrixXd& a, Eigen::Index first, const Eigen::VectorXd& x, std::size_t degree) {
  const double mu = x.mean();
  const double sd = std::sqrt((x.array() - mu).square().sum() / std::max<double>(1.0, static_cast<double>(x.size() - 1)));
  const Eigen::VectorXd z = sd > 0.0 ? Eigen::VectorXd((x.array() - mu) / sd) : Eigen::VectorXd(x.array() - mu);
  Eigen::VectorXd p = Eigen::VectorXd::Ones(x.size());
  for (std::size_t k = 0; k < degree; ++k) {
    p = p.cwiseProduct(z);
    a.col(first + static_cast<Eigen::Index>(k)) = p;
  }
}

}  // namespace detail

/// p-value of the grouped F-test that the basis block of `group` adds
/// nothing to the regression of y on all predecessor blocks.
inline std::vector<double> predecessor_pvalues(const Eigen::VectorXd& y, const std::vector<Eigen::VectorXd>& preds,
                                               const PruneConfig& cfg, const PruneWarning& warn = {}) {
  const Eigen::Index n = y.size();
  const Eigen::Index q = static_cast<Eigen::Index>(cfg.basis_degree);
  const Eigen::Index p = 1 + q * static_cast<Eigen::Index>(preds.size());
  Eigen::MatrixXd full(n, p);
  full.col(0).setOnes();
  for (std::size_t k = 0; k < preds.size(); ++k) detail::fill_basis(full, 1 + q * static_cast<Eigen::Index>(k), preds[k], cfg.basis_degree);
  const detail::LeastSquares f = detail::least_squares(full, y);
  if (f.rank < p && warn) warn("prune: rank-deficient design (" + std::to_string(f.rank) + " of " + std::to_string(p) + " columns kept)");
  const double df_res = static_cast<double>(n - f.rank);
  std::vector<double> out;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (df_res <= 0.0) {
      out.push_back(1.0);
      continue;
    }
    Eigen::MatrixXd reduced(n, p - q);
    const Eigen::Index b = 1 + q * static_cast<Eigen::Index>(k);
    reduced.leftCols(b) = full.leftCols(b);
    reduced.rightCols(p - b - q) = full.rightCols(p - b - q);
    const detail::LeastSquares r = detail::least_squares(reduced, y);
    const double df_num = static_cast<double>(f.rank - r.rank);
    if (df_num <= 0.0 || !(f.rss > 0.0)) {
      out.push_back(df_num <= 0.0 ? 1.0 : 0.0);
      continue;
    }
    const double stat = std::max(0.0, (r.rss - f.rss) / df_num / (f.rss / df_res));
    boost::math::fisher_f dist(df_num, df_res);
    out.push_back(boost::math::cdf(boost::math::complement(dist, stat)));
  }
  return out;
}

/// Keeps i -> j iff i precedes j in `topo` and its basis block is significant
/// at level alpha in the regression of x_j on all of j's predecessors.
inline Dag prune(const std::vector<std::size_t>& topo, const Dataset& ds, const PruneConfig& cfg = {}, const PruneWarning& warn = {}) {
  cfg.validate();
  const std::size_t d = ds.d(), n = ds.n();
  if (topo.size() != d) throw DataError("prune: order does not cover every column");
  std::vector<char> seen(d, 0);
  for (std::size_t v : topo) {
    if (v >= d || seen[v]) throw DataError("prune: order is not a permutation");
    seen[v] = 1;
  }
  Dag g(ds.names);
  std::vector<Eigen::VectorXd> cols;
  for (std::size_t c = 0; c < d; ++c) cols.push_back(Eigen::Map<const Eigen::VectorXd>(ds.column(c).data(), static_cast<Eigen::Index>(n)));
  for (std::size_t pos = 1; pos < d; ++pos) {
    const std::size_t j = topo[pos];
    std::vector<Eigen::VectorXd> preds;
    for (std::size_t k = 0; k < pos; ++k) preds.push_back(cols[topo[k]]);
    const std::vector<double> pv = predecessor_pvalues(cols[j], preds, cfg, warn);
    for (std::size_t k = 0; k < pos; ++k)
      if (pv[k] < cfg.alpha) g.add_edge(topo[k], j);
  }
  return g;
}

}  // namespace scino
