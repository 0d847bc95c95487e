#pragma once

#include <json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/diffcore/tensor.hpp"

namespace scino {

struct SteinConfig {
  std::optional<double> bandwidth;  // unset: median pairwise distance
  double eta = 0.01;

  void validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("SteinConfig: eta must be > 0");
    if (bandwidth && !(*bandwidth > 0.0 && std::isfinite(*bandwidth))) throw ConfigError("SteinConfig: bandwidth must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const SteinConfig& c) {
  j = {{"eta", c.eta}, {"bandwidth", c.bandwidth ? nlohmann::json(*c.bandwidth) : nlohmann::json(nullptr)}};
}

inline void from_json(const nlohmann::json& j, SteinConfig& c) {
  c = SteinConfig{};
  c.eta = j.value("eta", c.eta);
  if (j.contains("bandwidth") && !j.at("bandwidth").is_null()) c.bandwidth = j.at("bandwidth").get<double>();
}

/// Records the largest kernel matrix ever assembled.
struct KernelMonitor {
  std::size_t peak_rows = 0;
  std::size_t assemblies = 0;

  void observe(std::size_t rows) {
    peak_rows = std::max(peak_rows, rows);
    ++assemblies;
  }
};

struct SteinEstimates {
  RealTensor score;         // N×D
  RealTensor hessian_diag;  // N×D
};

namespace detail {

using SteinMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline SteinMatrix to_matrix(const RealTensor& x) {
  if (x.rank() != 2) throw DataError("Stein: samples must be N×D");
  return Eigen::Map<const SteinMatrix>(x.data().data(), static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols()));
}

inline RealTensor to_tensor(const SteinMatrix& m) {
  RealTensor t = RealTensor::matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  Eigen::Map<SteinMatrix>(t.data().data(), m.rows(), m.cols()) = m;
  return t;
}

inline double median_pairwise_distance(const SteinMatrix& x) {
  std::vector<double> d;
  const Eigen::Index n = x.rows();
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((x.row(i) - x.row(j)).norm());
  auto mid = d.begin() + static_cast<long>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double m = *mid;
  if (d.size() % 2 == 0) m = 0.5 * (m + *std::max_element(d.begin(), mid));
  return m;
}

struct SteinSystem {
  Eigen::MatrixXd k;
  double ell = 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt;
};

inline SteinSystem stein_system(const SteinMatrix& x, const SteinConfig& cfg, KernelMonitor* mon) {
  cfg.validate();
  const Eigen::Index n = x.rows();
  if (n < 2) throw DataError("Stein: at least two samples required");
  if (!x.allFinite()) throw DataError("Stein: non-finite sample");
  SteinSystem s;
  s.ell = cfg.bandwidth ? *cfg.bandwidth : median_pairwise_distance(x);
  if (!(s.ell > 0.0)) throw DataError("Stein: samples are not distinct (zero median distance)");
  if (mon) mon->observe(static_cast<std::size_t>(n));
  s.k.resize(n, n);
  const double inv = 1.0 / (2.0 * s.ell * s.ell);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.k(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) s.k(i, j) = s.k(j, i) = std::exp(-(x.row(i) - x.row(j)).squaredNorm() * inv);
  }
  Eigen::MatrixXd a = s.k;
  a.diagonal().array() += cfg.eta;
  if (!a.isApprox(a.transpose(), 0.0)) throw NumericError("Stein: kernel system is not symmetric");
  s.llt.compute(a);
  if (s.llt.info() != Eigen::Success)
    throw NumericError("Stein: kernel system K + eta*I is not positive definite; increase eta (currently " + std::to_string(cfg.eta) + ")");
  return s;
}

// <grad K>_{i,d} = sum_j K_ij (x_id - x_jd) / ell^2
inline Eigen::MatrixXd kernel_gradient_sum(const SteinMatrix& x, const SteinSystem& s) {
  const Eigen::MatrixXd kx = s.k * x;
  const Eigen::VectorXd rs = s.k.rowwise().sum();
  return (rs.asDiagonal() * x - kx) / (s.ell * s.ell);
}

// sum_j K_ij ((x_id - x_jd)^2 / ell^4 - 1 / ell^2)
inline Eigen::MatrixXd kernel_curvature_sum(const SteinMatrix& x, const SteinSystem& s) {
  const double l2 = s.ell * s.ell, l4 = l2 * l2;
  const Eigen::VectorXd rs = s.k.rowwise().sum();
  const SteinMatrix x2 = x.array().square().matrix();
  const Eigen::MatrixXd kx = s.k * x, kx2 = s.k * x2;
  // sum_j K_ij (x_i - x_j)^2 = x_i^2 rs_i - 2 x_i (Kx)_i + (Kx^2)_i
  const Eigen::MatrixXd sq = (rs.asDiagonal() * x2).array() - 2.0 * x.array() * kx.array() + kx2.array();
  return sq / l4 - (rs / l2).replicate(1, x.cols());
}

}  // namespace detail

/// Joint first- and second-order Stein estimates at the sample points.
inline SteinEstimates stein_estimate(const RealTensor& samples, const SteinConfig& cfg = {}, KernelMonitor* mon = nullptr) {
  const detail::SteinMatrix x = detail::to_matrix(samples);
  const detail::SteinSystem s = detail::stein_system(x, cfg, mon);
  const Eigen::MatrixXd g = -s.llt.solve(detail::kernel_gradient_sum(x, s));
  const Eigen::MatrixXd h = -g.array().square().matrix() + s.llt.solve(detail::kernel_curvature_sum(x, s));
  return {detail::to_tensor(g), detail::to_tensor(h)};
}

/// G = -(K + eta I)^-1 <grad K>.
inline RealTensor stein_score(const RealTensor& samples, const SteinConfig& cfg = {}, KernelMonitor* mon = nullptr) {
  const detail::SteinMatrix x = detail::to_matrix(samples);
  const detail::SteinSystem s = detail::stein_system(x, cfg, mon);
  return detail::to_tensor(-s.llt.solve(detail::kernel_gradient_sum(x, s)));
}

/// diag H = -G^2 + (K + eta I)^-1 <grad^2 K>.
inline RealTensor stein_hessian_diag(const RealTensor& samples, const SteinConfig& cfg = {}, KernelMonitor* mon = nullptr) {
  return stein_estimate(samples, cfg, mon).hessian_diag;
}

}  // namespace scino
