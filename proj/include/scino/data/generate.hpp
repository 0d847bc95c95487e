#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/core/random.hpp"
#include "scino/data/dag.hpp"
#include "scino/data/dataset.hpp"

namespace scino {

struct GenConfig {
  std::size_t D = 5;
  std::optional<double> expected_edges;  // default 4·D
  std::size_t N = 1000;
  double noise_std = 1.0;
  std::uint64_t seed = 0;

  double edge_probability() const {
    const double pairs = static_cast<double>(D) * static_cast<double>(D - 1) / 2.0;
    const double e = expected_edges.value_or(4.0 * static_cast<double>(D));
    return pairs > 0 ? std::min(1.0, e / pairs) : 0.0;
  }
};

inline std::vector<std::string> default_names(std::size_t d) {
  std::vector<std::string> n;
  for (std::size_t i = 0; i < d; ++i) n.push_back("x" + std::to_string(i + 1));
  return n;
}

/// Erdős–Rényi DAG: every forward pair of a random permutation is an edge
/// with probability p = min(1, expected_edges / C(D,2)).
inline Dag gen_er_dag(const GenConfig& cfg) {
  if (cfg.D < 2) throw ConfigError("gen_er_dag: D >= 2 required");
  Rng rng = make_rng(cfg.seed, "dag");
  std::vector<std::size_t> perm(cfg.D);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const double p = cfg.edge_probability();
  std::bernoulli_distribution coin(p);
  Dag g(cfg.D);
  for (std::size_t a = 0; a < cfg.D; ++a)
    for (std::size_t b = a + 1; b < cfg.D; ++b)
      if (coin(rng)) g.add_edge(perm[a], perm[b]);
  return g;
}

namespace detail {

inline std::vector<double> normal_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& e : v) e = scale * standard_normal(rng);
  return v;
}

// One joint draw f ~ N(0, K) at the rows of P (N×k) with RBF bandwidth 1.
inline std::vector<double> gp_draw(const Eigen::MatrixXd& parents, Rng& rng) {
  const Eigen::Index n = parents.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d2 = (parents.row(i) - parents.row(j)).squaredNorm();
      k(i, j) = k(j, i) = std::exp(-0.5 * d2);
    }
  }
  const std::vector<double> z = normal_vector(rng, static_cast<std::size_t>(n));
  for (double jitter : {1e-8, 1e-6}) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() == Eigen::Success) {
      const Eigen::VectorXd f = llt.matrixL() * Eigen::Map<const Eigen::VectorXd>(z.data(), n);
      return std::vector<double>(f.data(), f.data() + n);
    }
  }
  throw NumericError("sample_gp_anm: Cholesky failed even with increased jitter");
}

}  // namespace detail

/// Additive noise model with GP mechanisms realized jointly at the observed
/// parent values: x_i = f_i(pa_i) + σ z, roots x_i = σ z.
inline Dataset sample_gp_anm(const Dag& g, const GenConfig& cfg) {
  g.validate();
  Rng rng = make_rng(cfg.seed, "data");
  const std::size_t n = cfg.N, d = g.size();
  RealTensor x = RealTensor::matrix(n, d);
  for (std::size_t i : g.topological_order()) {
    const std::vector<double> z = detail::normal_vector(rng, n, cfg.noise_std);
    const std::vector<std::size_t> pa = g.parents(i);
    std::vector<double> f(n, 0.0);
    if (!pa.empty() && n > 0) {
      Eigen::MatrixXd p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pa.size()));
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < pa.size(); ++k) p(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = x(r, pa[k]);
      f = detail::gp_draw(p, rng);
    }
    for (std::size_t r = 0; r < n; ++r) x(r, i) = f[r] + z[r];
  }
  return Dataset(g.names(), std::move(x));
}

/// Sign-symmetric uniform weight: ±U(low, high).
inline double signed_uniform(Rng& rng, double low, double high) {
  const double w = uniform(rng, low, high);
  return std::bernoulli_distribution(0.5)(rng) ? w : -w;
}

struct LinearSem {
  Dag graph;
  std::vector<double> weights;  // D×D row-major, weights[i*D+j] for i -> j
};

inline Dataset sample_linear_anm(const LinearSem& sem, const GenConfig& cfg) {
  const Dag& g = sem.graph;
  g.validate();
  const std::size_t n = cfg.N, d = g.size();
  if (sem.weights.size() != d * d) throw ConfigError("sample_linear_anm: weight matrix must be D×D");
  Rng rng = make_rng(cfg.seed, "data");
  RealTensor x = RealTensor::matrix(n, d);
  for (std::size_t i : g.topological_order()) {
    const std::vector<double> z = detail::normal_vector(rng, n, cfg.noise_std);
    const std::vector<std::size_t> pa = g.parents(i);
    for (std::size_t r = 0; r < n; ++r) {
      double v = z[r];
      for (std::size_t p : pa) v += sem.weights[p * d + i] * x(r, p);
      x(r, i) = v;
    }
  }
  return Dataset(g.names(), std::move(x));
}

inline Dataset sample_linear_anm(const Dag& g, double weight_low, double weight_high, const GenConfig& cfg) {
  if (!(weight_low >= 0.0 && weight_low <= weight_high)) throw ConfigError("sample_linear_anm: need 0 <= low <= high");
  Rng rng = make_rng(cfg.seed, "weights");
  LinearSem sem{g, std::vector<double>(g.size() * g.size(), 0.0)};
  for (auto [i, j] : g.edges()) sem.weights[i * g.size() + j] = signed_uniform(rng, weight_low, weight_high);
  return sample_linear_anm(sem, cfg);
}

/// Seven-node water-evaporation graph.
inline Dag physics_dag() {
  Dag g(std::vector<std::string>{"TSI", "SAT", "WS", "ER", "RNFL", "MC", "Wgt"});
  enum { TSI, SAT, WS, ER, RNFL, MC, Wgt };
  const std::pair<int, int> e[] = {{TSI, SAT}, {TSI, ER}, {TSI, WS}, {SAT, ER}, {WS, SAT},
                                   {WS, ER},   {ER, RNFL}, {ER, MC},  {RNFL, MC}, {MC, Wgt}};
  for (auto [a, b] : e) g.add_edge(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  return g;
}

struct PhysicsSample {
  Dag graph;
  std::vector<double> weights;  // 7×7, weights[p*7+i] for p -> i
  Dataset data;
};

/// x = 2 sin(a) + a + z with a = Σ_p A_pi (x_p + 0.5), nodes in
/// topological order; edge weights ±U(0.1, 1).
inline PhysicsSample gen_physics(std::size_t n, std::uint64_t seed) {
  Dag g = physics_dag();
  const std::size_t d = g.size();
  Rng wrng = make_rng(seed, "weights");
  std::vector<double> a(d * d, 0.0);
  for (auto [i, j] : g.edges()) a[i * d + j] = signed_uniform(wrng, 0.1, 1.0);
  Rng rng = make_rng(seed, "data");
  RealTensor x = RealTensor::matrix(n, d);
  for (std::size_t i : g.topological_order()) {
    const std::vector<double> z = detail::normal_vector(rng, n);
    const std::vector<std::size_t> pa = g.parents(i);
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (std::size_t p : pa) s += a[p * d + i] * (x(r, p) + 0.5);
      x(r, i) = 2.0 * std::sin(s) + s + z[r];
    }
  }
  Dataset ds(g.names(), std::move(x));
  return PhysicsSample{std::move(g), std::move(a), std::move(ds)};
}

}  // namespace scino
