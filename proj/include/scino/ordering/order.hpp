#pragma once

#include <json.hpp>

#include <cstddef>
#include <algorithm>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/data/dataset.hpp"
#include "scino/diffusion/train.hpp"
#include "scino/ordering/deciduous.hpp"
#include "scino/stein/probe.hpp"
#include "scino/stein/stein.hpp"

namespace scino {

enum class Criterion { min_variance, max_mean };
enum class Strategy { deciduous, drop_column };
enum class Backend { diffusion, stein, probed };

NLOHMANN_JSON_SERIALIZE_ENUM(Criterion, {{Criterion::min_variance, "min-variance"}, {Criterion::max_mean, "max-mean"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Strategy, {{Strategy::deciduous, "deciduous"}, {Strategy::drop_column, "drop-column"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Backend, {{Backend::diffusion, "diffusion"}, {Backend::stein, "stein"}, {Backend::probed, "probed"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ResidueSign, {{ResidueSign::paper, "paper"}, {ResidueSign::corrected, "corrected"}})

struct OrderingConfig {
  Criterion criterion = Criterion::min_variance;
  Strategy strategy = Strategy::deciduous;
  Backend backend = Backend::diffusion;
  ResidueSign residue_sign = ResidueSign::corrected;
  std::size_t eval_samples = 0;  // rows used for the statistics; 0 = all
  std::uint64_t seed = 0;
  std::optional<HyperParams> hyper;  // unset: HyperParams::desk(D)
  TrainConfig train;
  ProbeConfig probe;
  SteinConfig stein;

  void validate() const {
    if (strategy == Strategy::deciduous && backend != Backend::diffusion)
      throw ConfigError("OrderingConfig: the deciduous strategy needs the diffusion backend (second derivatives)");
    train.validate();
    probe.validate();
    stein.validate();
    if (hyper) hyper->validate();
  }
};

inline void to_json(nlohmann::json& j, const OrderingConfig& c) {
  j = {{"criterion", c.criterion}, {"strategy", c.strategy},  {"backend", c.backend}, {"residue_sign", c.residue_sign},
       {"eval_samples", c.eval_samples}, {"seed", c.seed}, {"train", c.train}, {"probe", c.probe}, {"stein", c.stein}};
  j["hyper"] = c.hyper ? nlohmann::json(*c.hyper) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, OrderingConfig& c) {
  const OrderingConfig d;
  c.criterion = j.value("criterion", d.criterion);
  c.strategy = j.value("strategy", d.strategy);
  c.backend = j.value("backend", d.backend);
  c.residue_sign = j.value("residue_sign", d.residue_sign);
  c.eval_samples = j.value("eval_samples", d.eval_samples);
  c.seed = j.value("seed", d.seed);
  c.train = j.value("train", d.train);
  c.probe = j.value("probe", d.probe);
  c.stein = j.value("stein", d.stein);
  c.hyper.reset();
  if (j.contains("hyper") && !j.at("hyper").is_null()) c.hyper = j.at("hyper").get<HyperParams>();
}

/// Per-step estimates of the Hessian diagonal for the remaining nodes.
struct HessianDiagTable {
  std::size_t step = 0;
  std::vector<std::size_t> nodes;
  RealTensor estimates;  // rows × |nodes|
  std::vector<double> variance, mean;

  static HessianDiagTable from(std::size_t step, std::vector<std::size_t> nodes, RealTensor estimates) {
    if (estimates.rank() != 2 || estimates.cols() != nodes.size()) throw std::invalid_argument("HessianDiagTable: shape mismatch");
    HessianDiagTable t{step, std::move(nodes), std::move(estimates), {}, {}};
    t.summarize();
    return t;
  }

  /// Sample mean and variance (N - 1 denominator) per node.
  void summarize() {
    const std::size_t n = estimates.rows(), k = nodes.size();
    mean.assign(k, 0.0);
    variance.assign(k, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < k; ++c) mean[c] += estimates(r, c);
    for (double& m : mean) m /= static_cast<double>(std::max<std::size_t>(n, 1));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < k; ++c) variance[c] += (estimates(r, c) - mean[c]) * (estimates(r, c) - mean[c]);
    for (double& v : variance) v = n > 1 ? v / static_cast<double>(n - 1) : 0.0;
  }
};

/// Leaf-removal sequence; the topological order is its reverse.
struct CausalOrder {
  std::vector<std::size_t> removal;

  std::vector<std::size_t> topological() const { return {removal.rbegin(), removal.rend()}; }

  static CausalOrder from_topological(const std::vector<std::size_t>& topo) { return {{topo.rbegin(), topo.rend()}}; }

  void validate(std::size_t d) const {
    if (removal.size() != d) throw DataError("CausalOrder: length " + std::to_string(removal.size()) + " != " + std::to_string(d));
    std::vector<char> seen(d, 0);
    for (std::size_t v : removal) {
      if (v >= d || seen[v]) throw DataError("CausalOrder: not a permutation");
      seen[v] = 1;
    }
  }
};

/// argmin variance or argmax mean; ties go to the smallest node id.
inline std::size_t select_leaf(const HessianDiagTable& t, Criterion c) {
  if (t.nodes.empty()) throw std::invalid_argument("select_leaf: no remaining nodes");
  std::size_t best = 0;
  for (std::size_t k = 1; k < t.nodes.size(); ++k) {
    const bool better = c == Criterion::min_variance ? t.variance[k] < t.variance[best] : t.mean[k] > t.mean[best];
    const bool tie = c == Criterion::min_variance ? t.variance[k] == t.variance[best] : t.mean[k] == t.mean[best];
    if (better || (tie && t.nodes[k] < t.nodes[best])) best = k;
  }
  return t.nodes[best];
}

/// Step log: one row per remaining node per step.
inline void write_step_log(std::ostream& out, const std::vector<HessianDiagTable>& tables, const std::vector<std::string>& names) {
  out << "step,node,variance,mean\n" << std::setprecision(17);
  for (const auto& t : tables)
    for (std::size_t k = 0; k < t.nodes.size(); ++k) out << t.step << "," << names.at(t.nodes[k]) << "," << t.variance[k] << "," << t.mean[k] << "\n";
}

struct OrderingResult {
  CausalOrder order;
  std::vector<HessianDiagTable> tables;
  std::optional<TrainedScoreModel> model;  // the full-D model when one was trained or supplied
};

/// Row indices used for the ordering statistics.
inline std::vector<std::size_t> evaluation_rows(std::size_t n, std::size_t cap, std::uint64_t seed) {
  if (cap == 0 || cap >= n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  Rng rng = make_rng(seed, "eval");
  std::vector<std::size_t> rows = sample_without_replacement(rng, n, cap);
  std::sort(rows.begin(), rows.end());
  return rows;
}

/// Derivative caches of one model at the given rows.
inline std::vector<DerivativeCache> derivative_caches(const TrainedScoreModel& model, const RealTensor& x,
                                                      const std::vector<std::size_t>& rows, bool with_mixed) {
  std::vector<DerivativeCache> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(build_derivative_cache(model, x.row(r), with_mixed));
  return out;
}

inline HessianDiagTable deciduous_table(const std::vector<DerivativeCache>& caches, const std::vector<std::size_t>& removed,
                                        ResidueSign sign, std::size_t step) {
  if (caches.empty()) throw DataError("deciduous_table: no evaluation rows");
  std::vector<std::size_t> rem = remaining_nodes(caches.front().d, removed);
  RealTensor est = RealTensor::matrix(caches.size(), rem.size());
  for (std::size_t r = 0; r < caches.size(); ++r) {
    const std::vector<double> v = deciduous_hessian_diag(caches[r], removed, sign);
    std::copy(v.begin(), v.end(), est.row(r).begin());
  }
  return HessianDiagTable::from(step, std::move(rem), std::move(est));
}

/// d_j S_j of a model for each j in `nodes`, at the given rows.
inline RealTensor model_hessian_diag(const TrainedScoreModel& model, const RealTensor& x, const std::vector<std::size_t>& rows,
                                     const std::vector<std::size_t>& nodes, const std::vector<std::size_t>& input_cols) {
  RealTensor est = RealTensor::matrix(rows.size(), nodes.size());
  std::vector<double> p(input_cols.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < input_cols.size(); ++c) p[c] = x(rows[r], input_cols[c]);
    for (std::size_t k = 0; k < nodes.size(); ++k) est(r, k) = model.score_hyperdual(p, nodes[k], nodes[k]).d_a[nodes[k]];
  }
  return est;
}

inline TrainedScoreModel train_model(const RealTensor& x, const OrderingConfig& cfg) {
  const HyperParams hp = cfg.hyper ? *cfg.hyper : HyperParams::desk(x.cols());
  HyperParams h = hp;
  h.D = x.cols();
  return train(x, h, cfg.train).model;
}

namespace detail {

inline RealTensor select_columns(const RealTensor& x, const std::vector<std::size_t>& cols) {
  RealTensor out = RealTensor::matrix(x.rows(), cols.size());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t k = 0; k < cols.size(); ++k) out(r, k) = x(r, cols[k]);
  return out;
}

inline RealTensor select_rows(const RealTensor& x, const std::vector<std::size_t>& rows) {
  RealTensor out = RealTensor::matrix(rows.size(), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(x.row(rows[r]).begin(), x.row(rows[r]).end(), out.row(r).begin());
  return out;
}

}  // namespace detail

/// Recovers a causal order by D - 1 leaf selections. `model`, when given,
/// replaces the initial training for the diffusion and probed backends.
inline OrderingResult order_all(const Dataset& ds, const OrderingConfig& cfg, const TrainedScoreModel* model = nullptr) {
  cfg.validate();
  ds.validate();
  const std::size_t d = ds.d();
  if (d < 2) throw DataError("order_all: at least two columns required");
  const RealTensor& x = ds.values;
  const std::vector<std::size_t> rows = evaluation_rows(ds.n(), cfg.eval_samples, cfg.seed);
  if (rows.size() < 2) throw DataError("order_all: at least two rows required");
  if (model && model->dim() != d) throw DataError("order_all: model expects " + std::to_string(model->dim()) + " columns, data has " + std::to_string(d));

  OrderingResult res;
  const bool needs_model = cfg.backend == Backend::probed || (cfg.backend == Backend::diffusion && cfg.strategy == Strategy::deciduous);
  if (needs_model) res.model = model ? *model : train_model(x, cfg);

  std::vector<DerivativeCache> caches;
  if (cfg.strategy == Strategy::deciduous) caches = derivative_caches(*res.model, x, rows, true);

  std::vector<std::size_t> removed;
  for (std::size_t step = 0; step + 1 < d; ++step) {
    const std::vector<std::size_t> rem = remaining_nodes(d, removed);
    HessianDiagTable table;
    try {
      if (cfg.strategy == Strategy::deciduous) {
        table = deciduous_table(caches, removed, cfg.residue_sign, step);
      } else if (cfg.backend == Backend::stein) {
        const RealTensor sub = detail::select_columns(detail::select_rows(x, rows), rem);
        table = HessianDiagTable::from(step, rem, stein_hessian_diag(sub, cfg.stein));
      } else if (cfg.backend == Backend::diffusion) {
        const RealTensor sub = detail::select_columns(x, rem);
        const TrainedScoreModel m = step == 0 && model ? *model : train_model(sub, cfg);
        std::vector<std::size_t> local(rem.size());
        for (std::size_t k = 0; k < rem.size(); ++k) local[k] = k;
        RealTensor est = model_hessian_diag(m, sub, rows, local, local);
        table = HessianDiagTable::from(step, rem, std::move(est));
      } else {
        ProbeConfig pc = cfg.probe;
        pc.seed = cfg.probe.seed + step;
        const TrainedScoreModel m = probe_final_layer(*res.model, rem, x, pc);
        std::vector<std::size_t> all(d);
        for (std::size_t k = 0; k < d; ++k) all[k] = k;
        table = HessianDiagTable::from(step, rem, model_hessian_diag(m, x, rows, rem, all));
      }
    } catch (const Error& e) {
      rethrow_with_context(e, "order_all: step " + std::to_string(step));
    }
    const std::size_t leaf = select_leaf(table, cfg.criterion);
    res.tables.push_back(std::move(table));
    removed.push_back(leaf);
  }
  removed.push_back(remaining_nodes(d, removed).front());
  res.order.removal = removed;
  return res;
}

}  // namespace scino
