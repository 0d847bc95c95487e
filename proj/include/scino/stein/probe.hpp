#pragma once

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/core/random.hpp"
#include "scino/diffusion/train.hpp"
#include "scino/stein/stein.hpp"

namespace scino {

/// Head-only refit against minibatch Stein targets. `steps` counts optimizer
/// steps, so cost is independent of N.
struct ProbeConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 256;
  double learning_rate = 1e-4;        // refining a trained head
  double fresh_learning_rate = 1e-3;  // fitting a re-drawn head
  std::uint64_t seed = 0;
  SteinConfig stein;

  void validate() const {
    if (steps == 0) throw ConfigError("ProbeConfig: steps must be >= 1");
    if (batch_size < 2) throw ConfigError("ProbeConfig: batch_size must be >= 2");
    if (!(learning_rate > 0.0) || !(fresh_learning_rate > 0.0)) throw ConfigError("ProbeConfig: learning rates must be > 0");
    stein.validate();
  }
};

inline void to_json(nlohmann::json& j, const ProbeConfig& c) {
  j = {{"steps", c.steps}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
       {"fresh_learning_rate", c.fresh_learning_rate}, {"seed", c.seed}, {"stein", c.stein}};
}

inline void from_json(const nlohmann::json& j, ProbeConfig& c) {
  const ProbeConfig d;
  c.steps = j.value("steps", d.steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.fresh_learning_rate = j.value("fresh_learning_rate", d.fresh_learning_rate);
  c.seed = j.value("seed", d.seed);
  c.stein = j.value("stein", d.stein);
}

/// Freezes everything but MLP_final and fits the model score on `subset`
/// (standardized units, at t_eval) to Stein scores of the subset columns of
/// each minibatch. With `head_index` set, the head is first re-drawn from
/// substream (seed, "head", index) so ensemble members start apart.
inline TrainedScoreModel probe_final_layer(const TrainedScoreModel& pretrained, const std::vector<std::size_t>& subset,
                                           const RealTensor& data, const ProbeConfig& cfg, KernelMonitor* mon = nullptr,
                                           std::optional<std::uint64_t> head_index = std::nullopt) {
  cfg.validate();
  const std::size_t d = pretrained.dim();
  if (subset.empty()) throw ConfigError("probe_final_layer: empty column subset");
  for (std::size_t c : subset)
    if (c >= d) throw ConfigError("probe_final_layer: subset column " + std::to_string(c) + " out of range");
  if (data.rank() != 2 || data.cols() != d) throw DataError("probe_final_layer: data width does not match model");
  const std::size_t n = data.rows();
  if (n < 2) throw DataError("probe_final_layer: at least two rows required");

  TrainedScoreModel model = pretrained;
  ScinoNetwork& net = model.network;
  if (head_index) net.reinitialize_head(cfg.seed, *head_index);
  model.refresh();
  const std::size_t hb = net.head_begin();
  Adam opt(net.parameters(), hb, net.parameters().size(), head_index ? cfg.fresh_learning_rate : cfg.learning_rate);
  const std::vector<const Parameter*> all = net.parameter_ptrs();
  const std::vector<const Parameter*> head(all.begin() + static_cast<long>(hb), all.end());

  const double t = model.schedule.time_of(model.t_eval);
  const std::vector<double> factors(d, -1.0 / model.sigma_eval());
  std::vector<double> weights(d, 0.0);
  for (std::size_t c : subset) weights[c] = 1.0;
  const std::size_t b = std::min(cfg.batch_size, n);
  Rng rng = make_rng(cfg.seed, "probe", head_index.value_or(0));

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const std::vector<std::size_t> rows = sample_without_replacement(rng, n, b);
    RealTensor z = RealTensor::matrix(b, d), zs = RealTensor::matrix(b, subset.size());
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t c = 0; c < d; ++c) z(r, c) = (data(rows[r], c) - model.stats.mean[c]) / model.stats.std[c];
      for (std::size_t k = 0; k < subset.size(); ++k) zs(r, k) = z(r, subset[k]);
    }
    const RealTensor g = stein_score(zs, cfg.stein, mon);
    RealTensor target = RealTensor::matrix(b, d);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t k = 0; k < subset.size(); ++k) target(r, subset[k]) = g(r, k);

    Tape tape;
    const Var out = tape.scale_columns(net.head_tape(tape, net.trunk_batch(z, t)), factors);
    const Var loss = tape.weighted_squared_error(out, target, weights);
    tape.backward(loss);
    GradientRecord grads = GradientRecord::zeros_like(head);
    tape.accumulate_into(grads);
    if (!grads.all_finite()) throw NumericError("probe_final_layer: non-finite gradient at step " + std::to_string(step + 1));
    opt.step(net.parameters(), grads);
  }
  model.refresh();
  return model;
}

}  // namespace scino
