#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/core/random.hpp"
#include "scino/data/dataset.hpp"
#include "scino/diffcore/hyperdual.hpp"
#include "scino/diffcore/tape.hpp"
#include "scino/net/network.hpp"

namespace scino {

/// Discrete variance-preserving schedule; steps are 1-based.
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alpha_bars;

  static NoiseSchedule linear(std::size_t steps = 100, double beta_min = 1e-4, double beta_max = 0.02) {
    if (steps < 1) throw ConfigError("NoiseSchedule: at least one step required");
    NoiseSchedule s;
    double ab = 1.0;
    for (std::size_t t = 0; t < steps; ++t) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(steps - 1);
      const double b = beta_min + (beta_max - beta_min) * frac;
      ab *= 1.0 - b;
      s.betas.push_back(b);
      s.alpha_bars.push_back(ab);
    }
    s.validate();
    return s;
  }

  std::size_t steps() const noexcept { return betas.size(); }

  double alpha_bar(std::size_t t) const {
    if (t < 1 || t > steps()) throw std::out_of_range("NoiseSchedule: step out of range");
    return alpha_bars[t - 1];
  }

  /// Network time input for step t.
  double time_of(std::size_t t) const { return static_cast<double>(t) / static_cast<double>(steps()); }

  void validate() const {
    if (betas.size() != alpha_bars.size() || betas.empty()) throw ConfigError("NoiseSchedule: malformed");
    for (std::size_t t = 0; t < betas.size(); ++t) {
      if (!(betas[t] > 0.0 && betas[t] < 1.0)) throw ConfigError("NoiseSchedule: beta outside (0,1)");
      if (t > 0 && !(alpha_bars[t] < alpha_bars[t - 1])) throw ConfigError("NoiseSchedule: alpha_bar not decreasing");
    }
  }
};

/// sqrt(ab_t)·x0 + sqrt(1 − ab_t)·eps.
inline std::vector<double> perturb(const NoiseSchedule& s, std::span<const double> x0, std::size_t t,
                                   std::span<const double> eps) {
  if (x0.size() != eps.size()) throw std::invalid_argument("perturb: size mismatch");
  const double ab = s.alpha_bar(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool standardize = true;
  double ema_decay = 0.999;  // 0 disables weight averaging
  std::size_t steps = 100;
  std::size_t eval_step = 30;

  void validate() const {
    if (epochs < 1) throw ConfigError("TrainConfig: epochs >= 1 required");
    if (batch_size < 2) throw ConfigError("TrainConfig: batch_size >= 2 required (batch normalization)");
    if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be positive");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("TrainConfig: ema_decay must be in [0,1)");
    if (eval_step < 1 || eval_step > steps) throw ConfigError("TrainConfig: eval_step must be in [1, steps]");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},   {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
       {"beta1", c.beta1},     {"beta2", c.beta2},           {"adam_eps", c.adam_eps},
       {"seed", c.seed},       {"standardize", c.standardize}, {"ema_decay", c.ema_decay},
       {"steps", c.steps},     {"eval_step", c.eval_step}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.seed = j.value("seed", d.seed);
  c.standardize = j.value("standardize", d.standardize);
  c.ema_decay = j.value("ema_decay", d.ema_decay);
  c.steps = j.value("steps", d.steps);
  c.eval_step = j.value("eval_step", d.eval_step);
}

/// Adam over a parameter range [begin, end) of a parameter list.
class Adam {
 public:
  Adam(const std::vector<Parameter>& params, std::size_t begin, std::size_t end, double lr, double b1 = 0.9,
       double b2 = 0.999, double eps = 1e-8)
      : begin_(begin), lr_(lr), b1_(b1), b2_(b2), eps_(eps) {
    for (std::size_t i = begin; i < end; ++i) {
      m_.emplace_back(params[i].value.shape(), 0.0);
      v_.emplace_back(params[i].value.shape(), 0.0);
    }
  }

  /// grads[k] belongs to params[begin + k].
  void step(std::vector<Parameter>& params, const GradientRecord& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < m_.size(); ++k) {
      RealTensor& p = params[begin_ + k].value;
      const RealTensor& g = grads.grads[k];
      for (std::size_t e = 0; e < p.size(); ++e) {
        m_[k][e] = b1_ * m_[k][e] + (1.0 - b1_) * g[e];
        v_[k][e] = b2_ * v_[k][e] + (1.0 - b2_) * g[e] * g[e];
        p[e] -= lr_ * (m_[k][e] / c1) / (std::sqrt(v_[k][e] / c2) + eps_);
      }
    }
  }

 private:
  std::size_t begin_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<RealTensor> m_, v_;
};

/// Exponential moving average of weights with warm-up min(decay, (1+n)/(10+n)).
class WeightAverage {
 public:
  WeightAverage(const std::vector<Parameter>& params, double decay) : decay_(decay) {
    for (const auto& p : params) shadow_.push_back(p.value);
  }

  void update(const std::vector<Parameter>& params) {
    const double n = static_cast<double>(updates_++);
    const double d = std::min(decay_, (1.0 + n) / (10.0 + n));
    for (std::size_t i = 0; i < shadow_.size(); ++i)
      for (std::size_t e = 0; e < shadow_[i].size(); ++e)
        shadow_[i][e] = d * shadow_[i][e] + (1.0 - d) * params[i].value[e];
  }

  void copy_to(std::vector<Parameter>& params) const {
    for (std::size_t i = 0; i < shadow_.size(); ++i) params[i].value = shadow_[i];
  }

 private:
  double decay_;
  std::size_t updates_ = 0;
  std::vector<RealTensor> shadow_;
};

/// Network plus everything needed to turn its noise prediction into the
/// data score in raw units.
struct TrainedScoreModel {
  ScinoNetwork network;
  NoiseSchedule schedule;
  ColumnStats stats;
  std::size_t t_eval = 1;
  std::vector<double> lte_eval;  // LTE at t_eval, cached

  void refresh() {
    network.set_mode(Mode::eval);
    lte_eval = network.lte_encode(schedule.time_of(t_eval));
  }

  std::size_t dim() const noexcept { return network.hyper().D; }
  double sigma_eval() const { return std::sqrt(1.0 - schedule.alpha_bar(t_eval)); }

  /// −ε̂(t_eval, (x − μ)/s) / (sqrt(1 − ab) · s), per coordinate.
  template <class T>
  std::vector<T> score(std::span<const T> x, KinkMonitor* mon = nullptr) const {
    const std::size_t d = dim();
    if (x.size() != d) throw DataError("score: input has " + std::to_string(x.size()) + " coordinates, model expects " + std::to_string(d));
    std::vector<T> z(d);
    for (std::size_t i = 0; i < d; ++i) z[i] = (x[i] - stats.mean[i]) * (1.0 / stats.std[i]);
    std::vector<T> e = network.forward<T>(std::span<const T>(z), std::span<const double>(lte_eval), mon);
    const double sig = sigma_eval();
    for (std::size_t i = 0; i < d; ++i) e[i] = e[i] * (-1.0 / (sig * stats.std[i]));
    return e;
  }

  std::vector<double> score_at(std::span<const double> x) const { return score<double>(x); }

  HyperDualResult score_hyperdual(std::span<const double> x, std::size_t dir_a, std::size_t dir_b) const {
    return hyperdual_eval([&](std::span<const HyperDuald> xs) { return score<HyperDuald>(xs); }, x, dir_a, dir_b);
  }

  nlohmann::json to_json() const {
    return {{"format", "scino.v1"},
            {"network", network.to_json()},
            {"betas", schedule.betas},
            {"mean", stats.mean},
            {"std", stats.std},
            {"t_eval", t_eval}};
  }

  static TrainedScoreModel from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != "scino.v1") throw DataError("model checkpoint: unsupported format");
    TrainedScoreModel m;
    m.network = ScinoNetwork::from_json(j.at("network"));
    const auto betas = j.at("betas").get<std::vector<double>>();
    m.schedule.betas = betas;
    double ab = 1.0;
    for (double b : betas) m.schedule.alpha_bars.push_back(ab *= 1.0 - b);
    m.schedule.validate();
    m.stats.mean = j.at("mean").get<std::vector<double>>();
    m.stats.std = j.at("std").get<std::vector<double>>();
    m.t_eval = j.at("t_eval").get<std::size_t>();
    if (m.stats.mean.size() != m.dim() || m.stats.std.size() != m.dim()) throw DataError("model checkpoint: stats width mismatch");
    if (m.t_eval < 1 || m.t_eval > m.schedule.steps()) throw DataError("model checkpoint: t_eval out of range");
    m.refresh();
    return m;
  }
};

struct EpochLoss {
  std::size_t epoch;
  double loss;
};

struct TrainResult {
  TrainedScoreModel model;
  std::vector<EpochLoss> log;
};

inline void write_loss_csv(std::ostream& out, const std::vector<EpochLoss>& log) {
  out << "epoch,loss\n" << std::setprecision(17);
  for (const auto& e : log) out << e.epoch << "," << e.loss << "\n";
}

/// Thrown when a batch produces a non-finite loss or gradient; carries the
/// model as of the last completed epoch.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, TrainResult last_good)
      : NumericError(what), last_good_(std::move(last_good)) {}
  const TrainResult& last_good() const noexcept { return last_good_; }

 private:
  TrainResult last_good_;
};

/// Denoising training with ε-prediction: minimizes the batch mean of
/// Σ_d (ε − ε̂(t/T, x_t))² over uniformly drawn steps t.
inline TrainResult train(const RealTensor& data, const HyperParams& hp_in, const TrainConfig& cfg) {
  cfg.validate();
  require_finite(data, "train");
  const std::size_t n = data.rows(), d = data.cols();
  if (n < cfg.batch_size) throw DataError("train: N (" + std::to_string(n) + ") smaller than batch size");
  HyperParams hp = hp_in;
  hp.D = d;

  TrainedScoreModel model;
  model.schedule = NoiseSchedule::linear(cfg.steps);
  model.stats = cfg.standardize ? ColumnStats::of(data) : ColumnStats::identity(d);
  model.t_eval = cfg.eval_step;
  model.network = ScinoNetwork(hp, cfg.seed);
  model.network.set_mode(Mode::train);
  const RealTensor z = model.stats.apply(data);

  ScinoNetwork& net = model.network;
  Adam opt(net.parameters(), 0, net.parameters().size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  std::optional<WeightAverage> ema;
  if (cfg.ema_decay > 0.0) ema.emplace(net.parameters(), cfg.ema_decay);

  Rng order_rng = make_rng(cfg.seed, "batch");
  Rng noise_rng = make_rng(cfg.seed, "noise");
  Rng drop_rng = make_rng(cfg.seed, "dropout");
  std::uniform_int_distribution<std::size_t> step_dist(1, cfg.steps);

  auto snapshot = [&](const std::vector<EpochLoss>& log) {
    TrainResult r{model, log};
    if (ema) ema->copy_to(r.model.network.parameters());
    r.model.refresh();
    return r;
  };

  std::vector<EpochLoss> log;
  TrainResult last_good = snapshot(log);
  std::vector<std::size_t> perm(n);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), order_rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 1 < n; start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, n - start);
      if (b < 2) continue;
      RealTensor xt = RealTensor::matrix(b, d), eps = RealTensor::matrix(b, d);
      std::vector<double> times(b);
      for (std::size_t r = 0; r < b; ++r) {
        const std::size_t t = step_dist(noise_rng);
        times[r] = model.schedule.time_of(t);
        const double ab = model.schedule.alpha_bar(t);
        const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
        for (std::size_t c = 0; c < d; ++c) {
          eps(r, c) = standard_normal(noise_rng);
          xt(r, c) = sa * z(perm[start + r], c) + sb * eps(r, c);
        }
      }
      Tape tape;
      GradientRecord grads = GradientRecord::zeros_like(net.parameter_ptrs());
      double loss = 0.0;
      try {
        const auto out = net.forward_tape(tape, xt, times, &drop_rng);
        Var l = tape.weighted_squared_error(out.out, eps, std::vector<double>(d, 1.0));
        loss = tape.value(l)[0];
        tape.backward(l);
        tape.accumulate_into(grads);
        if (!grads.all_finite()) throw NumericError("non-finite gradient");
        net.update_running_stats(out.moments, b);
      } catch (const NumericError& ex) {
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ": " + ex.what(), last_good);
      }
      opt.step(net.parameters(), grads);
      if (ema) ema->update(net.parameters());
      total += loss;
      ++batches;
    }
    log.push_back({epoch, total / static_cast<double>(std::max<std::size_t>(1, batches))});
    if (epoch == cfg.epochs) break;
    last_good = snapshot(log);
  }
  return snapshot(log);
}

inline TrainResult train(const Dataset& ds, const HyperParams& hp, const TrainConfig& cfg) {
  return train(ds.values, hp, cfg);
}

}  // namespace scino
