#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/core/random.hpp"
#include "scino/diffcore/fft.hpp"
#include "scino/diffcore/hyperdual.hpp"
#include "scino/diffcore/tape.hpp"
#include "scino/diffcore/tensor.hpp"

namespace scino {

struct HyperParams {
  std::size_t D = 2;
  std::size_t H = 64;
  std::size_t S = 64;
  std::size_t F = 32;
  std::size_t M_lte = 128;
  std::size_t L = 2;
  double dropout_rate = 0.2;
  // Bias on the MLP_init affine map. Without it LeakyReLU followed by layer
  // normalization makes the network blind to the scale of x.
  bool init_bias = true;
  // Test-build switches: replace LeakyReLU/GeLU by the identity, skip the
  // layer/batch normalizations.
  bool identity_activations = false;
  bool identity_normalization = false;

  /// Full-size widths: H = max(1024, 5D), S = max(128, 3D).
  static HyperParams paper(std::size_t d, bool real_data = false) {
    HyperParams hp;
    hp.D = d;
    hp.H = std::max<std::size_t>(1024, 5 * d);
    hp.S = std::max<std::size_t>(128, 3 * d);
    hp.L = real_data ? 1 : 10;
    return hp;
  }

  static HyperParams desk(std::size_t d) {
    HyperParams hp;
    hp.D = d;
    return hp;
  }

  void validate() const {
    if (D < 1 || H < 1 || S < 1 || F < 1 || M_lte < 1) throw ConfigError("HyperParams: widths must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("HyperParams: dropout_rate must be in [0,1)");
  }
};

inline void to_json(nlohmann::json& j, const HyperParams& hp) {
  j = {{"D", hp.D},
       {"H", hp.H},
       {"S", hp.S},
       {"F", hp.F},
       {"M_lte", hp.M_lte},
       {"L", hp.L},
       {"dropout_rate", hp.dropout_rate},
       {"init_bias", hp.init_bias},
       {"identity_activations", hp.identity_activations},
       {"identity_normalization", hp.identity_normalization}};
}

inline void from_json(const nlohmann::json& j, HyperParams& hp) {
  HyperParams d;
  hp.D = j.value("D", d.D);
  hp.H = j.value("H", d.H);
  hp.S = j.value("S", d.S);
  hp.F = j.value("F", d.F);
  hp.M_lte = j.value("M_lte", d.M_lte);
  hp.L = j.value("L", d.L);
  hp.dropout_rate = j.value("dropout_rate", d.dropout_rate);
  hp.init_bias = j.value("init_bias", d.init_bias);
  hp.identity_activations = j.value("identity_activations", d.identity_activations);
  hp.identity_normalization = j.value("identity_normalization", d.identity_normalization);
}

enum class Mode { train, eval };

/// Records the smallest |pre-activation| seen by any LeakyReLU during an
/// eval-mode pass.
struct KinkMonitor {
  double min_margin = std::numeric_limits<double>::infinity();
  void observe(double v) { min_margin = std::min(min_margin, std::abs(v)); }
};

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::vector<double> affine(const RealTensor& w, const RealTensor* b, std::span<const double> x) {
  std::vector<double> y(w.rows());
  Eigen::Map<Eigen::VectorXd> ym(y.data(), static_cast<Eigen::Index>(y.size()));
  ym.noalias() = Eigen::Map<const RowMatrix>(w.ptr(), w.rows(), w.cols()) *
                 Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  if (b) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += (*b)[i];
  }
  return y;
}

// A real matrix acts on each of the four hyper-dual components separately.
inline std::vector<HyperDuald> affine(const RealTensor& w, const RealTensor* b, std::span<const HyperDuald> x) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::Matrix<double, Eigen::Dynamic, 4> xc(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const HyperDuald& e = x[static_cast<std::size_t>(i)];
    xc(i, 0) = e.v;
    xc(i, 1) = e.a;
    xc(i, 2) = e.b;
    xc(i, 3) = e.ab;
  }
  const Eigen::Matrix<double, Eigen::Dynamic, 4> yc = Eigen::Map<const RowMatrix>(w.ptr(), w.rows(), w.cols()) * xc;
  std::vector<HyperDuald> y(w.rows());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    y[i] = HyperDuald(yc(r, 0) + (b ? (*b)[i] : 0.0), yc(r, 1), yc(r, 2), yc(r, 3));
  }
  return y;
}

}  // namespace detail

/// Score network: MLP_init -> L Fourier layers with learnable time encoding
/// -> MLP_final. Parameters live in one flat list in declaration order so
/// that GradientRecord slots, optimizers and checkpoints share one layout.
class ScinoNetwork {
 public:
  struct Layout {
    static constexpr std::size_t none = static_cast<std::size_t>(-1);
    std::size_t init_w = 0, init_b = none, init_ln_g = 0, init_ln_b = 0;
    std::vector<std::size_t> spec_w, spec_b, bn_g, bn_b;
    std::size_t lte_wproj = 0, lte_w1 = 0, lte_b1 = 0, lte_w2 = 0, lte_b2 = 0;
    std::size_t fin_w1 = 0, fin_b1 = 0, fin_w2 = 0, fin_b2 = 0, fin_w3 = 0, fin_b3 = 0;
  };

  struct RunningStats {
    std::vector<double> mean;
    std::vector<double> var;
  };

  ScinoNetwork() = default;

  ScinoNetwork(const HyperParams& hp, std::uint64_t seed) : hp_(hp) {
    hp_.validate();
    build_layout();
    Rng rng = make_rng(seed, "init");
    initialize(rng);
  }

  const HyperParams& hyper() const noexcept { return hp_; }
  const Layout& layout() const noexcept { return layout_; }
  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode m) noexcept { mode_ = m; }

  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  std::vector<RunningStats>& running_stats() noexcept { return running_; }
  const std::vector<RunningStats>& running_stats() const noexcept { return running_; }

  std::vector<const Parameter*> parameter_ptrs() const {
    std::vector<const Parameter*> out;
    for (const auto& p : params_) out.push_back(&p);
    return out;
  }

  /// MLP_final occupies the tail [head_begin(), size) of the parameter list.
  std::size_t head_begin() const noexcept { return layout_.fin_w1; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  // ---- eval-mode templated map (dropout off, batch norm frozen) ----

  /// Fourier features [cos(t w), sin(t w)] / sqrt(2F).
  std::vector<double> time_features(double t) const {
    const RealTensor& w = param(layout_.lte_wproj);
    const std::size_t f = w.size();
    const double norm = 1.0 / std::sqrt(2.0 * static_cast<double>(f));
    std::vector<double> phi(2 * f);
    for (std::size_t k = 0; k < f; ++k) {
      phi[k] = std::cos(t * w[k]) * norm;
      phi[f + k] = std::sin(t * w[k]) * norm;
    }
    return phi;
  }

  std::vector<double> lte_encode(double t) const {
    if (!std::isfinite(t)) throw DataError("lte_encode: non-finite time");
    const std::vector<double> phi = time_features(t);
    std::vector<double> u = detail::affine(param(layout_.lte_w1), &param(layout_.lte_b1), phi);
    for (double& v : u) v = act_gelu(v);
    return detail::affine(param(layout_.lte_w2), &param(layout_.lte_b2), u);
  }

  template <class T>
  std::vector<T> trunk(std::span<const T> x, std::span<const double> lte, KinkMonitor* mon = nullptr) const {
    if (x.size() != hp_.D) throw std::invalid_argument("ScinoNetwork: input width mismatch");
    const std::size_t h_dim = hp_.H;
    std::vector<T> h = detail::affine(param(layout_.init_w), init_bias_ptr(), x);
    for (T& v : h) v = act_leaky(v, mon);
    if (!hp_.identity_normalization) layer_norm_row(h, param(layout_.init_ln_g), param(layout_.init_ln_b));
    for (std::size_t l = 0; l < hp_.L; ++l) {
      const ComplexSignal<T> spec = fft_forward(std::span<const T>(h));
      std::vector<T> chi(2 * h_dim);
      for (std::size_t k = 0; k < h_dim; ++k) {
        chi[k] = spec.real[k] * lte[k];
        chi[h_dim + k] = spec.imag[k] * lte[k];
      }
      std::vector<T> z = detail::affine(param(layout_.spec_w[l]), &param(layout_.spec_b[l]), std::span<const T>(chi));
      for (T& v : z) v = act_leaky(v, mon);
      if (!hp_.identity_normalization) {
        const RealTensor& g = param(layout_.bn_g[l]);
        const RealTensor& b = param(layout_.bn_b[l]);
        const RunningStats& rs = running_[l];
        for (std::size_t k = 0; k < z.size(); ++k) {
          z[k] = (z[k] - rs.mean[k]) * (g[k] / std::sqrt(rs.var[k] + kNormEps)) + b[k];
        }
      }
      ComplexSignal<T> zeta{std::vector<T>(z.begin(), z.begin() + static_cast<long>(h_dim)),
                            std::vector<T>(z.begin() + static_cast<long>(h_dim), z.end())};
      zeta = fft_inverse(std::move(zeta));
      for (std::size_t k = 0; k < h_dim; ++k) h[k] += zeta.real[k];
      if (!all_finite_values(h)) throw NumericError("ScinoNetwork: non-finite activation in Fourier layer " + std::to_string(l + 1));
    }
    return h;
  }

  template <class T>
  std::vector<T> head(std::span<const T> feat, KinkMonitor* mon = nullptr) const {
    std::vector<T> h1 = detail::affine(param(layout_.fin_w1), &param(layout_.fin_b1), feat);
    for (T& v : h1) v = act_leaky(v, mon);
    std::vector<T> h2 = detail::affine(param(layout_.fin_w2), &param(layout_.fin_b2), std::span<const T>(h1));
    for (T& v : h2) v = act_leaky(v, mon);
    return detail::affine(param(layout_.fin_w3), &param(layout_.fin_b3), std::span<const T>(h2));
  }

  template <class T>
  std::vector<T> forward(std::span<const T> x, std::span<const double> lte, KinkMonitor* mon = nullptr) const {
    const std::vector<T> feat = trunk(x, lte, mon);
    return head(std::span<const T>(feat), mon);
  }

  template <class T>
  std::vector<T> forward(double t, std::span<const T> x, KinkMonitor* mon = nullptr) const {
    const std::vector<double> lte = lte_encode(t);
    return forward(x, std::span<const double>(lte), mon);
  }

  std::vector<double> forward(double t, const std::vector<double>& x) const {
    return forward<double>(t, std::span<const double>(x));
  }

  /// Eval-mode forward with hyper-dual seeds on input coordinates; t is a
  /// constant.
  HyperDualResult forward_hyperdual(double t, std::span<const double> x, std::size_t dir_a, std::size_t dir_b) const {
    const std::vector<double> lte = lte_encode(t);
    return hyperdual_eval(
        [&](std::span<const HyperDuald> xs) { return forward<HyperDuald>(xs, std::span<const double>(lte)); }, x,
        dir_a, dir_b);
  }

  /// Eval-mode trunk features for every row of x (B×D -> B×H).
  RealTensor trunk_batch(const RealTensor& x, double t) const {
    const std::vector<double> lte = lte_encode(t);
    RealTensor out = RealTensor::matrix(x.rows(), hp_.H);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const std::vector<double> f = trunk<double>(x.row(r), lte);
      std::copy(f.begin(), f.end(), out.row(r).begin());
    }
    return out;
  }

  // ---- recorded forward for gradients ----

  struct TapeOutput {
    Var out;
    std::vector<BatchMoments> moments;  // one per Fourier layer in train mode
  };

  /// Records the forward pass of a batch x (B×D) with per-row times. In train
  /// mode, dropout masks come from `dropout_rng` and batch statistics are
  /// returned for update_running_stats(). Parameter i is bound to slot i.
  TapeOutput forward_tape(Tape& tape, const RealTensor& x, std::span<const double> times, Rng* dropout_rng) const {
    if (x.cols() != hp_.D) throw std::invalid_argument("forward_tape: input width mismatch");
    if (times.size() != x.rows()) throw std::invalid_argument("forward_tape: one time per row required");
    const bool train = mode_ == Mode::train;
    if (train && hp_.dropout_rate > 0.0 && dropout_rng == nullptr) throw std::invalid_argument("forward_tape: dropout rng required");
    std::vector<Var> pv(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) pv[i] = tape.parameter(params_[i], i);

    TapeOutput res;
    Var xin = tape.constant(x);
    Var h = hp_.init_bias ? tape.linear(xin, pv[layout_.init_w], pv[layout_.init_b]) : tape.linear(xin, pv[layout_.init_w]);
    h = tape_leaky(tape, h);
    if (!hp_.identity_normalization) h = tape.layer_norm(h, pv[layout_.init_ln_g], pv[layout_.init_ln_b], kNormEps);
    if (train && hp_.dropout_rate > 0.0) h = tape.dropout(h, dropout_mask(tape.value(h), *dropout_rng));

    Var phi = tape.fourier_features(times, pv[layout_.lte_wproj]);
    Var u = tape.linear(phi, pv[layout_.lte_w1], pv[layout_.lte_b1]);
    if (!hp_.identity_activations) u = tape.gelu(u);
    Var lte = tape.linear(u, pv[layout_.lte_w2], pv[layout_.lte_b2]);

    for (std::size_t l = 0; l < hp_.L; ++l) {
      auto [re, im] = tape.fft_rows(h);
      Var chi = tape.concat_cols(tape.mul(re, lte), tape.mul(im, lte));
      Var z = tape.linear(chi, pv[layout_.spec_w[l]], pv[layout_.spec_b[l]]);
      z = tape_leaky(tape, z);
      if (!hp_.identity_normalization) {
        if (train) {
          BatchMoments m;
          z = tape.batch_norm(z, pv[layout_.bn_g[l]], pv[layout_.bn_b[l]], kNormEps, &m);
          res.moments.push_back(std::move(m));
        } else {
          z = tape.batch_norm_frozen(z, pv[layout_.bn_g[l]], pv[layout_.bn_b[l]], running_[l].mean, running_[l].var,
                                     kNormEps);
        }
      }
      Var zr = tape.slice_cols(z, 0, hp_.H);
      Var zi = tape.slice_cols(z, hp_.H, hp_.H);
      h = tape.add(h, tape.ifft_real_rows(zr, zi));
      if (!tape.value(h).all_finite()) throw NumericError("forward_tape: non-finite activation in Fourier layer " + std::to_string(l + 1));
    }
    res.out = head_tape(tape, h, pv);
    return res;
  }

  /// Records MLP_final only, over constant features (B×H). Head parameter k
  /// (k = 0..5 from head_begin()) is bound to slot k.
  Var head_tape(Tape& tape, const RealTensor& features) const {
    std::vector<Var> pv(params_.size());
    for (std::size_t i = head_begin(); i < params_.size(); ++i) pv[i] = tape.parameter(params_[i], i - head_begin());
    return head_tape(tape, tape.constant(features), pv);
  }

  void update_running_stats(const std::vector<BatchMoments>& moments, std::size_t batch) {
    if (hp_.identity_normalization) return;
    if (moments.size() != running_.size()) throw std::logic_error("update_running_stats: layer count mismatch");
    const double unbias = batch > 1 ? static_cast<double>(batch) / static_cast<double>(batch - 1) : 1.0;
    for (std::size_t l = 0; l < running_.size(); ++l) {
      for (std::size_t k = 0; k < running_[l].mean.size(); ++k) {
        running_[l].mean[k] = (1.0 - kBatchNormMomentum) * running_[l].mean[k] + kBatchNormMomentum * moments[l].mean[k];
        running_[l].var[k] = (1.0 - kBatchNormMomentum) * running_[l].var[k] + kBatchNormMomentum * moments[l].var[k] * unbias;
      }
    }
  }

  // ---- checkpoint ----

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "scino.v1";
    j["hyper"] = hp_;
    nlohmann::json ps = nlohmann::json::array();
    for (const auto& p : params_) ps.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"data", p.value.data()}});
    j["params"] = ps;
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : running_) rs.push_back({{"mean", r.mean}, {"var", r.var}});
    j["running"] = rs;
    return j;
  }

  static ScinoNetwork from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != "scino.v1") throw DataError("checkpoint: unsupported format (expected scino.v1)");
    ScinoNetwork net;
    net.hp_ = j.at("hyper").get<HyperParams>();
    net.hp_.validate();
    net.build_layout();
    const auto& ps = j.at("params");
    if (ps.size() != net.params_.size()) throw DataError("checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      Parameter& p = net.params_[i];
      if (ps[i].at("name").get<std::string>() != p.name) throw DataError("checkpoint: unexpected parameter " + ps[i].at("name").get<std::string>());
      RealTensor v(ps[i].at("shape").get<std::vector<std::size_t>>(), ps[i].at("data").get<std::vector<double>>());
      if (!v.same_shape(p.value)) throw DataError("checkpoint: shape mismatch for " + p.name);
      p.value = std::move(v);
    }
    const auto& rs = j.at("running");
    if (rs.size() != net.running_.size()) throw DataError("checkpoint: running-stat count mismatch");
    for (std::size_t l = 0; l < rs.size(); ++l) {
      net.running_[l].mean = rs[l].at("mean").get<std::vector<double>>();
      net.running_[l].var = rs[l].at("var").get<std::vector<double>>();
      if (net.running_[l].mean.size() != 2 * net.hp_.H || net.running_[l].var.size() != 2 * net.hp_.H)
        throw DataError("checkpoint: running-stat width mismatch");
    }
    net.mode_ = Mode::eval;
    return net;
  }

 private:
  const RealTensor& param(std::size_t i) const { return params_[i].value; }
  const RealTensor* init_bias_ptr() const { return hp_.init_bias ? &params_[layout_.init_b].value : nullptr; }

  template <class T>
  T act_leaky(const T& v, KinkMonitor* mon) const {
    if (hp_.identity_activations) return v;
    if (mon) mon->observe(value_of(v));
    return leaky_relu(v);
  }
  double act_gelu(double v) const { return hp_.identity_activations ? v : gelu(v); }

  Var tape_leaky(Tape& tape, Var v) const { return hp_.identity_activations ? v : tape.leaky_relu(v); }

  template <class T>
  static bool all_finite_values(const std::vector<T>& v) {
    for (const T& e : v) {
      if (!std::isfinite(value_of(e))) return false;
    }
    return true;
  }

  template <class T>
  static void layer_norm_row(std::vector<T>& h, const RealTensor& g, const RealTensor& b) {
    using std::sqrt;
    const double n = static_cast<double>(h.size());
    T mean(0.0);
    for (const T& v : h) mean += v;
    mean = mean * (1.0 / n);
    T var(0.0);
    for (const T& v : h) var += (v - mean) * (v - mean);
    var = var * (1.0 / n);
    const T inv = T(1.0) / sqrt(var + kNormEps);
    for (std::size_t k = 0; k < h.size(); ++k) h[k] = (h[k] - mean) * inv * g[k] + b[k];
  }

  RealTensor dropout_mask(const RealTensor& like, Rng& rng) const {
    RealTensor m(like.shape(), 0.0);
    const double keep = 1.0 - hp_.dropout_rate;
    std::bernoulli_distribution draw(keep);
    for (double& v : m.data()) v = draw(rng) ? 1.0 / keep : 0.0;
    return m;
  }

  Var head_tape(Tape& tape, Var h, const std::vector<Var>& pv) const {
    Var a = tape_leaky(tape, tape.linear(h, pv[layout_.fin_w1], pv[layout_.fin_b1]));
    Var b = tape_leaky(tape, tape.linear(a, pv[layout_.fin_w2], pv[layout_.fin_b2]));
    return tape.linear(b, pv[layout_.fin_w3], pv[layout_.fin_b3]);
  }

  std::size_t add_param(std::string name, std::vector<std::size_t> shape) {
    params_.push_back(Parameter{std::move(name), RealTensor(std::move(shape), 0.0)});
    return params_.size() - 1;
  }

  void build_layout() {
    params_.clear();
    running_.clear();
    layout_ = Layout{};
    const std::size_t D = hp_.D, H = hp_.H, S = hp_.S, F = hp_.F, M = hp_.M_lte;
    layout_.init_w = add_param("init.w", {H, D});
    if (hp_.init_bias) layout_.init_b = add_param("init.b", {H});
    layout_.init_ln_g = add_param("init.ln.gamma", {H});
    layout_.init_ln_b = add_param("init.ln.beta", {H});
    for (std::size_t l = 0; l < hp_.L; ++l) {
      const std::string p = "fourier" + std::to_string(l) + ".";
      layout_.spec_w.push_back(add_param(p + "spec.w", {2 * H, 2 * H}));
      layout_.spec_b.push_back(add_param(p + "spec.b", {2 * H}));
      layout_.bn_g.push_back(add_param(p + "bn.gamma", {2 * H}));
      layout_.bn_b.push_back(add_param(p + "bn.beta", {2 * H}));
      running_.push_back(RunningStats{std::vector<double>(2 * H, 0.0), std::vector<double>(2 * H, 1.0)});
    }
    layout_.lte_wproj = add_param("lte.w_proj", {F});
    layout_.lte_w1 = add_param("lte.w1", {M, 2 * F});
    layout_.lte_b1 = add_param("lte.b1", {M});
    layout_.lte_w2 = add_param("lte.w2", {H, M});
    layout_.lte_b2 = add_param("lte.b2", {H});
    layout_.fin_w1 = add_param("final.w1", {H, H});
    layout_.fin_b1 = add_param("final.b1", {H});
    layout_.fin_w2 = add_param("final.w2", {S, H});
    layout_.fin_b2 = add_param("final.b2", {S});
    layout_.fin_w3 = add_param("final.w3", {D, S});
    layout_.fin_b3 = add_param("final.b3", {D});
  }

  // Affine maps: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
  void init_affine(Rng& rng, std::size_t w, std::optional<std::size_t> b) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(params_[w].value.cols()));
    for (double& v : params_[w].value.data()) v = uniform(rng, -bound, bound);
    if (b) {
      for (double& v : params_[*b].value.data()) v = uniform(rng, -bound, bound);
    }
  }

  void initialize(Rng& rng) {
    init_affine(rng, layout_.init_w, hp_.init_bias ? std::optional<std::size_t>(layout_.init_b) : std::nullopt);
    params_[layout_.init_ln_g].value.fill(1.0);
    for (std::size_t l = 0; l < hp_.L; ++l) {
      init_affine(rng, layout_.spec_w[l], layout_.spec_b[l]);
      params_[layout_.bn_g[l]].value.fill(1.0);
    }
    for (double& v : params_[layout_.lte_wproj].value.data()) v = standard_normal(rng);
    init_affine(rng, layout_.lte_w1, layout_.lte_b1);
    init_affine(rng, layout_.lte_w2, layout_.lte_b2);
    init_affine(rng, layout_.fin_w1, layout_.fin_b1);
    init_affine(rng, layout_.fin_w2, layout_.fin_b2);
    init_affine(rng, layout_.fin_w3, layout_.fin_b3);
  }

 public:
  /// Re-draws MLP_final from substream (seed, "head", index); used for
  /// probed ensemble members.
  void reinitialize_head(std::uint64_t seed, std::uint64_t index) {
    Rng rng = make_rng(seed, "head", index);
    init_affine(rng, layout_.fin_w1, layout_.fin_b1);
    init_affine(rng, layout_.fin_w2, layout_.fin_b2);
    init_affine(rng, layout_.fin_w3, layout_.fin_b3);
  }

 private:
  HyperParams hp_;
  Layout layout_;
  std::vector<Parameter> params_;
  std::vector<RunningStats> running_;
  Mode mode_ = Mode::train;
};

}  // namespace scino
