#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scino/diffcore/fft.hpp"
#include "scino/diffcore/hyperdual.hpp"
#include "scino/diffcore/tensor.hpp"

namespace scino {

/// A named learnable array.
struct Parameter {
  std::string name;
  RealTensor value;
};

/// Gradient buffers aligned one-to-one with a parameter list.
struct GradientRecord {
  std::vector<RealTensor> grads;

  static GradientRecord zeros_like(std::span<const Parameter* const> params) {
    GradientRecord r;
    r.grads.reserve(params.size());
    for (const Parameter* p : params) r.grads.emplace_back(p->value.shape(), 0.0);
    return r;
  }

  bool all_finite() const {
    for (const auto& g : grads) {
      if (!g.all_finite()) return false;
    }
    return true;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& g : grads) {
      for (double v : g.data()) m = std::max(m, std::abs(v));
    }
    return m;
  }
};

struct Var {
  std::size_t id = 0;
};

struct BatchMoments {
  std::vector<double> mean;
  std::vector<double> var;  // biased
};

/// Records the forward computation of one batch and replays it backward.
/// A tape is built per batch and discarded; nothing is reused across batches.
class Tape {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapC = Eigen::Map<const RowMat>;
  using Map = Eigen::Map<RowMat>;

 public:
  Var constant(RealTensor value) { return push(std::move(value), false, nullptr); }

  /// Leaf bound to gradient slot `slot` of the GradientRecord passed to
  /// accumulate_into().
  Var parameter(const Parameter& p, std::size_t slot) {
    Var v = push(p.value, true, nullptr);
    nodes_[v.id].slot = static_cast<long>(slot);
    return v;
  }

  const RealTensor& value(Var v) const { return nodes_.at(v.id).value; }
  const RealTensor& grad(Var v) const { return nodes_.at(v.id).grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Smallest |input| over every LeakyReLU recorded so far. Finite-difference
  /// checks use it to stay clear of the kink.
  double min_kink_margin() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t id : kinks_)
      for (double v : nodes_[id].value.data()) m = std::min(m, std::abs(v));
    return m;
  }

  void backward(Var loss) {
    Node& root = nodes_.at(loss.id);
    if (root.value.size() != 1) throw std::invalid_argument("Tape::backward: loss must be a scalar");
    if (!std::isfinite(root.value[0])) throw NumericError("Tape::backward: non-finite loss");
    root.grad = RealTensor(root.value.shape(), 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.back && n.needs_grad && !n.grad.empty()) n.back(*this, i);
    }
  }

  void accumulate_into(GradientRecord& record) const {
    for (const Node& n : nodes_) {
      if (n.slot < 0 || n.grad.empty()) continue;
      RealTensor& dst = record.grads.at(static_cast<std::size_t>(n.slot));
      if (!dst.same_shape(n.grad)) throw std::logic_error("GradientRecord slot shape mismatch");
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
    }
  }

  // ---- operations (2-D tensors are batch-major: rows = samples) ----

  /// y = x·wᵀ (+ b); x: B×in, w: out×in, b: out.
  Var linear(Var x, Var w, const Var* b = nullptr) {
    const RealTensor& xv = value(x);
    const RealTensor& wv = value(w);
    if (xv.cols() != wv.cols()) throw std::invalid_argument("linear: width mismatch");
    RealTensor y = RealTensor::matrix(xv.rows(), wv.rows());
    Map(y.ptr(), y.rows(), y.cols()).noalias() =
        MapC(xv.ptr(), xv.rows(), xv.cols()) * MapC(wv.ptr(), wv.rows(), wv.cols()).transpose();
    const bool has_bias = b != nullptr;
    const std::size_t bid = has_bias ? b->id : 0;
    if (has_bias) {
      const RealTensor& bv = value(*b);
      for (std::size_t r = 0; r < y.rows(); ++r)
        for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += bv[c];
    }
    const bool ng = needs(x) || needs(w) || (has_bias && nodes_[bid].needs_grad);
    const std::size_t xid = x.id, wid = w.id;
    return push(std::move(y), ng, [xid, wid, bid, has_bias](Tape& t, std::size_t self) {
      const RealTensor& g = t.nodes_[self].grad;
      const RealTensor& xv = t.nodes_[xid].value;
      const RealTensor& wv = t.nodes_[wid].value;
      MapC gm(g.ptr(), g.rows(), g.cols());
      if (t.nodes_[xid].needs_grad) {
        RealTensor& gx = t.grad_ref(xid);
        Map(gx.ptr(), gx.rows(), gx.cols()).noalias() += gm * MapC(wv.ptr(), wv.rows(), wv.cols());
      }
      if (t.nodes_[wid].needs_grad) {
        RealTensor& gw = t.grad_ref(wid);
        Map(gw.ptr(), gw.rows(), gw.cols()).noalias() += gm.transpose() * MapC(xv.ptr(), xv.rows(), xv.cols());
      }
      if (has_bias && t.nodes_[bid].needs_grad) {
        RealTensor& gb = t.grad_ref(bid);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
      }
    });
  }

  Var linear(Var x, Var w, Var b) { return linear(x, w, &b); }

  Var add(Var a, Var b) {
    const RealTensor& av = value(a);
    const RealTensor& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
    RealTensor y = av;
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += bv[k];
    const std::size_t aid = a.id, bid = b.id;
    return push(std::move(y), needs(a) || needs(b), [aid, bid](Tape& t, std::size_t self) {
      const RealTensor& g = t.nodes_[self].grad;
      for (std::size_t id : {aid, bid}) {
        if (!t.nodes_[id].needs_grad) continue;
        RealTensor& gi = t.grad_ref(id);
        for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
      }
    });
  }

  Var mul(Var a, Var b) {
    const RealTensor& av = value(a);
    const RealTensor& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch");
    RealTensor y = av;
    for (std::size_t k = 0; k < y.size(); ++k) y[k] *= bv[k];
    const std::size_t aid = a.id, bid = b.id;
    return push(std::move(y), needs(a) || needs(b), [aid, bid](Tape& t, std::size_t self) {
      const RealTensor& g = t.nodes_[self].grad;
      if (t.nodes_[aid].needs_grad) {
        RealTensor& ga = t.grad_ref(aid);
        const RealTensor& bv = t.nodes_[bid].value;
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * bv[k];
      }
      if (t.nodes_[bid].needs_grad) {
        RealTensor& gb = t.grad_ref(bid);
        const RealTensor& av = t.nodes_[aid].value;
        for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * av[k];
      }
    });
  }

  /// Multiplies column c of a B×W tensor by factors[c].
  Var scale_columns(Var x, std::vector<double> factors) {
    RealTensor y = value(x);
    if (factors.size() != y.cols()) throw std::invalid_argument("scale_columns: width mismatch");
    for (std::size_t r = 0; r < y.rows(); ++r)
      for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) *= factors[c];
    const std::size_t xid = x.id;
    return push(std::move(y), needs(x), [xid, f = std::move(factors)](Tape& t, std::size_t self) {
      const RealTensor& g = t.nodes_[self].grad;
      RealTensor& gx = t.grad_ref(xid);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += g(r, c) * f[c];
    });
  }

  Var leaky_relu(Var x, double slope = kLeakySlope) {
    kinks_.push_back(x.id);
    RealTensor y = value(x);
    for (double& v : y.data()) v = v > 0.0 ? v : slope * v;
    const std::size_t xid = x.id;
    return push(std::move(y), needs(x), [xid, slope](Tape& t, std::size_t self) {
      const RealTensor& g = t.nodes_[self].grad;
      const RealTensor& xv = t.nodes_[xid].value;
      RealTensor& gx = t.grad_ref(xid);
      for (std::size_t k = 0; k < g.size(); ++k) gx[k] += xv[k] > 0.0 ? g[k] : slope * g[k];
    });
  }

  Var gelu(Var x) {
    RealTensor y = value(x);
    for (double& v : y.data()) v = scino::gelu(v);
    const std::size_t xid = x.id;
    return push(std::move(y), needs(x), [xid](Tape& t, std::size_t self) {
      const RealTensor& g = t.nodes_[self].grad;
      const RealTensor& xv = t.nodes_[xid].value;
      RealTensor& gx = t.grad_ref(xid);
      for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * gelu_derivative(xv[k]);
    });
  }

  /// Per-row normalization with elementwise affine gamma/beta.
  Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    const RealTensor& xv = value(x);
    const std::size_t rows = xv.rows(), cols = xv.cols();
    RealTensor xhat = RealTensor::matrix(rows, cols);
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      double mean = 0.0;
      for (std::size_t c = 0; c < cols; ++c) mean += xv(r, c);
      mean /= static_cast<double>(cols);
      double var = 0.0;
      for (std::size_t c = 0; c < cols; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
      var /= static_cast<double>(cols);
      inv_std[r] = 1.0 / std::sqrt(var + eps);
      for (std::size_t c = 0; c < cols; ++c) xhat(r, c) = (xv(r, c) - mean) * inv_std[r];
    }
    return affine_normalized(x, gamma, beta, std::move(xhat), std::move(inv_std), false);
  }

  /// Per-column normalization over the batch (training statistics).
  Var batch_norm(Var x, Var gamma, Var beta, double eps, BatchMoments* moments = nullptr) {
    const RealTensor& xv = value(x);
    const std::size_t rows = xv.rows(), cols = xv.cols();
    if (rows < 2) throw std::invalid_argument("batch_norm: batch of at least 2 required");
    std::vector<double> mean(cols, 0.0), var(cols, 0.0), inv_std(cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) mean[c] += xv(r, c);
    for (double& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) var[c] += (xv(r, c) - mean[c]) * (xv(r, c) - mean[c]);
    for (double& v : var) v /= static_cast<double>(rows);
    RealTensor xhat = RealTensor::matrix(rows, cols);
    for (std::size_t c = 0; c < cols; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) xhat(r, c) = (xv(r, c) - mean[c]) * inv_std[c];
    if (moments) *moments = BatchMoments{mean, var};
    return affine_normalized(x, gamma, beta, std::move(xhat), std::move(inv_std), true);
  }

  /// Batch normalization frozen to running statistics (eval mode).
  Var batch_norm_frozen(Var x, Var gamma, Var beta, std::span<const double> running_mean,
                        std::span<const double> running_var, double eps) {
    const RealTensor& xv = value(x);
    const std::size_t cols = xv.cols();
    std::vector<double> shift(cols), factor(cols);
    for (std::size_t c = 0; c < cols; ++c) {
      factor[c] = 1.0 / std::sqrt(running_var[c] + eps);
      shift[c] = running_mean[c];
    }
    RealTensor xhat = xv;
    for (std::size_t r = 0; r < xhat.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) xhat(r, c) = (xhat(r, c) - shift[c]) * factor[c];
    const std::size_t xid = x.id, gid = gamma.id, bid = beta.id;
    RealTensor y = xhat;
    const RealTensor& gv = value(gamma);
    const RealTensor& bv = value(beta);
    for (std::size_t r = 0; r < y.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) y(r, c) = gv[c] * y(r, c) + bv[c];
    const bool ng = needs(x) || needs(gamma) || needs(beta);
    return push(std::move(y), ng,
                [xid, gid, bid, xhat = std::move(xhat), factor = std::move(factor)](Tape& t, std::size_t self) {
                  const RealTensor& g = t.nodes_[self].grad;
                  const RealTensor& gv = t.nodes_[gid].value;
                  const std::size_t cols = g.cols();
                  if (t.nodes_[xid].needs_grad) {
                    RealTensor& gx = t.grad_ref(xid);
                    for (std::size_t r = 0; r < g.rows(); ++r)
                      for (std::size_t c = 0; c < cols; ++c) gx(r, c) += g(r, c) * gv[c] * factor[c];
                  }
                  if (t.nodes_[gid].needs_grad) {
                    RealTensor& gg = t.grad_ref(gid);
                    for (std::size_t r = 0; r < g.rows(); ++r)
                      for (std::size_t c = 0; c < cols; ++c) gg[c] += g(r, c) * xhat(r, c);
                  }
                  if (t.nodes_[bid].needs_grad) {
                    RealTensor& gb = t.grad_ref(bid);
                    for (std::size_t r = 0; r < g.rows(); ++r)
                      for (std::size_t c = 0; c < cols; ++c) gb[c] += g(r, c);
                  }
                });
  }

  /// Elementwise product with a constant mask (already scaled by 1/(1-p)).
  Var dropout(Var x, RealTensor mask) {
    RealTensor y = value(x);
    if (!y.same_shape(mask)) throw std::invalid_argument("dropout: mask shape mismatch");
    for (std::size_t k = 0; k < y.size(); ++k) y[k] *= mask[k];
    const std::size_t xid = x.id;
    return push(std::move(y), needs(x), [xid, m = std::move(mask)](Tape& t, std::size_t self) {
      const RealTensor& g = t.nodes_[self].grad;
      RealTensor& gx = t.grad_ref(xid);
      for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * m[k];
    });
  }

  /// Row-wise DFT; returns (real part, imaginary part).
  std::pair<Var, Var> fft_rows(Var x) {
    const RealTensor& xv = value(x);
    const std::size_t rows = xv.rows(), cols = xv.cols();
    RealTensor re = RealTensor::matrix(rows, cols), im = RealTensor::matrix(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const ComplexSignal<double> s = fft_forward(xv.row(r));
      std::copy(s.real.begin(), s.real.end(), re.row(r).begin());
      std::copy(s.imag.begin(), s.imag.end(), im.row(r).begin());
    }
    const std::size_t xid = x.id;
    const bool ng = needs(x);
    // d/dx of Re: Re(fft(g)); d/dx of Im: Im(fft(g)).
    Var vr = push(std::move(re), ng, [xid](Tape& t, std::size_t self) {
      const RealTensor& g = t.nodes_[self].grad;
      RealTensor& gx = t.grad_ref(xid);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const ComplexSignal<double> s = fft_forward(g.row(r));
        for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += s.real[c];
      }
    });
    Var vi = push(std::move(im), ng, [xid](Tape& t, std::size_t self) {
      const RealTensor& g = t.nodes_[self].grad;
      RealTensor& gx = t.grad_ref(xid);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const ComplexSignal<double> s = fft_forward(g.row(r));
        for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += s.imag[c];
      }
    });
    return {vr, vi};
  }

  /// Real part of the row-wise inverse DFT of re + i·im.
  Var ifft_real_rows(Var re, Var im) {
    const RealTensor& rv = value(re);
    const RealTensor& iv = value(im);
    if (!rv.same_shape(iv)) throw std::invalid_argument("ifft_real_rows: shape mismatch");
    const std::size_t rows = rv.rows(), cols = rv.cols();
    RealTensor y = RealTensor::matrix(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      ComplexSignal<double> s{{rv.row(r).begin(), rv.row(r).end()}, {iv.row(r).begin(), iv.row(r).end()}};
      s = fft_inverse(std::move(s));
      std::copy(s.real.begin(), s.real.end(), y.row(r).begin());
    }
    const std::size_t rid = re.id, iid = im.id;
    return push(std::move(y), needs(re) || needs(im), [rid, iid](Tape& t, std::size_t self) {
      const RealTensor& g = t.nodes_[self].grad;
      const double inv_n = 1.0 / static_cast<double>(g.cols());
      const bool nr = t.nodes_[rid].needs_grad, ni = t.nodes_[iid].needs_grad;
      RealTensor* gr = nr ? &t.grad_ref(rid) : nullptr;
      RealTensor* gi = ni ? &t.grad_ref(iid) : nullptr;
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const ComplexSignal<double> s = fft_forward(g.row(r));
        for (std::size_t c = 0; c < g.cols(); ++c) {
          if (gr) (*gr)(r, c) += s.real[c] * inv_n;
          if (gi) (*gi)(r, c) += s.imag[c] * inv_n;
        }
      }
    });
  }

  Var concat_cols(Var a, Var b) {
    const RealTensor& av = value(a);
    const RealTensor& bv = value(b);
    if (av.rows() != bv.rows()) throw std::invalid_argument("concat_cols: row mismatch");
    const std::size_t ca = av.cols(), cb = bv.cols();
    RealTensor y = RealTensor::matrix(av.rows(), ca + cb);
    for (std::size_t r = 0; r < av.rows(); ++r) {
      std::copy(av.row(r).begin(), av.row(r).end(), y.row(r).begin());
      std::copy(bv.row(r).begin(), bv.row(r).end(), y.row(r).begin() + static_cast<long>(ca));
    }
    const std::size_t aid = a.id, bid = b.id;
    return push(std::move(y), needs(a) || needs(b), [aid, bid, ca, cb](Tape& t, std::size_t self) {
      const RealTensor& g = t.nodes_[self].grad;
      if (t.nodes_[aid].needs_grad) {
        RealTensor& ga = t.grad_ref(aid);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < ca; ++c) ga(r, c) += g(r, c);
      }
      if (t.nodes_[bid].needs_grad) {
        RealTensor& gb = t.grad_ref(bid);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < cb; ++c) gb(r, c) += g(r, ca + c);
      }
    });
  }

  Var slice_cols(Var x, std::size_t begin, std::size_t count) {
    const RealTensor& xv = value(x);
    if (begin + count > xv.cols()) throw std::invalid_argument("slice_cols: out of range");
    RealTensor y = RealTensor::matrix(xv.rows(), count);
    for (std::size_t r = 0; r < xv.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) y(r, c) = xv(r, begin + c);
    const std::size_t xid = x.id;
    return push(std::move(y), needs(x), [xid, begin](Tape& t, std::size_t self) {
      const RealTensor& g = t.nodes_[self].grad;
      RealTensor& gx = t.grad_ref(xid);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gx(r, begin + c) += g(r, c);
    });
  }

  /// Rows [cos(t_b·w), sin(t_b·w)] / sqrt(2F) for per-row times t_b.
  Var fourier_features(std::span<const double> times, Var w_proj) {
    const RealTensor& wv = value(w_proj);
    const std::size_t f = wv.size();
    const double norm = 1.0 / std::sqrt(2.0 * static_cast<double>(f));
    RealTensor y = RealTensor::matrix(times.size(), 2 * f);
    for (std::size_t r = 0; r < times.size(); ++r) {
      for (std::size_t k = 0; k < f; ++k) {
        y(r, k) = std::cos(times[r] * wv[k]) * norm;
        y(r, f + k) = std::sin(times[r] * wv[k]) * norm;
      }
    }
    const std::size_t wid = w_proj.id;
    return push(std::move(y), needs(w_proj),
                [wid, f, norm, tv = std::vector<double>(times.begin(), times.end())](Tape& t, std::size_t self) {
                  const RealTensor& g = t.nodes_[self].grad;
                  const RealTensor& wv = t.nodes_[wid].value;
                  RealTensor& gw = t.grad_ref(wid);
                  for (std::size_t r = 0; r < tv.size(); ++r) {
                    for (std::size_t k = 0; k < f; ++k) {
                      const double arg = tv[r] * wv[k];
                      gw[k] += norm * tv[r] * (-std::sin(arg) * g(r, k) + std::cos(arg) * g(r, f + k));
                    }
                  }
                });
  }

  /// (1/B)·Σ_b Σ_c w_c (pred − target)²; scalar output.
  Var weighted_squared_error(Var pred, const RealTensor& target, std::vector<double> col_weights) {
    const RealTensor& pv = value(pred);
    if (!pv.same_shape(target)) throw std::invalid_argument("weighted_squared_error: shape mismatch");
    if (col_weights.size() != pv.cols()) throw std::invalid_argument("weighted_squared_error: weight width");
    const double inv_b = 1.0 / static_cast<double>(pv.rows());
    double loss = 0.0;
    for (std::size_t r = 0; r < pv.rows(); ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) {
        const double d = pv(r, c) - target(r, c);
        loss += col_weights[c] * d * d;
      }
    const std::size_t pid = pred.id;
    return push(RealTensor({1}, loss * inv_b), needs(pred),
                [pid, target, inv_b, w = std::move(col_weights)](Tape& t, std::size_t self) {
                  const double g = t.nodes_[self].grad[0];
                  const RealTensor& pv = t.nodes_[pid].value;
                  RealTensor& gp = t.grad_ref(pid);
                  for (std::size_t r = 0; r < pv.rows(); ++r)
                    for (std::size_t c = 0; c < pv.cols(); ++c)
                      gp(r, c) += g * 2.0 * inv_b * w[c] * (pv(r, c) - target(r, c));
                });
  }

  Var squared_error(Var pred, const RealTensor& target) {
    return weighted_squared_error(pred, target, std::vector<double>(value(pred).cols(), 1.0));
  }

 private:
  struct Node {
    RealTensor value;
    RealTensor grad;
    bool needs_grad = false;
    long slot = -1;
    std::function<void(Tape&, std::size_t)> back;
  };

  bool needs(Var v) const { return nodes_.at(v.id).needs_grad; }

  Var push(RealTensor value, bool needs_grad, std::function<void(Tape&, std::size_t)> back) {
    nodes_.push_back(Node{std::move(value), RealTensor{}, needs_grad, -1, std::move(back)});
    return Var{nodes_.size() - 1};
  }

  RealTensor& grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = RealTensor(n.value.shape(), 0.0);
    return n.grad;
  }

  // y = gamma ⊙ xhat + beta; shared backward of layer and batch normalization.
  // For rows-normalization (layer norm) inv_std is per row, for batch norm
  // per column.
  Var affine_normalized(Var x, Var gamma, Var beta, RealTensor xhat, std::vector<double> inv_std,
                        bool per_column) {
    const RealTensor& gv = value(gamma);
    const RealTensor& bv = value(beta);
    const std::size_t rows = xhat.rows(), cols = xhat.cols();
    RealTensor y = RealTensor::matrix(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) y(r, c) = gv[c] * xhat(r, c) + bv[c];
    const std::size_t xid = x.id, gid = gamma.id, bid = beta.id;
    const bool ng = needs(x) || needs(gamma) || needs(beta);
    return push(std::move(y), ng,
                [xid, gid, bid, per_column, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Tape& t, std::size_t self) {
                  const RealTensor& g = t.nodes_[self].grad;
                  const RealTensor& gv = t.nodes_[gid].value;
                  const std::size_t rows = g.rows(), cols = g.cols();
                  if (t.nodes_[gid].needs_grad) {
                    RealTensor& gg = t.grad_ref(gid);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < cols; ++c) gg[c] += g(r, c) * xhat(r, c);
                  }
                  if (t.nodes_[bid].needs_grad) {
                    RealTensor& gb = t.grad_ref(bid);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < cols; ++c) gb[c] += g(r, c);
                  }
                  if (!t.nodes_[xid].needs_grad) return;
                  RealTensor& gx = t.grad_ref(xid);
                  if (per_column) {
                    const double n = static_cast<double>(rows);
                    for (std::size_t c = 0; c < cols; ++c) {
                      double sum = 0.0, sum_x = 0.0;
                      for (std::size_t r = 0; r < rows; ++r) {
                        const double dxh = g(r, c) * gv[c];
                        sum += dxh;
                        sum_x += dxh * xhat(r, c);
                      }
                      for (std::size_t r = 0; r < rows; ++r) {
                        const double dxh = g(r, c) * gv[c];
                        gx(r, c) += inv_std[c] * (dxh - sum / n - xhat(r, c) * sum_x / n);
                      }
                    }
                  } else {
                    const double n = static_cast<double>(cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double sum = 0.0, sum_x = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double dxh = g(r, c) * gv[c];
                        sum += dxh;
                        sum_x += dxh * xhat(r, c);
                      }
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double dxh = g(r, c) * gv[c];
                        gx(r, c) += inv_std[r] * (dxh - sum / n - xhat(r, c) * sum_x / n);
                      }
                    }
                  }
                });
  }

  std::vector<Node> nodes_;
  std::vector<std::size_t> kinks_;
};

}  // namespace scino
