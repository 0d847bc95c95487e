#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "scino/diffcore/fft.hpp"
#include "scino/diffcore/hyperdual.hpp"
#include "scino/diffcore/tape.hpp"
#include "support.hpp"

using namespace scino;
using scino::testing::max_fd_error;
using scino::testing::random_tensor;

namespace {

// Textbook O(H^2) summation, kept independent of the library code path.
void naive_dft(const std::vector<double>& x, std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = x.size();
  re.assign(n, 0.0);
  im.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * j) / static_cast<double>(n);
      re[k] += x[j] * std::cos(ang);
      im[k] += x[j] * std::sin(ang);
    }
  }
}

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& e : v) e = standard_normal(rng);
  return v;
}

}  // namespace

TEST(Fft, ConstantInputIsDcOnly) {
  const std::vector<double> x(8, 2.5);
  const auto s = fft_forward(x);
  EXPECT_NEAR(s.real[0], 8 * 2.5, 1e-12);
  for (std::size_t k = 1; k < 8; ++k) EXPECT_NEAR(s.real[k], 0.0, 1e-12);
  for (double v : s.imag) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Fft, InverseOfDcSpikeIsOnes) {
  ComplexSignal<double> s{std::vector<double>(8, 0.0), std::vector<double>(8, 0.0)};
  s.real[0] = 8.0;
  const auto out = fft_inverse(s);
  for (double v : out.real) EXPECT_NEAR(v, 1.0, 1e-15);
  for (double v : out.imag) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Fft, MatchesNaiveSummation) {
  Rng rng(3);
  for (std::size_t n : {1u, 2u, 6u, 8u, 12u, 64u}) {
    const auto x = random_vec(rng, n);
    std::vector<double> re, im;
    naive_dft(x, re, im);
    const auto s = fft_forward(x);
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_NEAR(s.real[k], re[k], 1e-11) << "n=" << n;
      EXPECT_NEAR(s.imag[k], im[k], 1e-11) << "n=" << n;
    }
  }
}

TEST(Fft, SingleModeInverseIsSampledCosineSine) {
  const std::size_t n = 16, m = 3;
  ComplexSignal<double> s{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  s.real[m] = 1.0;
  const auto out = fft_inverse(s);
  for (std::size_t j = 0; j < n; ++j) {
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(m * j) / static_cast<double>(n);
    EXPECT_NEAR(out.real[j], std::cos(ang) / n, 1e-15);
    EXPECT_NEAR(out.imag[j], std::sin(ang) / n, 1e-15);
  }
}

TEST(Fft, RoundTripAndParseval) {
  Rng rng(11);
  for (std::size_t n : {8u, 12u, 256u, 4096u}) {
    const auto x = random_vec(rng, n);
    const auto s = fft_forward(x);
    const auto back = fft_inverse(s);
    double worst = 0.0, e_time = 0.0, e_freq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      worst = std::max(worst, std::abs(back.real[j] - x[j]));
      worst = std::max(worst, std::abs(back.imag[j]));
      e_time += x[j] * x[j];
      e_freq += s.real[j] * s.real[j] + s.imag[j] * s.imag[j];
    }
    EXPECT_LT(worst, 1e-12) << "n=" << n;
    EXPECT_NEAR(e_freq / static_cast<double>(n), e_time, 1e-10 * e_time);
  }
}

TEST(Fft, Linearity) {
  Rng rng(5);
  const auto x = random_vec(rng, 8), y = random_vec(rng, 8);
  const double a = 1.7, b = -0.4;
  std::vector<double> z(8);
  for (std::size_t j = 0; j < 8; ++j) z[j] = a * x[j] + b * y[j];
  const auto sx = fft_forward(x), sy = fft_forward(y), sz = fft_forward(z);
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_NEAR(sz.real[k], a * sx.real[k] + b * sy.real[k], 1e-12);
    EXPECT_NEAR(sz.imag[k], a * sx.imag[k] + b * sy.imag[k], 1e-12);
  }
}

TEST(Fft, RejectsMalformedInput) {
  EXPECT_THROW(fft_forward(std::vector<double>{}), std::invalid_argument);
  ComplexSignal<double> bad{std::vector<double>(4, 0.0), std::vector<double>(3, 0.0)};
  EXPECT_THROW(fft_inverse(bad), std::invalid_argument);
}

TEST(HyperDual, MixedPartialOfProduct) {
  // f = x1 * x2^2 at (2, 3): df/dx1 = x2^2 = 9, df/dx2 = 2 x1 x2 = 12,
  // d2f/dx1dx2 = 2 x2 = 6.
  const std::vector<double> x{2.0, 3.0};
  const auto r = hyperdual_eval(
      [](std::span<const HyperDuald> v) { return std::vector<HyperDuald>{v[0] * v[1] * v[1]}; }, x, 0, 1);
  EXPECT_DOUBLE_EQ(r.value[0], 18.0);
  EXPECT_DOUBLE_EQ(r.d_a[0], 9.0);
  EXPECT_DOUBLE_EQ(r.d_b[0], 12.0);
  EXPECT_DOUBLE_EQ(r.d_ab[0], 6.0);
}

TEST(HyperDual, EqualDirectionsGivePureSecondDerivative) {
  const std::vector<double> x{1.5, -0.7};
  const auto r = hyperdual_eval(
      [](std::span<const HyperDuald> v) { return std::vector<HyperDuald>{v[0] * v[0] * v[0] * v[1]}; }, x, 0, 0);
  EXPECT_DOUBLE_EQ(r.d_a[0], 3 * 1.5 * 1.5 * -0.7);
  EXPECT_DOUBLE_EQ(r.d_ab[0], 6 * 1.5 * -0.7);
}

TEST(HyperDual, LinearFunctionHasZeroCurvature) {
  const std::vector<double> x{0.3, -1.1, 2.0};
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      const auto r = hyperdual_eval(
          [](std::span<const HyperDuald> v) {
            return std::vector<HyperDuald>{v[0] * 2.0 - v[1] * 3.0 + v[2] + 1.0, v[1] * 0.5};
          },
          x, a, b);
      EXPECT_EQ(r.d_ab[0], 0.0);
      EXPECT_EQ(r.d_ab[1], 0.0);
    }
  }
}

TEST(HyperDual, PolynomialCompositionIsExact) {
  // g(x) = x^2 + 1, f(u) = u^3 - 2u; (f o g)'' at x by hand.
  const double x0 = 0.8;
  HyperDuald x(x0, 1.0, 1.0, 0.0);
  const HyperDuald u = x * x + 1.0;
  const HyperDuald y = u * u * u - u * 2.0;
  const double uv = x0 * x0 + 1.0;
  const double du = 2 * x0;
  const double d1 = (3 * uv * uv - 2) * du;
  const double d2 = 6 * uv * du * du + (3 * uv * uv - 2) * 2.0;
  EXPECT_NEAR(y.v, uv * uv * uv - 2 * uv, 1e-14);
  EXPECT_NEAR(y.a, d1, 1e-13);
  EXPECT_NEAR(y.ab, d2, 1e-12);
}

TEST(HyperDual, ElementaryFunctionsMatchAnalyticDerivatives) {
  const double x0 = 0.6;
  const HyperDuald x(x0, 1.0, 1.0, 0.0);
  auto check = [](const HyperDuald& r, double f, double f1, double f2) {
    EXPECT_NEAR(r.v, f, 1e-14);
    EXPECT_NEAR(r.a, f1, 1e-14);
    EXPECT_NEAR(r.b, f1, 1e-14);
    EXPECT_NEAR(r.ab, f2, 1e-13);
  };
  check(sin(x), std::sin(x0), std::cos(x0), -std::sin(x0));
  check(cos(x), std::cos(x0), -std::sin(x0), -std::cos(x0));
  check(exp(x), std::exp(x0), std::exp(x0), std::exp(x0));
  check(log(x), std::log(x0), 1 / x0, -1 / (x0 * x0));
  check(sqrt(x), std::sqrt(x0), 0.5 / std::sqrt(x0), -0.25 * std::pow(x0, -1.5));
  const double th = std::tanh(x0);
  check(tanh(x), th, 1 - th * th, -2 * th * (1 - th * th));
  check(HyperDuald(1.0) / x, 1 / x0, -1 / (x0 * x0), 2 / (x0 * x0 * x0));
}

TEST(HyperDual, MixedPartialsAreSymmetric) {
  const std::vector<double> x{0.4, -1.3, 0.9};
  auto f = [](std::span<const HyperDuald> v) {
    return std::vector<HyperDuald>{sin(v[0] * v[1]) + exp(v[2] * v[0]), gelu(v[1] * v[2] - v[0])};
  };
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      const auto r1 = hyperdual_eval(f, x, a, b);
      const auto r2 = hyperdual_eval(f, x, b, a);
      EXPECT_NEAR(r1.d_ab[0], r2.d_ab[0], 1e-14);
      EXPECT_NEAR(r1.d_ab[1], r2.d_ab[1], 1e-14);
    }
  }
}

TEST(HyperDual, LeakyReluSlopeAtZeroIsNegativeSide) {
  const HyperDuald x(0.0, 1.0, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(leaky_relu(x).a, kLeakySlope);
  EXPECT_DOUBLE_EQ(leaky_relu(HyperDuald(2.0, 1.0, 0.0, 0.0)).a, 1.0);
}

TEST(HyperDual, GeluDerivativeMatchesForwardMode) {
  for (double x0 : {-2.0, -0.3, 0.0, 0.7, 3.1}) {
    const HyperDuald r = gelu(HyperDuald(x0, 1.0, 0.0, 0.0));
    EXPECT_NEAR(r.a, gelu_derivative(x0), 1e-14);
  }
}

TEST(Tape, LeastSquaresGradientClosedForm) {
  Rng rng(2);
  std::vector<Parameter> params{{"w", random_tensor(rng, {3, 4})}};
  const RealTensor x = random_tensor(rng, {1, 4});
  const RealTensor y = random_tensor(rng, {1, 3});
  // loss = 1/2 ||W x - y||^2; squared_error averages over one row.
  const auto rec = scino::testing::tape_gradient(params, [&](Tape& t, const std::vector<Var>& v) {
    Var pred = t.scale_columns(t.linear(t.constant(x), v[0]), {1.0, 1.0, 1.0});
    return t.weighted_squared_error(pred, y, {0.5, 0.5, 0.5});
  });
  const RealTensor& w = params[0].value;
  for (std::size_t i = 0; i < 3; ++i) {
    double r = -y(0, i);
    for (std::size_t k = 0; k < 4; ++k) r += w(i, k) * x(0, k);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(rec.grads[0](i, k), r * x(0, k), 1e-14);
  }
}

TEST(Tape, ZeroResidualGivesZeroGradient) {
  Rng rng(4);
  std::vector<Parameter> params{{"w", random_tensor(rng, {2, 3})}, {"b", random_tensor(rng, {2})}};
  const RealTensor x = random_tensor(rng, {5, 3});
  Tape probe;
  const RealTensor y = probe.value(probe.linear(probe.constant(x), probe.constant(params[0].value),
                                                probe.constant(params[1].value)));
  const auto rec = scino::testing::tape_gradient(params, [&](Tape& t, const std::vector<Var>& v) {
    return t.squared_error(t.linear(t.constant(x), v[0], v[1]), y);
  });
  EXPECT_EQ(rec.max_abs(), 0.0);
}

TEST(Tape, NonFiniteLossIsRejected) {
  std::vector<Parameter> params{{"w", RealTensor({1, 1}, 1.0)}};
  Tape t;
  Var w = t.parameter(params[0], 0);
  RealTensor target({1, 1}, std::numeric_limits<double>::infinity());
  Var loss = t.squared_error(w, target);
  EXPECT_THROW(t.backward(loss), NumericError);
}

TEST(Tape, TwoLayerNetworkMatchesFiniteDifferences) {
  Rng rng(7);
  std::vector<Parameter> params{{"w1", random_tensor(rng, {6, 3}, 0.5)},
                                {"b1", random_tensor(rng, {6}, 0.1)},
                                {"w2", random_tensor(rng, {2, 6}, 0.5)},
                                {"b2", random_tensor(rng, {2}, 0.1)}};
  const RealTensor x = random_tensor(rng, {8, 3});
  const RealTensor y = random_tensor(rng, {8, 2});
  const double err = max_fd_error(params, [&](Tape& t, const std::vector<Var>& v) {
    Var h = t.gelu(t.linear(t.constant(x), v[0], v[1]));
    return t.squared_error(t.linear(h, v[2], v[3]), y);
  });
  EXPECT_LT(err, 1e-5);
}

TEST(Tape, NormalizationsMatchFiniteDifferences) {
  Rng rng(8);
  std::vector<Parameter> params{{"x", random_tensor(rng, {6, 5})},
                                {"g", random_tensor(rng, {5})},
                                {"b", random_tensor(rng, {5})}};
  const RealTensor y = random_tensor(rng, {6, 5});
  const double ln = max_fd_error(params, [&](Tape& t, const std::vector<Var>& v) {
    return t.squared_error(t.layer_norm(v[0], v[1], v[2], 1e-5), y);
  });
  const double bn = max_fd_error(params, [&](Tape& t, const std::vector<Var>& v) {
    return t.squared_error(t.batch_norm(v[0], v[1], v[2], 1e-5), y);
  });
  const std::vector<double> rm{0.1, -0.2, 0.3, 0.0, 0.5}, rv{1.0, 2.0, 0.5, 1.5, 0.8};
  const double frozen = max_fd_error(params, [&](Tape& t, const std::vector<Var>& v) {
    return t.squared_error(t.batch_norm_frozen(v[0], v[1], v[2], rm, rv, 1e-5), y);
  });
  EXPECT_LT(ln, 1e-5);
  EXPECT_LT(bn, 1e-5);
  EXPECT_LT(frozen, 1e-5);
}

TEST(Tape, SpectralOpsMatchFiniteDifferences) {
  Rng rng(9);
  for (std::size_t h : {8u, 6u}) {
    std::vector<Parameter> params{{"x", random_tensor(rng, {3, h})}, {"e", random_tensor(rng, {3, h})}};
    const RealTensor y = random_tensor(rng, {3, h});
    const double err = max_fd_error(params, [&](Tape& t, const std::vector<Var>& v) {
      auto [re, im] = t.fft_rows(v[0]);
      Var chi = t.concat_cols(t.mul(re, v[1]), t.mul(im, v[1]));
      Var zr = t.slice_cols(chi, 0, h);
      Var zi = t.slice_cols(chi, h, h);
      return t.squared_error(t.add(v[0], t.ifft_real_rows(t.leaky_relu(zr), zi)), y);
    });
    EXPECT_LT(err, 1e-5) << "h=" << h;
  }
}

TEST(Tape, FourierFeaturesMatchFiniteDifferences) {
  Rng rng(10);
  std::vector<Parameter> params{{"w", random_tensor(rng, {4})}};
  const std::vector<double> times{0.0, 0.3, 0.9};
  const RealTensor y = random_tensor(rng, {3, 8}, 0.3);
  const double err = max_fd_error(params, [&](Tape& t, const std::vector<Var>& v) {
    return t.weighted_squared_error(t.fourier_features(times, v[0]), y, std::vector<double>(8, 1.3));
  });
  EXPECT_LT(err, 1e-5);
}

TEST(Tape, DropoutAndColumnScaling) {
  Rng rng(12);
  std::vector<Parameter> params{{"x", random_tensor(rng, {4, 3})}};
  RealTensor mask({4, 3}, 0.0);
  for (std::size_t k = 0; k < mask.size(); k += 2) mask[k] = 1.25;
  const RealTensor y = random_tensor(rng, {4, 3});
  const double err = max_fd_error(params, [&](Tape& t, const std::vector<Var>& v) {
    return t.squared_error(t.scale_columns(t.dropout(v[0], mask), {2.0, -1.0, 0.5}), y);
  });
  EXPECT_LT(err, 1e-5);
}
