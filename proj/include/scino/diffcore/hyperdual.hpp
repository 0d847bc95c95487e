#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

namespace scino {

/// Hyper-dual number v + a·e1 + b·e2 + ab·e1e2 with e1² = e2² = 0 and
/// e1e2 ≠ 0. Seeding the same coordinate in both directions gives the pure
/// second derivative in `ab`, since e1 and e2 are independent nilpotents.
template <class T = double>
struct HyperDual {
  T v{};
  T a{};
  T b{};
  T ab{};

  constexpr HyperDual() = default;
  constexpr HyperDual(T value) : v(value) {}  // NOLINT(google-explicit-constructor)
  constexpr HyperDual(T value, T da, T db, T dab) : v(value), a(da), b(db), ab(dab) {}

  constexpr HyperDual& operator+=(const HyperDual& o) {
    v += o.v;
    a += o.a;
    b += o.b;
    ab += o.ab;
    return *this;
  }
  constexpr HyperDual& operator-=(const HyperDual& o) {
    v -= o.v;
    a -= o.a;
    b -= o.b;
    ab -= o.ab;
    return *this;
  }
  constexpr HyperDual& operator*=(const HyperDual& o) {
    *this = *this * o;
    return *this;
  }
  constexpr HyperDual& operator+=(T s) {
    v += s;
    return *this;
  }
  constexpr HyperDual& operator*=(T s) {
    v *= s;
    a *= s;
    b *= s;
    ab *= s;
    return *this;
  }

  friend constexpr HyperDual operator-(const HyperDual& x) { return {-x.v, -x.a, -x.b, -x.ab}; }

  friend constexpr HyperDual operator+(HyperDual x, const HyperDual& y) { return x += y; }
  friend constexpr HyperDual operator-(HyperDual x, const HyperDual& y) { return x -= y; }
  friend constexpr HyperDual operator*(const HyperDual& x, const HyperDual& y) {
    return {x.v * y.v, x.a * y.v + x.v * y.a, x.b * y.v + x.v * y.b,
            x.ab * y.v + x.a * y.b + x.b * y.a + x.v * y.ab};
  }
  friend constexpr HyperDual operator/(const HyperDual& x, const HyperDual& y) {
    const T inv = T(1) / y.v;
    const HyperDual r{inv, -inv * inv * y.a, -inv * inv * y.b,
                      T(2) * inv * inv * inv * y.a * y.b - inv * inv * y.ab};
    return x * r;
  }

  friend constexpr HyperDual operator+(HyperDual x, T s) { return x += s; }
  friend constexpr HyperDual operator+(T s, HyperDual x) { return x += s; }
  friend constexpr HyperDual operator-(HyperDual x, T s) { return x += -s; }
  friend constexpr HyperDual operator-(T s, const HyperDual& x) { return -x + s; }
  friend constexpr HyperDual operator*(HyperDual x, T s) { return x *= s; }
  friend constexpr HyperDual operator*(T s, HyperDual x) { return x *= s; }
  friend constexpr HyperDual operator/(HyperDual x, T s) { return x *= (T(1) / s); }
  friend constexpr HyperDual operator/(T s, const HyperDual& x) { return HyperDual(s) / x; }

  friend std::ostream& operator<<(std::ostream& os, const HyperDual& x) {
    return os << "(" << x.v << ", " << x.a << ", " << x.b << ", " << x.ab << ")";
  }
};

using HyperDuald = HyperDual<double>;

inline double value_of(double x) { return x; }
template <class T>
T value_of(const HyperDual<T>& x) {
  return x.v;
}

namespace detail {
// g(u) for a scalar map with first and second derivatives at u.v.
template <class T>
HyperDual<T> chain(const HyperDual<T>& u, T g, T dg, T d2g) {
  return {g, dg * u.a, dg * u.b, d2g * u.a * u.b + dg * u.ab};
}
}  // namespace detail

template <class T>
HyperDual<T> sin(const HyperDual<T>& u) {
  using std::cos;
  using std::sin;
  return detail::chain(u, sin(u.v), cos(u.v), -sin(u.v));
}
template <class T>
HyperDual<T> cos(const HyperDual<T>& u) {
  using std::cos;
  using std::sin;
  return detail::chain(u, cos(u.v), -sin(u.v), -cos(u.v));
}
template <class T>
HyperDual<T> exp(const HyperDual<T>& u) {
  using std::exp;
  const T e = exp(u.v);
  return detail::chain(u, e, e, e);
}
template <class T>
HyperDual<T> log(const HyperDual<T>& u) {
  using std::log;
  return detail::chain(u, log(u.v), T(1) / u.v, -T(1) / (u.v * u.v));
}
template <class T>
HyperDual<T> sqrt(const HyperDual<T>& u) {
  using std::sqrt;
  const T s = sqrt(u.v);
  return detail::chain(u, s, T(0.5) / s, T(-0.25) / (s * u.v));
}
template <class T>
HyperDual<T> tanh(const HyperDual<T>& u) {
  using std::tanh;
  const T th = tanh(u.v);
  const T d = T(1) - th * th;
  return detail::chain(u, th, d, T(-2) * th * d);
}

inline constexpr double kLeakySlope = 0.01;

/// LeakyReLU; the derivative at exactly zero is the negative-side slope.
template <class S>
S leaky_relu(const S& x, double slope = kLeakySlope) {
  return value_of(x) > 0.0 ? x : x * slope;
}

/// GeLU, tanh approximation. Works for double and HyperDual alike.
template <class S>
S gelu(const S& x) {
  using std::tanh;
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const S inner = (x + x * x * x * 0.044715) * c;
  return x * (tanh(inner) + 1.0) * 0.5;
}

/// Analytic derivative of the tanh-approximate GeLU.
inline double gelu_derivative(double x) {
  constexpr double c = 0.7978845608028654;
  const double inner = c * (x + 0.044715 * x * x * x);
  const double th = std::tanh(inner);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

/// Value and derivative slots of a vector-valued function evaluated with
/// hyper-dual seeds along coordinates `dir_a` and `dir_b`.
struct HyperDualResult {
  std::vector<double> value;
  std::vector<double> d_a;
  std::vector<double> d_b;
  std::vector<double> d_ab;
};

inline std::vector<HyperDuald> seed_hyperdual(std::span<const double> x, std::size_t dir_a, std::size_t dir_b) {
  if (dir_a >= x.size() || dir_b >= x.size()) throw std::out_of_range("hyperdual seed direction out of range");
  std::vector<HyperDuald> xs(x.begin(), x.end());
  xs[dir_a].a = 1.0;
  xs[dir_b].b = 1.0;
  return xs;
}

inline HyperDualResult unpack_hyperdual(std::span<const HyperDuald> y) {
  HyperDualResult r;
  r.value.reserve(y.size());
  r.d_a.reserve(y.size());
  r.d_b.reserve(y.size());
  r.d_ab.reserve(y.size());
  for (const auto& e : y) {
    r.value.push_back(e.v);
    r.d_a.push_back(e.a);
    r.d_b.push_back(e.b);
    r.d_ab.push_back(e.ab);
  }
  return r;
}

/// Evaluates `f` (a callable accepting std::span<const HyperDuald> and
/// returning std::vector<HyperDuald>) at x, returning values, first
/// derivatives along e_{dir_a} and e_{dir_b} and the mixed second derivative.
template <class F>
HyperDualResult hyperdual_eval(F&& f, std::span<const double> x, std::size_t dir_a, std::size_t dir_b) {
  const std::vector<HyperDuald> xs = seed_hyperdual(x, dir_a, dir_b);
  const std::vector<HyperDuald> ys = f(std::span<const HyperDuald>(xs));
  return unpack_hyperdual(ys);
}

}  // namespace scino
