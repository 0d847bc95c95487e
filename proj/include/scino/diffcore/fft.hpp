#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

namespace scino {

/// Spectrum split into real and imaginary halves. T is double or a
/// hyper-dual type; the transform itself is linear with real twiddles.
template <class T = double>
struct ComplexSignal {
  std::vector<T> real;
  std::vector<T> imag;

  std::size_t size() const noexcept { return real.size(); }
};

namespace detail {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// cos/sin(2*pi*k/n) for k in [0, n), computed directly for accuracy.
struct TwiddleTable {
  std::vector<double> cos;
  std::vector<double> sin;
};

inline const TwiddleTable& twiddles(std::size_t n) {
  thread_local std::unordered_map<std::size_t, TwiddleTable> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  TwiddleTable t;
  t.cos.resize(n);
  t.sin.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    t.cos[k] = std::cos(angle);
    t.sin[k] = std::sin(angle);
  }
  return cache.emplace(n, std::move(t)).first->second;
}

// Unnormalized DFT with kernel exp(sign * 2*pi*i*k*n/H), sign = -1 forward.
template <class T>
void radix2_inplace(std::vector<T>& re, std::vector<T>& im, bool inverse) {
  const std::size_t n = re.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  const TwiddleTable& tw = twiddles(n);
  const double sgn = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const double wr = tw.cos[k * stride];
        const double wi = sgn * tw.sin[k * stride];
        T& ur = re[start + k];
        T& ui = im[start + k];
        const T vr = re[start + k + half] * wr - im[start + k + half] * wi;
        const T vi = re[start + k + half] * wi + im[start + k + half] * wr;
        re[start + k + half] = ur - vr;
        im[start + k + half] = ui - vi;
        ur += vr;
        ui += vi;
      }
    }
  }
}

template <class T>
void direct_dft(std::vector<T>& re, std::vector<T>& im, bool inverse) {
  const std::size_t n = re.size();
  const TwiddleTable& tw = twiddles(n);
  const double sgn = inverse ? 1.0 : -1.0;
  std::vector<T> out_re(n, T(0.0));
  std::vector<T> out_im(n, T(0.0));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = (k * j) % n;
      const double c = tw.cos[idx];
      const double s = sgn * tw.sin[idx];
      out_re[k] += re[j] * c - im[j] * s;
      out_im[k] += re[j] * s + im[j] * c;
    }
  }
  re = std::move(out_re);
  im = std::move(out_im);
}

template <class T>
void dft_inplace(std::vector<T>& re, std::vector<T>& im, bool inverse) {
  if (is_power_of_two(re.size())) {
    radix2_inplace(re, im, inverse);
  } else {
    direct_dft(re, im, inverse);
  }
}

}  // namespace detail

/// Full DFT of a real vector (all H modes, no truncation). Radix-2 when H is
/// a power of two, direct O(H²) summation otherwise.
template <class T>
ComplexSignal<T> fft_forward(std::span<const T> x) {
  if (x.empty()) throw std::invalid_argument("fft_forward: empty input");
  ComplexSignal<T> s{std::vector<T>(x.begin(), x.end()), std::vector<T>(x.size(), T(0.0))};
  detail::dft_inplace(s.real, s.imag, false);
  return s;
}

template <class T>
ComplexSignal<T> fft_forward(const std::vector<T>& x) {
  return fft_forward(std::span<const T>(x));
}

/// Inverse DFT with 1/H normalization.
template <class T>
ComplexSignal<T> fft_inverse(ComplexSignal<T> s) {
  if (s.real.size() != s.imag.size()) throw std::invalid_argument("fft_inverse: real/imag length mismatch");
  if (s.real.empty()) throw std::invalid_argument("fft_inverse: empty input");
  detail::dft_inplace(s.real, s.imag, true);
  const double inv_n = 1.0 / static_cast<double>(s.real.size());
  for (std::size_t k = 0; k < s.real.size(); ++k) {
    s.real[k] = s.real[k] * inv_n;
    s.imag[k] = s.imag[k] * inv_n;
  }
  return s;
}

}  // namespace scino
