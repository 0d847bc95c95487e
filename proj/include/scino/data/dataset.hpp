#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/diffcore/tensor.hpp"

namespace scino {

/// N×D observational sample with column names.
struct Dataset {
  std::vector<std::string> names;
  RealTensor values;  // N×D, row-major

  Dataset() = default;
  Dataset(std::vector<std::string> cols, RealTensor v) : names(std::move(cols)), values(std::move(v)) { validate(); }

  std::size_t n() const noexcept { return values.rows(); }
  std::size_t d() const noexcept { return names.size(); }

  void validate() const {
    if (values.rank() != 2) throw DataError("Dataset: values must be N×D");
    if (values.cols() != names.size()) throw DataError("Dataset: column count does not match names");
    std::set<std::string> seen;
    for (const auto& s : names) {
      if (!seen.insert(s).second) throw DataError("Dataset: duplicate column name '" + s + "'");
    }
    require_finite(values, "Dataset");
  }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> c(n());
    for (std::size_t r = 0; r < n(); ++r) c[r] = values(r, j);
    return c;
  }

  Dataset select_columns(const std::vector<std::size_t>& cols) const {
    std::vector<std::string> nm;
    RealTensor v = RealTensor::matrix(n(), cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k] >= d()) throw DataError("Dataset: column index out of range");
      nm.push_back(names[cols[k]]);
      for (std::size_t r = 0; r < n(); ++r) v(r, k) = values(r, cols[k]);
    }
    return Dataset(std::move(nm), std::move(v));
  }

  Dataset head_rows(std::size_t count) const {
    const std::size_t m = std::min(count, n());
    RealTensor v = RealTensor::matrix(m, d());
    std::copy(values.data().begin(), values.data().begin() + static_cast<long>(m * d()), v.data().begin());
    return Dataset(names, std::move(v));
  }
};

/// Column means and sample standard deviations (N−1 denominator).
struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> std;

  static ColumnStats identity(std::size_t d) { return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)}; }

  static ColumnStats of(const RealTensor& x) {
    const std::size_t n = x.rows(), d = x.cols();
    if (n < 2) throw DataError("ColumnStats: at least two rows required");
    ColumnStats s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) s.mean[c] += x(r, c);
    for (double& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) s.std[c] += (x(r, c) - s.mean[c]) * (x(r, c) - s.mean[c]);
    for (std::size_t c = 0; c < d; ++c) {
      s.std[c] = std::sqrt(s.std[c] / static_cast<double>(n - 1));
      if (!(s.std[c] > 0.0)) throw DataError("ColumnStats: column " + std::to_string(c) + " is constant");
    }
    return s;
  }

  RealTensor apply(const RealTensor& x) const {
    RealTensor z = x;
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) = (z(r, c) - mean[c]) / std[c];
    return z;
  }
};

}  // namespace scino
