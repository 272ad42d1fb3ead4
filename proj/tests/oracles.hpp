// Copyright 2026 The dkp Authors. Apache 2.0 License.
//
// Independent reference computations used only by tests. Nothing here calls
// the kernels it is used to check.

#ifndef DKP_TESTS_ORACLES_HPP_
#define DKP_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "dkp/matrix.hpp"
#include "dkp/rng.hpp"

namespace dkp::oracle {

inline DenseMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng,
                                 double scale = 1.0) {
  DenseMatrix m(r, c);
  for (double& v : m.flat()) v = rng.uniform(-scale, scale);
  return m;
}

inline Vector random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

// W[r, c] = B[r / M2, c / N2] * C[r % M2, c % N2]
inline DenseMatrix kron_by_index(const DenseMatrix& b, const DenseMatrix& c) {
  const std::size_t m = b.rows() * c.rows(), n = b.cols() * c.cols();
  DenseMatrix w(m, n);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t col = 0; col < n; ++col)
      w(r, col) = b(r / c.rows(), col / c.cols()) *
                  c(r % c.rows(), col % c.cols());
  return w;
}

inline Vector dense_matvec(const DenseMatrix& a, const Vector& x) {
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) y[i] += a(i, j) * x[j];
  return y;
}

inline double inf_norm_diff(const Vector& a, const Vector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Rank by Gaussian elimination with full pivoting; entries below
// tol * max|a| are treated as zero.
inline std::size_t gaussian_rank(DenseMatrix a, double tol) {
  double scale = 0.0;
  for (double v : a.flat()) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0;
  const double cut = tol * scale;
  std::size_t rank = 0;
  std::vector<bool> row_used(a.rows(), false), col_used(a.cols(), false);
  for (std::size_t step = 0; step < std::min(a.rows(), a.cols()); ++step) {
    double best = 0.0;
    std::size_t br = 0, bc = 0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      if (row_used[i]) continue;
      for (std::size_t j = 0; j < a.cols(); ++j) {
        if (col_used[j]) continue;
        if (std::abs(a(i, j)) > best) {
          best = std::abs(a(i, j));
          br = i;
          bc = j;
        }
      }
    }
    if (best <= cut) break;
    ++rank;
    row_used[br] = col_used[bc] = true;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      if (row_used[i]) continue;
      const double f = a(i, bc) / a(br, bc);
      for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) -= f * a(br, j);
    }
  }
  return rank;
}

// Central difference of f with respect to *param.
inline double central_difference(const std::function<double()>& f,
                                 double* param, double rel_step = 1e-6) {
  const double saved = *param;
  const double h = rel_step * std::max(1.0, std::abs(saved));
  *param = saved + h;
  const double fp = f();
  *param = saved - h;
  const double fm = f();
  *param = saved;
  return (fp - fm) / (2.0 * h);
}

// |a - b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace dkp::oracle

#endif  // DKP_TESTS_ORACLES_HPP_
