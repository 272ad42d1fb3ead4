// Copyright 2026 The dkp Authors. Apache 2.0 License.
//
// Row-major dense matrix and the plain loop kernels the rest of the library
// builds on. Everything is templated on the scalar so the benchmark harness
// can run 32-bit kernels; training and all tolerance tests use double.

#ifndef DKP_MATRIX_HPP_
#define DKP_MATRIX_HPP_

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dkp/error.hpp"

namespace dkp {

template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                       " != " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using DenseMatrix = Matrix<double>;
using Vector = std::vector<double>;

// Counts multiply-accumulates executed by a kernel. NullTally compiles away;
// CountingTally is used by the MAC-accounting cross-check.
struct NullTally {
  void mac(std::size_t = 1) {}
};
struct CountingTally {
  std::size_t count = 0;
  void mac(std::size_t n = 1) { count += n; }
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

// y = A x
template <typename T, typename Tally = NullTally>
void matvec(const Matrix<T>& a, std::span<const T> x, std::span<T> y,
            Tally&& tally = {}) {
  require(x.size() == a.cols(), "matvec: x length mismatch");
  require(y.size() == a.rows(), "matvec: y length mismatch");
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* ar = a.data() + i * n;
    T acc = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      acc += ar[j] * x[j];
      tally.mac();
    }
    y[i] = acc;
  }
}

template <typename T>
std::vector<T> matvec(const Matrix<T>& a, std::span<const T> x) {
  std::vector<T> y(a.rows());
  matvec<T>(a, x, std::span<T>(y));
  return y;
}

// y += A^T x
template <typename T>
void matvec_transposed_add(const Matrix<T>& a, std::span<const T> x,
                           std::span<T> y) {
  require(x.size() == a.rows(), "matvec_transposed_add: x length mismatch");
  require(y.size() == a.cols(), "matvec_transposed_add: y length mismatch");
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T xi = x[i];
    if (xi == T(0)) continue;
    const T* ar = a.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) y[j] += ar[j] * xi;
  }
}

// A += scale * u v^T
template <typename T>
void add_outer(Matrix<T>& a, std::span<const T> u, std::span<const T> v,
               T scale = T(1)) {
  require(u.size() == a.rows() && v.size() == a.cols(),
          "add_outer: shape mismatch");
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T ui = scale * u[i];
    if (ui == T(0)) continue;
    T* ar = a.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) ar[j] += ui * v[j];
  }
}

// C = A B (reference product for oracles and small factor algebra)
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <typename T>
T max_abs_diff(std::span<const T> a, std::span<const T> b) {
  require(a.size() == b.size(), "max_abs_diff: length mismatch");
  T m = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a[i] > b[i] ? a[i] - b[i] : b[i] - a[i];
    if (d > m) m = d;
  }
  return m;
}

bool all_finite(std::span<const double> v);

}  // namespace dkp

#endif  // DKP_MATRIX_HPP_
