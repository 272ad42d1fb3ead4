// Copyright 2026 The dkp Authors. Apache 2.0 License.

#ifndef DKP_CSR_HPP_
#define DKP_CSR_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dkp/matrix.hpp"
#include "dkp/prune.hpp"

namespace dkp {

template <typename T>
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> row_ptr;  // rows + 1
  std::vector<std::uint32_t> col_idx;
  std::vector<T> values;

  std::size_t nnz() const { return values.size(); }

  // Keeps entries that are alive in the mask and nonzero.
  static CsrMatrix from_masked(const Matrix<T>& w, const PruneMask& mask) {
    require(w.rows() == mask.rows() && w.cols() == mask.cols(),
            "CsrMatrix::from_masked: mask shape mismatch");
    CsrMatrix s;
    s.rows = w.rows();
    s.cols = w.cols();
    s.row_ptr.reserve(s.rows + 1);
    s.row_ptr.push_back(0);
    for (std::size_t i = 0; i < s.rows; ++i) {
      for (std::size_t j = 0; j < s.cols; ++j) {
        const T v = w(i, j);
        if (mask.alive(i, j) && v != T(0)) {
          s.col_idx.push_back(static_cast<std::uint32_t>(j));
          s.values.push_back(v);
        }
      }
      s.row_ptr.push_back(static_cast<std::uint32_t>(s.values.size()));
    }
    return s;
  }

  static CsrMatrix from_dense(const Matrix<T>& w) {
    return from_masked(w, PruneMask(w.rows(), w.cols(), true));
  }

  Matrix<T> to_dense() const {
    Matrix<T> d(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::uint32_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
        d(i, col_idx[k]) = values[k];
    return d;
  }

  // Throws FormatError when any structural invariant is broken.
  void validate() const {
    auto fail = [](const char* what) {
      throw FormatError(std::string("CsrMatrix: ") + what);
    };
    if (row_ptr.size() != rows + 1) fail("row_ptr length != rows + 1");
    if (row_ptr.front() != 0) fail("row_ptr[0] != 0");
    if (row_ptr.back() != values.size() || col_idx.size() != values.size())
      fail("nnz disagreement between row_ptr, col_idx and values");
    for (std::size_t i = 0; i < rows; ++i) {
      if (row_ptr[i] > row_ptr[i + 1]) fail("row_ptr decreasing");
      for (std::uint32_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
        if (col_idx[k] >= cols) fail("column index out of range");
        if (k > row_ptr[i] && col_idx[k] <= col_idx[k - 1])
          fail("column indices not strictly increasing");
      }
    }
  }

  bool operator==(const CsrMatrix&) const = default;
};

// y = S x, exactly nnz multiply-accumulates.
template <typename T, typename Tally = NullTally>
void matvec_csr(const CsrMatrix<T>& s, std::span<const T> x, std::span<T> y,
                Tally&& tally = {}) {
  require(x.size() == s.cols, "matvec_csr: x length mismatch");
  require(y.size() == s.rows, "matvec_csr: y length mismatch");
  const std::uint32_t* rp = s.row_ptr.data();
  const std::uint32_t* ci = s.col_idx.data();
  const T* v = s.values.data();
  for (std::size_t i = 0; i < s.rows; ++i) {
    T acc = T(0);
    for (std::uint32_t k = rp[i]; k < rp[i + 1]; ++k) {
      acc += v[k] * x[ci[k]];
      tally.mac();
    }
    y[i] = acc;
  }
}

template <typename T>
std::vector<T> matvec_csr(const CsrMatrix<T>& s, std::span<const T> x) {
  std::vector<T> y(s.rows);
  matvec_csr<T>(s, x, std::span<T>(y));
  return y;
}

using Csr = CsrMatrix<double>;

}  // namespace dkp

#endif  // DKP_CSR_HPP_
