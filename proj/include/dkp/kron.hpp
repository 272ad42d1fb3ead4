// Copyright 2026 The dkp Authors. Apache 2.0 License.
//
// Kronecker-factored matrices W = B (x) C with
//   W[i1*M2 + i2, j1*N2 + j2] = B[i1, j1] * C[i2, j2].
//
// The matvec never expands W. With X the N2 x N1 reshape of x
// (X[j2, j1] = x[j1*N2 + j2], i.e. x read column-major), the product is
// Y = C X B^T and y[i1*M2 + i2] = Y[i2, i1]. Both association orders
//   (X B^T) first: N1*N2*M1 + M2*N2*M1 MACs
//   (C X)   first: M2*N2*N1 + M2*N1*M1 MACs
// give the same result; the cheaper one is picked per call.

#ifndef DKP_KRON_HPP_
#define DKP_KRON_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "dkp/matrix.hpp"

namespace dkp {

template <typename T>
struct KroneckerFactors {
  Matrix<T> b;  // M1 x N1
  Matrix<T> c;  // M2 x N2

  std::size_t rows() const { return b.rows() * c.rows(); }
  std::size_t cols() const { return b.cols() * c.cols(); }
  std::size_t param_count() const { return b.size() + c.size(); }

  bool operator==(const KroneckerFactors&) const = default;
};

using KroneckerPair = KroneckerFactors<double>;

enum class KronOrder { kRightFirst, kLeftFirst };  // (X B^T) first, (C X) first

struct KronShape {
  std::size_t m1, n1, m2, n2;
};

inline std::size_t kron_macs(const KronShape& s, KronOrder order) {
  return order == KronOrder::kRightFirst
             ? s.n1 * s.n2 * s.m1 + s.m2 * s.n2 * s.m1
             : s.m2 * s.n2 * s.n1 + s.m2 * s.n1 * s.m1;
}

inline KronOrder cheaper_order(const KronShape& s) {
  return kron_macs(s, KronOrder::kRightFirst) <=
                 kron_macs(s, KronOrder::kLeftFirst)
             ? KronOrder::kRightFirst
             : KronOrder::kLeftFirst;
}

template <typename T>
KronShape shape_of(const KroneckerFactors<T>& kp) {
  return {kp.b.rows(), kp.b.cols(), kp.c.rows(), kp.c.cols()};
}

// Largest expansion kp_expand will materialize.
inline constexpr std::size_t kMaxExpandElements = std::size_t{1} << 26;

template <typename T>
Matrix<T> kp_expand(const KroneckerFactors<T>& kp,
                    std::size_t max_elements = kMaxExpandElements) {
  const std::size_t m = kp.rows(), n = kp.cols();
  if (n != 0 && m > max_elements / n)
    throw ShapeError("kp_expand: " + std::to_string(m) + "x" +
                     std::to_string(n) + " exceeds " +
                     std::to_string(max_elements) + " elements");
  const std::size_t m2 = kp.c.rows(), n2 = kp.c.cols();
  Matrix<T> w(m, n);
  for (std::size_t i1 = 0; i1 < kp.b.rows(); ++i1)
    for (std::size_t j1 = 0; j1 < kp.b.cols(); ++j1) {
      const T bij = kp.b(i1, j1);
      for (std::size_t i2 = 0; i2 < m2; ++i2)
        for (std::size_t j2 = 0; j2 < n2; ++j2)
          w(i1 * m2 + i2, j1 * n2 + j2) = bij * kp.c(i2, j2);
    }
  return w;
}

// y = (B (x) C) x. scratch is resized as needed and may be reused across
// calls.
template <typename T, typename Tally = NullTally>
void kp_matvec(const KroneckerFactors<T>& kp, std::span<const T> x,
               std::span<T> y, std::vector<T>& scratch, Tally&& tally = {}) {
  const KronShape s = shape_of(kp);
  require(x.size() == s.n1 * s.n2, "kp_matvec: x length mismatch");
  require(y.size() == s.m1 * s.m2, "kp_matvec: y length mismatch");
  const T* b = kp.b.data();
  const T* c = kp.c.data();

  if (cheaper_order(s) == KronOrder::kRightFirst) {
    // P = X B^T, stored column-major N2 x M1: P[:, i1] = sum_j1 B[i1,j1] X[:, j1]
    scratch.assign(s.n2 * s.m1, T(0));
    for (std::size_t i1 = 0; i1 < s.m1; ++i1) {
      T* pcol = scratch.data() + i1 * s.n2;
      for (std::size_t j1 = 0; j1 < s.n1; ++j1) {
        const T bij = b[i1 * s.n1 + j1];
        const T* xcol = x.data() + j1 * s.n2;
        for (std::size_t j2 = 0; j2 < s.n2; ++j2) {
          pcol[j2] += bij * xcol[j2];
          tally.mac();
        }
      }
    }
    // Y[:, i1] = C P[:, i1]
    for (std::size_t i1 = 0; i1 < s.m1; ++i1) {
      const T* pcol = scratch.data() + i1 * s.n2;
      T* ycol = y.data() + i1 * s.m2;
      for (std::size_t i2 = 0; i2 < s.m2; ++i2) {
        const T* crow = c + i2 * s.n2;
        T acc = T(0);
        for (std::size_t j2 = 0; j2 < s.n2; ++j2) {
          acc += crow[j2] * pcol[j2];
          tally.mac();
        }
        ycol[i2] = acc;
      }
    }
  } else {
    // Q = C X, stored column-major M2 x N1: Q[:, j1] = C X[:, j1]
    scratch.assign(s.m2 * s.n1, T(0));
    for (std::size_t j1 = 0; j1 < s.n1; ++j1) {
      const T* xcol = x.data() + j1 * s.n2;
      T* qcol = scratch.data() + j1 * s.m2;
      for (std::size_t i2 = 0; i2 < s.m2; ++i2) {
        const T* crow = c + i2 * s.n2;
        T acc = T(0);
        for (std::size_t j2 = 0; j2 < s.n2; ++j2) {
          acc += crow[j2] * xcol[j2];
          tally.mac();
        }
        qcol[i2] = acc;
      }
    }
    // Y[:, i1] = sum_j1 B[i1, j1] Q[:, j1]
    for (std::size_t i1 = 0; i1 < s.m1; ++i1) {
      T* ycol = y.data() + i1 * s.m2;
      std::fill(ycol, ycol + s.m2, T(0));
      for (std::size_t j1 = 0; j1 < s.n1; ++j1) {
        const T bij = b[i1 * s.n1 + j1];
        const T* qcol = scratch.data() + j1 * s.m2;
        for (std::size_t i2 = 0; i2 < s.m2; ++i2) {
          ycol[i2] += bij * qcol[i2];
          tally.mac();
        }
      }
    }
  }
}

template <typename T>
std::vector<T> kp_matvec(const KroneckerFactors<T>& kp, std::span<const T> x) {
  std::vector<T> y(kp.rows()), scratch;
  kp_matvec<T>(kp, x, std::span<T>(y), scratch);
  return y;
}

struct KronGradients {
  DenseMatrix b;  // M1 x N1
  DenseMatrix c;  // M2 x N2
  Vector x;       // N1*N2
};

// Gradients of g^T (B (x) C) x with respect to B, C and x.
KronGradients kp_matvec_backward(const KroneckerPair& kp,
                                 std::span<const double> x,
                                 std::span<const double> g);

// Accumulating form used by the trainer: gb += dB, gc += dC, gx += dx.
void kp_matvec_backward_add(const KroneckerPair& kp, std::span<const double> x,
                            std::span<const double> g, DenseMatrix& gb,
                            DenseMatrix& gc, std::span<double> gx,
                            std::vector<double>& scratch);

}  // namespace dkp

#endif  // DKP_KRON_HPP_
