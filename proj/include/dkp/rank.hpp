// Copyright 2026 The dkp Authors. Apache 2.0 License.

#ifndef DKP_RANK_HPP_
#define DKP_RANK_HPP_

#include <cstddef>
#include <vector>

#include "dkp/matrix.hpp"

namespace dkp {

// Singular values in descending order.
std::vector<double> singular_values(const DenseMatrix& m);

// Number of singular values strictly greater than tol * sigma_max.
std::size_t numerical_rank(const DenseMatrix& m, double tol);

}  // namespace dkp

#endif  // DKP_RANK_HPP_
