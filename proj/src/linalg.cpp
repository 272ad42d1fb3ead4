// Copyright 2026 The dkp Authors. Apache 2.0 License.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "dkp/kron.hpp"
#include "dkp/matrix.hpp"
#include "dkp/prune.hpp"
#include "dkp/rank.hpp"

namespace dkp {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double d) { return std::isfinite(d); });
}

PruneMask prune_to_sparsity(const DenseMatrix& w, const PruneMask& current,
                            double target_sparsity) {
  require(w.rows() == current.rows() && w.cols() == current.cols(),
          "prune_to_sparsity: mask shape mismatch");
  if (!(target_sparsity >= 0.0 && target_sparsity <= 1.0))
    throw ConfigError("prune_to_sparsity: target " +
                      std::to_string(target_sparsity) + " outside [0, 1]");
  const std::size_t total = current.size();
  const std::size_t dead_now = total - current.alive_count();
  const double dead_exact = target_sparsity * static_cast<double>(total);
  // Compared at whole-count resolution: a target within rounding of the
  // current sparsity is a no-op, not a regrowth request.
  if (std::llround(dead_exact) < static_cast<long long>(dead_now))
    throw ConfigError("prune_to_sparsity: target " +
                      std::to_string(target_sparsity) +
                      " below current sparsity " +
                      std::to_string(current.sparsity()) +
                      " (masks never regrow)");
  const auto dead_target = std::max<std::size_t>(
      dead_now, static_cast<std::size_t>(std::llround(dead_exact)));
  const std::size_t to_kill = dead_target - dead_now;

  PruneMask next = current;
  if (to_kill == 0) return next;

  std::vector<std::size_t> alive;
  alive.reserve(current.alive_count());
  for (std::size_t i = 0; i < total; ++i)
    if (current.alive_flat(i)) alive.push_back(i);
  const double* v = w.data();
  auto smaller = [v](std::size_t a, std::size_t b) {
    const double fa = std::abs(v[a]), fb = std::abs(v[b]);
    return fa < fb || (fa == fb && a < b);
  };
  std::nth_element(alive.begin(), alive.begin() + (to_kill - 1), alive.end(),
                   smaller);
  for (std::size_t k = 0; k < to_kill; ++k) next.kill_flat(alive[k]);
  return next;
}

void apply_mask(DenseMatrix& w, const PruneMask& mask) {
  require(w.rows() == mask.rows() && w.cols() == mask.cols(),
          "apply_mask: shape mismatch");
  double* v = w.data();
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!mask.alive_flat(i)) v[i] = 0.0;
}

void kp_matvec_backward_add(const KroneckerPair& kp, std::span<const double> x,
                            std::span<const double> g, DenseMatrix& gb,
                            DenseMatrix& gc, std::span<double> gx,
                            std::vector<double>& scratch) {
  const KronShape s = shape_of(kp);
  require(x.size() == s.n1 * s.n2, "kp_matvec_backward: x length mismatch");
  require(g.size() == s.m1 * s.m2, "kp_matvec_backward: g length mismatch");
  require(gb.rows() == s.m1 && gb.cols() == s.n1 && gc.rows() == s.m2 &&
              gc.cols() == s.n2 && gx.size() == x.size(),
          "kp_matvec_backward: gradient buffer shape mismatch");
  const double* b = kp.b.data();
  const double* c = kp.c.data();

  // Column-major scratch blocks: P = X B^T (N2 x M1), Q = C X (M2 x N1),
  // R = C^T G (N2 x M1).
  scratch.assign(2 * s.n2 * s.m1 + s.m2 * s.n1, 0.0);
  double* p = scratch.data();
  double* q = p + s.n2 * s.m1;
  double* r = q + s.m2 * s.n1;

  for (std::size_t i1 = 0; i1 < s.m1; ++i1)
    for (std::size_t j1 = 0; j1 < s.n1; ++j1) {
      const double bij = b[i1 * s.n1 + j1];
      for (std::size_t j2 = 0; j2 < s.n2; ++j2)
        p[i1 * s.n2 + j2] += bij * x[j1 * s.n2 + j2];
    }
  for (std::size_t j1 = 0; j1 < s.n1; ++j1)
    for (std::size_t i2 = 0; i2 < s.m2; ++i2) {
      double acc = 0.0;
      for (std::size_t j2 = 0; j2 < s.n2; ++j2)
        acc += c[i2 * s.n2 + j2] * x[j1 * s.n2 + j2];
      q[j1 * s.m2 + i2] = acc;
    }
  for (std::size_t i1 = 0; i1 < s.m1; ++i1)
    for (std::size_t i2 = 0; i2 < s.m2; ++i2) {
      const double gv = g[i1 * s.m2 + i2];
      if (gv == 0.0) continue;
      for (std::size_t j2 = 0; j2 < s.n2; ++j2)
        r[i1 * s.n2 + j2] += c[i2 * s.n2 + j2] * gv;
    }

  // dC = G P^T
  for (std::size_t i2 = 0; i2 < s.m2; ++i2)
    for (std::size_t i1 = 0; i1 < s.m1; ++i1) {
      const double gv = g[i1 * s.m2 + i2];
      if (gv == 0.0) continue;
      double* gcr = gc.data() + i2 * s.n2;
      for (std::size_t j2 = 0; j2 < s.n2; ++j2)
        gcr[j2] += gv * p[i1 * s.n2 + j2];
    }
  // dB = G^T Q
  for (std::size_t i1 = 0; i1 < s.m1; ++i1)
    for (std::size_t j1 = 0; j1 < s.n1; ++j1) {
      double acc = 0.0;
      for (std::size_t i2 = 0; i2 < s.m2; ++i2)
        acc += g[i1 * s.m2 + i2] * q[j1 * s.m2 + i2];
      gb(i1, j1) += acc;
    }
  // dX = R B, i.e. dX[:, j1] = sum_i1 B[i1, j1] R[:, i1]
  for (std::size_t i1 = 0; i1 < s.m1; ++i1)
    for (std::size_t j1 = 0; j1 < s.n1; ++j1) {
      const double bij = b[i1 * s.n1 + j1];
      if (bij == 0.0) continue;
      for (std::size_t j2 = 0; j2 < s.n2; ++j2)
        gx[j1 * s.n2 + j2] += bij * r[i1 * s.n2 + j2];
    }
}

KronGradients kp_matvec_backward(const KroneckerPair& kp,
                                 std::span<const double> x,
                                 std::span<const double> g) {
  KronGradients out{DenseMatrix(kp.b.rows(), kp.b.cols()),
                    DenseMatrix(kp.c.rows(), kp.c.cols()),
                    Vector(x.size(), 0.0)};
  std::vector<double> scratch;
  kp_matvec_backward_add(kp, x, g, out.b, out.c, out.x, scratch);
  return out;
}

std::vector<double> singular_values(const DenseMatrix& m) {
  require(!m.empty(), "singular_values: empty matrix");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      view(m.data(), static_cast<Eigen::Index>(m.rows()),
           static_cast<Eigen::Index>(m.cols()));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(view);
  const auto& sv = svd.singularValues();
  return {sv.data(), sv.data() + sv.size()};
}

std::size_t numerical_rank(const DenseMatrix& m, double tol) {
  if (!(tol > 0.0)) throw ConfigError("numerical_rank: tol must be > 0");
  const std::vector<double> sv = singular_values(m);
  if (sv.empty() || sv.front() == 0.0) return 0;
  const double cut = tol * sv.front();
  return static_cast<std::size_t>(
      std::count_if(sv.begin(), sv.end(), [cut](double s) { return s > cut; }));
}

}  // namespace dkp
