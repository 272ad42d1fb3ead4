// Copyright 2026 The dkp Authors. Apache 2.0 License.

#include "dkp/doped.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

namespace dkp {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::span<const double> cspan(const std::vector<double>& v) { return v; }

}  // namespace

VariantKind kind_of(const StructuredTerm& st) {
  return static_cast<VariantKind>(st.index());
}

std::string to_string(VariantKind k) {
  switch (k) {
    case VariantKind::kNone: return "none";
    case VariantKind::kKp: return "kp";
    case VariantKind::kLmf: return "lmf";
    case VariantKind::kHmd: return "hmd";
  }
  return "?";
}

VariantKind variant_from_string(const std::string& s) {
  if (s == "none") return VariantKind::kNone;
  if (s == "kp") return VariantKind::kKp;
  if (s == "lmf") return VariantKind::kLmf;
  if (s == "hmd") return VariantKind::kHmd;
  throw ConfigError("unknown structured variant '" + s +
                    "' (expected none, kp, lmf or hmd)");
}

std::size_t rows_of(const StructuredTerm& st) {
  return std::visit([](const auto& t) { return t.rows(); }, st);
}
std::size_t cols_of(const StructuredTerm& st) {
  return std::visit([](const auto& t) { return t.cols(); }, st);
}
std::size_t param_count(const StructuredTerm& st) {
  return std::visit([](const auto& t) { return t.param_count(); }, st);
}

std::size_t structured_macs(const StructuredTerm& st) {
  return std::visit(
      Overloaded{
          [](const NoStructure&) -> std::size_t { return 0; },
          [](const KroneckerPair& kp) {
            const KronShape s = shape_of(kp);
            return std::min(kron_macs(s, KronOrder::kRightFirst),
                            kron_macs(s, KronOrder::kLeftFirst));
          },
          [](const LowRankPair& l) {
            return l.rank() * (l.rows() + l.cols());
          },
          [](const HybridParts& h) {
            return h.dense_rows() * h.cols() + h.rank() * h.cols() +
                   h.rank() * (h.rows() - h.dense_rows());
          }},
      st);
}

StructuredTerm zeros_like(const StructuredTerm& st) {
  StructuredTerm z = st;
  for_each_factor(z, [](DenseMatrix& m) { m.fill(0.0); });
  return z;
}

DenseMatrix expand(const StructuredTerm& st) {
  return std::visit(
      Overloaded{
          [](const NoStructure& n) { return DenseMatrix(n.m, n.n); },
          [](const KroneckerPair& kp) { return kp_expand(kp); },
          [](const LowRankPair& l) { return matmul(l.b, l.c); },
          [](const HybridParts& h) {
            DenseMatrix w(h.rows(), h.cols());
            const DenseMatrix low = matmul(h.u, h.v);
            std::copy(h.d.data(), h.d.data() + h.d.size(), w.data());
            std::copy(low.data(), low.data() + low.size(),
                      w.data() + h.d.size());
            return w;
          }},
      st);
}

namespace {

template <typename Tally>
void structured_forward_impl(const StructuredTerm& st,
                             std::span<const double> x, std::span<double> y,
                             Workspace& ws, Tally& tally) {
  require(x.size() == cols_of(st), "structured_forward: x length mismatch");
  require(y.size() == rows_of(st), "structured_forward: y length mismatch");
  std::visit(
      Overloaded{
          [&](const NoStructure&) { std::fill(y.begin(), y.end(), 0.0); },
          [&](const KroneckerPair& kp) {
            kp_matvec<double, Tally&>(kp, x, y, ws.a, tally);
          },
          [&](const LowRankPair& l) {
            ws.a.assign(l.rank(), 0.0);
            matvec<double, Tally&>(l.c, x, ws.a, tally);
            matvec<double, Tally&>(l.b, cspan(ws.a), y, tally);
          },
          [&](const HybridParts& h) {
            const std::size_t m1 = h.dense_rows();
            matvec<double, Tally&>(h.d, x, y.subspan(0, m1), tally);
            ws.a.assign(h.rank(), 0.0);
            matvec<double, Tally&>(h.v, x, ws.a, tally);
            matvec<double, Tally&>(h.u, cspan(ws.a), y.subspan(m1), tally);
          }},
      st);
}

}  // namespace

void structured_forward(const StructuredTerm& st, std::span<const double> x,
                        std::span<double> y, Workspace& ws) {
  NullTally t;
  structured_forward_impl(st, x, y, ws, t);
}

void structured_forward(const StructuredTerm& st, std::span<const double> x,
                        std::span<double> y, Workspace& ws,
                        CountingTally& tally) {
  structured_forward_impl(st, x, y, ws, tally);
}

namespace {

void structured_backward_impl(const StructuredTerm& st,
                              std::span<const double> x,
                              std::span<const double> g, StructuredTerm* grad,
                              std::span<double> gx, Workspace& ws) {
  require(x.size() == cols_of(st) && gx.size() == x.size(),
          "structured_backward: x length mismatch");
  require(g.size() == rows_of(st), "structured_backward: g length mismatch");
  if (grad)
    require(grad->index() == st.index(),
            "structured_backward: gradient variant mismatch");
  std::visit(
      Overloaded{
          [&](const NoStructure&) {},
          [&](const KroneckerPair& kp) {
            if (grad) {
              auto& gk = std::get<KroneckerPair>(*grad);
              kp_matvec_backward_add(kp, x, g, gk.b, gk.c, gx, ws.a);
            } else {
              DenseMatrix gb(kp.b.rows(), kp.b.cols()),
                  gc(kp.c.rows(), kp.c.cols());
              kp_matvec_backward_add(kp, x, g, gb, gc, gx, ws.a);
            }
          },
          [&](const LowRankPair& l) {
            ws.a.assign(l.rank(), 0.0);
            ws.b.assign(l.rank(), 0.0);
            matvec<double>(l.c, x, ws.a);                       // t = C x
            matvec_transposed_add<double>(l.b, g, ws.b);        // gt = B^T g
            if (grad) {
              auto& gl = std::get<LowRankPair>(*grad);
              add_outer<double>(gl.b, g, cspan(ws.a));
              add_outer<double>(gl.c, cspan(ws.b), x);
            }
            matvec_transposed_add<double>(l.c, cspan(ws.b), gx);
          },
          [&](const HybridParts& h) {
            const std::size_t m1 = h.dense_rows();
            const auto g_top = g.subspan(0, m1);
            const auto g_bot = g.subspan(m1);
            ws.a.assign(h.rank(), 0.0);
            ws.b.assign(h.rank(), 0.0);
            matvec<double>(h.v, x, ws.a);                       // t = V x
            matvec_transposed_add<double>(h.u, g_bot, ws.b);    // gt = U^T g
            if (grad) {
              auto& gh = std::get<HybridParts>(*grad);
              add_outer<double>(gh.d, g_top, x);
              add_outer<double>(gh.u, g_bot, cspan(ws.a));
              add_outer<double>(gh.v, cspan(ws.b), x);
            }
            matvec_transposed_add<double>(h.d, g_top, gx);
            matvec_transposed_add<double>(h.v, cspan(ws.b), gx);
          }},
      st);
}

}  // namespace

void structured_backward_add(const StructuredTerm& st,
                             std::span<const double> x,
                             std::span<const double> g, StructuredTerm& grad,
                             std::span<double> gx, Workspace& ws) {
  structured_backward_impl(st, x, g, &grad, gx, ws);
}

CmrMasks CmrMasks::draw(std::size_t m, double drop_p, Rng& rng) {
  CmrMasks k;
  k.b1.resize(m);
  k.b2.resize(m);
  const double keep = 1.0 - drop_p;
  for (auto& b : k.b1) b = rng.bernoulli(keep);
  for (auto& b : k.b2) b = rng.bernoulli(keep);
  return k;
}

// ---- DopedWeight --------------------------------------------------------------

DopedWeight::DopedWeight(StructuredTerm s, DenseMatrix w, PruneMask mask)
    : structured(std::move(s)), ws(std::move(w)), mask_(std::move(mask)) {
  require(rows_of(structured) == ws.rows() && cols_of(structured) == ws.cols(),
          "DopedWeight: structured term and doping matrix differ in shape");
  require(mask_.rows() == ws.rows() && mask_.cols() == ws.cols(),
          "DopedWeight: mask shape mismatch");
  apply_mask(ws, mask_);
  refresh_pattern();
}

void DopedWeight::refresh_pattern() {
  pattern_.row_ptr.assign(1, 0);
  pattern_.col_idx.clear();
  pattern_.row_ptr.reserve(rows() + 1);
  pattern_.col_idx.reserve(mask_.alive_count());
  for (std::size_t i = 0; i < rows(); ++i) {
    for (std::size_t j = 0; j < cols(); ++j)
      if (mask_.alive(i, j))
        pattern_.col_idx.push_back(static_cast<std::uint32_t>(j));
    pattern_.row_ptr.push_back(
        static_cast<std::uint32_t>(pattern_.col_idx.size()));
  }
}

void DopedWeight::set_mask(PruneMask mask) {
  require(mask.rows() == rows() && mask.cols() == cols(),
          "DopedWeight::set_mask: shape mismatch");
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.alive_flat(i) && !mask_.alive_flat(i))
      throw ConfigError("DopedWeight::set_mask: mask would regrow weight " +
                        std::to_string(i));
  mask_ = std::move(mask);
  apply_mask(ws, mask_);
  refresh_pattern();
  frozen_csr_.reset();
}

void DopedWeight::prune_to(double target_sparsity) {
  set_mask(prune_to_sparsity(ws, mask_, target_sparsity));
}

void DopedWeight::freeze() { frozen_csr_ = Csr::from_masked(ws, mask_); }

bool DopedWeight::operator==(const DopedWeight& o) const {
  return structured == o.structured && ws == o.ws && mask_ == o.mask_ &&
         alpha == o.alpha && beta == o.beta && nnz_target == o.nnz_target &&
         frozen_csr_ == o.frozen_csr_;
}

DopedGradients DopedGradients::zeros_like(const DopedWeight& w) {
  return {dkp::zeros_like(w.structured), DenseMatrix(w.rows(), w.cols()), 0.0,
          0.0};
}

void DopedGradients::set_zero() {
  for_each_factor(structured, [](DenseMatrix& m) { m.fill(0.0); });
  ws.fill(0.0);
  alpha = beta = 0.0;
}

namespace {

template <typename Tally>
void sparse_forward_impl(const DopedWeight& w, std::span<const double> x,
                         std::span<double> y, Tally& tally) {
  require(x.size() == w.cols(), "sparse_forward: x length mismatch");
  require(y.size() == w.rows(), "sparse_forward: y length mismatch");
  if (w.frozen()) {
    matvec_csr<double, Tally&>(*w.frozen_csr(), x, y, tally);
    return;
  }
  const auto& p = w.pattern();
  const std::size_t n = w.cols();
  const double* v = w.ws.data();
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double acc = 0.0;
    const double* row = v + i * n;
    for (std::uint32_t k = p.row_ptr[i]; k < p.row_ptr[i + 1]; ++k) {
      const std::uint32_t j = p.col_idx[k];
      acc += row[j] * x[j];
      tally.mac();
    }
    y[i] = acc;
  }
}

}  // namespace

void sparse_forward(const DopedWeight& w, std::span<const double> x,
                    std::span<double> y) {
  NullTally t;
  sparse_forward_impl(w, x, y, t);
}

void sparse_forward(const DopedWeight& w, std::span<const double> x,
                    std::span<double> y, CountingTally& tally) {
  sparse_forward_impl(w, x, y, tally);
}

void doped_forward(const DopedWeight& w, std::span<const double> x,
                   std::span<double> y, const CmrMasks* masks, Workspace& ws) {
  const std::size_t m = w.rows();
  require(x.size() == w.cols(), "doped_forward: x length mismatch");
  require(y.size() == m, "doped_forward: y length mismatch");
  if (masks)
    require(masks->b1.size() == m && masks->b2.size() == m,
            "doped_forward: CMR mask length mismatch");

  structured_forward(w.structured, x, y, ws);
  if (masks || w.alpha != 1.0)
    for (std::size_t j = 0; j < m; ++j)
      y[j] *= (!masks || masks->b1[j]) ? w.alpha : 0.0;

  if (w.nnz() == 0) return;
  ws.b.assign(m, 0.0);
  sparse_forward(w, x, ws.b);
  for (std::size_t j = 0; j < m; ++j)
    if (!masks || masks->b2[j]) y[j] += w.beta * ws.b[j];
}

Vector doped_forward(const DopedWeight& w, std::span<const double> x,
                     const CmrMasks* masks) {
  Vector y(w.rows());
  Workspace ws;
  doped_forward(w, x, y, masks, ws);
  return y;
}

void doped_backward_add(const DopedWeight& w, std::span<const double> x,
                        std::span<const double> g, const CmrMasks* masks,
                        DopedGradients& acc, std::span<double> gx,
                        Workspace& ws, GradientFlow flow) {
  const std::size_t m = w.rows(), n = w.cols();
  require(x.size() == n && gx.size() == n,
          "doped_backward: x length mismatch");
  require(g.size() == m, "doped_backward: g length mismatch");
  require(acc.ws.rows() == m && acc.ws.cols() == n,
          "doped_backward: gradient buffer shape mismatch");
  if (masks)
    require(masks->b1.size() == m && masks->b2.size() == m,
            "doped_backward: CMR mask length mismatch");

  // Structured term, upstream g scaled by b1 * alpha.
  std::vector<double> gs(m);
  bool any_s = false;
  for (std::size_t j = 0; j < m; ++j) {
    gs[j] = (!masks || masks->b1[j]) ? g[j] * w.alpha : 0.0;
    any_s |= gs[j] != 0.0;
  }
  if (flow.alpha) {
    std::vector<double> s(m);
    structured_forward(w.structured, x, s, ws);
    double ga = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (!masks || masks->b1[j]) ga += g[j] * s[j];
    acc.alpha += ga;
  }
  if (any_s)
    structured_backward_impl(w.structured, x, gs,
                             flow.structured ? &acc.structured : nullptr, gx,
                             ws);

  if (w.nnz() == 0) return;
  // Doping term, upstream g scaled by b2 * beta.
  if (flow.beta) {
    std::vector<double> sw(m);
    sparse_forward(w, x, sw);
    double gb = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (!masks || masks->b2[j]) gb += g[j] * sw[j];
    acc.beta += gb;
  }
  const auto& p = w.pattern();
  const double* v = w.ws.data();
  double* ga = acc.ws.data();
  for (std::size_t i = 0; i < m; ++i) {
    if (masks && !masks->b2[i]) continue;
    const double gi = g[i] * w.beta;
    if (gi == 0.0) continue;
    const double* row = v + i * n;
    double* grow = ga + i * n;
    for (std::uint32_t k = p.row_ptr[i]; k < p.row_ptr[i + 1]; ++k) {
      const std::uint32_t j = p.col_idx[k];
      gx[j] += row[j] * gi;
      if (flow.sparse) grow[j] += gi * x[j];
    }
  }
}

DopedBackward doped_backward(const DopedWeight& w, std::span<const double> x,
                             std::span<const double> g,
                             const CmrMasks* masks) {
  DopedBackward out{DopedGradients::zeros_like(w), Vector(w.cols(), 0.0)};
  Workspace ws;
  doped_backward_add(w, x, g, masks, out.grads, out.x, ws);
  return out;
}

DenseMatrix expand(const DopedWeight& w) {
  DenseMatrix d = expand(w.structured);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double sv = w.mask().alive_flat(i) ? w.ws.data()[i] : 0.0;
    d.data()[i] = w.alpha * d.data()[i] + w.beta * sv;
  }
  return d;
}

// ---- sizing -------------------------------------------------------------------

namespace {

std::vector<std::size_t> divisors(std::size_t v) {
  std::vector<std::size_t> d;
  for (std::size_t i = 1; i * i <= v; ++i)
    if (v % i == 0) {
      d.push_back(i);
      if (i != v / i) d.push_back(v / i);
    }
  std::sort(d.begin(), d.end());
  return d;
}

std::vector<KpSizing> kp_candidates(std::size_t m, std::size_t n) {
  if (m == 0 || n == 0) throw ShapeError("KP sizing: empty matrix shape");
  std::vector<KpSizing> all, nontrivial;
  for (std::size_t m1 : divisors(m))
    for (std::size_t n1 : divisors(n)) {
      KpSizing s;
      s.shape = {m1, n1, m / m1, n / n1};
      s.rank_bound = std::min(s.shape.m1, s.shape.n1) *
                     std::min(s.shape.m2, s.shape.n2);
      s.params = s.shape.m1 * s.shape.n1 + s.shape.m2 * s.shape.n2;
      all.push_back(s);
      if (s.shape.m1 >= 2 && s.shape.n1 >= 2 && s.shape.m2 >= 2 &&
          s.shape.n2 >= 2)
        nontrivial.push_back(s);
    }
  if (!nontrivial.empty()) return nontrivial;
  for (auto& s : all) s.trivial_fallback = true;
  return all;
}

auto lex(const KpSizing& s) {
  return std::tie(s.shape.m1, s.shape.n1, s.shape.m2, s.shape.n2);
}

}  // namespace

KpSizing size_kp_factors(std::size_t m, std::size_t n) {
  const auto cands = kp_candidates(m, n);
  return *std::min_element(
      cands.begin(), cands.end(), [](const KpSizing& a, const KpSizing& b) {
        if (a.rank_bound != b.rank_bound) return a.rank_bound > b.rank_bound;
        if (a.params != b.params) return a.params < b.params;
        return lex(a) < lex(b);
      });
}

KpSizing size_kp_for_cf(std::size_t m, std::size_t n, double kp_cf) {
  if (!(kp_cf >= 1.0)) throw ConfigError("size_kp_for_cf: kp_cf must be >= 1");
  const auto cands = kp_candidates(m, n);
  const double total = static_cast<double>(m * n);
  auto dist = [&](const KpSizing& s) {
    return std::abs(std::log(total / static_cast<double>(s.params)) -
                    std::log(kp_cf));
  };
  return *std::min_element(
      cands.begin(), cands.end(), [&](const KpSizing& a, const KpSizing& b) {
        const double da = dist(a), db = dist(b);
        if (std::abs(da - db) > 1e-12) return da < db;
        if (a.rank_bound != b.rank_bound) return a.rank_bound > b.rank_bound;
        if (a.params != b.params) return a.params < b.params;
        return lex(a) < lex(b);
      });
}

HmdSizing size_hmd_for_budget(std::size_t m, std::size_t n,
                              std::size_t budget) {
  if (m < 2 || n < 1) throw ShapeError("HMD needs at least two rows");
  const double r = std::round(static_cast<double>(budget) /
                              static_cast<double>(m + 2 * n));
  HmdSizing h;
  h.r = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(r, 1.0)), 1,
                                std::min(m - 1, n));
  h.m1 = std::clamp<std::size_t>(h.r, 1, m - 1);
  return h;
}

StructuredTerm make_structured(std::size_t m, std::size_t n,
                               const VariantConfig& cfg) {
  if (m == 0 || n == 0) throw ShapeError("make_structured: empty shape");
  const double total = static_cast<double>(m * n);
  switch (cfg.kind) {
    case VariantKind::kNone:
      return NoStructure{m, n};
    case VariantKind::kKp: {
      KronShape s;
      if (cfg.kp_shape) {
        s = *cfg.kp_shape;
        if (s.m1 * s.m2 != m || s.n1 * s.n2 != n || s.m1 == 0 || s.n1 == 0)
          throw ShapeError("KP factors " + std::to_string(s.m1) + "x" +
                           std::to_string(s.n1) + " (x) " +
                           std::to_string(s.m2) + "x" + std::to_string(s.n2) +
                           " do not tile " + std::to_string(m) + "x" +
                           std::to_string(n));
      } else if (cfg.structured_cf > 0.0) {
        s = size_kp_for_cf(m, n, cfg.structured_cf).shape;
      } else {
        s = size_kp_factors(m, n).shape;
      }
      return KroneckerPair{DenseMatrix(s.m1, s.n1), DenseMatrix(s.m2, s.n2)};
    }
    case VariantKind::kLmf: {
      std::size_t d = cfg.lmf_rank;
      if (d == 0)
        d = cfg.structured_cf > 0.0
                ? static_cast<std::size_t>(std::max(
                      1.0, std::floor(total / cfg.structured_cf /
                                      static_cast<double>(m + n))))
                : 1;
      if (d >= std::min(m, n))
        throw ShapeError("LMF rank " + std::to_string(d) +
                         " must be below min(M, N) = " +
                         std::to_string(std::min(m, n)));
      return LowRankPair{DenseMatrix(m, d), DenseMatrix(d, n)};
    }
    case VariantKind::kHmd: {
      HmdSizing h{cfg.hmd_m1, cfg.hmd_rank};
      if (h.m1 == 0 || h.r == 0) {
        const HmdSizing auto_h =
            cfg.structured_cf > 0.0
                ? size_hmd_for_budget(
                      m, n, static_cast<std::size_t>(total / cfg.structured_cf))
                : HmdSizing{1, 1};
        if (h.m1 == 0) h.m1 = auto_h.m1;
        if (h.r == 0) h.r = auto_h.r;
      }
      if (h.m1 >= m) throw ShapeError("HMD dense block must leave rows for the low-rank block");
      return HybridParts{DenseMatrix(h.m1, n), DenseMatrix(m - h.m1, h.r),
                         DenseMatrix(h.r, n)};
    }
  }
  throw ConfigError("make_structured: unknown variant");
}

DopedWeight make_doped(std::size_t m, std::size_t n, const VariantConfig& cfg,
                       Rng& rng) {
  StructuredTerm st = make_structured(m, n, cfg);
  for_each_factor(st, [&](DenseMatrix& f) {
    const double a = 1.0 / std::sqrt(static_cast<double>(f.cols()));
    for (double& v : f.flat()) v = rng.uniform(-a, a);
  });

  const std::size_t params = param_count(st);
  std::size_t nnz_target = 0;
  if (cfg.doping) {
    if (!(cfg.target_cf >= 1.0))
      throw ConfigError("target_cf must be >= 1, got " +
                        std::to_string(cfg.target_cf));
    const double budget = static_cast<double>(m * n) / cfg.target_cf;
    if (static_cast<double>(params) > budget * (1.0 + 1e-9))
      throw ConfigError("structured term has " + std::to_string(params) +
                        " parameters, above the budget of " +
                        std::to_string(budget) + " for target CF " +
                        std::to_string(cfg.target_cf));
    nnz_target = static_cast<std::size_t>(
        std::max(0.0, std::floor(budget - static_cast<double>(params) + 1e-9)));
    nnz_target = std::min(nnz_target, m * n);
  }

  DenseMatrix ws(m, n);
  const bool alive = nnz_target > 0;
  if (alive) {
    const double a = 0.5 / std::sqrt(static_cast<double>(n));
    for (double& v : ws.flat()) v = rng.uniform(-a, a);
  }
  DopedWeight w(std::move(st), std::move(ws), PruneMask(m, n, alive));
  w.nnz_target = nnz_target;
  return w;
}

// ---- accounting ---------------------------------------------------------------

double compression_factor(const DopedWeight& w) {
  const double denom =
      static_cast<double>(param_count(w.structured) + w.nnz());
  return denom == 0.0 ? std::numeric_limits<double>::infinity()
                      : static_cast<double>(w.rows() * w.cols()) / denom;
}

MacEntry mac_count(const DopedWeight& w, std::string name) {
  MacEntry e;
  e.name = std::move(name);
  e.rows = w.rows();
  e.cols = w.cols();
  e.variant = w.kind();
  e.structured_params = param_count(w.structured);
  e.nnz = w.nnz();
  e.structured_macs = structured_macs(w.structured);
  e.sparse_macs = w.frozen() ? w.frozen_csr()->nnz() : w.nnz();
  e.dense_macs = w.rows() * w.cols();
  e.compression_factor = compression_factor(w);
  const double doped = static_cast<double>(e.structured_macs + e.sparse_macs);
  e.reduction = doped == 0.0 ? std::numeric_limits<double>::infinity()
                             : static_cast<double>(e.dense_macs) / doped;
  return e;
}

std::size_t instrumented_macs(const DopedWeight& w, std::span<const double> x) {
  CountingTally tally;
  Workspace ws;
  std::vector<double> y(w.rows());
  structured_forward(w.structured, x, y, ws, tally);
  sparse_forward(w, x, y, tally);
  return tally.count;
}

}  // namespace dkp
