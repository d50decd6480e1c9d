#pragma once

// Operator norms, local testing constants, and the bilinear-form bookkeeping
// for ⟨Tf, g⟩ with |f| = |g| = 1_{Q0}: expansion, the split by relative size,
// the per-stopping-cube B_above terms and their ε_Q coefficients, and the
// constants of the diagonal and box estimates. Also the adversarial search
// for large twisted martingale transforms.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dytb/accretive.hpp"
#include "dytb/corona.hpp"
#include "dytb/dyadic.hpp"
#include "dytb/perfect_kernel.hpp"
#include "dytb/rng.hpp"
#include "dytb/twisted.hpp"

namespace dytb {

/// |a - b| / (1 + |b|).
inline double relative_residual(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(b)); }

// ---------------------------------------------------------------------------
// Operator norm.

enum class NormMethod { DenseSvd, Power };

inline std::string to_string(NormMethod m) { return m == NormMethod::DenseSvd ? "dense-svd" : "power"; }

inline NormMethod norm_method_from_string(const std::string& s) {
  if (s == "dense-svd") return NormMethod::DenseSvd;
  if (s == "power") return NormMethod::Power;
  throw std::invalid_argument("unknown norm method '" + s + "'");
}

inline constexpr std::size_t kDenseCellLimit = 4096;

struct NormEstimate {
  double value = 0.0;
  bool converged = true;
  /// ‖T*Tv − λv‖ / λ at the last iterate; 0 for the dense route.
  double achieved_tol = 0.0;
  int iterations = 0;
};

/// Matrix of T on cell values: (Tf)_x = Σ_y M_{xy} f_y. In the L²-normalized
/// cell basis the matrix is the same, so its largest singular value is ‖T‖.
inline Eigen::MatrixXd dense_matrix(const PerfectKernel& t) {
  const GridSpec& spec = t.spec();
  if (spec.cells() > kDenseCellLimit) throw std::domain_error("dense matrices are limited to 4096 cells");
  const auto n = static_cast<Eigen::Index>(spec.cells());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  const double vol = spec.cell_volume();
  std::vector<std::size_t> xs;
  std::vector<std::size_t> ys;
  for (const auto& [key, kappa] : t.entries()) {
    xs.clear();
    ys.clear();
    for_each_cell(spec, child(spec, key.cube, key.i), [&](std::size_t i) { xs.push_back(i); });
    for_each_cell(spec, child(spec, key.cube, key.j), [&](std::size_t i) { ys.push_back(i); });
    for (std::size_t y : ys)
      for (std::size_t x : xs) m(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) += kappa * vol;
  }
  return m;
}

inline NormEstimate operator_norm(const PerfectKernel& t, NormMethod method, double tol = 1e-8, int max_iter = 10000) {
  NormEstimate out;
  if (t.is_zero()) return out;
  if (method == NormMethod::DenseSvd) {
    const Eigen::BDCSVD<Eigen::MatrixXd> svd(dense_matrix(t));
    out.value = svd.singularValues()(0);
    return out;
  }
  const GridSpec& spec = t.spec();
  const PerfectKernel ts = adjoint(t);
  Rng rng(0x5eedULL);
  GridFunction v(spec);
  for (double& x : v.values()) x = rng.uniform(-1.0, 1.0);
  auto norm = [](const GridFunction& f) {
    double s = 0.0;
    for (double x : f.values()) s += x * x;
    return std::sqrt(s);
  };
  v *= 1.0 / norm(v);
  double lambda = 0.0;
  out.converged = false;
  for (int it = 1; it <= max_iter; ++it) {
    GridFunction u = apply(ts, apply(t, v));
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * u[i];
    lambda = dot;
    const double un = norm(u);
    out.iterations = it;
    if (un == 0.0) {
      out.value = 0.0;
      out.converged = true;
      out.achieved_tol = 0.0;
      return out;
    }
    double r = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) r += (u[i] - lambda * v[i]) * (u[i] - lambda * v[i]);
    out.achieved_tol = std::sqrt(r) / lambda;
    if (out.achieved_tol <= tol) {
      out.converged = true;
      break;
    }
    v = std::move(u);
    v *= 1.0 / un;
  }
  out.value = std::sqrt(std::max(lambda, 0.0));
  return out;
}

// ---------------------------------------------------------------------------
// Testing constants.

enum class TestingSide { Direct, Adjoint };

/// max over Q ⊆ Q0 of (|Q|^{-1} ∫_Q |T b_Q|^q)^{1/q}, or with T* for the adjoint side.
inline double testing_constant(const PerfectKernel& t, const AccretiveSystem& sys, double q, TestingSide side,
                               const DyadicCube& q0 = root_cube()) {
  require_exponent(q);
  if (!(t.spec() == sys.spec())) throw std::domain_error("grid mismatch between kernel and system");
  if (t.is_zero()) return 0.0;
  const PerfectKernel op = side == TestingSide::Direct ? t : adjoint(t);
  double worst = 0.0;
  for (const auto& cube : cubes_within(t.spec(), q0)) {
    const GridFunction tb = apply(op, sys.get_b(cube));
    worst = std::max(worst, lp_power_integral(tb, q, cube) / volume(t.spec(), cube));
  }
  return std::pow(worst, 1.0 / q);
}

// ---------------------------------------------------------------------------
// Bilinear-form pieces.

/// ±1 on every cell of Q0, zero elsewhere.
inline GridFunction random_sign_function(const GridSpec& spec, const DyadicCube& q0, Rng& rng) {
  GridFunction f(spec);
  for_each_cell(spec, q0, [&](std::size_t i) { f[i] = rng.sign(); });
  return f;
}

/// Corona differences of f (family 1) and g (family 2) over the non-leaf cubes
/// of Q0, T applied to each Δ_P f, and the Gram matrix ⟨TΔ_P f, Δ_Q g⟩. Holds
/// references to its arguments, which must outlive it.
class BilinearPieces {
 public:
  BilinearPieces(const PerfectKernel& t, const CoronaForest& forest, const AccretiveSystem& sys1,
                 const AccretiveSystem& sys2, GridFunction f, GridFunction g)
      : t_(&t),
        forest_(&forest),
        calc1_(forest, 1, sys1),
        calc2_(forest, 2, sys2),
        f_(std::move(f)),
        g_(std::move(g)),
        pf_(f_),
        pg_(g_),
        index_(t.spec().cube_count(), -1),
        ef_(t.spec()),
        eg_(t.spec()) {
    const GridSpec& spec = t.spec();
    if (!(sys1.spec() == spec) || !(sys2.spec() == spec) || !(f_.spec() == spec) || !(g_.spec() == spec))
      throw std::domain_error("grid mismatch in bilinear pieces");
    for (const auto& q : cubes_within(spec, forest.q0)) {
      if (is_leaf(spec, q)) continue;
      index_[cube_id(spec, q)] = static_cast<int>(cubes_.size());
      cubes_.push_back(q);
      GridFunction a(spec);
      calc1_.add_delta(pf_, q, 1.0, a);
      GridFunction b(spec);
      calc2_.add_delta(pg_, q, 1.0, b);
      tdf_.push_back(apply(t, a));
      df_.push_back(std::move(a));
      dg_.push_back(std::move(b));
    }
    const std::size_t n = cubes_.size();
    gram_.assign(n * n, 0.0);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) gram_[a * n + b] = inner_product(tdf_[a], dg_[b]);
    calc1_.add_expectation(pf_, forest.q0, 1.0, ef_);
    calc2_.add_expectation(pg_, forest.q0, 1.0, eg_);
  }

  const GridSpec& spec() const noexcept { return t_->spec(); }
  const PerfectKernel& kernel() const noexcept { return *t_; }
  const CoronaForest& forest() const noexcept { return *forest_; }
  const CoronaCalculus& calc(int j) const noexcept { return j == 1 ? calc1_ : calc2_; }
  const GridFunction& f() const noexcept { return f_; }
  const GridFunction& g() const noexcept { return g_; }
  const IntegralPyramid& f_pyramid() const noexcept { return pf_; }
  const IntegralPyramid& g_pyramid() const noexcept { return pg_; }

  /// Non-leaf cubes of Q0 in id order; finest cells have Δ = 0.
  const std::vector<DyadicCube>& cubes() const noexcept { return cubes_; }
  int index_of(const DyadicCube& q) const { return index_[cube_id(spec(), q)]; }
  const GridFunction& delta_f(std::size_t k) const { return df_[k]; }
  const GridFunction& delta_g(std::size_t k) const { return dg_[k]; }
  const GridFunction& t_delta_f(std::size_t k) const { return tdf_[k]; }
  double gram(std::size_t p, std::size_t q) const { return gram_[p * cubes_.size() + q]; }
  const GridFunction& expectation_f() const noexcept { return ef_; }
  const GridFunction& expectation_g() const noexcept { return eg_; }

 private:
  const PerfectKernel* t_;
  const CoronaForest* forest_;
  CoronaCalculus calc1_;
  CoronaCalculus calc2_;
  GridFunction f_;
  GridFunction g_;
  IntegralPyramid pf_;
  IntegralPyramid pg_;
  std::vector<DyadicCube> cubes_;
  std::vector<int> index_;
  std::vector<GridFunction> df_;
  std::vector<GridFunction> dg_;
  std::vector<GridFunction> tdf_;
  std::vector<double> gram_;
  GridFunction ef_;
  GridFunction eg_;
};

struct BilinearExpansion {
  double total = 0.0;
  double easy1 = 0.0;  // ⟨T E_{Q0} f, g⟩
  double easy2 = 0.0;  // ⟨T Σ Δ_P f, E_{Q0} g⟩
  double main = 0.0;   // Σ_{P,Q} ⟨TΔ_P f, Δ_Q g⟩
  double residual = 0.0;
  double relative = 0.0;
};

inline BilinearExpansion bilinear_expansion_check(const BilinearPieces& pc) {
  BilinearExpansion out;
  const PerfectKernel& t = pc.kernel();
  out.total = bilinear(t, pc.f(), pc.g());
  out.easy1 = bilinear(t, pc.expectation_f(), pc.g());
  GridFunction sum_df(pc.spec());
  for (std::size_t k = 0; k < pc.cubes().size(); ++k) sum_df += pc.delta_f(k);
  out.easy2 = bilinear(t, sum_df, pc.expectation_g());
  const std::size_t n = pc.cubes().size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) out.main += pc.gram(a, b);
  const double rhs = out.easy1 + out.easy2 + out.main;
  out.residual = std::abs(out.total - rhs);
  out.relative = relative_residual(rhs, out.total);
  return out;
}

inline BilinearExpansion bilinear_expansion_check(const PerfectKernel& t, const CoronaForest& F,
                                                  const AccretiveSystem& sys1, const AccretiveSystem& sys2,
                                                  const GridFunction& f, const GridFunction& g) {
  return bilinear_expansion_check(BilinearPieces(t, F, sys1, sys2, f, g));
}

struct FormSplit {
  /// ℓP > ℓQ, ℓP = ℓQ, and ℓP < ℓQ (the last through T* and the roles swapped).
  double above = 0.0;
  double equal = 0.0;
  double below = 0.0;
  /// The nested parts P ⊋ Q and P ⊊ Q of the Gram matrix.
  double above_nested = 0.0;
  double below_nested = 0.0;
  /// ⟨T ΣΔ_P f, ΣΔ_Q g⟩ through the quadratic form.
  double total = 0.0;
  double residual = 0.0;
  double relative = 0.0;
  /// Pairs that are neither nested nor equal contribute nothing.
  double nonnested = 0.0;
};

inline FormSplit form_split(const BilinearPieces& pc) {
  FormSplit out;
  const auto& cubes = pc.cubes();
  const std::size_t n = cubes.size();
  double below_levels = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      const DyadicCube& P = cubes[a];
      const DyadicCube& Q = cubes[b];
      const double v = pc.gram(a, b);
      if (P.level < Q.level) out.above += v;
      if (P.level == Q.level) out.equal += v;
      if (P.level > Q.level) below_levels += v;
      if (strictly_contains(P, Q)) out.above_nested += v;
      if (strictly_contains(Q, P)) out.below_nested += v;
    }
  const PerfectKernel ts = adjoint(pc.kernel());
  for (std::size_t b = 0; b < n; ++b) {
    const GridFunction tg = apply(ts, pc.delta_g(b));
    for (std::size_t a = 0; a < n; ++a)
      if (strictly_contains(cubes[b], cubes[a])) out.below += inner_product(pc.delta_f(a), tg);
  }
  GridFunction sum_df(pc.spec());
  GridFunction sum_dg(pc.spec());
  for (std::size_t k = 0; k < n; ++k) {
    sum_df += pc.delta_f(k);
    sum_dg += pc.delta_g(k);
  }
  out.total = bilinear(pc.kernel(), sum_df, sum_dg);
  const double sum = out.above + out.equal + out.below;
  out.residual = std::abs(sum - out.total);
  out.relative = relative_residual(sum, out.total);
  out.nonnested = std::abs(out.above - out.above_nested) + std::abs(below_levels - out.below_nested);
  return out;
}

inline FormSplit form_split(const PerfectKernel& t, const CoronaForest& F, const AccretiveSystem& sys1,
                            const AccretiveSystem& sys2, const GridFunction& f, const GridFunction& g) {
  return form_split(BilinearPieces(t, F, sys1, sys2, f, g));
}

// ---------------------------------------------------------------------------
// B_above by stopping cubes.

namespace detail {

/// Value of ∇̃Δ_P f on child c of P (family 1):
/// ⟨f⟩_c/⟨b¹_{πc}⟩_c·[c ∉ S_1] − ⟨f⟩_P/⟨b¹_{πP}⟩_P.
inline double nabla_value(const CoronaCalculus& calc, const IntegralPyramid& pf, const DyadicCube& p,
                          const DyadicCube& c) {
  const double top = calc.expectation_coefficient(pf, p);
  if (calc.family().contains(c)) return -top;
  return calc.expectation_coefficient(pf, c) - top;
}

}  // namespace detail

/// ∇̃Δ_P f as a grid function supported on P (zero for finest cells).
inline GridFunction nabla_delta(const CoronaCalculus& calc, const IntegralPyramid& pf, const DyadicCube& p) {
  const GridSpec& spec = calc.spec();
  GridFunction out(spec);
  if (is_leaf(spec, p)) return out;
  for (int c = 0; c < spec.children_per_cube(); ++c) {
    const DyadicCube ch = child(spec, p, c);
    const double v = detail::nabla_value(calc, pf, p, ch);
    for_each_cell(spec, ch, [&](std::size_t i) { out[i] = v; });
  }
  return out;
}

struct PerSAbove {
  DyadicCube s;
  /// 1_{S≠Q0}⟨f⟩_S Σ_{Q⊆S}⟨Tb¹_S, Δ_Q g⟩ + Σ_{πP=S} Σ_{Q⊊P} ⟨T(b¹_S ∇̃Δ_P f), Δ_Q g⟩.
  double value = 0.0;
  double lhs = 0.0;
  /// (1 + Tloc)|S|.
  double bound = 0.0;
  /// The same sum with every term in the pulled-out form ⟨∇̃Δ_P f⟩_{P_Q}⟨Tb¹_S, Δ_Q g⟩.
  double pulled_value = 0.0;
  /// max over terms of the per-term pull-out residual, relative.
  double pullout_residual = 0.0;
  /// The same sum as Σ_{Q⊊S} ε_Q ⟨Tb¹_S, Δ_Q g⟩.
  double epsilon_value = 0.0;
  double epsilon_residual = 0.0;
  double max_abs_epsilon = 0.0;
};

inline PerSAbove b_above_per_S_check(const BilinearPieces& pc, const DyadicCube& s, double Tloc) {
  const CoronaCalculus& calc = pc.calc(1);
  if (!calc.family().contains(s)) throw std::domain_error("b_above_per_S_check: S must be a member of S_1");
  const GridSpec& spec = pc.spec();
  const GridFunction& bs = calc.system().get_b(s);
  const GridFunction tbs = apply(pc.kernel(), bs);
  const auto& cubes = pc.cubes();
  const std::size_t n = cubes.size();
  // ⟨Tb¹_S, Δ_Q g⟩ for every indexed Q.
  std::vector<double> tb_dg(n, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    if (contains(s, cubes[k])) tb_dg[k] = inner_product(tbs, pc.delta_g(k));

  PerSAbove out;
  out.s = s;
  out.bound = (1.0 + Tloc) * volume(spec, s);
  double first = 0.0;
  if (s != pc.forest().q0) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (contains(s, cubes[k])) acc += tb_dg[k];
    first = pc.f_pyramid().average(s) * acc;
  }
  std::vector<double> eps(n, 0.0);
  double direct = 0.0;
  double pulled = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const DyadicCube& P = cubes[a];
    if (!contains(s, P) || calc.block(P) != s) continue;
    const GridFunction nab = nabla_delta(calc, pc.f_pyramid(), P);
    const GridFunction tn = apply(pc.kernel(), bs * nab);
    for (std::size_t b = 0; b < n; ++b) {
      const DyadicCube& Q = cubes[b];
      if (!strictly_contains(P, Q)) continue;
      const double lhs = inner_product(tn, pc.delta_g(b));
      const double coeff = detail::nabla_value(calc, pc.f_pyramid(), P, ancestor_at(Q, P.level + 1));
      const double rhs = coeff * tb_dg[b];
      direct += lhs;
      pulled += rhs;
      eps[b] += coeff;
      out.pullout_residual = std::max(out.pullout_residual, relative_residual(rhs, lhs));
    }
  }
  double eps_form = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    eps_form += eps[b] * tb_dg[b];
    out.max_abs_epsilon = std::max(out.max_abs_epsilon, std::abs(eps[b]));
  }
  out.value = first + direct;
  out.lhs = std::abs(out.value);
  out.pulled_value = first + pulled;
  out.epsilon_value = first + eps_form;
  out.epsilon_residual = relative_residual(out.epsilon_value, out.value);
  return out;
}

inline PerSAbove b_above_per_S_check(const PerfectKernel& t, const CoronaForest& F, const AccretiveSystem& sys1,
                                     const AccretiveSystem& sys2, const GridFunction& f, const GridFunction& g,
                                     const DyadicCube& s, double Tloc) {
  return b_above_per_S_check(BilinearPieces(t, F, sys1, sys2, f, g), s, Tloc);
}

struct AboveAggregation {
  std::vector<PerSAbove> blocks;
  double sum = 0.0;
  double b_above = 0.0;
  double residual = 0.0;
  double relative = 0.0;
  double pullout_residual = 0.0;
  double epsilon_residual = 0.0;
  /// max over S of |lhs_S| / ((1 + Tloc)|S|).
  double worst_block_ratio = 0.0;
};

/// Σ_{S∈S_1} of the per-S sums against B_above = Σ_{P⊋Q} ⟨TΔ_P f, Δ_Q g⟩.
inline AboveAggregation b_above_aggregation(const BilinearPieces& pc, double Tloc) {
  AboveAggregation out;
  const auto& cubes = pc.cubes();
  for (std::size_t a = 0; a < cubes.size(); ++a)
    for (std::size_t b = 0; b < cubes.size(); ++b)
      if (strictly_contains(cubes[a], cubes[b])) out.b_above += pc.gram(a, b);
  for (const auto& s : pc.calc(1).family().members()) {
    PerSAbove blk = b_above_per_S_check(pc, s, Tloc);
    out.sum += blk.value;
    out.pullout_residual = std::max(out.pullout_residual, blk.pullout_residual);
    out.epsilon_residual = std::max(out.epsilon_residual, blk.epsilon_residual);
    out.worst_block_ratio = std::max(out.worst_block_ratio, blk.lhs / blk.bound);
    out.blocks.push_back(blk);
  }
  out.residual = std::abs(out.sum - out.b_above);
  out.relative = relative_residual(out.sum, out.b_above);
  return out;
}

/// ε_Q = Σ_{P⊋Q, π_{S_1}P = S} ⟨∇̃Δ_P f⟩_{P_Q} for Q ⊊ S, S ∈ S_1.
inline double epsilon_coefficient(const CoronaForest& F, const AccretiveSystem& sys1, const GridFunction& f,
                                  const DyadicCube& s, const DyadicCube& q) {
  const CoronaCalculus calc(F, 1, sys1);
  if (!calc.family().contains(s)) throw std::domain_error("epsilon_coefficient: S must be a member of S_1");
  if (!strictly_contains(s, q)) throw std::domain_error("epsilon_coefficient: Q must lie strictly inside S");
  const IntegralPyramid pf(f);
  double eps = 0.0;
  for (int level = s.level; level < q.level; ++level) {
    const DyadicCube P = ancestor_at(q, level);
    if (calc.block(P) != s) continue;
    eps += detail::nabla_value(calc, pf, P, ancestor_at(q, level + 1));
  }
  return eps;
}

struct EpsilonBound {
  double max_abs = 0.0;
  double bound = 0.0;
  bool ok = true;
};

/// max |ε_Q| over every S ∈ S_1 and every Q ⊊ S, against 2/δ.
inline EpsilonBound epsilon_bound_check(const CoronaForest& F, const AccretiveSystem& sys1, const GridFunction& f,
                                        double delta) {
  const CoronaCalculus calc(F, 1, sys1);
  const IntegralPyramid pf(f);
  EpsilonBound out;
  out.bound = 2.0 / delta;
  const GridSpec& spec = sys1.spec();
  for (const auto& q : cubes_within(spec, F.q0)) {
    if (q == F.q0) continue;
    for (const auto& s : calc.family().members()) {
      if (!strictly_contains(s, q)) continue;
      double eps = 0.0;
      for (int level = s.level; level < q.level; ++level) {
        const DyadicCube P = ancestor_at(q, level);
        if (calc.block(P) == s) eps += detail::nabla_value(calc, pf, P, ancestor_at(q, level + 1));
      }
      out.max_abs = std::max(out.max_abs, std::abs(eps));
    }
  }
  out.ok = out.max_abs <= out.bound;
  return out;
}

/// max over S ∈ S_1 and cells of |Σ_{Q⊆S} Δ²_Q g − (g 1_S − ⟨g⟩_S/⟨b²_{πS}⟩_S b²_{πS} 1_S)|.
inline double g_telescoping_check(const CoronaForest& F, const AccretiveSystem& sys2, const GridFunction& g) {
  const CoronaCalculus calc(F, 2, sys2);
  const GridSpec& spec = g.spec();
  const IntegralPyramid pg(g);
  double worst = 0.0;
  for (const auto& s : F.s1.members()) {
    GridFunction sum(spec);
    for (const auto& q : cubes_within(spec, s)) calc.add_delta(pg, q, 1.0, sum);
    const double coeff = calc.expectation_coefficient(pg, s);
    const GridFunction& b = calc.block_b(s);
    for_each_cell(spec, s, [&](std::size_t i) {
      worst = std::max(worst, std::abs(sum[i] - (g[i] - coeff * b[i])));
    });
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Diagonal and box constants.

/// max over children Q¹, Q² of Q and b^j ∈ {b^j_{πQ}, b^j_{Q^j}} of
/// |⟨T(b¹ 1_{Q¹}), b² 1_{Q²}⟩| / ((1 + Tloc)|Q|).
inline double diagonal_lemma_check(const PerfectKernel& t, const CoronaForest& F, const AccretiveSystem& sys1,
                                   const AccretiveSystem& sys2, const DyadicCube& q, double Tloc) {
  const GridSpec& spec = t.spec();
  if (!contains(F.q0, q)) throw std::domain_error("diagonal_lemma_check: Q must lie inside Q0");
  if (is_leaf(spec, q)) return 0.0;
  const GridFunction& top1 = sys1.get_b(F.stopping_parent(1, q));
  const GridFunction& top2 = sys2.get_b(F.stopping_parent(2, q));
  double worst = 0.0;
  for (int c1 = 0; c1 < spec.children_per_cube(); ++c1) {
    const DyadicCube q1 = child(spec, q, c1);
    for (const GridFunction* b1 : {&top1, &sys1.get_b(q1)}) {
      const GridFunction tb = apply(t, b1->restricted(q1));
      for (int c2 = 0; c2 < spec.children_per_cube(); ++c2) {
        const DyadicCube q2 = child(spec, q, c2);
        for (const GridFunction* b2 : {&top2, &sys2.get_b(q2)})
          worst = std::max(worst, std::abs(inner_product(tb, b2->restricted(q2))));
      }
    }
  }
  return worst / ((1.0 + Tloc) * volume(spec, q));
}

inline double diagonal_constant(const PerfectKernel& t, const CoronaForest& F, const AccretiveSystem& sys1,
                                const AccretiveSystem& sys2, double Tloc) {
  double worst = 0.0;
  for (const auto& q : cubes_within(t.spec(), F.q0)) worst = std::max(worst, diagonal_lemma_check(t, F, sys1, sys2, q, Tloc));
  return worst;
}

/// ‖(Σ_{Q⊆Q0} (□^j_Q f)²)^{1/2}‖_q / |Q0|^{1/q}.
inline double box_square_function_check(const CoronaForest& F, int j, const AccretiveSystem& sys, const GridFunction& f,
                                        double q) {
  require_exponent(q);
  const GridSpec& spec = f.spec();
  GridFunction sq(spec);
  for (const auto& cube : cubes_within(spec, F.q0)) {
    if (is_leaf(spec, cube)) continue;
    const GridFunction b = box(F, j, sys, cube, f);
    for_each_cell(spec, cube, [&](std::size_t i) { sq[i] += b[i] * b[i]; });
  }
  for (double& v : sq.values()) v = std::sqrt(v);
  return lp_norm(sq, q, F.q0) / std::pow(volume(spec, F.q0), 1.0 / q);
}

/// |⟨T E_{Q0} f, g⟩| / (Tloc|Q0|) and |⟨T ΣΔ_P f, E_{Q0} g⟩| / (A·Tloc|Q0|);
/// 0/0 counts as 0.
struct EasyTerms {
  double first_ratio = 0.0;
  double second_ratio = 0.0;
};

inline EasyTerms easy_terms(const BilinearExpansion& e, double Tloc, double A, double q0_volume) {
  auto ratio = [](double num, double den) { return num == 0.0 ? 0.0 : (den == 0.0 ? INFINITY : num / den); };
  return {ratio(std::abs(e.easy1), Tloc * q0_volume), ratio(std::abs(e.easy2), A * Tloc * q0_volume)};
}

// ---------------------------------------------------------------------------
// Adversarial search over ε ∈ {±1}^𝒬.

/// Differences Δ_Q f of a twisted context over its non-leaf family cubes.
class TwistedDifferences {
 public:
  explicit TwistedDifferences(const TwistedContext& ctx) : ctx_(&ctx) {
    for (const auto& q : ctx.family())
      if (!is_leaf(ctx.spec(), q)) cubes_.push_back(q);
  }
  const GridSpec& spec() const noexcept { return ctx_->spec(); }
  const DyadicCube& root() const noexcept { return ctx_->s0(); }
  const std::vector<DyadicCube>& cubes() const noexcept { return cubes_; }
  std::vector<GridFunction> differences(const GridFunction& f) const {
    const IntegralPyramid pf(f);
    std::vector<GridFunction> out;
    for (const auto& q : cubes_) {
      GridFunction d(spec());
      detail::add_twisted_delta(*ctx_, pf, q, 1.0, d);
      out.push_back(std::move(d));
    }
    return out;
  }
  GridFunction transform(const SignChoice& eps, const GridFunction& f) const { return dytb::transform(*ctx_, eps, f); }

 private:
  const TwistedContext* ctx_;
  std::vector<DyadicCube> cubes_;
};

/// Corona differences Δ^j_Q over the non-leaf cubes of a root S ⊆ Q0.
class CoronaDifferences {
 public:
  CoronaDifferences(const CoronaCalculus& calc, const DyadicCube& root) : calc_(&calc), root_(root) {
    calc.require_inside(root);
    for (const auto& q : cubes_within(calc.spec(), root))
      if (!is_leaf(calc.spec(), q)) cubes_.push_back(q);
  }
  const GridSpec& spec() const noexcept { return calc_->spec(); }
  const DyadicCube& root() const noexcept { return root_; }
  const std::vector<DyadicCube>& cubes() const noexcept { return cubes_; }
  std::vector<GridFunction> differences(const GridFunction& f) const {
    const IntegralPyramid pf(f);
    std::vector<GridFunction> out;
    for (const auto& q : cubes_) {
      GridFunction d(spec());
      calc_->add_delta(pf, q, 1.0, d);
      out.push_back(std::move(d));
    }
    return out;
  }
  GridFunction transform(const SignChoice& eps, const GridFunction& f) const {
    const IntegralPyramid pf(f);
    GridFunction out(spec());
    for (const auto& q : cubes_) calc_->add_delta(pf, q, eps(q), out);
    return out;
  }

 private:
  const CoronaCalculus* calc_;
  DyadicCube root_;
  std::vector<DyadicCube> cubes_;
};

/// Families with at most this many difference cubes are searched exhaustively.
inline constexpr std::size_t kExhaustiveCubeLimit = 10;

struct SearchBudget {
  int restarts = 8;
  int passes = 16;
  /// Number of random sign functions f on the root; ignored when f is supplied.
  int f_samples = 4;
};

struct SearchResult {
  double worst_ratio = 0.0;
  std::optional<SignChoice> eps;
  std::optional<GridFunction> f;
  long flips_tried = 0;
};

/// ‖Σ ε_Q Δ_Q f‖_p / ‖f‖_p, evaluated from scratch.
template <typename Provider>
double transform_ratio(const Provider& prov, const SignChoice& eps, const GridFunction& f, double p) {
  const double den = lp_norm(f, p);
  if (den == 0.0) return 0.0;
  return lp_norm(prov.transform(eps, f), p) / den;
}

/// Greedy single-flip ascent with random restarts, over random sign functions
/// f (or the supplied ones). Every flip updates ∫|Σ ε Δ f|^p on the cells of
/// the flipped cube only; the winner is re-evaluated from scratch. Small
/// families are enumerated corner by corner in Gray-code order instead.
template <typename Provider>
SearchResult adversarial_transform_search(const Provider& prov, double p, const SearchBudget& budget, std::uint64_t seed,
                                          std::optional<std::vector<GridFunction>> fs = std::nullopt) {
  require_exponent(p);
  const GridSpec& spec = prov.spec();
  Rng rng(seed);
  std::vector<GridFunction> inputs;
  if (fs) {
    inputs = std::move(*fs);
  } else {
    for (int k = 0; k < budget.f_samples; ++k) inputs.push_back(random_sign_function(spec, prov.root(), rng));
  }
  const auto& cubes = prov.cubes();
  std::vector<std::vector<std::size_t>> cells(cubes.size());
  for (std::size_t k = 0; k < cubes.size(); ++k)
    for_each_cell(spec, cubes[k], [&](std::size_t i) { cells[k].push_back(i); });
  auto power = [p](double v) { return p == 2.0 ? v * v : std::pow(std::abs(v), p); };

  SearchResult best;
  double best_score = -1.0;
  for (const auto& f : inputs) {
    if (!(f.spec() == spec)) throw std::domain_error("grid mismatch in adversarial search");
    const auto diffs = prov.differences(f);
    double fpow = 0.0;
    for (double v : f.values()) fpow += power(v);
    if (fpow == 0.0) continue;
    if (cubes.size() <= kExhaustiveCubeLimit) {
      std::vector<double> eps(cubes.size(), 1.0);
      GridFunction cur(spec);
      for (std::size_t k = 0; k < cubes.size(); ++k)
        for (std::size_t i : cells[k]) cur[i] += diffs[k][i];
      double score = 0.0;
      for (double v : cur.values()) score += power(v);
      const std::uint64_t corners = std::uint64_t{1} << cubes.size();
      for (std::uint64_t n = 0; n < corners; ++n) {
        if (n > 0) {
          const auto k = static_cast<std::size_t>(std::countr_zero(n));
          ++best.flips_tried;
          double before = 0.0;
          double after = 0.0;
          for (std::size_t i : cells[k]) {
            before += power(cur[i]);
            cur[i] -= 2.0 * eps[k] * diffs[k][i];
            after += power(cur[i]);
          }
          eps[k] = -eps[k];
          score += after - before;
        }
        if (score / fpow > best_score) {
          best_score = score / fpow;
          SignChoice s(spec);
          for (std::size_t k = 0; k < cubes.size(); ++k) s.set(cubes[k], eps[k]);
          best.eps.emplace(std::move(s));
          best.f.emplace(f);
        }
      }
      continue;
    }
    for (int r = 0; r < budget.restarts; ++r) {
      std::vector<double> eps(cubes.size());
      for (double& e : eps) e = rng.sign();
      GridFunction cur(spec);
      double score = 0.0;
      for (int pass = 0; pass < budget.passes; ++pass) {
        cur = GridFunction(spec);
        for (std::size_t k = 0; k < cubes.size(); ++k)
          for (std::size_t i : cells[k]) cur[i] += eps[k] * diffs[k][i];
        score = 0.0;
        for (double v : cur.values()) score += power(v);
        bool improved = false;
        for (std::size_t k = 0; k < cubes.size(); ++k) {
          ++best.flips_tried;
          double before = 0.0;
          double after = 0.0;
          for (std::size_t i : cells[k]) {
            before += power(cur[i]);
            after += power(cur[i] - 2.0 * eps[k] * diffs[k][i]);
          }
          if (after > before * (1.0 + 1e-14) && after - before > 0.0) {
            for (std::size_t i : cells[k]) cur[i] -= 2.0 * eps[k] * diffs[k][i];
            eps[k] = -eps[k];
            score += after - before;
            improved = true;
          }
        }
        if (!improved) break;
      }
      if (score / fpow > best_score) {
        best_score = score / fpow;
        SignChoice s(spec);
        for (std::size_t k = 0; k < cubes.size(); ++k) s.set(cubes[k], eps[k]);
        best.eps.emplace(std::move(s));
        best.f.emplace(f);
      }
    }
  }
  if (best.eps) best.worst_ratio = transform_ratio(prov, *best.eps, *best.f, p);
  return best;
}

}  // namespace dytb
