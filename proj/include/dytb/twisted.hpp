#pragma once

// Twisted, half-twisted and b-adapted martingale differences, their
// transforms, and the exact identities tying them together.
//
// Twisted context (one function b on S0, terminal family 𝒯, cube family 𝒬 of
// cubes in S0 not inside any terminal cube):
//   Δ_Q f = Σ_{Q'∈ch(Q)} [⟨f⟩_{Q'}/⟨b_{Q'}⟩_{Q'} b_{Q'} − ⟨f⟩_Q/⟨b⟩_Q b] 1_{Q'},
//   b_{Q'} = b_T for terminal Q' = T, b otherwise;
//   D_Q f = Σ_{Q'∈ch(Q)∖𝒯} [⟨f⟩_{Q'}/⟨b⟩_{Q'} − ⟨f⟩_Q/⟨b⟩_Q] 1_{Q'}.
//
// Corona calculus (forest S_1, S_2 and a system b^j):
//   E_Q h = ⟨h⟩_Q/⟨b_{πQ}⟩_Q · b_{πQ} 1_Q,  Δ_Q h = Σ_{Q'} [E_{Q'} h − E_Q h] 1_{Q'}.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dytb/accretive.hpp"
#include "dytb/corona.hpp"
#include "dytb/dyadic.hpp"
#include "dytb/rng.hpp"

namespace dytb {

/// ε_Q ∈ [−1, 1] for every cube of the grid, stored densely by cube id.
class SignChoice {
 public:
  explicit SignChoice(const GridSpec& spec, double fill = 0.0) : spec_(spec), eps_(spec.cube_count(), fill) {
    check(fill);
  }

  static SignChoice random_signs(const GridSpec& spec, Rng& rng) {
    SignChoice s(spec);
    for (double& e : s.eps_) e = rng.sign();
    return s;
  }

  static SignChoice random_uniform(const GridSpec& spec, Rng& rng) {
    SignChoice s(spec);
    for (double& e : s.eps_) e = rng.uniform(-1.0, 1.0);
    return s;
  }

  const GridSpec& spec() const noexcept { return spec_; }
  double operator()(const DyadicCube& q) const { return eps_[cube_id(spec_, q)]; }
  void set(const DyadicCube& q, double v) {
    check(v);
    eps_[cube_id(spec_, q)] = v;
  }
  void flip(const DyadicCube& q) { eps_[cube_id(spec_, q)] *= -1.0; }

 private:
  static void check(double v) {
    if (!(std::abs(v) <= 1.0)) throw std::invalid_argument("sign choice values must satisfy |eps| <= 1");
  }

  GridSpec spec_;
  std::vector<double> eps_;
};

class TwistedContext {
 public:
  enum class Status : unsigned char { Outside, InFamily, Terminal, InsideTerminal };

  TwistedContext(GridFunction b, TerminalFamily terminals, double p, double delta, double A)
      : spec_(b.spec()),
        b_(std::move(b)),
        fam_(std::move(terminals)),
        p_(p),
        delta_(delta),
        A_(A),
        status_(spec_.cube_count(), Status::Outside),
        b_pyr_(b_) {
    require_exponent(p);
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
    require_in_grid(spec_, fam_.s0);
    const AccretiveCheck cb = check_accretive(b_, fam_.s0, p, A);
    if (!cb.ok) throw std::domain_error("twisted context: b violates the accretive conditions on S0");
    for (const auto& t : fam_.terminals) {
      require_in_grid(spec_, t);
      if (!strictly_contains(fam_.s0, t)) throw std::domain_error("terminal cube " + to_string(t) + " is not strictly inside S0");
      auto& st = status_[cube_id(spec_, t)];
      if (st != Status::Outside) throw std::domain_error("terminal cubes must be distinct");
      st = Status::Terminal;
    }
    for (const auto& t : fam_.terminals)
      for (const auto& u : fam_.terminals)
        if (t != u && !disjoint(t, u)) throw std::domain_error("terminal cubes must be pairwise disjoint");
    for (const auto& tp : fam_.tprime) {
      const bool covered = std::any_of(fam_.terminals.begin(), fam_.terminals.end(),
                                       [&](const DyadicCube& t) { return contains(t, tp); });
      if (!covered) throw std::domain_error("every cube of T' must lie inside a terminal cube");
    }
    for (const auto& t : fam_.terminals) {
      auto it = fam_.b_terminal.find(t);
      if (it == fam_.b_terminal.end()) throw std::domain_error("missing b_T for terminal " + to_string(t));
      if (!check_accretive(it->second, t, p, A).ok) throw std::domain_error("b_T violates the accretive conditions");
      terminal_average_[t] = it->second.average(t);
    }
    for (const auto& q : cubes_within(spec_, fam_.s0)) {
      auto& st = status_[cube_id(spec_, q)];
      if (st == Status::Terminal) continue;
      const bool inside = q.level > fam_.s0.level &&
                          status_[cube_id(spec_, parent(q))] != Status::InFamily;
      st = inside ? Status::InsideTerminal : Status::InFamily;
      if (!inside) family_.push_back(q);
    }
    if (!denominators_safe()) throw std::domain_error("twisted context: denominator safety violated");
  }

  /// b = sys.get_b(S0), T' from e.ra, T = T' unless a legal family is supplied.
  static TwistedContext from_system(const AccretiveSystem& sys, const DyadicCube& s0, double delta,
                                    std::optional<std::vector<DyadicCube>> terminals = std::nullopt) {
    return TwistedContext(sys.get_b(s0), make_terminal_family(sys, s0, delta, std::move(terminals)), sys.p(), delta,
                          sys.A());
  }

  const GridSpec& spec() const noexcept { return spec_; }
  const DyadicCube& s0() const noexcept { return fam_.s0; }
  const GridFunction& b() const noexcept { return b_; }
  const TerminalFamily& terminals() const noexcept { return fam_; }
  double p() const noexcept { return p_; }
  double delta() const noexcept { return delta_; }
  double A() const noexcept { return A_; }
  const IntegralPyramid& b_pyramid() const noexcept { return b_pyr_; }

  Status status(const DyadicCube& q) const { return status_[cube_id(spec_, q)]; }
  bool in_family(const DyadicCube& q) const { return in_grid(spec_, q) && status(q) == Status::InFamily; }
  bool is_terminal(const DyadicCube& q) const { return in_grid(spec_, q) && status(q) == Status::Terminal; }
  /// 𝒬 in id order.
  const std::vector<DyadicCube>& family() const noexcept { return family_; }

  const GridFunction& local_b(const DyadicCube& q) const {
    return is_terminal(q) ? fam_.b_terminal.at(q) : b_;
  }
  double local_b_average(const DyadicCube& q) const {
    return is_terminal(q) ? terminal_average_.at(q) : b_pyr_.average(q);
  }

  /// For Q ∈ 𝒬 and each child Q' ∉ 𝒯: |⟨b⟩_{Q'}| > δ and ∫_{Q'}|b|^p < δ^{-1}A^p|Q'|;
  /// for Q' ∈ 𝒯: ⟨b_{Q'}⟩_{Q'} = 1 to the mean tolerance.
  bool denominators_safe() const {
    const IntegralPyramid bp = power_pyramid(b_, p_);
    const double thr = std::pow(A_, p_) / delta_;
    for (const auto& q : family_) {
      if (std::abs(b_pyr_.average(q)) <= delta_ && q != fam_.s0) return false;
      if (is_leaf(spec_, q)) continue;
      for (int c = 0; c < spec_.children_per_cube(); ++c) {
        const DyadicCube ch = child(spec_, q, c);
        if (is_terminal(ch)) {
          if (std::abs(terminal_average_.at(ch) - 1.0) > kMeanTolerance) return false;
        } else if (!(std::abs(b_pyr_.average(ch)) > delta_) || !(bp.integral(ch) < thr * volume(spec_, ch))) {
          return false;
        }
      }
    }
    return true;
  }

  /// On finest cells of S0 outside terminal cubes, |b| < δ^{-1/p} A.
  bool finest_cell_bound_holds() const {
    const double bound = std::pow(delta_, -1.0 / p_) * A_;
    bool ok = true;
    for_each_cell(spec_, fam_.s0, [&](std::size_t i) {
      if (status(cell_cube(spec_, i)) == Status::InFamily && !(std::abs(b_[i]) < bound)) ok = false;
    });
    return ok;
  }

 private:
  GridSpec spec_;
  GridFunction b_;
  TerminalFamily fam_;
  double p_;
  double delta_;
  double A_;
  std::vector<Status> status_;
  std::vector<DyadicCube> family_;
  IntegralPyramid b_pyr_;
  std::map<DyadicCube, double> terminal_average_;
};

namespace detail {

inline void require_family(const TwistedContext& ctx, const DyadicCube& q) {
  if (!ctx.in_family(q)) throw std::domain_error("cube " + to_string(q) + " is not in the twisted family");
}

/// out += scale · Δ_Q f, touching only cells of Q.
inline void add_twisted_delta(const TwistedContext& ctx, const IntegralPyramid& pf, const DyadicCube& q, double scale,
                              GridFunction& out) {
  const GridSpec& spec = ctx.spec();
  if (is_leaf(spec, q) || scale == 0.0) return;
  const GridFunction& b = ctx.b();
  const double r = pf.average(q) / ctx.b_pyramid().average(q);
  for (int c = 0; c < spec.children_per_cube(); ++c) {
    const DyadicCube ch = child(spec, q, c);
    if (ctx.is_terminal(ch)) {
      const GridFunction& bt = ctx.local_b(ch);
      const double a = pf.average(ch) / ctx.local_b_average(ch);
      for_each_cell(spec, ch, [&](std::size_t i) { out[i] += scale * (a * bt[i] - r * b[i]); });
    } else {
      const double d = pf.average(ch) / ctx.b_pyramid().average(ch) - r;
      for_each_cell(spec, ch, [&](std::size_t i) { out[i] += scale * (d * b[i]); });
    }
  }
}

/// out += scale · D_Q f.
inline void add_half_twisted(const TwistedContext& ctx, const IntegralPyramid& pf, const DyadicCube& q, double scale,
                             GridFunction& out) {
  const GridSpec& spec = ctx.spec();
  if (is_leaf(spec, q) || scale == 0.0) return;
  const double r = pf.average(q) / ctx.b_pyramid().average(q);
  for (int c = 0; c < spec.children_per_cube(); ++c) {
    const DyadicCube ch = child(spec, q, c);
    if (ctx.is_terminal(ch)) continue;
    const double d = pf.average(ch) / ctx.b_pyramid().average(ch) - r;
    for_each_cell(spec, ch, [&](std::size_t i) { out[i] += scale * d; });
  }
}

inline void require_same(const TwistedContext& ctx, const GridFunction& f) {
  if (!(ctx.spec() == f.spec())) throw std::domain_error("grid mismatch between context and function");
}

}  // namespace detail

/// Δ_Q f for Q ∈ 𝒬; supported on Q with zero integral.
inline GridFunction twisted_delta(const TwistedContext& ctx, const DyadicCube& q, const GridFunction& f) {
  detail::require_same(ctx, f);
  detail::require_family(ctx, q);
  GridFunction out(ctx.spec());
  detail::add_twisted_delta(ctx, IntegralPyramid(f), q, 1.0, out);
  return out;
}

/// D_Q f for Q ∈ 𝒬; terminal children are skipped and nothing is multiplied by b.
inline GridFunction half_twisted_D(const TwistedContext& ctx, const DyadicCube& q, const GridFunction& f) {
  detail::require_same(ctx, f);
  detail::require_family(ctx, q);
  GridFunction out(ctx.spec());
  detail::add_half_twisted(ctx, IntegralPyramid(f), q, 1.0, out);
  return out;
}

/// Σ_{Q∈𝒬} ε_Q Δ_Q f.
inline GridFunction transform(const TwistedContext& ctx, const SignChoice& eps, const GridFunction& f) {
  detail::require_same(ctx, f);
  const IntegralPyramid pf(f);
  GridFunction out(ctx.spec());
  for (const auto& q : ctx.family()) detail::add_twisted_delta(ctx, pf, q, eps(q), out);
  return out;
}

/// Bf = Σ_{Q∈𝒬} ε_Q D_Q f.
inline GridFunction half_twisted_transform(const TwistedContext& ctx, const SignChoice& eps, const GridFunction& f) {
  detail::require_same(ctx, f);
  const IntegralPyramid pf(f);
  GridFunction out(ctx.spec());
  for (const auto& q : ctx.family()) detail::add_half_twisted(ctx, pf, q, eps(q), out);
  return out;
}

/// Σ_{Q∈family} ε_Q Σ_{Q'∈ch(Q)} (⟨f⟩_{Q'} − ⟨f⟩_Q) 1_{Q'}.
inline GridFunction classical_transform(const SignChoice& eps, const GridFunction& f,
                                        const std::vector<DyadicCube>& family) {
  const GridSpec& spec = f.spec();
  const IntegralPyramid pf(f);
  GridFunction out(spec);
  for (const auto& q : family) {
    require_in_grid(spec, q);
    const double e = eps(q);
    if (is_leaf(spec, q) || e == 0.0) continue;
    const double a = pf.average(q);
    for (int c = 0; c < spec.children_per_cube(); ++c) {
      const DyadicCube ch = child(spec, q, c);
      const double d = pf.average(ch) - a;
      for_each_cell(spec, ch, [&](std::size_t i) { out[i] += e * d; });
    }
  }
  return out;
}

struct DecompositionTerms {
  double lhs = 0.0;
  double mt1 = 0.0;
  double mt2 = 0.0;
  double mt3 = 0.0;
  double residual = 0.0;
};

/// ⟨f⟩_{Q'}/⟨b⟩_{Q'} − ⟨f⟩_Q/⟨b⟩_Q as the sum of a classical difference on f,
/// a difference on b, and a squared difference on b.
inline DecompositionTerms decomposition_identity_check(const TwistedContext& ctx, const DyadicCube& q,
                                                       const DyadicCube& qc, const GridFunction& f) {
  detail::require_same(ctx, f);
  detail::require_family(ctx, q);
  if (qc.level != q.level + 1 || parent(qc) != q) throw std::domain_error("Q' must be a child of Q");
  if (ctx.is_terminal(qc)) throw std::domain_error("Q' must not be a terminal cube");
  const double fq = f.average(q);
  const double fc = f.average(qc);
  const double bq = ctx.b_pyramid().average(q);
  const double bc = ctx.b_pyramid().average(qc);
  DecompositionTerms t;
  t.lhs = fc / bc - fq / bq;
  t.mt1 = (fc - fq) / bq;
  t.mt2 = (bq - bc) * fc / (bq * bq);
  t.mt3 = (bq - bc) * (bq - bc) * fc / (bc * bq * bq);
  t.residual = std::abs(t.lhs - (t.mt1 + t.mt2 + t.mt3));
  return t;
}

/// Max pointwise residual of
///   Σ ε_Q Δ_Q f = (Bf)·b + Σ_T ε_{T⁽¹⁾}⟨f⟩_T 1_T b_T − Σ_T ε_{T⁽¹⁾} ⟨f⟩_{T⁽¹⁾}/⟨b⟩_{T⁽¹⁾} 1_T b.
inline double delta_decomp_check(const TwistedContext& ctx, const SignChoice& eps, const GridFunction& f) {
  const GridFunction lhs = transform(ctx, eps, f);
  GridFunction rhs = half_twisted_transform(ctx, eps, f) * ctx.b();
  const IntegralPyramid pf(f);
  for (const auto& t : ctx.terminals().terminals) {
    const DyadicCube up = parent(t);
    const double e = eps(up);
    const double ft = pf.average(t);
    const double ratio = pf.average(up) / ctx.b_pyramid().average(up);
    const GridFunction& bt = ctx.local_b(t);
    for_each_cell(ctx.spec(), t, [&](std::size_t i) { rhs[i] += e * ft * bt[i] - e * ratio * ctx.b()[i]; });
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < lhs.size(); ++i) worst = std::max(worst, std::abs(lhs[i] - rhs[i]));
  return worst;
}

struct MeasureComparison {
  bool ok = true;
  /// max over λ of ∫_{E_λ}|b|^p / (2^n δ^{-p} A^p |E_λ|), over nonempty E_λ.
  double worst_ratio = 0.0;
  int levels_checked = 0;
};

/// ∫_{E_λ}|b|^p ≤ 2^n δ^{-p} A^p |E_λ| with E_λ = {|Bf| ≥ λ} ∩ S0, for λ on a
/// uniform grid of `points` values over [0, max|Bf|].
inline MeasureComparison measure_comparison_check(const TwistedContext& ctx, const SignChoice& eps,
                                                  const GridFunction& f, int points = 32, double slack = 1e-12) {
  const GridSpec& spec = ctx.spec();
  const GridFunction bf = half_twisted_transform(ctx, eps, f);
  std::vector<std::size_t> cells;
  for_each_cell(spec, ctx.s0(), [&](std::size_t i) { cells.push_back(i); });
  double top = 0.0;
  for (std::size_t i : cells) top = std::max(top, std::abs(bf[i]));
  const double constant = std::ldexp(1.0, spec.dim()) * std::pow(ctx.delta(), -ctx.p()) * std::pow(ctx.A(), ctx.p());
  const double vol = spec.cell_volume();
  MeasureComparison out;
  for (int k = 0; k < points; ++k) {
    const double lambda = points == 1 ? 0.0 : top * static_cast<double>(k) / static_cast<double>(points - 1);
    double mass = 0.0;
    double count = 0.0;
    for (std::size_t i : cells)
      if (std::abs(bf[i]) >= lambda) {
        mass += std::pow(std::abs(ctx.b()[i]), ctx.p()) * vol;
        count += vol;
      }
    ++out.levels_checked;
    if (count == 0.0) continue;
    const double bound = constant * count;
    out.worst_ratio = std::max(out.worst_ratio, mass / bound);
    if (mass > bound * (1.0 + slack)) out.ok = false;
  }
  return out;
}

struct ProofOperatorImages {
  GridFunction pi;
  GridFunction amalg;
  double pi_l1 = 0.0;
  double amalg_l1 = 0.0;
};

/// Π f = Σ ε_Q Σ_{Q'∉𝒯} (⟨b⟩_{Q'} − ⟨b⟩_Q) ⟨f⟩_{Q'} 1_{Q'}.
inline GridFunction pi_operator(const TwistedContext& ctx, const SignChoice& eps, const GridFunction& f) {
  detail::require_same(ctx, f);
  const GridSpec& spec = ctx.spec();
  const IntegralPyramid pf(f);
  const IntegralPyramid& pb = ctx.b_pyramid();
  GridFunction out(spec);
  for (const auto& q : ctx.family()) {
    const double e = eps(q);
    if (is_leaf(spec, q) || e == 0.0) continue;
    for (int c = 0; c < spec.children_per_cube(); ++c) {
      const DyadicCube ch = child(spec, q, c);
      if (ctx.is_terminal(ch)) continue;
      const double v = e * (pb.average(ch) - pb.average(q)) * pf.average(ch);
      for_each_cell(spec, ch, [&](std::size_t i) { out[i] += v; });
    }
  }
  return out;
}

/// ∐ f = Σ ε_Q Σ_{Q'∉𝒯} (⟨b⟩_{Q'} − ⟨b⟩_Q)² ⟨f⟩_{Q'} / (⟨b⟩_{Q'} ⟨b⟩_Q²) 1_{Q'}.
inline GridFunction amalg_operator(const TwistedContext& ctx, const SignChoice& eps, const GridFunction& f) {
  detail::require_same(ctx, f);
  const GridSpec& spec = ctx.spec();
  const IntegralPyramid pf(f);
  const IntegralPyramid& pb = ctx.b_pyramid();
  GridFunction out(spec);
  for (const auto& q : ctx.family()) {
    const double e = eps(q);
    if (is_leaf(spec, q) || e == 0.0) continue;
    const double bq = pb.average(q);
    for (int c = 0; c < spec.children_per_cube(); ++c) {
      const DyadicCube ch = child(spec, q, c);
      if (ctx.is_terminal(ch)) continue;
      const double bc = pb.average(ch);
      const double v = e * (bc - bq) * (bc - bq) * pf.average(ch) / (bc * bq * bq);
      for_each_cell(spec, ch, [&](std::size_t i) { out[i] += v; });
    }
  }
  return out;
}

/// Π 1_F and ∐ 1_F with their L¹(F) norms, for comparison against c·|F|.
inline ProofOperatorImages proof_operators(const TwistedContext& ctx, const SignChoice& eps, const DyadicCube& F) {
  if (!contains(ctx.s0(), F)) throw std::domain_error("F must lie inside S0");
  const GridFunction ind = GridFunction::indicator(ctx.spec(), F);
  ProofOperatorImages out{pi_operator(ctx, eps, ind), amalg_operator(ctx, eps, ind), 0.0, 0.0};
  out.pi_l1 = l1_norm(out.pi, F);
  out.amalg_l1 = l1_norm(out.amalg, F);
  return out;
}

// ---------------------------------------------------------------------------
// Corona calculus.

/// b-adapted expectations and differences for family j of a forest. Holds
/// references to the forest and the system; both must outlive it.
class CoronaCalculus {
 public:
  CoronaCalculus(const CoronaForest& forest, int j, const AccretiveSystem& sys) : forest_(&forest), j_(j), sys_(&sys) {
    if (j != 1 && j != 2) throw std::invalid_argument("corona family index must be 1 or 2");
    if (!(sys.spec() == forest.s1.spec())) throw std::domain_error("grid mismatch between forest and system");
  }

  const GridSpec& spec() const noexcept { return sys_->spec(); }
  const CoronaForest& forest() const noexcept { return *forest_; }
  const CubeFamily& family() const noexcept { return forest_->family(j_); }
  int which() const noexcept { return j_; }
  const AccretiveSystem& system() const noexcept { return *sys_; }

  /// π_{S_j} Q.
  DyadicCube block(const DyadicCube& q) const { return forest_->stopping_parent(j_, q); }
  const GridFunction& block_b(const DyadicCube& q) const { return sys_->get_b(block(q)); }
  const IntegralPyramid& pyramid_of(const DyadicCube& s) const {
    auto it = pyramids_.find(s);
    if (it == pyramids_.end()) it = pyramids_.emplace(s, std::make_unique<IntegralPyramid>(sys_->get_b(s))).first;
    return *it->second;
  }
  /// ⟨b_{πQ}⟩_Q.
  double block_b_average(const DyadicCube& q) const { return pyramid_of(block(q)).average(q); }

  /// Coefficient ⟨h⟩_Q / ⟨b_{πQ}⟩_Q of E_Q h.
  double expectation_coefficient(const IntegralPyramid& ph, const DyadicCube& q) const {
    return ph.average(q) / block_b_average(q);
  }

  /// out += scale · E_Q h.
  void add_expectation(const IntegralPyramid& ph, const DyadicCube& q, double scale, GridFunction& out) const {
    const double a = scale * expectation_coefficient(ph, q);
    const GridFunction& b = block_b(q);
    for_each_cell(spec(), q, [&](std::size_t i) { out[i] += a * b[i]; });
  }

  /// out += scale · Δ_Q h, touching only cells of Q.
  void add_delta(const IntegralPyramid& ph, const DyadicCube& q, double scale, GridFunction& out) const {
    if (is_leaf(spec(), q) || scale == 0.0) return;
    const double a = expectation_coefficient(ph, q);
    const GridFunction& b = block_b(q);
    for (int c = 0; c < spec().children_per_cube(); ++c) {
      const DyadicCube ch = child(spec(), q, c);
      const double ac = expectation_coefficient(ph, ch);
      const GridFunction& bc = block_b(ch);
      for_each_cell(spec(), ch, [&](std::size_t i) { out[i] += scale * (ac * bc[i] - a * b[i]); });
    }
  }

  void require_inside(const DyadicCube& q) const {
    require_in_grid(spec(), q);
    if (!contains(forest_->q0, q)) throw std::domain_error("cube " + to_string(q) + " is not inside Q0");
  }

 private:
  const CoronaForest* forest_;
  int j_;
  const AccretiveSystem* sys_;
  mutable std::map<DyadicCube, std::unique_ptr<IntegralPyramid>> pyramids_;
};

/// E^j_Q h.
inline GridFunction corona_expectation(const CoronaForest& F, int j, const AccretiveSystem& sys, const DyadicCube& q,
                                       const GridFunction& h) {
  const CoronaCalculus calc(F, j, sys);
  calc.require_inside(q);
  GridFunction out(h.spec());
  calc.add_expectation(IntegralPyramid(h), q, 1.0, out);
  return out;
}

/// Δ^j_Q h; mean zero and supported in Q.
inline GridFunction corona_delta(const CoronaForest& F, int j, const AccretiveSystem& sys, const DyadicCube& q,
                                 const GridFunction& h) {
  const CoronaCalculus calc(F, j, sys);
  calc.require_inside(q);
  GridFunction out(h.spec());
  calc.add_delta(IntegralPyramid(h), q, 1.0, out);
  return out;
}

struct Expansion {
  GridFunction expectation;
  /// Δ_Q h for every Q ⊆ S above the finest level (finest cells have no
  /// children, so their differences vanish and are omitted).
  std::vector<std::pair<DyadicCube, GridFunction>> differences;

  GridFunction reconstruction() const {
    GridFunction sum = expectation;
    for (const auto& [q, d] : differences) sum += d;
    return sum;
  }
};

/// h·1_S = E_S h + Σ_{Q⊆S} Δ_Q h.
inline Expansion expand(const CoronaForest& F, int j, const AccretiveSystem& sys, const DyadicCube& s,
                        const GridFunction& h) {
  const CoronaCalculus calc(F, j, sys);
  calc.require_inside(s);
  const IntegralPyramid ph(h);
  Expansion out{GridFunction(h.spec()), {}};
  calc.add_expectation(ph, s, 1.0, out.expectation);
  for (const auto& q : cubes_within(h.spec(), s)) {
    if (is_leaf(h.spec(), q)) continue;
    GridFunction d(h.spec());
    calc.add_delta(ph, q, 1.0, d);
    out.differences.emplace_back(q, std::move(d));
  }
  return out;
}

/// Σ_{Q⊆S} ε_Q Δ^j_Q h, S defaulting to Q0.
inline GridFunction corona_transform(const CoronaForest& F, int j, const AccretiveSystem& sys, const SignChoice& eps,
                                     const GridFunction& h, std::optional<DyadicCube> within = std::nullopt) {
  const CoronaCalculus calc(F, j, sys);
  const DyadicCube s = within.value_or(F.q0);
  calc.require_inside(s);
  const IntegralPyramid ph(h);
  GridFunction out(h.spec());
  for (const auto& q : cubes_within(h.spec(), s)) calc.add_delta(ph, q, eps(q), out);
  return out;
}

/// Half-twisted difference of the corona block of Q: S_0 = π_{S_j}Q, terminal
/// cubes ch_{S_j}(S_0), b = b^j_{S_0}.
inline GridFunction corona_half_twisted(const CoronaCalculus& calc, const IntegralPyramid& ph, const DyadicCube& q) {
  const GridSpec& spec = calc.spec();
  GridFunction out(spec);
  if (is_leaf(spec, q)) return out;
  const DyadicCube s0 = calc.block(q);
  const IntegralPyramid& pb = calc.pyramid_of(s0);
  const double r = ph.average(q) / pb.average(q);
  for (int c = 0; c < spec.children_per_cube(); ++c) {
    const DyadicCube ch = child(spec, q, c);
    if (calc.family().contains(ch)) continue;
    const double d = ph.average(ch) / pb.average(ch) - r;
    for_each_cell(spec, ch, [&](std::size_t i) { out[i] += d; });
  }
  return out;
}

/// □^j_Q h = |D^j_Q h| + 1_Q·[some child of Q is in S_j].
inline GridFunction box(const CoronaForest& F, int j, const AccretiveSystem& sys, const DyadicCube& q,
                        const GridFunction& h) {
  const CoronaCalculus calc(F, j, sys);
  calc.require_inside(q);
  const GridSpec& spec = h.spec();
  GridFunction out = corona_half_twisted(calc, IntegralPyramid(h), q);
  for (double& v : out.values()) v = std::abs(v);
  bool stopping_child = false;
  if (!is_leaf(spec, q))
    for (int c = 0; c < spec.children_per_cube(); ++c) stopping_child |= calc.family().contains(child(spec, q, c));
  if (stopping_child) for_each_cell(spec, q, [&](std::size_t i) { out[i] += 1.0; });
  return out;
}

/// For Q ⊆ Q0 with Q ∉ S_j: |⟨b^j_{πQ}⟩_Q| > δ.
inline bool corona_denominators_safe(const CoronaForest& F, int j, const AccretiveSystem& sys, double delta) {
  const CoronaCalculus calc(F, j, sys);
  for (const auto& q : cubes_within(sys.spec(), F.q0)) {
    if (calc.family().contains(q)) continue;
    if (!(std::abs(calc.block_b_average(q)) > delta)) return false;
  }
  return true;
}

}  // namespace dytb
