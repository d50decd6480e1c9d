#pragma once

// Stopping-cube constructions: the terminal family of a single function b on
// S0, and the two corona trees S_1, S_2 driven by a pair of accretive systems
// and the local testing constant.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dytb/accretive.hpp"
#include "dytb/dyadic.hpp"
#include "dytb/perfect_kernel.hpp"
#include "dytb/rng.hpp"

namespace dytb {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TbConfig {
  double p1 = 2.0;
  double p2 = 2.0;
  double delta = 0.5;
  double A = 2.0;
  double Tloc = 0.0;
  double tau_target = 0.9;

  double p1_conj() const { return conjugate_exponent(p1); }
  double p2_conj() const { return conjugate_exponent(p2); }

  void validate() const {
    if (!(p1 > 1.0 && std::isfinite(p1)) || !(p2 > 1.0 && std::isfinite(p2)))
      throw ConfigError("p1 and p2 must be finite and > 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (!(A > 1.0 && std::isfinite(A))) throw ConfigError("A must be finite and > 1");
    if (!(Tloc >= 0.0 && std::isfinite(Tloc))) throw ConfigError("Tloc must be finite and >= 0");
    if (!(tau_target > 0.0 && tau_target < 1.0)) throw ConfigError("tau target must lie in (0, 1)");
  }
};

/// A set of dyadic cubes with O(1) membership and parent lookups.
class CubeFamily {
 public:
  CubeFamily(GridSpec spec, std::vector<DyadicCube> members) : spec_(spec), flags_(spec.cube_count(), 0) {
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    members_ = std::move(members);
    for (const auto& m : members_) {
      require_in_grid(spec_, m);
      flags_[cube_id(spec_, m)] = 1;
    }
    for (const auto& m : members_) {
      if (m.level == 0) continue;
      if (auto p = smallest_containing(parent(m))) children_[*p].push_back(m);
    }
  }

  const GridSpec& spec() const noexcept { return spec_; }
  const std::vector<DyadicCube>& members() const noexcept { return members_; }
  std::size_t size() const noexcept { return members_.size(); }
  bool contains(const DyadicCube& q) const { return in_grid(spec_, q) && flags_[cube_id(spec_, q)] != 0; }

  /// π(Q): the smallest member containing Q.
  std::optional<DyadicCube> smallest_containing(const DyadicCube& q) const {
    DyadicCube c = q;
    for (;;) {
      if (flags_[cube_id(spec_, c)]) return c;
      if (c.level == 0) return std::nullopt;
      c = parent(c);
    }
  }

  /// ch(S): maximal members strictly inside S.
  const std::vector<DyadicCube>& family_children(const DyadicCube& s) const {
    static const std::vector<DyadicCube> none;
    auto it = children_.find(s);
    return it == children_.end() ? none : it->second;
  }

  /// Some member is contained in q (q itself included).
  bool any_member_within(const DyadicCube& q) const {
    return std::any_of(members_.begin(), members_.end(), [&](const DyadicCube& m) { return contains_cube(q, m); });
  }

 private:
  static bool contains_cube(const DyadicCube& p, const DyadicCube& q) { return dytb::contains(p, q); }

  GridSpec spec_;
  std::vector<DyadicCube> members_;
  std::vector<char> flags_;
  std::map<DyadicCube, std::vector<DyadicCube>> children_;
};

/// Maximal dyadic T ⊆ S0 with |∫_T b| ≤ δ|T| or ∫_T |b|^p ≥ δ^{-1} A^p |T|.
/// Top-down scan that stops at the first trigger; finest cells are tested but
/// never subdivided.
inline std::vector<DyadicCube> terminal_cubes(const GridFunction& b, const DyadicCube& s0, double delta, double p,
                                              double A) {
  const GridSpec& spec = b.spec();
  require_in_grid(spec, s0);
  require_exponent(p);
  const IntegralPyramid ib(b);
  const IntegralPyramid ibp = power_pyramid(b, p);
  const double big = std::pow(A, p) / delta;
  std::vector<DyadicCube> out;
  std::vector<DyadicCube> stack{s0};
  while (!stack.empty()) {
    const DyadicCube q = stack.back();
    stack.pop_back();
    const double vol = volume(spec, q);
    if (std::abs(ib.integral(q)) <= delta * vol || ibp.integral(q) >= big * vol) {
      out.push_back(q);
      continue;
    }
    if (is_leaf(spec, q)) continue;
    for (int c = spec.children_per_cube() - 1; c >= 0; --c) stack.push_back(child(spec, q, c));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Terminal cubes and their local functions b_T for one twisted context.
struct TerminalFamily {
  DyadicCube s0;
  std::vector<DyadicCube> tprime;
  std::vector<DyadicCube> terminals;
  std::map<DyadicCube, GridFunction> b_terminal;
};

/// Random legal coarsening of T': every T' climbs toward S0 (staying strictly
/// inside it) with probability `climb` per step, a few extra random cubes are
/// proposed, and the maximal elements of the result form the family.
inline std::vector<DyadicCube> coarsen_terminals(const GridSpec& spec, const DyadicCube& s0,
                                                 const std::vector<DyadicCube>& tprime, Rng& rng, double climb = 0.3,
                                                 int extra = 2) {
  std::vector<DyadicCube> cand;
  for (DyadicCube t : tprime) {
    while (t.level > s0.level + 1 && rng.uniform01() < climb) t = parent(t);
    cand.push_back(t);
  }
  for (int e = 0; e < extra && s0.level < spec.depth(); ++e) {
    DyadicCube q = s0;
    const int target = s0.level + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.depth() - s0.level)));
    while (q.level < target) q = child(spec, q, static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.children_per_cube()))));
    const bool clashes = std::any_of(cand.begin(), cand.end(), [&](const DyadicCube& t) { return !disjoint(t, q); });
    if (!clashes) cand.push_back(q);
  }
  std::sort(cand.begin(), cand.end());
  std::vector<DyadicCube> out;
  for (const auto& q : cand) {
    const bool covered = std::any_of(cand.begin(), cand.end(), [&](const DyadicCube& t) { return strictly_contains(t, q); });
    if (!covered && (out.empty() || out.back() != q)) out.push_back(q);
  }
  return out;
}

/// T' from e.ra on b = sys.get_b(S0); T defaults to T' and b_T to sys.get_b(T).
inline TerminalFamily make_terminal_family(const AccretiveSystem& sys, const DyadicCube& s0, double delta,
                                           std::optional<std::vector<DyadicCube>> terminals = std::nullopt) {
  TerminalFamily fam;
  fam.s0 = s0;
  fam.tprime = terminal_cubes(sys.get_b(s0), s0, delta, sys.p(), sys.A());
  fam.terminals = terminals ? *terminals : fam.tprime;
  std::sort(fam.terminals.begin(), fam.terminals.end());
  for (const auto& t : fam.terminals) fam.b_terminal.emplace(t, sys.get_b(t));
  return fam;
}

struct CoronaForest {
  DyadicCube q0;
  CubeFamily s1;
  CubeFamily s2;
  /// Bitmask of triggered stopping conditions (bit k-1 for condition k).
  std::map<DyadicCube, unsigned> reasons1;
  std::map<DyadicCube, unsigned> reasons2;

  const CubeFamily& family(int j) const { return j == 1 ? s1 : s2; }
  const std::map<DyadicCube, unsigned>& reasons(int j) const { return j == 1 ? reasons1 : reasons2; }

  /// π_{S_j} Q for Q ⊆ Q0.
  DyadicCube stopping_parent(int j, const DyadicCube& q) const {
    if (!contains(q0, q)) throw std::domain_error("cube " + to_string(q) + " is not inside Q0");
    return *family(j).smallest_containing(q);
  }
};

inline bool condition_three_active(const PerfectKernel& t, const TbConfig& cfg) {
  if (cfg.Tloc > 0.0) return true;
  if (!t.is_zero())
    throw ConfigError("Tloc = 0 with a nonzero kernel makes every cube stop; compute the testing constant first");
  return false;
}

namespace detail {

/// One stopping tree. `op` is T for S_1 and T* for S_2; `p` is the accretive
/// exponent and `q` the testing exponent of condition (3).
inline CubeFamily build_stopping_family(const DyadicCube& q0, const AccretiveSystem& sys, const PerfectKernel& op,
                                        double p, double q, const TbConfig& cfg, bool use_cond3,
                                        std::map<DyadicCube, unsigned>& reasons) {
  const GridSpec& spec = sys.spec();
  const double thr2 = std::pow(cfg.A, p) / cfg.delta;
  const double thr3 = use_cond3 ? std::pow(cfg.Tloc, q) / cfg.delta : 0.0;
  std::vector<DyadicCube> members{q0};
  std::vector<DyadicCube> work{q0};
  while (!work.empty()) {
    const DyadicCube s = work.back();
    work.pop_back();
    if (is_leaf(spec, s)) continue;
    const GridFunction& b = sys.get_b(s);
    const IntegralPyramid ib(b);
    const IntegralPyramid ibp = power_pyramid(b, p);
    std::optional<IntegralPyramid> itb;
    if (use_cond3) itb.emplace(power_pyramid(apply(op, b), q));
    std::vector<DyadicCube> stack;
    for (int c = spec.children_per_cube() - 1; c >= 0; --c) stack.push_back(child(spec, s, c));
    while (!stack.empty()) {
      const DyadicCube cube = stack.back();
      stack.pop_back();
      const double vol = volume(spec, cube);
      unsigned why = 0;
      if (std::abs(ib.integral(cube)) <= cfg.delta * vol) why |= 1u;
      if (ibp.integral(cube) >= thr2 * vol) why |= 2u;
      if (use_cond3 && itb->integral(cube) >= thr3 * vol) why |= 4u;
      if (why != 0) {
        members.push_back(cube);
        reasons[cube] = why;
        work.push_back(cube);
        continue;
      }
      if (is_leaf(spec, cube)) continue;
      for (int c = spec.children_per_cube() - 1; c >= 0; --c) stack.push_back(child(spec, cube, c));
    }
  }
  return CubeFamily(spec, std::move(members));
}

}  // namespace detail

/// S_1: conditions on b¹_S with exponent p1 and |T b¹_S|^{p2'}; S_2: b²_S with
/// p2 and |T* b²_S|^{p1'}. Comparisons are inclusive. Finest cells may stop.
inline CoronaForest build_corona(const DyadicCube& q0, const AccretiveSystem& sys1, const AccretiveSystem& sys2,
                                 const PerfectKernel& t, const TbConfig& cfg) {
  cfg.validate();
  const GridSpec& spec = t.spec();
  if (!(sys1.spec() == spec) || !(sys2.spec() == spec)) throw std::domain_error("grid mismatch in build_corona");
  require_in_grid(spec, q0);
  const bool cond3 = condition_three_active(t, cfg);
  std::map<DyadicCube, unsigned> r1;
  std::map<DyadicCube, unsigned> r2;
  CubeFamily s1 = detail::build_stopping_family(q0, sys1, t, cfg.p1, cfg.p2_conj(), cfg, cond3, r1);
  CubeFamily s2 = detail::build_stopping_family(q0, sys2, adjoint(t), cfg.p2, cfg.p1_conj(), cfg, cond3, r2);
  return CoronaForest{q0, std::move(s1), std::move(s2), std::move(r1), std::move(r2)};
}

/// max over S of Σ_{S' ∈ ch(S)} |S'| / |S|; 0 when no member has children.
inline double packing_ratio(const CubeFamily& fam) {
  double worst = 0.0;
  for (const auto& s : fam.members()) {
    double covered = 0.0;
    for (const auto& c : fam.family_children(s)) covered += volume(fam.spec(), c);
    worst = std::max(worst, covered / volume(fam.spec(), s));
  }
  return worst;
}

inline double packing_ratio(const CoronaForest& f, int which) { return packing_ratio(f.family(which)); }

/// max over dyadic Q ⊆ Q0 of |Q|^{-1} Σ_{S ∈ family, S ⊆ Q} |S|.
inline double carleson_constant(const GridSpec& spec, const std::vector<DyadicCube>& family, const DyadicCube& q0) {
  require_in_grid(spec, q0);
  std::vector<double> mass(spec.cube_count(), 0.0);
  for (const auto& s : family) {
    if (!contains(q0, s)) throw std::domain_error("carleson_constant: member outside Q0");
    mass[cube_id(spec, s)] += volume(spec, s);
  }
  double worst = 0.0;
  const auto inside = cubes_within(spec, q0);
  for (auto it = inside.rbegin(); it != inside.rend(); ++it) {
    const DyadicCube& q = *it;
    double& m = mass[cube_id(spec, q)];
    if (!is_leaf(spec, q))
      for (int c = 0; c < spec.children_per_cube(); ++c) m += mass[cube_id(spec, child(spec, q, c))];
    worst = std::max(worst, m / volume(spec, q));
  }
  return worst;
}

inline double carleson_constant(const CubeFamily& fam, const DyadicCube& q0) {
  return carleson_constant(fam.spec(), fam.members(), q0);
}

struct DeltaTrial {
  double delta = 0.0;
  double packing1 = 0.0;
  double packing2 = 0.0;
};

struct DeltaChoice {
  bool ok = false;
  double delta = 0.0;
  std::vector<DeltaTrial> trace;
  std::optional<CoronaForest> forest;
};

inline constexpr double kDeltaFloor = 0x1.0p-20;

/// δ = 1/2, 1/4, ... until both packing ratios are ≤ cfg.tau_target; gives up
/// below 2^-20 and reports the failure instead of throwing.
inline DeltaChoice choose_delta(const DyadicCube& q0, const AccretiveSystem& sys1, const AccretiveSystem& sys2,
                                const PerfectKernel& t, const TbConfig& cfg) {
  DeltaChoice out;
  TbConfig c = cfg;
  for (double delta = 0.5; delta >= kDeltaFloor; delta *= 0.5) {
    c.delta = delta;
    CoronaForest forest = build_corona(q0, sys1, sys2, t, c);
    const DeltaTrial trial{delta, packing_ratio(forest.s1), packing_ratio(forest.s2)};
    out.trace.push_back(trial);
    out.delta = delta;
    if (trial.packing1 <= cfg.tau_target && trial.packing2 <= cfg.tau_target) {
      out.ok = true;
      out.forest.emplace(std::move(forest));
      return out;
    }
  }
  return out;
}

inline nlohmann::json cube_to_json(const GridSpec& spec, const DyadicCube& q) {
  return {{"level", q.level}, {"coords", std::vector<std::int64_t>(q.k.begin(), q.k.begin() + spec.dim())}};
}

/// {q0, S1: [{cube, parent}], S2: [...]}; parent is null for Q0.
inline nlohmann::json to_json(const CoronaForest& f) {
  const GridSpec& spec = f.s1.spec();
  nlohmann::json j;
  j["q0"] = cube_to_json(spec, f.q0);
  for (int which = 1; which <= 2; ++which) {
    auto arr = nlohmann::json::array();
    const CubeFamily& fam = f.family(which);
    for (const auto& s : fam.members()) {
      nlohmann::json e;
      e["cube"] = cube_to_json(spec, s);
      e["parent"] = s == f.q0 ? nlohmann::json(nullptr) : cube_to_json(spec, *fam.smallest_containing(parent(s)));
      arr.push_back(std::move(e));
    }
    j[which == 1 ? "S1" : "S2"] = std::move(arr);
  }
  return j;
}

}  // namespace dytb
