#pragma once

// Perfect dyadic Calderón–Zygmund kernels. For a parent cube R and two distinct
// children i != j, the kernel is constant on child_i(R) × child_j(R); these
// rectangles tile the off-diagonal of the unit square exactly once. K vanishes
// on the diagonal blocks of finest cells.
//
// Orientation: ⟨Tf, g⟩ = ∫∫ K(x, y) f(y) g(x), x ∈ child_i (pairs with g),
// y ∈ child_j (pairs with f).

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "dytb/dyadic.hpp"
#include "dytb/rng.hpp"

namespace dytb {

/// Norm used for |x - y| in the size condition |K(x,y)| ≤ |x - y|^{-n}.
enum class DistanceNorm { Euclidean, Max };

inline std::string to_string(DistanceNorm n) { return n == DistanceNorm::Euclidean ? "euclidean" : "max"; }

inline DistanceNorm distance_norm_from_string(const std::string& s) {
  if (s == "euclidean") return DistanceNorm::Euclidean;
  if (s == "max") return DistanceNorm::Max;
  throw std::invalid_argument("unknown distance norm '" + s + "'");
}

struct KernelKey {
  DyadicCube cube;
  int i = 0;
  int j = 0;
  friend auto operator<=>(const KernelKey&, const KernelKey&) = default;
};

class PerfectKernel {
 public:
  explicit PerfectKernel(GridSpec spec, DistanceNorm norm = DistanceNorm::Euclidean) : spec_(spec), norm_(norm) {}

  const GridSpec& spec() const noexcept { return spec_; }
  DistanceNorm distance_norm() const noexcept { return norm_; }
  const std::map<KernelKey, double>& entries() const noexcept { return entries_; }

  /// Sets κ_{R,i,j}. A zero value removes the entry.
  void set(const DyadicCube& r, int i, int j, double value) {
    check_key(r, i, j);
    if (value == 0.0)
      entries_.erase({r, i, j});
    else
      entries_[{r, i, j}] = value;
  }

  double get(const DyadicCube& r, int i, int j) const {
    auto it = entries_.find({r, i, j});
    return it == entries_.end() ? 0.0 : it->second;
  }

  bool is_zero() const noexcept {
    return std::all_of(entries_.begin(), entries_.end(), [](const auto& e) { return e.second == 0.0; });
  }

  /// sup over x ∈ closure(child_i(R)), y ∈ closure(child_j(R)) of |x - y|.
  double sup_distance(const DyadicCube& r, int i, int j) const {
    const double side = side_length(r);
    const double half = 0.5 * side;
    double sq = 0.0;
    double mx = 0.0;
    for (int d = 0; d < spec_.dim(); ++d) {
      const double base = static_cast<double>(r.k[d]) * side;
      const double a_lo = base + child_offset(spec_, i, d) * half;
      const double b_lo = base + child_offset(spec_, j, d) * half;
      const double s = std::max(std::abs((a_lo + half) - b_lo), std::abs((b_lo + half) - a_lo));
      sq += s * s;
      mx = std::max(mx, s);
    }
    return norm_ == DistanceNorm::Euclidean ? std::sqrt(sq) : mx;
  }

  /// Largest |κ_{R,i,j}| permitted by the size condition.
  double size_bound(const DyadicCube& r, int i, int j) const {
    const double dist = sup_distance(r, i, j);
    return spec_.dim() == 1 ? 1.0 / dist : 1.0 / (dist * dist);
  }

 private:
  void check_key(const DyadicCube& r, int i, int j) const {
    require_in_grid(spec_, r);
    if (r.level >= spec_.depth()) throw std::domain_error("kernel entries need a parent cube above the finest level");
    const int nc = spec_.children_per_cube();
    if (i < 0 || j < 0 || i >= nc || j >= nc || i == j)
      throw std::domain_error("kernel child indices must be distinct and in [0, 2^n)");
  }

  GridSpec spec_;
  DistanceNorm norm_;
  std::map<KernelKey, double> entries_;
};

inline void require_same_grid(const PerfectKernel& t, const GridFunction& f) {
  if (!(t.spec() == f.spec())) throw std::domain_error("grid mismatch between kernel and function");
}

/// ⟨Tf, g⟩ = Σ_R Σ_{i≠j} κ_{R,i,j} (∫_{child_j R} f)(∫_{child_i R} g).
inline double bilinear(const PerfectKernel& t, const GridFunction& f, const GridFunction& g) {
  require_same_grid(t, f);
  require_same_grid(t, g);
  const IntegralPyramid pf(f);
  const IntegralPyramid pg(g);
  const GridSpec& spec = t.spec();
  double acc = 0.0;
  for (const auto& [key, kappa] : t.entries())
    acc += kappa * pf.integral(child(spec, key.cube, key.j)) * pg.integral(child(spec, key.cube, key.i));
  return acc;
}

/// Tf as a grid function. Each entry deposits κ ∫_{child_j} f on child_i; a
/// top-down prefix pass then sums the deposits of all ancestors of each cell.
inline GridFunction apply(const PerfectKernel& t, const GridFunction& f) {
  require_same_grid(t, f);
  const GridSpec& spec = t.spec();
  const IntegralPyramid pf(f);
  std::vector<double> deposit(spec.cube_count(), 0.0);
  for (const auto& [key, kappa] : t.entries())
    deposit[cube_id(spec, child(spec, key.cube, key.i))] += kappa * pf.integral(child(spec, key.cube, key.j));

  std::vector<double> running{0.0};
  for (int level = 1; level <= spec.depth(); ++level) {
    const std::size_t n = spec.cubes_at_level(level);
    const std::size_t offset = spec.level_offset(level);
    std::vector<double> next(n);
    if (spec.dim() == 1) {
      for (std::size_t a = 0; a < n; ++a) next[a] = running[a >> 1] + deposit[offset + a];
    } else {
      const std::size_t side = std::size_t{1} << level;
      const std::size_t half = side >> 1;
      for (std::size_t a = 0; a < side; ++a)
        for (std::size_t b = 0; b < side; ++b)
          next[a * side + b] = running[(a >> 1) * half + (b >> 1)] + deposit[offset + a * side + b];
    }
    running = std::move(next);
  }
  return GridFunction(spec, std::move(running));
}

/// κ*_{R,i,j} = κ_{R,j,i}.
inline PerfectKernel adjoint(const PerfectKernel& t) {
  PerfectKernel out(t.spec(), t.distance_norm());
  for (const auto& [key, kappa] : t.entries()) out.set(key.cube, key.j, key.i, kappa);
  return out;
}

inline bool validate_size(const PerfectKernel& t) {
  return std::all_of(t.entries().begin(), t.entries().end(), [&](const auto& e) {
    return std::abs(e.second) <= t.size_bound(e.first.cube, e.first.i, e.first.j);
  });
}

enum class KernelKind { Zero, HaarShift, Random };

inline std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::Zero: return "zero";
    case KernelKind::HaarShift: return "haar-shift";
    case KernelKind::Random: return "random";
  }
  return "?";
}

inline KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "zero") return KernelKind::Zero;
  if (s == "haar-shift") return KernelKind::HaarShift;
  if (s == "random") return KernelKind::Random;
  throw std::invalid_argument("unknown kernel kind '" + s + "'");
}

/// Instance factory.
///  - haar-shift: κ_{R,i,j} = ±scale·sizeBound(R,i,j), + for i < j and - for i > j
///    (in 1D: κ_{R,0,1} = ℓ(R)^{-1}, κ_{R,1,0} = -ℓ(R)^{-1} at scale 1).
///  - random: κ uniform in [-scale·sizeBound, scale·sizeBound]; with density < 1
///    each entry is kept with that probability.
/// Every parent R below the finest level is visited in id order, so the result
/// is a deterministic function of the arguments.
inline PerfectKernel generate_kernel(KernelKind kind, const GridSpec& spec, std::uint64_t seed, double scale,
                                     double density = 1.0, DistanceNorm norm = DistanceNorm::Euclidean) {
  if (!(scale >= 0.0 && scale <= 1.0)) throw std::invalid_argument("kernel scale must lie in [0, 1]");
  if (!(density >= 0.0 && density <= 1.0)) throw std::invalid_argument("kernel density must lie in [0, 1]");
  PerfectKernel t(spec, norm);
  if (kind == KernelKind::Zero) return t;
  Rng rng(seed);
  const int nc = spec.children_per_cube();
  const std::size_t parents = spec.level_offset(spec.depth());
  for (std::size_t id = 0; id < parents; ++id) {
    const DyadicCube r = cube_from_id(spec, id);
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nc; ++j) {
        if (i == j) continue;
        const double bound = t.size_bound(r, i, j);
        if (kind == KernelKind::HaarShift) {
          t.set(r, i, j, (i < j ? 1.0 : -1.0) * (scale * bound));
        } else {
          const double u = rng.uniform(-1.0, 1.0);
          const double keep = rng.uniform01();
          if (keep < density) t.set(r, i, j, (scale * bound) * u);
        }
      }
  }
  return t;
}

/// Kernel file: {dim, depth, distance, entries: [{level, coords, i, j, value}, ...]}.
inline nlohmann::json to_json(const PerfectKernel& t) {
  nlohmann::json j;
  j["dim"] = t.spec().dim();
  j["depth"] = t.spec().depth();
  j["distance"] = to_string(t.distance_norm());
  auto entries = nlohmann::json::array();
  for (const auto& [key, kappa] : t.entries()) {
    std::vector<std::int64_t> coords(key.cube.k.begin(), key.cube.k.begin() + t.spec().dim());
    entries.push_back({{"level", key.cube.level}, {"coords", coords}, {"i", key.i}, {"j", key.j}, {"value", kappa}});
  }
  j["entries"] = std::move(entries);
  return j;
}

inline PerfectKernel kernel_from_json(const nlohmann::json& j) {
  const GridSpec spec(j.at("dim").get<int>(), j.at("depth").get<int>());
  const DistanceNorm norm =
      j.contains("distance") ? distance_norm_from_string(j.at("distance").get<std::string>()) : DistanceNorm::Euclidean;
  PerfectKernel t(spec, norm);
  for (const auto& e : j.at("entries")) {
    DyadicCube r{e.at("level").get<int>(), {0, 0}};
    const auto coords = e.at("coords").get<std::vector<std::int64_t>>();
    if (static_cast<int>(coords.size()) != spec.dim()) throw std::domain_error("kernel entry coords have wrong rank");
    for (int d = 0; d < spec.dim(); ++d) r.k[d] = coords[static_cast<std::size_t>(d)];
    t.set(r, e.at("i").get<int>(), e.at("j").get<int>(), e.at("value").get<double>());
  }
  return t;
}

}  // namespace dytb
