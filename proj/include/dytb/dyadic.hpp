#pragma once

// Finite dyadic grid on the half-open unit cube [0,1)^n truncated at depth L,
// and exact calculus for functions that are constant on finest-level cells.

#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dytb {

inline constexpr std::size_t kDefaultCellCap = std::size_t{1} << 20;

class GridSpec {
 public:
  GridSpec(int dim, int depth, std::size_t cell_cap = kDefaultCellCap) : dim_(dim), depth_(depth) {
    if (dim != 1 && dim != 2) throw std::invalid_argument("GridSpec: dim must be 1 or 2");
    if (depth < 0) throw std::invalid_argument("GridSpec: depth must be non-negative");
    if (dim * depth > 40 || (std::size_t{1} << (dim * depth)) > cell_cap)
      throw std::invalid_argument("GridSpec: 2^(dim*depth) = 2^" + std::to_string(dim * depth) +
                                  " cells exceeds the cell cap");
  }

  int dim() const noexcept { return dim_; }
  int depth() const noexcept { return depth_; }
  std::size_t cells() const noexcept { return std::size_t{1} << (dim_ * depth_); }
  std::int64_t side_cells() const noexcept { return std::int64_t{1} << depth_; }
  int children_per_cube() const noexcept { return 1 << dim_; }
  double cell_volume() const noexcept { return std::ldexp(1.0, -dim_ * depth_); }

  std::size_t cubes_at_level(int level) const noexcept { return std::size_t{1} << (dim_ * level); }
  /// Number of cubes strictly above `level`; the id of the first cube at `level`.
  std::size_t level_offset(int level) const noexcept {
    return ((std::size_t{1} << (dim_ * level)) - 1) / ((std::size_t{1} << dim_) - 1);
  }
  std::size_t cube_count() const noexcept { return level_offset(depth_ + 1); }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  int dim_;
  int depth_;
};

/// Cube [k 2^-level, (k+1) 2^-level) per axis. Unused coordinates are zero.
/// The default ordering (level, then coordinates) coincides with cube id order.
struct DyadicCube {
  int level = 0;
  std::array<std::int64_t, 2> k{0, 0};

  friend auto operator<=>(const DyadicCube&, const DyadicCube&) = default;
};

inline DyadicCube root_cube() { return {}; }

inline std::string to_string(const DyadicCube& q) {
  return "[" + std::to_string(q.level) + ":" + std::to_string(q.k[0]) + "," + std::to_string(q.k[1]) + "]";
}

inline bool in_grid(const GridSpec& spec, const DyadicCube& q) noexcept {
  if (q.level < 0 || q.level > spec.depth()) return false;
  const std::int64_t side = std::int64_t{1} << q.level;
  for (int d = 0; d < 2; ++d) {
    if (d < spec.dim()) {
      if (q.k[d] < 0 || q.k[d] >= side) return false;
    } else if (q.k[d] != 0) {
      return false;
    }
  }
  return true;
}

inline void require_in_grid(const GridSpec& spec, const DyadicCube& q) {
  if (!in_grid(spec, q)) throw std::domain_error("cube " + to_string(q) + " is outside the grid");
}

inline double side_length(const DyadicCube& q) noexcept { return std::ldexp(1.0, -q.level); }
inline double volume(const GridSpec& spec, const DyadicCube& q) noexcept {
  return std::ldexp(1.0, -spec.dim() * q.level);
}
inline bool is_leaf(const GridSpec& spec, const DyadicCube& q) noexcept { return q.level == spec.depth(); }

/// Offset (0 or 1) of child `c` along axis `d`; child order is row-major.
inline int child_offset(const GridSpec& spec, int c, int d) noexcept { return (c >> (spec.dim() - 1 - d)) & 1; }

inline DyadicCube child(const GridSpec& spec, const DyadicCube& q, int c) {
  DyadicCube r{q.level + 1, {0, 0}};
  for (int d = 0; d < spec.dim(); ++d) r.k[d] = 2 * q.k[d] + child_offset(spec, c, d);
  return r;
}

inline DyadicCube parent(const DyadicCube& q) {
  if (q.level == 0) throw std::domain_error("the root cube has no parent");
  return {q.level - 1, {q.k[0] >> 1, q.k[1] >> 1}};
}

/// Which child of its parent `q` is.
inline int child_index_in_parent(const GridSpec& spec, const DyadicCube& q) noexcept {
  int c = 0;
  for (int d = 0; d < spec.dim(); ++d) c = (c << 1) | static_cast<int>(q.k[d] & 1);
  return c;
}

inline DyadicCube ancestor_at(const DyadicCube& q, int level) noexcept {
  const int shift = q.level - level;
  return {level, {q.k[0] >> shift, q.k[1] >> shift}};
}

/// P contains Q (not necessarily strictly).
inline bool contains(const DyadicCube& p, const DyadicCube& q) noexcept {
  return p.level <= q.level && ancestor_at(q, p.level) == p;
}

inline bool strictly_contains(const DyadicCube& p, const DyadicCube& q) noexcept {
  return p.level < q.level && ancestor_at(q, p.level) == p;
}

inline bool disjoint(const DyadicCube& p, const DyadicCube& q) noexcept { return !contains(p, q) && !contains(q, p); }

/// The child of P containing Q, for Q strictly inside P.
inline DyadicCube child_containing(const GridSpec& spec, const DyadicCube& p, const DyadicCube& q) {
  require_in_grid(spec, p);
  require_in_grid(spec, q);
  if (!strictly_contains(p, q))
    throw std::domain_error("child_containing: " + to_string(q) + " is not strictly inside " + to_string(p));
  return ancestor_at(q, p.level + 1);
}

inline std::size_t index_in_level(const GridSpec& spec, const DyadicCube& q) noexcept {
  if (spec.dim() == 1) return static_cast<std::size_t>(q.k[0]);
  return static_cast<std::size_t>((q.k[0] << q.level) + q.k[1]);
}

/// Dense id in [0, spec.cube_count()), level by level, row-major inside a level.
inline std::size_t cube_id(const GridSpec& spec, const DyadicCube& q) noexcept {
  return spec.level_offset(q.level) + index_in_level(spec, q);
}

inline DyadicCube cube_at(const GridSpec& spec, int level, std::size_t index) noexcept {
  DyadicCube q{level, {0, 0}};
  if (spec.dim() == 1) {
    q.k[0] = static_cast<std::int64_t>(index);
  } else {
    q.k[0] = static_cast<std::int64_t>(index >> level);
    q.k[1] = static_cast<std::int64_t>(index & ((std::size_t{1} << level) - 1));
  }
  return q;
}

inline DyadicCube cube_from_id(const GridSpec& spec, std::size_t id) {
  int level = 0;
  while (level < spec.depth() && spec.level_offset(level + 1) <= id) ++level;
  return cube_at(spec, level, id - spec.level_offset(level));
}

/// Finest cell with row-major index `cell`.
inline DyadicCube cell_cube(const GridSpec& spec, std::size_t cell) noexcept { return cube_at(spec, spec.depth(), cell); }

inline std::size_t cell_index(const GridSpec& spec, const DyadicCube& leaf) noexcept { return index_in_level(spec, leaf); }

/// Calls fn(cell_index) for every finest cell of q, in row-major order.
template <typename Fn>
void for_each_cell(const GridSpec& spec, const DyadicCube& q, Fn&& fn) {
  const int shift = spec.depth() - q.level;
  const std::int64_t m = std::int64_t{1} << shift;
  if (spec.dim() == 1) {
    const auto first = static_cast<std::size_t>(q.k[0] << shift);
    for (std::size_t i = first; i < first + static_cast<std::size_t>(m); ++i) fn(i);
    return;
  }
  const std::int64_t side = spec.side_cells();
  for (std::int64_t r = q.k[0] << shift; r < (q.k[0] + 1) << shift; ++r) {
    const auto row = static_cast<std::size_t>(r * side);
    for (std::int64_t c = q.k[1] << shift; c < (q.k[1] + 1) << shift; ++c) fn(row + static_cast<std::size_t>(c));
  }
}

/// All cubes contained in q (q included), in id order.
inline std::vector<DyadicCube> cubes_within(const GridSpec& spec, const DyadicCube& q) {
  std::vector<DyadicCube> out;
  for (int level = q.level; level <= spec.depth(); ++level) {
    const int shift = level - q.level;
    const std::int64_t m = std::int64_t{1} << shift;
    if (spec.dim() == 1) {
      for (std::int64_t a = 0; a < m; ++a) out.push_back({level, {(q.k[0] << shift) + a, 0}});
    } else {
      for (std::int64_t a = 0; a < m; ++a)
        for (std::int64_t b = 0; b < m; ++b) out.push_back({level, {(q.k[0] << shift) + a, (q.k[1] << shift) + b}});
    }
  }
  return out;
}

/// Pairwise accumulation along the dyadic tree below q: every internal node
/// sums its children in child order. Leaves contribute cell_value(cell).
template <typename CellValue>
double tree_sum(const GridSpec& spec, const DyadicCube& q, CellValue&& cell_value) {
  if (q.level == spec.depth()) return cell_value(cell_index(spec, q));
  double acc = 0.0;
  for (int c = 0; c < spec.children_per_cube(); ++c) acc += tree_sum(spec, child(spec, q, c), cell_value);
  return acc;
}

class GridFunction {
 public:
  explicit GridFunction(GridSpec spec) : spec_(spec), values_(spec.cells(), 0.0) {}

  GridFunction(GridSpec spec, std::vector<double> values) : spec_(spec), values_(std::move(values)) {
    if (values_.size() != spec_.cells())
      throw std::invalid_argument("GridFunction: expected " + std::to_string(spec_.cells()) + " values, got " +
                                  std::to_string(values_.size()));
  }

  static GridFunction indicator(const GridSpec& spec, const DyadicCube& q, double value = 1.0) {
    require_in_grid(spec, q);
    GridFunction f(spec);
    for_each_cell(spec, q, [&](std::size_t i) { f.values_[i] = value; });
    return f;
  }

  const GridSpec& spec() const noexcept { return spec_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }

  double integral(const DyadicCube& q) const {
    require_in_grid(spec_, q);
    const double vol = spec_.cell_volume();
    return tree_sum(spec_, q, [&](std::size_t i) { return values_[i] * vol; });
  }
  double integral() const { return integral(root_cube()); }

  double average(const DyadicCube& q) const { return integral(q) / volume(spec_, q); }

  GridFunction restricted(const DyadicCube& q) const {
    require_in_grid(spec_, q);
    GridFunction r(spec_);
    for_each_cell(spec_, q, [&](std::size_t i) { r.values_[i] = values_[i]; });
    return r;
  }

  GridFunction& operator+=(const GridFunction& o) {
    require_same_grid(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  GridFunction& operator-=(const GridFunction& o) {
    require_same_grid(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  GridFunction& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }
  /// Pointwise product.
  GridFunction& operator*=(const GridFunction& o) {
    require_same_grid(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] *= o.values_[i];
    return *this;
  }

  friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
  friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
  friend GridFunction operator*(GridFunction a, const GridFunction& b) { return a *= b; }
  friend GridFunction operator*(GridFunction a, double s) { return a *= s; }
  friend GridFunction operator*(double s, GridFunction a) { return a *= s; }

  void require_same_grid(const GridFunction& o) const {
    if (!(o.spec_ == spec_)) throw std::domain_error("grid mismatch between functions");
  }

 private:
  GridSpec spec_;
  std::vector<double> values_;
};

/// ⟨f⟩_Q = |Q|^{-1} ∫_Q f.
inline double average(const GridFunction& f, const DyadicCube& q) { return f.average(q); }

/// ∫_Q |f| (the L¹ norm on Q; lp_norm only accepts p > 1).
inline double l1_norm(const GridFunction& f, const DyadicCube& q) {
  require_in_grid(f.spec(), q);
  const double vol = f.spec().cell_volume();
  return tree_sum(f.spec(), q, [&](std::size_t i) { return std::abs(f[i]) * vol; });
}

/// ∫_Q |f|^p over cells of Q, by tree accumulation.
inline double lp_power_integral(const GridFunction& f, double p, const DyadicCube& q) {
  require_in_grid(f.spec(), q);
  const double vol = f.spec().cell_volume();
  if (p == 2.0) return tree_sum(f.spec(), q, [&](std::size_t i) { return f[i] * f[i] * vol; });
  return tree_sum(f.spec(), q, [&](std::size_t i) { return std::pow(std::abs(f[i]), p) * vol; });
}

inline void require_exponent(double p) {
  if (!(p > 1.0) || !std::isfinite(p))
    throw std::invalid_argument("exponent p must be finite and > 1, got " + std::to_string(p));
}

/// (Σ_{cells ⊂ Q} |f|^p · cellVolume)^{1/p}; Q defaults to the root.
inline double lp_norm(const GridFunction& f, double p, std::optional<DyadicCube> q = std::nullopt) {
  require_exponent(p);
  const DyadicCube cube = q.value_or(root_cube());
  const double s = lp_power_integral(f, p, cube);
  return p == 2.0 ? std::sqrt(s) : std::pow(s, 1.0 / p);
}

/// ∫ f g over the whole grid.
inline double inner_product(const GridFunction& f, const GridFunction& g) {
  f.require_same_grid(g);
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += f[i] * g[i];
  return acc * f.spec().cell_volume();
}

inline double sup_norm(const GridFunction& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

/// Hölder conjugate p' = p / (p - 1).
inline double conjugate_exponent(double p) {
  require_exponent(p);
  return p / (p - 1.0);
}

/// Integrals of a cell function over every dyadic cube, built bottom-up with
/// the same accumulation order as tree_sum, so both agree bit for bit.
class IntegralPyramid {
 public:
  IntegralPyramid(const GridSpec& spec, std::span<const double> cell_values) : spec_(spec) {
    if (cell_values.size() != spec.cells()) throw std::domain_error("IntegralPyramid: size mismatch");
    levels_.resize(static_cast<std::size_t>(spec.depth()) + 1);
    const double vol = spec.cell_volume();
    auto& leaf = levels_.back();
    leaf.resize(spec.cells());
    for (std::size_t i = 0; i < leaf.size(); ++i) leaf[i] = cell_values[i] * vol;
    for (int level = spec.depth() - 1; level >= 0; --level) {
      auto& cur = levels_[static_cast<std::size_t>(level)];
      const auto& below = levels_[static_cast<std::size_t>(level) + 1];
      cur.assign(spec.cubes_at_level(level), 0.0);
      if (spec.dim() == 1) {
        for (std::size_t i = 0; i < cur.size(); ++i) {
          double acc = 0.0;
          acc += below[2 * i];
          acc += below[2 * i + 1];
          cur[i] = acc;
        }
      } else {
        const std::size_t side = std::size_t{1} << level;
        const std::size_t side_below = side << 1;
        for (std::size_t a = 0; a < side; ++a)
          for (std::size_t b = 0; b < side; ++b) {
            double acc = 0.0;
            acc += below[(2 * a) * side_below + 2 * b];
            acc += below[(2 * a) * side_below + 2 * b + 1];
            acc += below[(2 * a + 1) * side_below + 2 * b];
            acc += below[(2 * a + 1) * side_below + 2 * b + 1];
            cur[a * side + b] = acc;
          }
      }
    }
  }

  explicit IntegralPyramid(const GridFunction& f) : IntegralPyramid(f.spec(), f.values()) {}

  const GridSpec& spec() const noexcept { return spec_; }
  double integral(const DyadicCube& q) const {
    return levels_[static_cast<std::size_t>(q.level)][index_in_level(spec_, q)];
  }
  double average(const DyadicCube& q) const { return integral(q) / volume(spec_, q); }
  std::span<const double> level(int level) const { return levels_[static_cast<std::size_t>(level)]; }

 private:
  GridSpec spec_;
  std::vector<std::vector<double>> levels_;
};

/// Pyramid of ∫_Q |f|^p for all Q.
inline IntegralPyramid power_pyramid(const GridFunction& f, double p) {
  std::vector<double> v(f.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = p == 2.0 ? f[i] * f[i] : std::pow(std::abs(f[i]), p);
  return IntegralPyramid(f.spec(), v);
}

/// Mf(x) = max over dyadic Q ∋ x of |⟨f⟩_Q|, root to finest level.
inline GridFunction dyadic_maximal(const GridFunction& f) {
  const GridSpec& spec = f.spec();
  const IntegralPyramid pyr(f);
  std::vector<double> running{std::abs(pyr.average(root_cube()))};
  for (int level = 1; level <= spec.depth(); ++level) {
    std::vector<double> next(spec.cubes_at_level(level));
    for (std::size_t i = 0; i < next.size(); ++i) {
      const DyadicCube q = cube_at(spec, level, i);
      next[i] = std::max(running[index_in_level(spec, parent(q))], std::abs(pyr.average(q)));
    }
    running = std::move(next);
  }
  return GridFunction(spec, std::move(running));
}

}  // namespace dytb
