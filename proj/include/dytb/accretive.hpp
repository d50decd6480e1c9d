#pragma once

// Systems of p-accretive functions {b_Q}: b_Q supported on Q, ∫_Q b_Q = |Q|,
// ‖b_Q‖_p ≤ A |Q|^{1/p}. Functions are generated on demand from (kind, seed, Q)
// and cached; generation happens at most once per cube.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dytb/dyadic.hpp"
#include "dytb/rng.hpp"

namespace dytb {

/// constant:  b_Q = 1_Q.
/// two-value: 1 + s on a pseudo-random half of Q's cells, 1 - s on the rest.
/// signed:    2 on a pseudo-random half of Q's children, 0 on the others.
/// random:    cell values 1 + s·u (u uniform in [-1, 1]) divided by their mean,
///            blended toward 1_Q when the declared A would be exceeded.
/// A single finest cell always gets b = 1 (the mean condition forces it).
enum class AccretiveKind { Constant, TwoValue, Signed, Random };

inline std::string to_string(AccretiveKind k) {
  switch (k) {
    case AccretiveKind::Constant: return "constant";
    case AccretiveKind::TwoValue: return "two-value";
    case AccretiveKind::Signed: return "signed";
    case AccretiveKind::Random: return "random";
  }
  return "?";
}

inline AccretiveKind accretive_kind_from_string(const std::string& s) {
  if (s == "constant") return AccretiveKind::Constant;
  if (s == "two-value") return AccretiveKind::TwoValue;
  if (s == "signed") return AccretiveKind::Signed;
  if (s == "random") return AccretiveKind::Random;
  throw std::invalid_argument("unknown accretive kind '" + s + "'");
}

inline constexpr double kMinAbsValue = 1e-6;
inline constexpr double kMeanTolerance = 1e-12;
inline constexpr double kNormSlack = 1e-12;

struct AccretiveParams {
  double s = 0.5;  // two-value half-amplitude, or random amplitude
};

/// Smallest admissible A for the closed-form kinds; random kinds are blended to fit.
inline double minimal_constant(AccretiveKind kind, double p, const AccretiveParams& params, const GridSpec& spec) {
  if (spec.depth() == 0) return 1.0;
  switch (kind) {
    case AccretiveKind::Constant:
    case AccretiveKind::Random: return 1.0;
    case AccretiveKind::TwoValue:
      return std::pow(0.5 * (std::pow(1.0 + params.s, p) + std::pow(1.0 - params.s, p)), 1.0 / p);
    case AccretiveKind::Signed: return std::pow(2.0, (p - 1.0) / p);
  }
  return 1.0;
}

class AccretiveSystem {
 public:
  AccretiveSystem(GridSpec spec, AccretiveKind kind, double p, double A, std::uint64_t seed, AccretiveParams params = {})
      : spec_(spec), kind_(kind), p_(p), A_(A), seed_(seed), params_(params), cache_(std::make_shared<Cache>()) {
    require_exponent(p);
    if (!(A > 1.0) || !std::isfinite(A)) throw std::invalid_argument("accretive constant A must be finite and > 1");
    if (kind == AccretiveKind::TwoValue && !(params.s >= 0.0 && params.s <= 1.0 - 2 * kMinAbsValue))
      throw std::invalid_argument("two-value parameter s must lie in [0, 1 - 2e-6]");
    if (kind == AccretiveKind::Random && !(params.s >= 0.0 && params.s <= 0.999))
      throw std::invalid_argument("random amplitude s must lie in [0, 0.999]");
    const double needed = minimal_constant(kind, p, params, spec);
    if (needed > A * (1.0 + kNormSlack))
      throw std::invalid_argument("declared A = " + std::to_string(A) + " is below the " + to_string(kind) +
                                  " system's constant " + std::to_string(needed));
  }

  const GridSpec& spec() const noexcept { return spec_; }
  AccretiveKind kind() const noexcept { return kind_; }
  double p() const noexcept { return p_; }
  double A() const noexcept { return A_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const AccretiveParams& params() const noexcept { return params_; }

  /// b_Q; the reference stays valid for the lifetime of the system (and its copies).
  const GridFunction& get_b(const DyadicCube& q) const {
    require_in_grid(spec_, q);
    {
      std::shared_lock lock(cache_->mutex);
      auto it = cache_->items.find(q);
      if (it != cache_->items.end()) return *it->second;
    }
    std::unique_lock lock(cache_->mutex);
    auto it = cache_->items.find(q);
    if (it != cache_->items.end()) return *it->second;
    auto b = std::make_unique<const GridFunction>(generate(q));
    check_generated(q, *b);
    return *cache_->items.emplace(q, std::move(b)).first->second;
  }

 private:
  struct Cache {
    std::shared_mutex mutex;
    std::map<DyadicCube, std::unique_ptr<const GridFunction>> items;
  };

  GridFunction generate(const DyadicCube& q) const {
    GridFunction b(spec_);
    std::vector<std::size_t> cells;
    for_each_cell(spec_, q, [&](std::size_t i) { cells.push_back(i); });
    if (cells.size() == 1 || kind_ == AccretiveKind::Constant) {
      for (std::size_t i : cells) b[i] = 1.0;
      return b;
    }
    Rng rng(derive_seed(seed_, cube_id(spec_, q)));
    switch (kind_) {
      case AccretiveKind::TwoValue: {
        rng.shuffle(cells);
        const std::size_t half = cells.size() / 2;
        for (std::size_t n = 0; n < cells.size(); ++n) b[cells[n]] = n < half ? 1.0 + params_.s : 1.0 - params_.s;
        break;
      }
      case AccretiveKind::Signed: {
        std::vector<int> kids(static_cast<std::size_t>(spec_.children_per_cube()));
        std::iota(kids.begin(), kids.end(), 0);
        rng.shuffle(kids);
        for (std::size_t n = 0; n < kids.size(); ++n) {
          const double v = n < kids.size() / 2 ? 2.0 : 0.0;
          for_each_cell(spec_, child(spec_, q, kids[n]), [&](std::size_t i) { b[i] = v; });
        }
        break;
      }
      case AccretiveKind::Random: {
        for (std::size_t i : cells) b[i] = 1.0 + params_.s * rng.uniform(-1.0, 1.0);
        const double mean = b.average(q);
        for (std::size_t i : cells) b[i] /= mean;
        const double measured = lp_norm(b, p_, q) / std::pow(volume(spec_, q), 1.0 / p_);
        if (measured > A_) {
          // ‖(1-t)1_Q + t b‖ ≤ (1-t) + t·measured by convexity.
          const double t = 0.999 * (A_ - 1.0) / (measured - 1.0);
          for (std::size_t i : cells) b[i] = 1.0 + t * (b[i] - 1.0);
        }
        break;
      }
      case AccretiveKind::Constant: break;
    }
    return b;
  }

  void check_generated(const DyadicCube& q, const GridFunction& b) const;

  GridSpec spec_;
  AccretiveKind kind_;
  double p_;
  double A_;
  std::uint64_t seed_;
  AccretiveParams params_;
  std::shared_ptr<Cache> cache_;
};

struct AccretiveCheck {
  bool ok = false;
  double measured_A = 0.0;
  bool support_ok = false;
  bool mean_ok = false;
  bool norm_ok = false;
};

/// Checks a single function against the system invariants for cube q.
inline AccretiveCheck check_accretive(const GridFunction& b, const DyadicCube& q, double p, double A) {
  const GridSpec& spec = b.spec();
  AccretiveCheck r;
  r.support_ok = true;
  std::vector<char> inside(spec.cells(), 0);
  for_each_cell(spec, q, [&](std::size_t i) { inside[i] = 1; });
  for (std::size_t i = 0; i < spec.cells(); ++i)
    if (!inside[i] && b[i] != 0.0) r.support_ok = false;
  const double vol = volume(spec, q);
  r.mean_ok = std::abs(b.integral(q) - vol) <= kMeanTolerance * vol;
  r.measured_A = lp_norm(b, p, q) / std::pow(vol, 1.0 / p);
  r.norm_ok = r.measured_A <= A * (1.0 + kNormSlack);
  r.ok = r.support_ok && r.mean_ok && r.norm_ok;
  return r;
}

inline void AccretiveSystem::check_generated(const DyadicCube& q, const GridFunction& b) const {
  const AccretiveCheck c = check_accretive(b, q, p_, A_);
  if (!c.ok) throw std::logic_error("accretive generator produced an invalid b_Q for " + to_string(q));
  if (kind_ != AccretiveKind::Signed)
    for_each_cell(spec_, q, [&](std::size_t i) {
      if (std::abs(b[i]) < kMinAbsValue) throw std::logic_error("accretive generator produced a near-zero value");
    });
}

/// measuredA = ‖b_Q‖_p / |Q|^{1/p}; ok iff support, mean and norm hold against sys.A().
inline AccretiveCheck validate(const AccretiveSystem& sys, const DyadicCube& q) {
  return check_accretive(sys.get_b(q), q, sys.p(), sys.A());
}

/// Descriptor {kind, p, A, seed, params: {s}}.
inline nlohmann::json to_json(const AccretiveSystem& sys) {
  return {{"kind", to_string(sys.kind())},
          {"p", sys.p()},
          {"A", sys.A()},
          {"seed", sys.seed()},
          {"params", {{"s", sys.params().s}}}};
}

inline AccretiveSystem accretive_from_json(const GridSpec& spec, const nlohmann::json& j) {
  AccretiveParams params;
  if (j.contains("params")) params.s = j.at("params").value("s", params.s);
  return AccretiveSystem(spec, accretive_kind_from_string(j.at("kind").get<std::string>()), j.at("p").get<double>(),
                         j.at("A").get<double>(), j.at("seed").get<std::uint64_t>(), params);
}

}  // namespace dytb
