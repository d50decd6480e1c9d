#pragma once

// Instance classes whose measured constants are frozen in fixtures/frozen.json.
// The freezer writes the file once; tests and the acceptance binary read it.

#include <fstream>
#include <stdexcept>
#include <string>

#include "dytb/dytb.hpp"

#ifndef DYTB_FIXTURE_DIR
#error "DYTB_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace fixtures {

inline std::string path() { return std::string(DYTB_FIXTURE_DIR) + "/frozen.json"; }

inline nlohmann::json load() {
  std::ifstream in(path());
  if (!in) throw std::runtime_error("missing fixture file " + path() + "; run dytb_freeze once");
  return nlohmann::json::parse(in);
}

/// Random systems with A = 2 at depth 8, seeds 0..19.
inline dytb::InstanceSpec choose_delta_class() {
  dytb::InstanceSpec s;
  s.depth = 8;
  return s;
}
inline constexpr int kChooseDeltaSeeds = 20;

/// Twisted transform class: 1D depth 6, random b with A = 2, δ = 1/4.
inline constexpr int kMtDepth = 6;
inline constexpr double kMtA = 2.0;
inline constexpr double kMtDelta = 0.25;
inline constexpr int kMtContexts = 6;
inline constexpr std::uint64_t kMtSeed = 2024;

inline dytb::AccretiveSystem mt_system(double p, int k) {
  return dytb::AccretiveSystem(dytb::GridSpec(1, kMtDepth), dytb::AccretiveKind::Random, p, kMtA,
                               dytb::derive_seed(kMtSeed, static_cast<std::uint64_t>(k)), dytb::AccretiveParams{0.9});
}

/// Context k of the class: T' coarsened with a seeded stream.
inline dytb::TwistedContext mt_context(const dytb::AccretiveSystem& sys, int k) {
  const dytb::DyadicCube s0 = dytb::root_cube();
  const auto tprime = dytb::terminal_cubes(sys.get_b(s0), s0, kMtDelta, sys.p(), sys.A());
  dytb::Rng rng(dytb::derive_seed(kMtSeed + 1, static_cast<std::uint64_t>(k)));
  return dytb::TwistedContext::from_system(sys, s0, kMtDelta, dytb::coarsen_terminals(sys.spec(), s0, tprime, rng));
}

/// Worst search ratio over the contexts of the class at exponent p.
inline double measure_mt(double p) {
  double worst = 0.0;
  for (int k = 0; k < kMtContexts; ++k) {
    const dytb::AccretiveSystem sys = mt_system(p, k);
    const dytb::TwistedContext ctx = mt_context(sys, k);
    const dytb::TwistedDifferences prov(ctx);
    const auto r = dytb::adversarial_transform_search(prov, p, dytb::SearchBudget{}, dytb::derive_seed(kMtSeed + 2, k));
    worst = std::max(worst, r.worst_ratio);
  }
  return worst;
}

inline std::string p_key(double p) { return p == 1.5 ? "1.5" : (p == 2.0 ? "2" : "3"); }

/// Main experiment suite: 1D depth 6, p1 = p2 = 2, 100 seeds, dense SVD.
inline dytb::ExperimentConfig main_config() {
  dytb::ExperimentConfig c;
  c.instance.depth = 6;
  c.seed = 1;
  c.trials = 100;
  c.method = dytb::NormMethod::DenseSvd;
  return c;
}

/// Frozen values are reproduced bit for bit on one toolchain; this slack only
/// absorbs last-digit differences between compilers.
inline bool within(double measured, double frozen) { return measured <= frozen * (1.0 + 1e-12) + 1e-15; }

}  // namespace fixtures
