// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dytb;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool cond, const std::string& what) {
    if (!cond && pass) detail << "first failure: " << what << "; ";
    pass = pass && cond;
  }
};

double p_of(std::uint64_t k) { return k % 3 == 0 ? 1.5 : (k % 3 == 1 ? 2.0 : 3.0); }

// 1. Every exact identity on small grids.
void identities(Outcome& o) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int dim = 1; dim <= 2; ++dim)
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      InstanceSpec s;
      s.dim = dim;
      s.depth = dim == 1 ? 6 : 3;
      s.p1 = p_of(seed);
      s.p2 = p_of(seed / 3);
      const TbInstance inst = make_instance(s, seed);
      o.require(inst.ok(), "instance dim " + std::to_string(dim) + " seed " + std::to_string(seed) + ": " + inst.failure);
      if (!inst.ok()) continue;
      for (const auto& [name, v] : identity_suite(inst)) {
        o.require(v <= 1e-9, name + " residual " + format_double(v));
        worst = std::max(worst, v);
      }
    }
  const double t = seconds_since(t0);
  o.require(t <= 60.0, "took " + format_double(t) + " s");
  o.detail << "max residual " << worst << ", " << t << " s";
}

// 2. Kernel application and operator norm against the dense oracle.
void oracle_equivalence(Outcome& o) {
  Rng rng(2);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const GridSpec g(1 + k % 2, k % 2 == 0 ? 5 : 3);
    const PerfectKernel t = generate_kernel(KernelKind::Random, g, rng.next(), 1.0);
    const auto m = oracle::dense_kernel(t);
    const GridFunction f = oracle::random_function(g, rng);
    const double d = oracle::max_abs_diff(apply(t, f), oracle::matvec(m, f));
    const double ref = oracle::spectral_norm(m);
    const double nd = std::abs(operator_norm(t, NormMethod::DenseSvd).value - ref);
    const double np = std::abs(operator_norm(t, NormMethod::Power).value - ref);
    worst = std::max({worst, d, nd, np});
  }
  o.require(worst <= 1e-6, "oracle gap " + format_double(worst));
  const GridSpec big(1, 14);
  const PerfectKernel t = generate_kernel(KernelKind::Random, big, 3, 1.0);
  const GridFunction f = oracle::random_function(big, rng);
  const auto t0 = Clock::now();
  const GridFunction tf = apply(t, f);
  const double secs = seconds_since(t0);
  o.require(secs < 1.0 && tf.size() == big.cells(), "depth-14 apply took " + format_double(secs) + " s");
  o.detail << "max gap " << worst << ", depth-14 apply " << secs << " s";
}

// 3. Pairings of a mean-zero function on P with anything on a disjoint Q vanish.
void perfectness(Outcome& o) {
  Rng rng(3);
  double worst = 0.0;
  for (int dim = 1; dim <= 2; ++dim) {
    const GridSpec g(dim, dim == 1 ? 6 : 3);
    const PerfectKernel t = generate_kernel(KernelKind::Random, g, rng.next(), 1.0);
    const auto cubes = oracle::all_cubes(g);
    int done = 0;
    while (done < 100) {
      const DyadicCube p = cubes[rng.below(cubes.size())];
      const DyadicCube q = cubes[rng.below(cubes.size())];
      if (!disjoint(p, q) || is_leaf(g, p)) continue;
      GridFunction f(g);
      for_each_cell(g, p, [&](std::size_t i) { f[i] = rng.uniform(-1.0, 1.0); });
      const double mean = f.average(p);
      for_each_cell(g, p, [&](std::size_t i) { f[i] -= mean; });
      GridFunction h(g);
      for_each_cell(g, q, [&](std::size_t i) { h[i] = rng.uniform(-1.0, 1.0); });
      const double scale = lp_norm(f, 2.0) * lp_norm(h, 2.0);
      const double r = std::max(std::abs(bilinear(t, f, h)), std::abs(bilinear(t, h, f))) / scale;
      worst = std::max(worst, r);
      ++done;
    }
  }
  o.require(worst <= 1e-12, "relative pairing " + format_double(worst));
  o.detail << "200 pairs, max relative pairing " << worst;
}

// 4. With b = 1 the twisted differences are Haar differences and p = 2 transforms contract.
void classical_limit(Outcome& o) {
  Rng rng(4);
  double gap = 0.0;
  double ratio = 0.0;
  for (int dim = 1; dim <= 2; ++dim) {
    const GridSpec g(dim, dim == 1 ? 6 : 3);
    const AccretiveSystem one(g, AccretiveKind::Constant, 2.0, 2.0, 0);
    const TwistedContext ctx = TwistedContext::from_system(one, root_cube(), 0.5);
    const GridFunction f = oracle::random_function(g, rng);
    for (const auto& q : ctx.family())
      gap = std::max(gap, oracle::max_abs_diff(twisted_delta(ctx, q, f), oracle::haar_difference(f, q)));
    const TwistedDifferences prov(ctx);
    for (int k = 0; k < 100; ++k) {
      const SignChoice eps = SignChoice::random_signs(g, rng);
      ratio = std::max(ratio, transform_ratio(prov, eps, oracle::random_function(g, rng), 2.0));
    }
  }
  o.require(gap <= 1e-12, "Haar gap " + format_double(gap));
  o.require(ratio <= 1.0 + 1e-10, "p = 2 ratio " + format_double(ratio));
  o.detail << "Haar gap " << gap << ", max ratio over 200 sign choices " << ratio;
}

// 5. Stopping trees: trivial for the zero kernel, sparse for random instances.
void corona(Outcome& o) {
  const GridSpec g(1, 8);
  const AccretiveSystem c(g, AccretiveKind::Constant, 2.0, 2.0, 0);
  const CoronaForest zero = build_corona(root_cube(), c, c, PerfectKernel(g), TbConfig{});
  o.require(zero.s1.size() == 1 && zero.s2.size() == 1 && zero.s1.contains(root_cube()), "zero kernel forest");
  double pack = 0.0, carl = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    InstanceSpec s;
    s.depth = 8;
    s.kind1 = seed % 4 == 0 ? AccretiveKind::Signed : AccretiveKind::Random;
    s.kind2 = seed % 4 == 1 ? AccretiveKind::TwoValue : AccretiveKind::Random;
    s.p1 = p_of(seed);
    s.p2 = p_of(seed + 1);
    const TbInstance inst = make_instance(s, seed);
    o.require(inst.ok(), "seed " + std::to_string(seed) + ": " + inst.failure);
    if (!inst.ok()) continue;
    const CoronaForest& F = inst.forest();
    for (int j = 1; j <= 2; ++j) {
      const double pr = packing_ratio(F.family(j));
      const double cr = carleson_constant(F.family(j), F.q0);
      pack = std::max(pack, pr);
      carl = std::max(carl, cr);
      o.require(pr <= 0.9, "packing " + format_double(pr) + " at seed " + std::to_string(seed));
      o.require(cr <= 11.0, "Carleson " + format_double(cr) + " at seed " + std::to_string(seed));
      o.require(corona_denominators_safe(F, j, j == 1 ? inst.sys1 : inst.sys2, inst.cfg.delta),
                "denominators at seed " + std::to_string(seed));
    }
  }
  o.detail << "100 instances, max packing " << pack << ", max Carleson " << carl;
}

// 6. Level sets of the half-twisted transform carry little |b|^p mass.
void measure_comparison(Outcome& o) {
  Rng rng(6);
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    const double p = p_of(k);
    const GridSpec g(k % 2 == 0 ? 1 : 2, k % 2 == 0 ? 6 : 3);
    const AccretiveSystem sys(g, AccretiveKind::Random, p, 2.0, derive_seed(66, k), AccretiveParams{0.95});
    const double delta = k % 5 == 0 ? 0.25 : 0.5;
    const DyadicCube s0 = root_cube();
    const auto tprime = terminal_cubes(sys.get_b(s0), s0, delta, p, 2.0);
    Rng crng(derive_seed(67, k));
    const TwistedContext ctx = TwistedContext::from_system(sys, s0, delta, coarsen_terminals(g, s0, tprime, crng));
    const auto mc = measure_comparison_check(ctx, SignChoice::random_signs(g, rng), oracle::random_function(g, rng));
    o.require(mc.ok && mc.levels_checked == 32, "context " + std::to_string(k) + " ratio " + format_double(mc.worst_ratio));
    worst = std::max(worst, mc.worst_ratio);
  }
  o.detail << "100 contexts, worst mass ratio " << worst;
}

// 7. Search equals exhaustive enumeration on small trees and stays below the frozen constants.
void transform_search(Outcome& o) {
  Rng rng(7);
  double gap = 0.0;
  for (int depth = 1; depth <= 3; ++depth)
    for (double p : {1.5, 2.0, 3.0}) {
      const GridSpec g(1, depth);
      const AccretiveSystem sys(g, AccretiveKind::Random, p, 2.0, derive_seed(77, depth), AccretiveParams{0.9});
      const TwistedContext ctx = TwistedContext::from_system(sys, root_cube(), 0.5);
      const TwistedDifferences prov(ctx);
      const GridFunction f = random_sign_function(g, root_cube(), rng);
      const SearchResult r = adversarial_transform_search(prov, p, SearchBudget{}, 1, std::vector<GridFunction>{f});
      const auto& cubes = prov.cubes();
      double best = 0.0;
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << cubes.size()); ++mask) {
        SignChoice eps(g);
        for (std::size_t k = 0; k < cubes.size(); ++k) eps.set(cubes[k], (mask >> k) & 1 ? -1.0 : 1.0);
        best = std::max(best, transform_ratio(prov, eps, f, p));
      }
      gap = std::max(gap, std::abs(r.worst_ratio - best) / best);
    }
  o.require(gap <= 1e-12, "search vs exhaustive relative gap " + format_double(gap));
  const auto frozen = fixtures::load().at("C_mt");
  o.detail << "exhaustive gap " << gap;
  for (double p : {1.5, 2.0, 3.0}) {
    const double measured = fixtures::measure_mt(p);
    const double c = frozen.at(fixtures::p_key(p)).get<double>();
    o.require(fixtures::within(measured, c), "p = " + format_double(p) + " measured " + format_double(measured));
    o.detail << ", C_mt(" << p << ") " << measured << " <= " << c;
  }
}

// 8. The main ratio against its frozen constant plus two anchored cases.
void main_theorem(Outcome& o) {
  const auto t0 = Clock::now();
  const double c = fixtures::load().at("C_frozen").get<double>();
  double worst = 0.0;
  for (const auto& r : main_theorem_experiment(fixtures::main_config())) {
    o.require(r.ok, "trial " + std::to_string(r.trial) + ": " + r.failure);
    o.require(fixtures::within(r.ratio, c), "trial " + std::to_string(r.trial) + " ratio " + format_double(r.ratio));
    worst = std::max(worst, r.ratio);
  }
  ExperimentConfig zero = fixtures::main_config();
  zero.instance.kernel = KernelKind::Zero;
  zero.trials = 1;
  const VerifierReport z = main_theorem_experiment(zero)[0];
  o.require(z.ok && z.ratio == 0.0, "zero kernel ratio " + format_double(z.ratio));
  ExperimentConfig haar;
  haar.instance.depth = 1;
  haar.instance.kernel = KernelKind::HaarShift;
  haar.instance.kind1 = haar.instance.kind2 = AccretiveKind::Constant;
  haar.trials = 1;
  const VerifierReport h = main_theorem_experiment(haar)[0];
  o.require(std::abs(h.Tloc - 0.5) <= 1e-12 && std::abs(h.operator_norm - 0.5) <= 1e-12,
            "depth-1 Haar shift Tloc " + format_double(h.Tloc) + " norm " + format_double(h.operator_norm));
  const double t = seconds_since(t0);
  o.require(t <= 300.0, "took " + format_double(t) + " s");
  o.detail << "max ratio " << worst << " <= " << c << ", " << t << " s";
}

// 9. The ε coefficients of the bilinear expansion.
void epsilon_bound(Outcome& o) {
  double worst = 0.0, classical = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    InstanceSpec s;
    s.depth = 6;
    s.dim = seed % 4 == 3 ? 2 : 1;
    if (s.dim == 2) s.depth = 3;
    s.kind1 = seed % 3 == 0 ? AccretiveKind::Signed : AccretiveKind::Random;
    const TbInstance inst = make_instance(s, seed);
    o.require(inst.ok(), "seed " + std::to_string(seed) + ": " + inst.failure);
    if (!inst.ok()) continue;
    const EpsilonBound eb = epsilon_bound_check(inst.forest(), inst.sys1, inst.f, inst.cfg.delta);
    o.require(eb.ok, "seed " + std::to_string(seed) + " max " + format_double(eb.max_abs));
    worst = std::max(worst, eb.max_abs * inst.cfg.delta / 2.0);
  }
  const GridSpec g(1, 6);
  const AccretiveSystem one(g, AccretiveKind::Constant, 2.0, 2.0, 0);
  Rng rng(9);
  for (int k = 0; k < 20; ++k) {
    const PerfectKernel t = generate_kernel(KernelKind::Random, g, rng.next(), 1.0);
    TbConfig cfg;
    cfg.Tloc = testing_constant(t, one, 2.0, TestingSide::Direct);
    const CoronaForest F = build_corona(root_cube(), one, one, t, cfg);
    const EpsilonBound eb = epsilon_bound_check(F, one, random_sign_function(g, root_cube(), rng), cfg.delta);
    classical = std::max(classical, eb.max_abs);
  }
  o.require(classical <= 2.0 + 1e-12, "b = 1 max " + format_double(classical));
  o.detail << "max |eps| delta / 2 = " << worst << ", b = 1 max |eps| " << classical;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria{
      {"exact identities", identities},        {"oracle equivalence", oracle_equivalence},
      {"perfectness", perfectness},            {"classical limit", classical_limit},
      {"corona bounds", corona},               {"measure comparison", measure_comparison},
      {"transform search", transform_search},  {"main ratio", main_theorem},
      {"epsilon bound", epsilon_bound},
  };
  bool all = true;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      criteria[k].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    all = all && o.pass;
    std::printf("%s %zu %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, seconds_since(t0),
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
