#pragma once

// Seeded random instances (kernel, two accretive systems, sign functions,
// measured testing constant, δ and corona), the suite of exact identities on
// one instance, the ‖T‖/(1 + Tloc) experiment and its CSV/JSON reports.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dytb/accretive.hpp"
#include "dytb/corona.hpp"
#include "dytb/dyadic.hpp"
#include "dytb/grid_io.hpp"
#include "dytb/perfect_kernel.hpp"
#include "dytb/rng.hpp"
#include "dytb/twisted.hpp"
#include "dytb/verifier.hpp"
#include "dytb/version.hpp"

namespace dytb {

struct InstanceSpec {
  int dim = 1;
  int depth = 6;
  double p1 = 2.0;
  double p2 = 2.0;
  double A = 2.0;
  KernelKind kernel = KernelKind::Random;
  double kernel_scale = 1.0;
  double kernel_density = 1.0;
  DistanceNorm distance = DistanceNorm::Euclidean;
  AccretiveKind kind1 = AccretiveKind::Random;
  AccretiveKind kind2 = AccretiveKind::Random;
  double s1 = 0.5;
  double s2 = 0.5;
  double tau = 0.9;
  /// Fixed δ; choose_delta runs when empty.
  std::optional<double> delta;
};

inline nlohmann::json to_json(const InstanceSpec& s) {
  nlohmann::json j;
  j["dim"] = s.dim;
  j["depth"] = s.depth;
  j["p1"] = s.p1;
  j["p2"] = s.p2;
  j["A"] = s.A;
  j["kernel"] = to_string(s.kernel);
  j["kernel_scale"] = s.kernel_scale;
  j["kernel_density"] = s.kernel_density;
  j["distance"] = to_string(s.distance);
  j["kind1"] = to_string(s.kind1);
  j["kind2"] = to_string(s.kind2);
  j["s1"] = s.s1;
  j["s2"] = s.s2;
  j["tau"] = s.tau;
  j["delta"] = s.delta ? nlohmann::json(*s.delta) : nlohmann::json("auto");
  return j;
}

/// Instance seed for trial i of a run.
inline std::uint64_t trial_seed(std::uint64_t master, std::uint64_t trial) { return derive_seed(master, trial); }

/// One experiment instance. Owns everything the checks refer to; keep it in
/// place while pieces built from it are alive.
struct TbInstance {
  InstanceSpec spec;
  std::uint64_t seed = 0;
  GridSpec grid;
  PerfectKernel kernel;
  AccretiveSystem sys1;
  AccretiveSystem sys2;
  GridFunction f;
  GridFunction g;
  double tloc_direct = 0.0;
  double tloc_adjoint = 0.0;
  TbConfig cfg;
  DeltaChoice choice;
  /// Empty when the instance was constructed in full.
  std::string failure;

  double Tloc() const { return cfg.Tloc; }
  bool ok() const { return failure.empty() && choice.ok && choice.forest.has_value(); }
  const CoronaForest& forest() const {
    if (!choice.forest) throw std::logic_error("instance has no corona forest");
    return *choice.forest;
  }
};

/// Streams of the instance seed: 1 kernel, 2 and 3 the systems, 4 the sign
/// functions f and g.
inline TbInstance make_instance(const InstanceSpec& s, std::uint64_t seed) {
  const GridSpec grid(s.dim, s.depth);
  TbInstance inst{s,
                  seed,
                  grid,
                  generate_kernel(s.kernel, grid, derive_seed(seed, 1), s.kernel_scale, s.kernel_density, s.distance),
                  AccretiveSystem(grid, s.kind1, s.p1, s.A, derive_seed(seed, 2), AccretiveParams{s.s1}),
                  AccretiveSystem(grid, s.kind2, s.p2, s.A, derive_seed(seed, 3), AccretiveParams{s.s2}),
                  GridFunction(grid),
                  GridFunction(grid),
                  0.0,
                  0.0,
                  TbConfig{},
                  DeltaChoice{},
                  {}};
  Rng rng(derive_seed(seed, 4));
  inst.f = random_sign_function(grid, root_cube(), rng);
  inst.g = random_sign_function(grid, root_cube(), rng);
  inst.cfg.p1 = s.p1;
  inst.cfg.p2 = s.p2;
  inst.cfg.A = s.A;
  inst.cfg.tau_target = s.tau;
  inst.tloc_direct = testing_constant(inst.kernel, inst.sys1, inst.cfg.p2_conj(), TestingSide::Direct);
  inst.tloc_adjoint = testing_constant(inst.kernel, inst.sys2, inst.cfg.p1_conj(), TestingSide::Adjoint);
  inst.cfg.Tloc = std::max(inst.tloc_direct, inst.tloc_adjoint);
  try {
    if (s.delta) {
      inst.cfg.delta = *s.delta;
      CoronaForest forest = build_corona(root_cube(), inst.sys1, inst.sys2, inst.kernel, inst.cfg);
      inst.choice.trace.push_back({*s.delta, packing_ratio(forest.s1), packing_ratio(forest.s2)});
      inst.choice.delta = *s.delta;
      inst.choice.ok = true;
      inst.choice.forest.emplace(std::move(forest));
    } else {
      inst.choice = choose_delta(root_cube(), inst.sys1, inst.sys2, inst.kernel, inst.cfg);
      inst.cfg.delta = inst.choice.delta;
      if (!inst.choice.ok) inst.failure = "choose_delta found no delta >= 2^-20 with both packing ratios <= tau";
    }
  } catch (const ConfigError& e) {
    inst.failure = e.what();
  }
  return inst;
}

/// Twisted context on Q0 for b¹, with T' or a random legal coarsening of it.
inline TwistedContext twisted_context_for(const TbInstance& inst, bool coarsen, std::uint64_t seed) {
  const DyadicCube s0 = root_cube();
  if (!coarsen) return TwistedContext::from_system(inst.sys1, s0, inst.cfg.delta);
  Rng rng(seed);
  const auto tprime = terminal_cubes(inst.sys1.get_b(s0), s0, inst.cfg.delta, inst.sys1.p(), inst.sys1.A());
  return TwistedContext::from_system(inst.sys1, s0, inst.cfg.delta, coarsen_terminals(inst.grid, s0, tprime, rng));
}

/// Relative residuals of every exact identity on one instance.
inline std::map<std::string, double> identity_suite(const TbInstance& inst) {
  if (!inst.ok()) throw std::logic_error("identity_suite needs a fully constructed instance: " + inst.failure);
  std::map<std::string, double> out;
  const GridSpec& grid = inst.grid;
  const CoronaForest& F = inst.forest();

  auto sup_rel = [](const GridFunction& a, const GridFunction& ref) {
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - ref[i]));
    return diff / (1.0 + sup_norm(ref));
  };
  out["reconstruction"] = std::max(sup_rel(expand(F, 1, inst.sys1, F.q0, inst.f).reconstruction(), inst.f),
                                   sup_rel(expand(F, 2, inst.sys2, F.q0, inst.g).reconstruction(), inst.g));

  const TwistedContext ctx = twisted_context_for(inst, true, derive_seed(inst.seed, 5));
  Rng rng(derive_seed(inst.seed, 6));
  GridFunction h(grid);
  for_each_cell(grid, ctx.s0(), [&](std::size_t i) { h[i] = rng.uniform(-1.0, 1.0); });
  double three = 0.0;
  for (const auto& q : ctx.family()) {
    if (is_leaf(grid, q)) continue;
    for (int c = 0; c < grid.children_per_cube(); ++c) {
      const DyadicCube ch = child(grid, q, c);
      if (ctx.is_terminal(ch)) continue;
      const DecompositionTerms t = decomposition_identity_check(ctx, q, ch, h);
      three = std::max(three, t.residual / std::max(1.0, std::abs(t.lhs)));
    }
  }
  out["three_term"] = three;
  const SignChoice eps = SignChoice::random_signs(grid, rng);
  out["delta_decomp"] = delta_decomp_check(ctx, eps, h) / (1.0 + sup_norm(transform(ctx, eps, h)));

  const BilinearPieces pc(inst.kernel, F, inst.sys1, inst.sys2, inst.f, inst.g);
  out["bilinear_expansion"] = bilinear_expansion_check(pc).relative;
  const FormSplit fs = form_split(pc);
  out["form_split"] = fs.relative;
  out["nonnested"] = fs.nonnested / (1.0 + std::abs(fs.total));
  const AboveAggregation agg = b_above_aggregation(pc, inst.Tloc());
  out["per_s_aggregation"] = agg.relative;
  out["pullout"] = agg.pullout_residual;
  out["epsilon_form"] = agg.epsilon_residual;
  out["g_telescoping"] = g_telescoping_check(F, inst.sys2, inst.g) / (1.0 + sup_norm(inst.g));
  return out;
}

// ---------------------------------------------------------------------------
// Main experiment.

struct VerifierReport {
  int trial = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string failure;
  double delta = 0.0;
  std::vector<DeltaTrial> delta_trace;
  double operator_norm = 0.0;
  bool norm_converged = true;
  double tloc_direct = 0.0;
  double tloc_adjoint = 0.0;
  double Tloc = 0.0;
  double ratio = 0.0;
  double packing1 = 0.0;
  double packing2 = 0.0;
  double carleson1 = 0.0;
  double carleson2 = 0.0;
  std::size_t s1_size = 0;
  std::size_t s2_size = 0;
  double epsilon_max = 0.0;
  bool epsilon_ok = true;
  double easy1_ratio = 0.0;
  double easy2_ratio = 0.0;
  double diagonal_constant = 0.0;
  double box_constant = 0.0;
  bool denominators_ok = true;
  std::map<std::string, double> residuals;

  double packing() const { return std::max(packing1, packing2); }
  double carleson() const { return std::max(carleson1, carleson2); }
  double max_residual() const {
    double m = 0.0;
    for (const auto& [k, v] : residuals) m = std::max(m, v);
    return m;
  }
};

struct ExperimentConfig {
  InstanceSpec instance;
  std::uint64_t seed = 1;
  int trials = 100;
  /// Dense SVD up to 4096 cells, power iteration above, unless forced.
  std::optional<NormMethod> method;
  bool identities = true;
  bool constants = true;
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c.instance);
  j["seed"] = c.seed;
  j["trials"] = c.trials;
  j["method"] = c.method ? to_string(*c.method) : "auto";
  j["identities"] = c.identities;
  j["constants"] = c.constants;
  return j;
}

inline NormMethod resolved_method(const ExperimentConfig& c, const GridSpec& grid) {
  if (c.method) return *c.method;
  return grid.cells() <= kDenseCellLimit ? NormMethod::DenseSvd : NormMethod::Power;
}

inline VerifierReport run_trial(const ExperimentConfig& cfg, int trial) {
  VerifierReport r;
  r.trial = trial;
  r.seed = trial_seed(cfg.seed, static_cast<std::uint64_t>(trial));
  const TbInstance inst = make_instance(cfg.instance, r.seed);
  r.tloc_direct = inst.tloc_direct;
  r.tloc_adjoint = inst.tloc_adjoint;
  r.Tloc = inst.Tloc();
  r.delta = inst.choice.delta;
  r.delta_trace = inst.choice.trace;
  const NormEstimate ne = operator_norm(inst.kernel, resolved_method(cfg, inst.grid));
  r.operator_norm = ne.value;
  r.norm_converged = ne.converged;
  r.ratio = r.operator_norm / (1.0 + r.Tloc);
  r.failure = inst.failure;
  if (!inst.ok()) return r;
  r.ok = true;
  const CoronaForest& F = inst.forest();
  r.packing1 = packing_ratio(F.s1);
  r.packing2 = packing_ratio(F.s2);
  r.carleson1 = carleson_constant(F.s1, F.q0);
  r.carleson2 = carleson_constant(F.s2, F.q0);
  r.s1_size = F.s1.size();
  r.s2_size = F.s2.size();
  r.denominators_ok = corona_denominators_safe(F, 1, inst.sys1, inst.cfg.delta) &&
                      corona_denominators_safe(F, 2, inst.sys2, inst.cfg.delta);
  const EpsilonBound eb = epsilon_bound_check(F, inst.sys1, inst.f, inst.cfg.delta);
  r.epsilon_max = eb.max_abs;
  r.epsilon_ok = eb.ok;
  if (cfg.identities) r.residuals = identity_suite(inst);
  if (cfg.constants) {
    const BilinearPieces pc(inst.kernel, F, inst.sys1, inst.sys2, inst.f, inst.g);
    const EasyTerms easy = easy_terms(bilinear_expansion_check(pc), r.Tloc, inst.cfg.A, volume(inst.grid, F.q0));
    r.easy1_ratio = easy.first_ratio;
    r.easy2_ratio = easy.second_ratio;
    r.diagonal_constant = diagonal_constant(inst.kernel, F, inst.sys1, inst.sys2, r.Tloc);
    r.box_constant = box_square_function_check(F, 1, inst.sys1, inst.f, inst.cfg.p1);
  }
  return r;
}

/// Worker count: hardware concurrency, capped by DYTB_THREADS when set.
inline unsigned thread_budget() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DYTB_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
  }
  return n;
}

/// Calls fn(i) for i in [0, n) on up to `threads` workers.
template <typename Fn>
void parallel_for(int n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min(threads, static_cast<unsigned>(std::max(n, 1))));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// One row per trial in trial order, whatever the thread count.
inline std::vector<VerifierReport> main_theorem_experiment(const ExperimentConfig& cfg,
                                                            unsigned threads = thread_budget()) {
  if (cfg.trials < 0) throw ConfigError("trials must be >= 0");
  std::vector<VerifierReport> rows(static_cast<std::size_t>(cfg.trials));
  parallel_for(cfg.trials, threads, [&](int i) { rows[static_cast<std::size_t>(i)] = run_trial(cfg, i); });
  return rows;
}

// ---------------------------------------------------------------------------
// Reports.

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{
      "trial",        "seed",          "ok",           "failure",         "delta",         "delta_trace",
      "operator_norm", "norm_converged", "tloc_direct", "tloc_adjoint",    "tloc",          "ratio",
      "packing1",     "packing2",      "carleson1",    "carleson2",       "s1_size",       "s2_size",
      "epsilon_max",  "epsilon_ok",    "easy1_ratio",  "easy2_ratio",     "diagonal_constant", "box_constant",
      "denominators_ok"};
  return cols;
}

inline std::string format_trace(const std::vector<DeltaTrial>& trace) {
  std::string s;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    if (k) s += ';';
    s += format_double(trace[k].delta) + '/' + format_double(trace[k].packing1) + '/' +
         format_double(trace[k].packing2);
  }
  return s;
}

inline std::vector<DeltaTrial> parse_trace(const std::string& s) {
  std::vector<DeltaTrial> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    const auto a = item.find('/');
    const auto b = item.find('/', a == std::string::npos ? a : a + 1);
    if (a == std::string::npos || b == std::string::npos) throw std::invalid_argument("malformed delta trace '" + item + "'");
    out.push_back({parse_double(item.substr(0, a)), parse_double(item.substr(a + 1, b - a - 1)),
                   parse_double(item.substr(b + 1))});
  }
  return out;
}

/// Comment header shared by every output file.
inline void write_comment_header(std::ostream& os, const nlohmann::json& config) {
  os << "# tool: dytb " << kVersion << '\n';
  os << "# config: " << config.dump() << '\n';
}

inline std::vector<std::string> residual_names(const std::vector<VerifierReport>& rows) {
  std::vector<std::string> names;
  for (const auto& r : rows)
    for (const auto& [k, v] : r.residuals)
      if (std::find(names.begin(), names.end(), k) == names.end()) names.push_back(k);
  std::sort(names.begin(), names.end());
  return names;
}

inline void write_report_csv(std::ostream& os, const std::vector<VerifierReport>& rows, const nlohmann::json& config) {
  write_comment_header(os, config);
  const auto names = residual_names(rows);
  const auto& cols = report_columns();
  for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << cols[k];
  for (const auto& n : names) os << ",residual_" << n;
  os << '\n';
  auto b = [](bool v) { return v ? "1" : "0"; };
  for (const auto& r : rows) {
    std::string failure = r.failure;
    std::replace(failure.begin(), failure.end(), ',', ';');
    os << r.trial << ',' << r.seed << ',' << b(r.ok) << ',' << failure << ',' << format_double(r.delta) << ','
       << format_trace(r.delta_trace) << ',' << format_double(r.operator_norm) << ',' << b(r.norm_converged) << ','
       << format_double(r.tloc_direct) << ',' << format_double(r.tloc_adjoint) << ',' << format_double(r.Tloc) << ','
       << format_double(r.ratio) << ',' << format_double(r.packing1) << ',' << format_double(r.packing2) << ','
       << format_double(r.carleson1) << ',' << format_double(r.carleson2) << ',' << r.s1_size << ',' << r.s2_size
       << ',' << format_double(r.epsilon_max) << ',' << b(r.epsilon_ok) << ',' << format_double(r.easy1_ratio) << ','
       << format_double(r.easy2_ratio) << ',' << format_double(r.diagonal_constant) << ','
       << format_double(r.box_constant) << ',' << b(r.denominators_ok);
    for (const auto& n : names) {
      auto it = r.residuals.find(n);
      os << ',' << (it == r.residuals.end() ? std::string() : format_double(it->second));
    }
    os << '\n';
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Inverse of write_report_csv; comment lines are skipped and errors name the line.
inline std::vector<VerifierReport> read_report_csv(std::istream& is) {
  std::vector<VerifierReport> rows;
  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("report line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv_line(line);
    if (header.empty()) {
      header = cells;
      const auto& cols = report_columns();
      if (header.size() < cols.size() || !std::equal(cols.begin(), cols.end(), header.begin()))
        fail("unexpected report header");
      continue;
    }
    if (cells.size() != header.size()) fail("expected " + std::to_string(header.size()) + " fields");
    try {
      VerifierReport r;
      std::size_t k = 0;
      auto next = [&]() -> const std::string& { return cells[k++]; };
      auto num = [&]() { return parse_double(next()); };
      auto flag = [&]() {
        const std::string& s = next();
        if (s != "0" && s != "1") throw std::invalid_argument("expected 0 or 1, got '" + s + "'");
        return s == "1";
      };
      r.trial = std::stoi(next());
      r.seed = std::stoull(next());
      r.ok = flag();
      r.failure = next();
      r.delta = num();
      r.delta_trace = parse_trace(next());
      r.operator_norm = num();
      r.norm_converged = flag();
      r.tloc_direct = num();
      r.tloc_adjoint = num();
      r.Tloc = num();
      r.ratio = num();
      r.packing1 = num();
      r.packing2 = num();
      r.carleson1 = num();
      r.carleson2 = num();
      r.s1_size = std::stoull(next());
      r.s2_size = std::stoull(next());
      r.epsilon_max = num();
      r.epsilon_ok = flag();
      r.easy1_ratio = num();
      r.easy2_ratio = num();
      r.diagonal_constant = num();
      r.box_constant = num();
      r.denominators_ok = flag();
      for (; k < header.size(); ++k) {
        const std::string& name = header[k];
        if (name.rfind("residual_", 0) != 0) fail("unknown column '" + name + "'");
        if (!cells[k].empty()) r.residuals[name.substr(9)] = parse_double(cells[k]);
      }
      rows.push_back(std::move(r));
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    } catch (const std::out_of_range& e) {
      fail(e.what());
    }
  }
  return rows;
}

/// Nearest-rank quantile of sorted values.
inline double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::min(sorted.size() - 1, rank == 0 ? 0 : rank - 1)];
}

/// Ratio statistics over rows with a finished instance; failures are counted.
inline nlohmann::json summarize(const std::vector<VerifierReport>& rows) {
  std::vector<double> ratios;
  nlohmann::json j;
  int failed = 0;
  double max_res = 0.0;
  double max_pack = 0.0;
  double max_carl = 0.0;
  double max_eps = 0.0;
  bool eps_ok = true;
  bool denom_ok = true;
  bool converged = true;
  for (const auto& r : rows) {
    if (!r.ok) {
      ++failed;
      continue;
    }
    ratios.push_back(r.ratio);
    max_res = std::max(max_res, r.max_residual());
    max_pack = std::max(max_pack, r.packing());
    max_carl = std::max(max_carl, r.carleson());
    max_eps = std::max(max_eps, r.epsilon_max);
    eps_ok = eps_ok && r.epsilon_ok;
    denom_ok = denom_ok && r.denominators_ok;
    converged = converged && r.norm_converged;
  }
  std::sort(ratios.begin(), ratios.end());
  double mean = 0.0;
  for (double v : ratios) mean += v;
  if (!ratios.empty()) mean /= static_cast<double>(ratios.size());
  j["trials"] = rows.size();
  j["completed"] = ratios.size();
  j["failed"] = failed;
  j["ratio"] = {{"max", ratios.empty() ? 0.0 : ratios.back()},
                {"mean", mean},
                {"p50", quantile(ratios, 0.5)},
                {"p90", quantile(ratios, 0.9)},
                {"p99", quantile(ratios, 0.99)}};
  j["max_residual"] = max_res;
  j["max_packing"] = max_pack;
  j["max_carleson"] = max_carl;
  j["max_epsilon"] = max_eps;
  j["epsilon_bound_ok"] = eps_ok;
  j["denominators_ok"] = denom_ok;
  j["norms_converged"] = converged;
  return j;
}

// ---------------------------------------------------------------------------
// Plot series.

enum class PlotKind { RatioHist, RatioVsSeed, PackingVsDelta };

inline PlotKind plot_kind_from_string(const std::string& s) {
  if (s == "ratio-hist") return PlotKind::RatioHist;
  if (s == "ratio-vs-seed") return PlotKind::RatioVsSeed;
  if (s == "packing-vs-delta") return PlotKind::PackingVsDelta;
  throw ConfigError("unknown plot kind '" + s + "'");
}

inline constexpr int kHistogramBins = 20;

/// ratio-hist:       bin_lo,bin_hi,count (20 equal bins over [0, max ratio]).
/// ratio-vs-seed:    trial,seed,ratio.
/// packing-vs-delta: trial,step,delta,packing1,packing2 (one row per δ tried).
inline void emit_plot_data(std::ostream& os, const std::vector<VerifierReport>& rows, PlotKind kind) {
  switch (kind) {
    case PlotKind::RatioHist: {
      os << "bin_lo,bin_hi,count\n";
      double top = 0.0;
      int n = 0;
      for (const auto& r : rows)
        if (r.ok) {
          top = std::max(top, r.ratio);
          ++n;
        }
      if (n == 0) return;
      if (top == 0.0) top = 1.0;
      std::vector<int> counts(kHistogramBins, 0);
      for (const auto& r : rows) {
        if (!r.ok) continue;
        const int bin = std::min(kHistogramBins - 1, static_cast<int>(r.ratio / top * kHistogramBins));
        ++counts[static_cast<std::size_t>(bin)];
      }
      for (int k = 0; k < kHistogramBins; ++k)
        os << format_double(top * k / kHistogramBins) << ',' << format_double(top * (k + 1) / kHistogramBins) << ','
           << counts[static_cast<std::size_t>(k)] << '\n';
      return;
    }
    case PlotKind::RatioVsSeed:
      os << "trial,seed,ratio\n";
      for (const auto& r : rows)
        if (r.ok) os << r.trial << ',' << r.seed << ',' << format_double(r.ratio) << '\n';
      return;
    case PlotKind::PackingVsDelta:
      os << "trial,step,delta,packing1,packing2\n";
      for (const auto& r : rows)
        for (std::size_t k = 0; k < r.delta_trace.size(); ++k)
          os << r.trial << ',' << k << ',' << format_double(r.delta_trace[k].delta) << ','
             << format_double(r.delta_trace[k].packing1) << ',' << format_double(r.delta_trace[k].packing2) << '\n';
      return;
  }
}

}  // namespace dytb
