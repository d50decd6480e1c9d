#pragma once

// dytb command-line front end. run_cli returns the process exit code:
// 0 success, 1 validation failure, 2 configuration error.

#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dytb/dytb.hpp"

namespace dytb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitConfig = 2;
inline constexpr double kDefaultTolerance = 1e-9;

/// 1-based line of the first top-level occurrence of "key": in a JSON text.
inline int line_of_key(const std::string& text, const std::string& key) {
  const std::string needle = "\"" + key + "\"";
  int depth = 0;
  int line = 1;
  bool in_string = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') ++line;
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '{' || c == '[') ++depth;
    else if (c == '}' || c == ']') --depth;
    else if (c == '"') {
      if (depth == 1 && text.compare(i, needle.size(), needle) == 0) return line;
      in_string = true;
    }
  }
  return 0;
}

/// Raw text of a config value as a command-line token.
inline std::string config_token(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number() || v.is_null()) return v.dump();
  throw ConfigError("config values must be scalars");
}

struct InstanceOptions {
  int dim = 1;
  int depth = 6;
  double p1 = 2.0;
  double p2 = 2.0;
  double A = 2.0;
  std::string kernel = "random";
  double kernel_scale = 1.0;
  double kernel_density = 1.0;
  std::string distance = "euclidean";
  std::string kind1 = "random";
  std::string kind2 = "random";
  double s1 = 0.5;
  double s2 = 0.5;
  double tau = 0.9;
  std::string delta = "auto";
  std::uint64_t seed = 1;

  void add_to(CLI::App& app) {
    app.add_option("--dim", dim, "grid dimension (1 or 2)");
    app.add_option("--depth", depth, "grid depth L");
    app.add_option("--p1", p1, "accretive exponent of the first system");
    app.add_option("--p2", p2, "accretive exponent of the second system");
    app.add_option("--A", A, "accretive constant");
    app.add_option("--kernel", kernel, "zero | haar-shift | random");
    app.add_option("--kernel-scale", kernel_scale, "kernel amplitude relative to the size bound");
    app.add_option("--kernel-density", kernel_density, "fraction of random kernel entries kept");
    app.add_option("--distance", distance, "euclidean | max");
    app.add_option("--kind1", kind1, "first accretive system: constant | two-value | signed | random");
    app.add_option("--kind2", kind2, "second accretive system");
    app.add_option("--s1", s1, "amplitude parameter of the first system");
    app.add_option("--s2", s2, "amplitude parameter of the second system");
    app.add_option("--tau", tau, "packing target for choose_delta");
    app.add_option("--delta", delta, "stopping parameter, or auto");
    app.add_option("--seed", seed, "master seed");
  }

  InstanceSpec resolve() const {
    InstanceSpec s;
    s.dim = dim;
    s.depth = depth;
    s.p1 = p1;
    s.p2 = p2;
    s.A = A;
    s.kernel = kernel_kind_from_string(kernel);
    s.kernel_scale = kernel_scale;
    s.kernel_density = kernel_density;
    s.distance = distance_norm_from_string(distance);
    s.kind1 = accretive_kind_from_string(kind1);
    s.kind2 = accretive_kind_from_string(kind2);
    s.s1 = s1;
    s.s2 = s2;
    s.tau = tau;
    if (delta != "auto") {
      s.delta = parse_double(delta);
      if (!(*s.delta > 0.0 && *s.delta < 1.0)) throw ConfigError("delta must lie in (0, 1) or be auto");
    }
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
    return s;
  }
};

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      os_ = &fallback;
    } else {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw ConfigError("cannot open '" + path + "' for writing");
      os_ = file_.get();
    }
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_ = nullptr;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json parse_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void write_header(std::ostream& os, const nlohmann::json& config) { write_comment_header(os, config); }

inline nlohmann::json meta(const nlohmann::json& config) {
  return {{"tool", std::string("dytb ") + kVersion}, {"config", config}};
}

/// Resolved values of every option of a subcommand, for the output headers.
inline nlohmann::json resolved_config(const CLI::App& sub) {
  nlohmann::json j = nlohmann::json::object();
  j["command"] = sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_lnames().empty() ? std::string() : opt->get_lnames().front();
    if (name.empty() || name == "help" || name == "config" || name == "out" || name == "summary" || name == "forest")
      continue;
    const auto& res = opt->results();
    if (!res.empty()) {
      j[name] = res.back();
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

class App {
 public:
  App(std::ostream& out, std::ostream& err) : out_(out), err_(err), app_("dytb: finite dyadic local Tb experiments") {
    app_.require_subcommand(1);
    app_.set_version_flag("--version", std::string("dytb ") + kVersion);
    build_gen_kernel();
    build_validate();
    build_corona();
    build_transform_norm();
    build_tb_experiment();
    build_identities();
    build_report();
    build_plot_data();
  }

  int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
      args = merge_config(args);
    } catch (const ConfigError& e) {
      err_ << "config error: " << e.what() << '\n';
      return kExitConfig;
    }
    std::reverse(args.begin(), args.end());
    try {
      app_.parse(args);
    } catch (const CLI::CallForHelp&) {
      out_ << app_.help();
      return kExitOk;
    } catch (const CLI::CallForVersion&) {
      out_ << "dytb " << kVersion << '\n';
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        out_ << app_.help();
        return kExitOk;
      }
      err_ << "config error: " << e.what() << '\n';
      return kExitConfig;
    }
    for (const auto& [name, action] : actions_) {
      CLI::App* sub = app_.get_subcommand(name);
      if (!sub->parsed()) continue;
      try {
        return action(*sub);
      } catch (const ConfigError& e) {
        err_ << "config error: " << e.what() << '\n';
        return kExitConfig;
      } catch (const std::invalid_argument& e) {
        err_ << "config error: " << e.what() << '\n';
        return kExitConfig;
      } catch (const std::domain_error& e) {
        err_ << "config error: " << e.what() << '\n';
        return kExitConfig;
      } catch (const nlohmann::json::exception& e) {
        err_ << "config error: " << e.what() << '\n';
        return kExitConfig;
      }
    }
    return kExitConfig;
  }

 private:
  CLI::App* add(const std::string& name, const std::string& help, std::function<int(CLI::App&)> action) {
    CLI::App* sub = app_.add_subcommand(name, help);
    sub->option_defaults()->always_capture_default();
    sub->add_option("--config", config_path_, "JSON file of option values; explicit flags win");
    actions_.emplace_back(name, std::move(action));
    return sub;
  }

  /// Expands --config: every key must name an option of the subcommand; keys
  /// whose flag is also given explicitly are dropped.
  std::vector<std::string> merge_config(const std::vector<std::string>& args) {
    std::string path;
    std::size_t sub_pos = args.size();
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (sub_pos == args.size() && app_.get_subcommand_no_throw(args[i]) != nullptr) sub_pos = i;
      if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
      if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;
    if (sub_pos == args.size()) throw ConfigError("--config needs a subcommand");
    CLI::App* sub = app_.get_subcommand(args[sub_pos]);
    const std::string text = read_file(path);
    nlohmann::json cfg;
    try {
      cfg = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
    if (!cfg.is_object()) throw ConfigError(path + ": line 1: the config must be a JSON object");
    std::set<std::string> given;
    for (const auto& a : args)
      if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
    std::vector<std::string> extra;
    for (const auto& [key, value] : cfg.items()) {
      const CLI::Option* opt = sub->get_option_no_throw("--" + key);
      if (opt == nullptr || key == "config" || key == "help")
        throw ConfigError(path + ": line " + std::to_string(line_of_key(text, key)) + ": unknown key '" + key +
                          "' for " + sub->get_name());
      if (given.count(key)) continue;
      try {
        extra.push_back("--" + key + "=" + config_token(value));
      } catch (const ConfigError& e) {
        throw ConfigError(path + ": line " + std::to_string(line_of_key(text, key)) + ": key '" + key + "': " + e.what());
      }
    }
    std::vector<std::string> out(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1);
    out.insert(out.end(), extra.begin(), extra.end());
    out.insert(out.end(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, args.end());
    return out;
  }

  // gen-kernel ---------------------------------------------------------------
  struct GenKernelOpts {
    std::string kind = "random";
    int dim = 1;
    int depth = 5;
    std::uint64_t seed = 1;
    double scale = 1.0;
    double density = 1.0;
    std::string distance = "euclidean";
    std::string out;
  } gk_;

  void build_gen_kernel() {
    CLI::App* s = add("gen-kernel", "write a perfect kernel as JSON", [this](CLI::App& sub) {
      const GridSpec spec(gk_.dim, gk_.depth);
      const PerfectKernel t = generate_kernel(kernel_kind_from_string(gk_.kind), spec, gk_.seed, gk_.scale,
                                              gk_.density, distance_norm_from_string(gk_.distance));
      nlohmann::json j = to_json(t);
      j["meta"] = meta(resolved_config(sub));
      Output o(gk_.out, out_);
      *o << j.dump(1) << '\n';
      return kExitOk;
    });
    s->add_option("--kind", gk_.kind, "zero | haar-shift | random");
    s->add_option("--dim", gk_.dim);
    s->add_option("--depth", gk_.depth);
    s->add_option("--seed", gk_.seed);
    s->add_option("--scale", gk_.scale, "amplitude relative to the size bound, in [0, 1]");
    s->add_option("--density", gk_.density, "fraction of random entries kept");
    s->add_option("--distance", gk_.distance, "euclidean | max");
    s->add_option("--out", gk_.out, "output path (stdout when empty)");
  }

  // validate -----------------------------------------------------------------
  struct ValidateOpts {
    std::string kernel;
    std::string accretive;
    std::string method = "auto";
    std::string out;
  } va_;

  void build_validate() {
    CLI::App* s = add("validate", "check a kernel file (and optionally an accretive descriptor)", [this](CLI::App& sub) {
      const PerfectKernel t = kernel_from_json(parse_json_file(va_.kernel));
      const NormMethod method = va_.method == "auto"
                                    ? (t.spec().cells() <= kDenseCellLimit ? NormMethod::DenseSvd : NormMethod::Power)
                                    : norm_method_from_string(va_.method);
      const bool size_ok = validate_size(t);
      const NormEstimate ne = operator_norm(t, method);
      Output o(va_.out, out_);
      write_header(*o, resolved_config(sub));
      *o << "cells: " << t.spec().cells() << '\n';
      *o << "entries: " << t.entries().size() << '\n';
      *o << "size_condition: " << (size_ok ? "ok" : "violated") << '\n';
      *o << "operator_norm: " << format_double(ne.value) << '\n';
      *o << "norm_method: " << to_string(method) << '\n';
      *o << "norm_converged: " << (ne.converged ? "yes" : "no") << '\n';
      bool acc_ok = true;
      if (!va_.accretive.empty()) {
        const AccretiveSystem sys = accretive_from_json(t.spec(), parse_json_file(va_.accretive));
        double worst = 0.0;
        for (std::size_t id = 0; id < t.spec().cube_count(); ++id) {
          const AccretiveCheck c = validate(sys, cube_from_id(t.spec(), id));
          acc_ok = acc_ok && c.ok;
          worst = std::max(worst, c.measured_A);
        }
        *o << "accretive: " << (acc_ok ? "ok" : "violated") << '\n';
        *o << "accretive_measured_A: " << format_double(worst) << '\n';
      }
      return size_ok && acc_ok && ne.converged ? kExitOk : kExitValidation;
    });
    s->add_option("--kernel", va_.kernel, "kernel JSON file")->required();
    s->add_option("--accretive", va_.accretive, "accretive descriptor JSON {kind, p, A, seed, params}");
    s->add_option("--method", va_.method, "auto | dense-svd | power");
    s->add_option("--out", va_.out, "output path (stdout when empty)");
  }

  // corona -------------------------------------------------------------------
  InstanceOptions co_;
  std::string co_out_;
  std::string co_forest_;

  void build_corona() {
    CLI::App* s = add("corona", "build the two stopping trees and report packing and Carleson constants",
                      [this](CLI::App& sub) {
                        const InstanceSpec spec = co_.resolve();
                        const TbInstance inst = make_instance(spec, co_.seed);
                        Output o(co_out_, out_);
                        write_header(*o, resolved_config(sub));
                        *o << "tloc: " << format_double(inst.Tloc()) << '\n';
                        *o << "delta: " << format_double(inst.choice.delta) << '\n';
                        *o << "delta_trace: " << format_trace(inst.choice.trace) << '\n';
                        if (!inst.ok()) {
                          *o << "status: failed (" << inst.failure << ")\n";
                          return kExitValidation;
                        }
                        const CoronaForest& F = inst.forest();
                        bool denom = true;
                        for (int j = 1; j <= 2; ++j) {
                          const CubeFamily& fam = F.family(j);
                          const AccretiveSystem& sys = j == 1 ? inst.sys1 : inst.sys2;
                          *o << "S" << j << "_size: " << fam.size() << '\n';
                          *o << "packing" << j << ": " << format_double(packing_ratio(fam)) << '\n';
                          *o << "carleson" << j << ": " << format_double(carleson_constant(fam, F.q0)) << '\n';
                          denom = denom && corona_denominators_safe(F, j, sys, inst.cfg.delta);
                        }
                        *o << "denominators: " << (denom ? "ok" : "violated") << '\n';
                        if (!co_forest_.empty()) {
                          nlohmann::json j = to_json(F);
                          j["meta"] = meta(resolved_config(sub));
                          Output fo(co_forest_, out_);
                          *fo << j.dump(1) << '\n';
                        }
                        return denom ? kExitOk : kExitValidation;
                      });
    co_.depth = 8;
    co_.add_to(*s);
    s->add_option("--out", co_out_, "report path (stdout when empty)");
    s->add_option("--forest", co_forest_, "write the forest as JSON to this path");
  }

  // transform-norm -----------------------------------------------------------
  struct TransformOpts {
    int dim = 1;
    int depth = 6;
    double p = 2.0;
    double A = 2.0;
    std::string kind = "random";
    double s = 0.5;
    double delta = 0.25;
    std::uint64_t seed = 1;
    int trials = 1;
    int restarts = 8;
    int passes = 16;
    int f_samples = 4;
    bool coarsen = false;
    std::string out;
  } tn_;

  void build_transform_norm() {
    CLI::App* s = add("transform-norm", "adversarial search for large twisted martingale transforms",
                      [this](CLI::App& sub) {
                        if (tn_.trials < 0) throw ConfigError("trials must be >= 0");
                        if (!(tn_.delta > 0.0 && tn_.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
                        const GridSpec grid(tn_.dim, tn_.depth);
                        Output o(tn_.out, out_);
                        write_header(*o, resolved_config(sub));
                        *o << "trial,seed,terminals,worst_ratio\n";
                        double worst = 0.0;
                        for (int k = 0; k < tn_.trials; ++k) {
                          const std::uint64_t seed = trial_seed(tn_.seed, static_cast<std::uint64_t>(k));
                          const AccretiveSystem sys(grid, accretive_kind_from_string(tn_.kind), tn_.p, tn_.A,
                                                    derive_seed(seed, 2), AccretiveParams{tn_.s});
                          std::optional<std::vector<DyadicCube>> terms;
                          if (tn_.coarsen) {
                            Rng rng(derive_seed(seed, 5));
                            terms = coarsen_terminals(
                                grid, root_cube(),
                                terminal_cubes(sys.get_b(root_cube()), root_cube(), tn_.delta, tn_.p, tn_.A), rng);
                          }
                          const TwistedContext ctx = TwistedContext::from_system(sys, root_cube(), tn_.delta, terms);
                          const SearchResult r = adversarial_transform_search(
                              TwistedDifferences(ctx), tn_.p, SearchBudget{tn_.restarts, tn_.passes, tn_.f_samples},
                              derive_seed(seed, 7));
                          worst = std::max(worst, r.worst_ratio);
                          *o << k << ',' << seed << ',' << ctx.terminals().terminals.size() << ','
                             << format_double(r.worst_ratio) << '\n';
                        }
                        *o << "# worst_ratio: " << format_double(worst) << '\n';
                        return kExitOk;
                      });
    s->add_option("--dim", tn_.dim);
    s->add_option("--depth", tn_.depth);
    s->add_option("--p", tn_.p, "exponent of the transform norm and the accretive system");
    s->add_option("--A", tn_.A);
    s->add_option("--kind", tn_.kind, "accretive kind");
    s->add_option("--s", tn_.s, "accretive amplitude parameter");
    s->add_option("--delta", tn_.delta);
    s->add_option("--seed", tn_.seed);
    s->add_option("--trials", tn_.trials);
    s->add_option("--restarts", tn_.restarts);
    s->add_option("--passes", tn_.passes);
    s->add_option("--f-samples", tn_.f_samples);
    s->add_option("--coarsen", tn_.coarsen, "use a random legal coarsening of the terminal family");
    s->add_option("--out", tn_.out, "output path (stdout when empty)");
  }

  // tb-experiment ------------------------------------------------------------
  InstanceOptions ex_;
  int ex_trials_ = 100;
  std::string ex_method_ = "auto";
  bool ex_identities_ = true;
  bool ex_constants_ = true;
  double ex_tol_ = kDefaultTolerance;
  std::string ex_out_;
  std::string ex_summary_;

  void build_tb_experiment() {
    CLI::App* s = add("tb-experiment", "run the ||T||/(1 + Tloc) experiment", [this](CLI::App& sub) {
      ExperimentConfig cfg;
      cfg.instance = ex_.resolve();
      cfg.seed = ex_.seed;
      cfg.trials = ex_trials_;
      if (ex_method_ != "auto") cfg.method = norm_method_from_string(ex_method_);
      cfg.identities = ex_identities_;
      cfg.constants = ex_constants_;
      if (cfg.trials < 0) throw ConfigError("trials must be >= 0");
      const nlohmann::json resolved = resolved_config(sub);
      const auto rows = main_theorem_experiment(cfg);
      {
        Output o(ex_out_, out_);
        write_report_csv(*o, rows, resolved);
      }
      nlohmann::json summary = summarize(rows);
      summary["meta"] = meta(resolved);
      std::string spath = ex_summary_;
      if (spath.empty() && !ex_out_.empty() && ex_out_ != "-") spath = summary_path_for(ex_out_);
      if (!spath.empty()) {
        Output so(spath, out_);
        *so << summary.dump(1) << '\n';
      }
      const bool ok = summary["max_residual"].get<double>() <= ex_tol_ && summary["epsilon_bound_ok"].get<bool>() &&
                      summary["denominators_ok"].get<bool>();
      return ok ? kExitOk : kExitValidation;
    });
    ex_.add_to(*s);
    s->add_option("--trials", ex_trials_);
    s->add_option("--method", ex_method_, "auto | dense-svd | power");
    s->add_option("--identities", ex_identities_, "run the identity suite on every trial");
    s->add_option("--constants", ex_constants_, "measure easy-term, diagonal and box constants");
    s->add_option("--tolerance", ex_tol_, "largest accepted relative residual");
    s->add_option("--out", ex_out_, "CSV path (stdout when empty)");
    s->add_option("--summary", ex_summary_, "summary JSON path (default: next to --out)");
  }

  static std::string summary_path_for(const std::string& csv) {
    const auto dot = csv.rfind('.');
    const auto slash = csv.find_last_of('/');
    const std::string stem = dot == std::string::npos || (slash != std::string::npos && dot < slash) ? csv : csv.substr(0, dot);
    return stem + ".summary.json";
  }

  // identities ---------------------------------------------------------------
  InstanceOptions id_;
  int id_trials_ = 1;
  double id_tol_ = kDefaultTolerance;
  std::string id_out_;

  void build_identities() {
    CLI::App* s = add("identities", "run every exact-identity check", [this](CLI::App& sub) {
      const InstanceSpec spec = id_.resolve();
      if (id_trials_ < 1) throw ConfigError("trials must be >= 1");
      std::map<std::string, double> worst;
      int failed = 0;
      for (int k = 0; k < id_trials_; ++k) {
        const TbInstance inst = make_instance(spec, trial_seed(id_.seed, static_cast<std::uint64_t>(k)));
        if (!inst.ok()) {
          ++failed;
          continue;
        }
        for (const auto& [name, v] : identity_suite(inst)) worst[name] = std::max(worst[name], v);
      }
      Output o(id_out_, out_);
      write_header(*o, resolved_config(sub));
      bool ok = failed == 0;
      for (const auto& [name, v] : worst) {
        *o << name << ": " << format_double(v) << '\n';
        ok = ok && v <= id_tol_;
      }
      if (failed) *o << "instances_failed: " << failed << '\n';
      *o << "status: " << (ok ? "ok" : "failed") << '\n';
      return ok ? kExitOk : kExitValidation;
    });
    id_.depth = 5;
    id_.add_to(*s);
    s->add_option("--trials", id_trials_);
    s->add_option("--tolerance", id_tol_, "largest accepted relative residual");
    s->add_option("--out", id_out_, "output path (stdout when empty)");
  }

  // report -------------------------------------------------------------------
  std::string rp_in_;
  std::string rp_out_;

  void build_report() {
    CLI::App* s = add("report", "re-render a report CSV as a JSON summary", [this](CLI::App& sub) {
      std::ifstream in(rp_in_, std::ios::binary);
      if (!in) throw ConfigError("cannot open '" + rp_in_ + "'");
      const auto rows = read_report_csv(in);
      nlohmann::json summary = summarize(rows);
      summary["meta"] = meta(resolved_config(sub));
      Output o(rp_out_, out_);
      *o << summary.dump(1) << '\n';
      return kExitOk;
    });
    s->add_option("--in", rp_in_, "report CSV")->required();
    s->add_option("--out", rp_out_, "output path (stdout when empty)");
  }

  // plot-data ----------------------------------------------------------------
  std::string pd_in_;
  std::string pd_kind_;
  std::string pd_out_;

  void build_plot_data() {
    CLI::App* s = add("plot-data", "emit a CSV series from a report", [this](CLI::App& sub) {
      const PlotKind kind = plot_kind_from_string(pd_kind_);
      std::ifstream in(pd_in_, std::ios::binary);
      if (!in) throw ConfigError("cannot open '" + pd_in_ + "'");
      const auto rows = read_report_csv(in);
      Output o(pd_out_, out_);
      write_header(*o, resolved_config(sub));
      emit_plot_data(*o, rows, kind);
      return kExitOk;
    });
    s->add_option("--in", pd_in_, "report CSV")->required();
    s->add_option("--kind", pd_kind_, "ratio-hist | ratio-vs-seed | packing-vs-delta")->required();
    s->add_option("--out", pd_out_, "output path (stdout when empty)");
  }

  std::ostream& out_;
  std::ostream& err_;
  CLI::App app_;
  std::string config_path_;
  std::vector<std::pair<std::string, std::function<int(CLI::App&)>>> actions_;
};

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  App app(out, err);
  return app.run(argc, argv);
}

}  // namespace dytb::cli
