// Command-line driver: single integrations, convergence studies, problem listing.
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical failure.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>

#include "pdaexp/pdaexp.hpp"

namespace {

using pdaexp::Error;
using pdaexp::ErrorCode;
using pdaexp::KeyValues;

constexpr int kExitInvalid = 2;
constexpr int kExitNumerical = 3;

// Settings consumed by the driver itself; everything else goes to the problem builder.
const std::set<std::string> kDriverKeys = {"problem", "tau",  "taus",  "scheme", "c2",     "theta",
                                           "out",     "dump", "norm",  "ref_tau", "cache_dir"};

std::string normalize_key(std::string key) {
  for (auto& c : key)
    if (c == '-') c = '_';
  return key;
}

/// Decimal or "p/q".
double parse_step(const std::string& key, const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) return pdaexp::parse_real(key, text);
  const double num = pdaexp::parse_real(key, text.substr(0, slash));
  const double den = pdaexp::parse_real(key, text.substr(slash + 1));
  if (den == 0.0) throw Error(ErrorCode::InvalidConfig, key + ": zero denominator");
  return num / den;
}

std::vector<double> parse_step_list(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(parse_step("taus", item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "taus: empty list");
  return out;
}

/// Options shared by the subcommands; each is copied into the settings map only when given.
struct Flags {
  std::string config;
  std::map<std::string, std::string> values;
  std::vector<std::string> params;
};

void add_flag(CLI::App* cmd, Flags& flags, const std::string& name, const std::string& help) {
  cmd->add_option("--" + name, flags.values[normalize_key(name)], help);
}

KeyValues collect(CLI::App* cmd, const Flags& flags) {
  KeyValues kv;
  if (!flags.config.empty()) {
    for (const auto& [k, v] : pdaexp::read_key_values(flags.config)) kv[normalize_key(k)] = v;
  }
  for (const auto& [k, v] : flags.values) {
    std::string name = k;
    for (auto& c : name)
      if (c == '_') c = '-';
    if (cmd->count("--" + name) > 0) kv[k] = v;
  }
  for (const auto& p : flags.params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::InvalidConfig, "--set expects key=value, got '" + p + "'");
    kv[normalize_key(p.substr(0, eq))] = p.substr(eq + 1);
  }
  return kv;
}

std::string take(KeyValues& kv, const std::string& key, const std::string& fallback = {}) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::string v = it->second;
  kv.erase(it);
  return v;
}

pdaexp::Problem build_problem(KeyValues& kv) {
  const std::string name = take(kv, "problem");
  if (name.empty()) throw Error(ErrorCode::InvalidConfig, "no problem given (use --problem)");
  KeyValues params;
  for (const auto& [k, v] : kv)
    if (!kDriverKeys.count(k)) params[k] = v;
  for (const auto& [k, v] : params) kv.erase(k);
  return pdaexp::make_problem(name, params);
}

pdaexp::SchemeConfig scheme_config(KeyValues& kv) {
  pdaexp::SchemeConfig cfg;
  cfg.scheme = pdaexp::parse_scheme(take(kv, "scheme", "exp-euler"));
  if (auto v = take(kv, "c2"); !v.empty()) cfg.c2 = pdaexp::parse_real("c2", v);
  if (auto v = take(kv, "theta"); !v.empty()) cfg.theta = pdaexp::parse_real("theta", v);
  cfg.validate();
  return cfg;
}

void reject_leftovers(const KeyValues& kv, const std::string& command) {
  for (const auto& [k, v] : kv) throw Error(ErrorCode::InvalidConfig, "setting '" + k + "' is not used by " + command);
}

int run_solve(CLI::App* cmd, const Flags& flags) {
  KeyValues kv = collect(cmd, flags);
  const auto problem = build_problem(kv);
  const auto cfg = scheme_config(kv);
  const std::string tau_text = take(kv, "tau");
  if (tau_text.empty()) throw Error(ErrorCode::InvalidConfig, "no step size given (use --tau)");
  const double tau = parse_step("tau", tau_text);
  const std::string out = take(kv, "out"), dump = take(kv, "dump");
  reject_leftovers(kv, "solve");

  const auto traj = pdaexp::integrate(*problem.system, cfg, problem.u0, problem.t0, problem.t_end, tau,
                                      {.keep_states = !dump.empty()});
  if (out.empty() || out == "-") {
    pdaexp::write_trajectory_csv(traj, std::cout);
  } else {
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw Error(ErrorCode::Io, "cannot open " + out + " for writing");
    pdaexp::write_trajectory_csv(traj, os);
  }
  if (!dump.empty()) {
    std::ofstream os(dump, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::Io, "cannot open " + dump + " for writing");
    pdaexp::write_state_dump(traj.states, problem.system->size(), os);
  }
  for (const auto& w : traj.warnings) std::cerr << "warning: " << w << '\n';
  std::cerr << problem.name << ' ' << pdaexp::to_string(cfg.scheme) << ": " << traj.steps << " steps, "
            << traj.f_evals << " f evaluations, " << traj.flows << " flows, max constraint residual "
            << std::setprecision(3) << traj.max_residual << '\n';
  return 0;
}

int run_converge(CLI::App* cmd, const Flags& flags) {
  KeyValues kv = collect(cmd, flags);
  const auto problem = build_problem(kv);
  const auto cfg = scheme_config(kv);
  const std::string taus_text = take(kv, "taus");
  if (taus_text.empty()) throw Error(ErrorCode::InvalidConfig, "no step sizes given (use --taus)");
  const auto taus = parse_step_list(taus_text);
  pdaexp::ConvergenceOptions opts;
  opts.norm = pdaexp::parse_norm(take(kv, "norm", "energy"));
  if (auto v = take(kv, "ref_tau"); !v.empty()) {
    opts.tau_ref = parse_step("ref_tau", v);
    opts.use_exact = false;
  }
  opts.reference.cache_dir = take(kv, "cache_dir");
  const std::string out = take(kv, "out");
  reject_leftovers(kv, "converge");

  const auto table = pdaexp::run_convergence(problem, cfg, taus, opts);
  if (out.empty() || out == "-") {
    pdaexp::emit_csv(table, std::cout);
  } else {
    pdaexp::emit_csv(table, out);
  }
  std::cerr << std::setprecision(4) << table.problem << ' ' << table.scheme << " (" << table.norm
            << " norm): fitted order " << table.fitted_order << ", max constraint residual "
            << table.max_constraint_residual;
  if (table.tau_ref > 0.0) std::cerr << ", reference step " << table.tau_ref;
  std::cerr << '\n';
  return 0;
}

int run_list() {
  for (const auto& info : pdaexp::problem_registry())
    std::cout << info.name << "\n  " << info.summary << "\n  parameters: " << info.parameters << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exponential integrators for constrained parabolic systems"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print help and exit");  // -h is taken by the mesh width

  Flags solve_flags, conv_flags;
  auto* solve = app.add_subcommand("solve", "integrate one problem with a fixed step");
  auto* conv = app.add_subcommand("converge", "convergence study over a list of step sizes");
  auto* list = app.add_subcommand("list-problems", "list the registered problems");

  for (auto [cmd, flags] : {std::pair{solve, &solve_flags}, std::pair{conv, &conv_flags}}) {
    cmd->add_option("--config", flags->config, "key=value file; command-line flags take precedence")
        ->check(CLI::ExistingFile);
    add_flag(cmd, *flags, "problem", "problem name (see list-problems)");
    add_flag(cmd, *flags, "h", "mesh width 1/N");
    add_flag(cmd, *flags, "t-end", "final time");
    add_flag(cmd, *flags, "scheme", "exp-euler | second-order | second-order-family | alt-euler");
    add_flag(cmd, *flags, "c2", "stage abscissa of second-order-family");
    add_flag(cmd, *flags, "theta", "constraint weight of alt-euler");
    add_flag(cmd, *flags, "out", "output CSV path (stdout if omitted)");
    cmd->add_option("--set", flags->params, "extra problem parameter key=value (repeatable)");
  }
  add_flag(solve, solve_flags, "tau", "step size");
  add_flag(solve, solve_flags, "dump", "binary dump of all states");
  add_flag(conv, conv_flags, "taus", "comma-separated decreasing step sizes");
  add_flag(conv, conv_flags, "norm", "energy | h1 | l2");
  add_flag(conv, conv_flags, "ref-tau", "reference step (default: smallest tau / 16)");
  add_flag(conv, conv_flags, "cache-dir", "directory for cached reference solutions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*solve) return run_solve(solve, solve_flags);
    if (*conv) return run_converge(conv, conv_flags);
    if (*list) return run_list();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_numerical() ? kExitNumerical : kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
