// aoisched: surface generation, solving, simulation and sweeps from TOML
// experiment configs.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aoisched/artifacts.hpp"
#include "aoisched/config.hpp"
#include "aoisched/experiments.hpp"

namespace fs = std::filesystem;
using namespace aoisched;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::string> out_dir;
  std::optional<long> seed;
  std::optional<int> reps;
  std::optional<long> horizon;
  std::vector<std::string> sets;
  unsigned threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config, "experiment config (TOML)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out-dir", f.out_dir, "output directory (overrides output.dir)");
  cmd->add_option("--seed", f.seed, "base seed");
  cmd->add_option("--reps", f.reps, "simulation replications");
  cmd->add_option("--horizon", f.horizon, "simulation horizon in slots");
  cmd->add_option("--set", f.sets, "override any config key, e.g. --set network.alpha=0.1");
  cmd->add_option("--threads", f.threads, "worker threads (0 = all cores)");
}

ExperimentConfig load(const CommonFlags& f) {
  std::vector<std::string> overrides = f.sets;
  if (f.seed) overrides.push_back("simulation.seed=" + std::to_string(*f.seed));
  if (f.reps) overrides.push_back("simulation.reps=" + std::to_string(*f.reps));
  if (f.horizon) overrides.push_back("simulation.horizon=" + std::to_string(*f.horizon));
  ExperimentConfig c = load_experiment(f.config, overrides);
  if (f.out_dir) c.out_dir = *f.out_dir;
  fs::create_directories(c.out_dir);
  return c;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json ar_json(const ArProcessSpec& s) {
  return {{"order", s.order()}, {"coefficients", s.coefficients}, {"noise_var", s.noise_var},
          {"obs_noise_var", s.obs_noise_var}};
}

int cmd_errgen(const CommonFlags& f) {
  const auto c = load(f);
  if (!c.surface.ar) throw ConfigError("errgen needs an AR source ([surface.ar] or surface.ar_file)");
  const auto surface = make_surface(c.surface);
  for (const auto& w : tail_warnings(surface)) std::cerr << "warning: " << w << '\n';
  const fs::path csv = c.out_dir / "surface.csv";
  save_error_surface(surface, csv.string());
  write_json_file({{"schema_version", kSchemaVersion},
                   {"ar", ar_json(*c.surface.ar)},
                   {"delta_max", surface.delta_max()},
                   {"max_length", surface.max_length()},
                   {"rows", (surface.delta_max() + 1) * surface.max_length()},
                   {"generated_at", timestamp()}},
                  (c.out_dir / "surface.meta.json").string());
  std::cout << "wrote " << csv.string() << " (" << (surface.delta_max() + 1) * surface.max_length()
            << " rows)\n";
  return 0;
}

// A root stuck where g jumps to -inf means waiting forever looked best: the
// surface has most likely not flattened out by delta_max.
void warn_if_degenerate(const FixedLengthPolicy& p) {
  if (p.residual > 1e-6)
    std::cerr << "warning: l=" << p.length() << " gain sits at the edge of the reachable thresholds (|g| = "
              << p.residual << "); consider a larger surface.delta_max\n";
}

int cmd_solve(const CommonFlags& f, const std::string& mode, std::optional<int> length,
              const std::string& variant, const std::optional<std::string>& out) {
  const auto c = load(f);
  const auto surface = make_surface(c.surface);
  const auto net = make_network(c);
  SolveOptions opt;
  opt.tau_bound = c.tau_bound;
  opt.tol = c.tol;
  const fs::path path = out ? fs::path(*out) : c.out_dir / "policy.json";
  std::cout << std::setprecision(10);

  if (mode == "fixed") {
    const int l = length ? *length : c.length.value_or(1);
    const auto p = solve_fixed(surface, net, l, c.buffer_size, opt);
    std::cout << "l=" << l << " gain=" << p.gain << '\n';
    warn_if_degenerate(p);
    write_json_file(to_json(p, c.buffer_size), path.string());
  } else if (mode == "fixed-all") {
    const auto r = solve_fixed_all(surface, net, c.buffer_size, opt);
    for (std::size_t i = 0; i < r.gains.size(); ++i) std::cout << "l=" << i + 1 << " gain=" << r.gains[i] << '\n';
    std::cout << "best l=" << r.best_length << " gain=" << r.best.gain << '\n';
    for (const auto& p : r.policies) warn_if_degenerate(p);
    json j = to_json(r.best, c.buffer_size);
    j["gains"] = r.gains;
    write_json_file(j, path.string());
  } else {
    const Improvement v = variant == "original" ? Improvement::original : Improvement::simplified;
    const VariableModel model(surface, net, c.buffer_size, resolve_tau_bound(surface, c.tau_bound), length);
    PolicyIterationOptions pio;
    pio.variant = v;
    const auto p = policy_iteration(model, pio);
    std::cout << "gain=" << p.gain << " rounds=" << p.timings.rounds
              << " improvement_s=" << p.timings.improvement_seconds << '\n';
    if (p.clamp_events > 0)
      std::cerr << "warning: " << p.clamp_events << " transitions clamped at delta_max\n";
    write_json_file(to_json(p), path.string());
  }
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

DecisionRule rule_from_policy_file(const std::string& path) {
  const json j = read_json_file(path);
  if (j.value("kind", std::string()) == "variable") return variable_rule(variable_policy_from_json(j));
  const auto p = fixed_policy_from_json(j);
  return fixed_rule(p.policy.decisions, p.buffer_size, "theorem1-l" + std::to_string(p.policy.length()));
}

DecisionRule rule_from_name(const ExperimentConfig& c, const ErrorSurface& surface,
                            const DelayNetwork& net, const std::string& name) {
  const auto spec = parse_policy_name(name);
  SolveOptions opt;
  opt.tau_bound = c.tau_bound;
  opt.tol = c.tol;
  switch (spec.kind) {
    case PolicyKind::zero_wait: return zero_wait_rule(spec.length, c.buffer_size);
    case PolicyKind::fixed_threshold:
      return fixed_rule(solve_fixed(surface, net, spec.length, c.buffer_size, opt).decisions, c.buffer_size, name);
    case PolicyKind::iid_baseline:
      return fixed_rule(solve_iid_baseline(surface, net, spec.length, c.buffer_size, opt).policy.decisions,
                        c.buffer_size, name);
    case PolicyKind::optimal_fixed_all:
      return fixed_rule(solve_fixed_all(surface, net, c.buffer_size, opt).best.decisions, c.buffer_size, name);
    case PolicyKind::variable:
      return variable_rule(policy_iteration(surface, net, c.buffer_size, resolve_tau_bound(surface, c.tau_bound)));
  }
  throw ConfigError("unknown policy");
}

int cmd_simulate(const CommonFlags& f, const std::optional<std::string>& policy,
                 const std::optional<std::string>& baseline, bool trace) {
  const auto c = load(f);
  const auto surface = make_surface(c.surface);
  const auto net = make_network(c);
  if (policy && !fs::exists(*policy)) throw ConfigError("policy file not found: " + *policy);
  const DecisionRule rule = policy ? rule_from_policy_file(*policy) : rule_from_name(c, surface, net, *baseline);
  SimOptions opt;
  opt.initial_age = c.initial_age;
  opt.initial_state = c.initial_state;
  const auto r = replicate(rule, surface, net, c.horizon, c.seed, c.reps, opt, f.threads);
  const fs::path path = c.out_dir / "result.json";
  write_json_file(to_json(r, rule.name), path.string());
  if (trace) {
    // Trace of the first replication, regenerated on its own stream.
    opt.record_trace = true;
    Rng rng = c.reps == 1 ? Rng(c.seed) : Rng::substream(c.seed, 0);
    const auto one = simulate(rule, surface, net, c.horizon, rng, opt);
    std::ofstream os(c.out_dir / "trace.csv");
    write_trace_csv(one.trace, os);
    if (!os) throw ConfigError("cannot write trace.csv");
  }
  std::cout << std::setprecision(10) << "mean=" << r.mean << " ci95=" << r.ci95 << " reps=" << r.reps
            << '\n'
            << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_sweep(const CommonFlags& f, const std::optional<std::string>& family) {
  CommonFlags g = f;
  if (family) g.sets.insert(g.sets.begin(), "sweep.family=\"" + *family + "\"");
  const auto c = load(g);
  const auto surface = make_surface(c.surface);
  const auto rows = run_sweep(c, surface, f.threads);
  const std::string stem = std::string("sweep_") + to_string(*c.family);
  const fs::path csv = c.out_dir / (stem + ".csv");
  {
    std::ofstream os(csv);
    write_sweep_csv(rows, os);
    if (!os) throw ConfigError("cannot write " + csv.string());
  }
  json policies = json::array();
  for (const auto& p : c.policies) policies.push_back(p.name);
  write_json_file({{"schema_version", kSchemaVersion},
                   {"family", to_string(*c.family)},
                   {"grid", c.grid},
                   {"policies", policies},
                   {"seed", c.seed},
                   {"reps", c.reps},
                   {"horizon", c.horizon},
                   {"generated_at", timestamp()}},
                  (c.out_dir / (stem + ".meta.json")).string());
  std::size_t failed = 0;
  for (const auto& r : rows) failed += !r.error.empty();
  std::cout << "wrote " << csv.string() << " (" << rows.size() << " rows, " << failed << " failed)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Index-based status-update scheduling over two-way Markovian delay"};
  app.require_subcommand(1);

  CommonFlags errgen_f, solve_f, sim_f, sweep_f;
  auto* errgen = app.add_subcommand("errgen", "tabulate the inference-error surface of an AR source");
  add_common(errgen, errgen_f);

  auto* solve = app.add_subcommand("solve", "compute a scheduling policy");
  add_common(solve, solve_f);
  std::string mode = "fixed-all";
  std::optional<int> length;
  std::string variant = "simplified";
  std::optional<std::string> solve_out;
  solve->add_option("--mode", mode, "fixed, fixed-all or variable")
      ->check(CLI::IsMember({"fixed", "fixed-all", "variable"}));
  solve->add_option("--length", length, "packet length (fixed mode; restricts variable mode)");
  solve->add_option("--variant", variant, "policy-improvement form for variable mode")
      ->check(CLI::IsMember({"original", "simplified"}));
  solve->add_option("--out", solve_out, "policy JSON path (default <out-dir>/policy.json)");

  auto* sim = app.add_subcommand("simulate", "simulate a policy file or a named policy");
  add_common(sim, sim_f);
  std::optional<std::string> policy, baseline;
  bool trace = false;
  auto* policy_opt = sim->add_option("--policy", policy, "policy JSON from solve");
  auto* baseline_opt =
      sim->add_option("--baseline", baseline, "named policy, e.g. zero-wait-l1, theorem1-l5, variable");
  policy_opt->excludes(baseline_opt);
  sim->add_flag("--trace", trace, "also write trace.csv for the first replication");
  sim->callback([&] {
    if (!policy && !baseline) throw CLI::ValidationError("simulate", "one of --policy or --baseline is required");
  });

  auto* sweep = app.add_subcommand("sweep", "run a sigma, alpha or buffer sweep");
  add_common(sweep, sweep_f);
  std::optional<std::string> family;
  sweep->add_option("--family", family, "sigma, alpha or buffer (overrides sweep.family)")
      ->check(CLI::IsMember({"sigma", "alpha", "buffer"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*errgen) return cmd_errgen(errgen_f);
    if (*solve) return cmd_solve(solve_f, mode, length, variant, solve_out);
    if (*sim) return cmd_simulate(sim_f, policy, baseline, trace);
    if (*sweep) return cmd_sweep(sweep_f, family);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}
