#pragma once

// Experiment configuration: TOML files with dotted-key overrides, resolved
// into surfaces, networks, solver knobs, simulation knobs and sweep grids.

#include <toml.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "aoisched/delay_model.hpp"
#include "aoisched/error_model.hpp"
#include "aoisched/errors.hpp"

namespace aoisched {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Typed access to TOML nodes with config errors naming the key.

namespace cfg {

inline std::string where(std::string_view key) { return "config key '" + std::string(key) + "'"; }

inline std::optional<double> opt_double(const toml::node_view<const toml::node>& n,
                                        std::string_view key) {
  if (!n) return std::nullopt;
  if (auto v = n.value_exact<double>()) return *v;
  if (auto v = n.value_exact<int64_t>()) return static_cast<double>(*v);
  throw ConfigError(where(key) + " must be a number");
}

inline std::optional<long> opt_long(const toml::node_view<const toml::node>& n,
                                    std::string_view key) {
  if (!n) return std::nullopt;
  if (auto v = n.value_exact<int64_t>()) return static_cast<long>(*v);
  if (auto v = n.value_exact<double>(); v && std::floor(*v) == *v) return static_cast<long>(*v);
  throw ConfigError(where(key) + " must be an integer");
}

inline std::optional<std::string> opt_string(const toml::node_view<const toml::node>& n,
                                             std::string_view key) {
  if (!n) return std::nullopt;
  if (auto v = n.value_exact<std::string>()) return *v;
  throw ConfigError(where(key) + " must be a string");
}

inline double get_double(const toml::node_view<const toml::node>& n, std::string_view key) {
  if (auto v = opt_double(n, key)) return *v;
  throw ConfigError("missing " + where(key));
}

inline long get_long(const toml::node_view<const toml::node>& n, std::string_view key) {
  if (auto v = opt_long(n, key)) return *v;
  throw ConfigError("missing " + where(key));
}

inline std::vector<double> double_list(const toml::node_view<const toml::node>& n,
                                       std::string_view key) {
  const auto* arr = n.as_array();
  if (!arr) throw ConfigError(where(key) + " must be an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < arr->size(); ++i)
    out.push_back(get_double(toml::node_view<const toml::node>(arr->get(i)), key));
  return out;
}

inline std::vector<std::string> string_list(const toml::node_view<const toml::node>& n,
                                            std::string_view key) {
  const auto* arr = n.as_array();
  if (!arr) throw ConfigError(where(key) + " must be an array");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < arr->size(); ++i) {
    auto s = arr->get(i)->value_exact<std::string>();
    if (!s) throw ConfigError(where(key) + " must hold strings");
    out.push_back(*s);
  }
  return out;
}

inline toml::table parse_file(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("file not found: " + path.string());
  try {
    return toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path.string() << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
}

/// Applies `a.b.c=value`; the value is read as a TOML literal and falls back
/// to a plain string.
inline void apply_override(toml::table& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value: " + assignment);
  std::string key = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  key.erase(key.find_last_not_of(" \t") + 1);
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ConfigError("bad override key: " + key);
    parts.push_back(part);
  }
  toml::table* t = &root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    auto* child = (*t)[parts[i]].as_table();
    if (!child) {
      t->insert_or_assign(parts[i], toml::table{});
      child = (*t)[parts[i]].as_table();
    }
    t = child;
  }
  toml::table parsed;
  try {
    parsed = toml::parse("v = " + value);
  } catch (const toml::parse_error&) {
    parsed.insert_or_assign("v", value);
  }
  t->insert_or_assign(parts.back(), *parsed.get("v"));
}

}  // namespace cfg

// ---------------------------------------------------------------------------
// Section loaders.

/// Keys: order, coefficients, noise_var, obs_noise_var.
inline ArProcessSpec parse_ar_spec(const toml::table& t) {
  const toml::node_view<const toml::node> v{t};
  ArProcessSpec spec;
  spec.coefficients = cfg::double_list(v["coefficients"], "coefficients");
  if (auto order = cfg::opt_long(v["order"], "order")) {
    if (*order != static_cast<long>(spec.coefficients.size()))
      throw ConfigError("order does not match the number of coefficients");
  }
  spec.noise_var = cfg::get_double(v["noise_var"], "noise_var");
  spec.obs_noise_var = cfg::opt_double(v["obs_noise_var"], "obs_noise_var").value_or(0.0);
  spec.validate();
  return spec;
}

inline ArProcessSpec load_ar_spec(const fs::path& path) { return parse_ar_spec(cfg::parse_file(path)); }

inline DelayLaw parse_pmf(const toml::node* n, const std::string& key) {
  const auto* arr = n ? n->as_array() : nullptr;
  if (!arr || arr->empty()) throw ConfigError(cfg::where(key) + " must be a non-empty [[delay, prob], ...] list");
  std::map<int, double> pmf;
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const auto* pair = arr->get(i)->as_array();
    if (!pair || pair->size() != 2) throw ConfigError(cfg::where(key) + " entries must be [delay, prob]");
    const toml::node_view<const toml::node> dn(pair->get(0)), pn(pair->get(1));
    const long delay = cfg::get_long(dn, key);
    if (delay < 1) throw ConfigError(cfg::where(key) + ": delays must be >= 1 slot");
    pmf[static_cast<int>(delay)] += cfg::get_double(pn, key);
  }
  return DelayLaw(pmf);
}

inline DelayVariant parse_variant(const std::string& s) {
  if (s == "plain") return DelayVariant::plain;
  if (s == "offset") return DelayVariant::offset;
  throw ConfigError("unknown delay variant '" + s + "' (expected plain or offset)");
}

/// Two-state preset with preset = "two_state", sigma, alpha, variant,
/// max_length; or explicit n_states, transition_matrix, trans_pmf, fb_pmf.
inline DelayNetwork parse_network(const toml::table& t) {
  const toml::node_view<const toml::node> v{t};
  if (auto preset = cfg::opt_string(v["preset"], "network.preset")) {
    if (*preset != "two_state") throw ConfigError("unknown network preset '" + *preset + "'");
    const double sigma = cfg::get_double(v["sigma"], "network.sigma");
    const double alpha = cfg::get_double(v["alpha"], "network.alpha");
    const auto variant = parse_variant(cfg::opt_string(v["variant"], "network.variant").value_or("plain"));
    const long max_length = cfg::opt_long(v["max_length"], "network.max_length").value_or(10);
    return make_two_state_network(sigma, alpha, variant, static_cast<int>(max_length));
  }
  const long n = cfg::get_long(v["n_states"], "network.n_states");
  if (n < 1) throw ConfigError("network.n_states must be >= 1");
  const auto* rows = v["transition_matrix"].as_array();
  if (!rows) throw ConfigError("missing config key 'network.transition_matrix'");
  std::vector<double> flat;
  for (std::size_t i = 0; i < rows->size(); ++i) {
    const toml::node* e = rows->get(i);
    if (const auto* row = e->as_array()) {
      for (std::size_t j = 0; j < row->size(); ++j)
        flat.push_back(cfg::get_double(toml::node_view<const toml::node>(row->get(j)), "network.transition_matrix"));
    } else {
      flat.push_back(cfg::get_double(toml::node_view<const toml::node>(e), "network.transition_matrix"));
    }
  }
  if (flat.size() != static_cast<std::size_t>(n * n))
    throw ConfigError("network.transition_matrix must have n_states^2 entries");
  std::vector<std::vector<double>> p(n, std::vector<double>(n));
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) p[i][j] = flat[i * n + j];

  const auto* trans = v["trans_pmf"].as_array();
  const auto* fb = v["fb_pmf"].as_array();
  if (!trans || trans->size() != static_cast<std::size_t>(n))
    throw ConfigError("network.trans_pmf must list one entry per state");
  if (!fb || fb->size() != static_cast<std::size_t>(n))
    throw ConfigError("network.fb_pmf must list one entry per state");
  std::vector<std::vector<DelayLaw>> tl(n);
  std::vector<DelayLaw> fl;
  for (long c = 0; c < n; ++c) {
    const auto* per_len = trans->get(c)->as_array();
    if (!per_len || per_len->empty()) throw ConfigError("network.trans_pmf entries must list one pmf per length");
    for (std::size_t l = 0; l < per_len->size(); ++l)
      tl[c].push_back(parse_pmf(per_len->get(l), "network.trans_pmf"));
    fl.push_back(parse_pmf(fb->get(c), "network.fb_pmf"));
  }
  return DelayNetwork(std::move(p), std::move(tl), std::move(fl));
}

// ---------------------------------------------------------------------------
// Policies named on the command line or in sweep configs.

enum class PolicyKind { optimal_fixed_all, fixed_threshold, variable, zero_wait, iid_baseline };

struct PolicySpec {
  PolicyKind kind = PolicyKind::optimal_fixed_all;
  int length = 0;  // for the per-length kinds
  std::string name;
};

inline PolicySpec parse_policy_name(const std::string& name) {
  PolicySpec p;
  p.name = name;
  if (name == "optimal-fixed-all") return p;
  if (name == "variable") {
    p.kind = PolicyKind::variable;
    return p;
  }
  const std::pair<const char*, PolicyKind> prefixes[] = {{"theorem1-l", PolicyKind::fixed_threshold},
                                                         {"zero-wait-l", PolicyKind::zero_wait},
                                                         {"iid-baseline-l", PolicyKind::iid_baseline}};
  for (const auto& [prefix, kind] : prefixes) {
    const std::string_view pre(prefix);
    if (name.rfind(pre, 0) == 0 && name.size() > pre.size()) {
      const std::string digits = name.substr(pre.size());
      if (!std::all_of(digits.begin(), digits.end(), [](unsigned char ch) { return std::isdigit(ch); }))
        break;
      p.kind = kind;
      p.length = std::stoi(digits);
      if (p.length < 1) break;
      return p;
    }
  }
  throw ConfigError("unknown policy '" + name +
                    "' (expected optimal-fixed-all, variable, theorem1-l<k>, zero-wait-l<k> or iid-baseline-l<k>)");
}

// ---------------------------------------------------------------------------
// Whole experiment.

enum class SweepFamily { sigma, alpha, buffer };

inline SweepFamily parse_family(const std::string& s) {
  if (s == "sigma") return SweepFamily::sigma;
  if (s == "alpha") return SweepFamily::alpha;
  if (s == "buffer") return SweepFamily::buffer;
  throw ConfigError("unknown sweep family '" + s + "' (expected sigma, alpha or buffer)");
}

inline const char* to_string(SweepFamily f) {
  switch (f) {
    case SweepFamily::sigma: return "sigma";
    case SweepFamily::alpha: return "alpha";
    case SweepFamily::buffer: return "buffer";
  }
  return "?";
}

struct SurfaceSource {
  std::optional<ArProcessSpec> ar;
  std::optional<fs::path> csv;
  int delta_max = 500;
  int max_length = 10;
};

struct ExperimentConfig {
  fs::path base_dir = ".";
  toml::table raw;

  SurfaceSource surface;
  toml::table network;  // kept unparsed: sweeps rebuild it per grid point

  int buffer_size = 1;
  int tau_bound = 0;  // 0 means delta_max
  double tol = 1e-9;
  std::optional<int> length;

  std::uint64_t seed = 1;
  int reps = 1;
  long horizon = 1000000;
  long initial_age = 1;
  int initial_state = 0;  // 0-based internally; 1-based in files

  std::optional<SweepFamily> family;
  std::vector<double> grid;
  std::vector<PolicySpec> policies;
  bool simulate_baselines = false;

  fs::path out_dir = "out";
};

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  if (!fs::exists(path)) throw ConfigError("file not found: " + path.string());
  return path;
}

inline std::vector<double> parse_grid(const toml::node_view<const toml::node>& sweep) {
  std::vector<double> grid;
  if (sweep["grid"]) {
    grid = cfg::double_list(sweep["grid"], "sweep.grid");
  } else if (sweep["start"]) {
    const double start = cfg::get_double(sweep["start"], "sweep.start");
    const double stop = cfg::get_double(sweep["stop"], "sweep.stop");
    const double step = cfg::get_double(sweep["step"], "sweep.step");
    if (!(step > 0.0)) throw ConfigError("sweep.step must be > 0");
    const long n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long i = 0; i <= n; ++i) grid.push_back(std::round((start + i * step) * 1e12) / 1e12);
  }
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  if (!std::is_sorted(grid.begin(), grid.end())) throw ConfigError("sweep grid must be sorted");
  return grid;
}

}  // namespace detail

/// Sections: [surface] (+ [surface.ar] or ar_file / csv), [network] (inline
/// or file), [solver], [simulation], [sweep], [output].
inline ExperimentConfig parse_experiment(toml::table root, const fs::path& base_dir) {
  ExperimentConfig cfgx;
  cfgx.base_dir = base_dir;
  const toml::node_view<const toml::node> v{root};

  const auto surface = v["surface"];
  if (!surface.is_table()) throw ConfigError("missing [surface] section");
  cfgx.surface.delta_max = static_cast<int>(cfg::opt_long(surface["delta_max"], "surface.delta_max").value_or(500));
  cfgx.surface.max_length = static_cast<int>(cfg::opt_long(surface["max_length"], "surface.max_length").value_or(10));
  if (auto csv = cfg::opt_string(surface["csv"], "surface.csv")) {
    cfgx.surface.csv = detail::resolve(base_dir, *csv);
  } else if (auto file = cfg::opt_string(surface["ar_file"], "surface.ar_file")) {
    cfgx.surface.ar = load_ar_spec(detail::resolve(base_dir, *file));
  } else if (const auto* ar = surface["ar"].as_table()) {
    cfgx.surface.ar = parse_ar_spec(*ar);
  } else {
    throw ConfigError("[surface] needs csv, ar_file or an [surface.ar] table");
  }

  const auto network = v["network"];
  if (!network.is_table()) throw ConfigError("missing [network] section");
  if (auto file = cfg::opt_string(network["file"], "network.file")) {
    cfgx.network = cfg::parse_file(detail::resolve(base_dir, *file));
    // Keys set next to `file` override the file's.
    for (const auto& [k, node] : *network.as_table())
      if (k.str() != "file") cfgx.network.insert_or_assign(k.str(), node);
  } else {
    cfgx.network = *network.as_table();
  }

  const auto solver = v["solver"];
  cfgx.buffer_size = static_cast<int>(cfg::opt_long(solver["B"], "solver.B").value_or(1));
  cfgx.tau_bound = static_cast<int>(cfg::opt_long(solver["tau_bound"], "solver.tau_bound").value_or(0));
  cfgx.tol = cfg::opt_double(solver["tol"], "solver.tol").value_or(1e-9);
  if (auto l = cfg::opt_long(solver["length"], "solver.length")) cfgx.length = static_cast<int>(*l);
  if (cfgx.buffer_size < 1) throw ConfigError("solver.B must be >= 1");
  if (cfgx.tau_bound < 0) throw ConfigError("solver.tau_bound must be >= 0");
  if (!(cfgx.tol > 0.0)) throw ConfigError("solver.tol must be > 0");

  const auto sim = v["simulation"];
  if (auto s = cfg::opt_long(sim["seed"], "simulation.seed")) cfgx.seed = static_cast<std::uint64_t>(*s);
  cfgx.reps = static_cast<int>(cfg::opt_long(sim["reps"], "simulation.reps").value_or(1));
  cfgx.horizon = cfg::opt_long(sim["horizon"], "simulation.horizon").value_or(1000000);
  cfgx.initial_age = cfg::opt_long(sim["initial_age"], "simulation.initial_age").value_or(1);
  cfgx.initial_state = static_cast<int>(cfg::opt_long(sim["initial_state"], "simulation.initial_state").value_or(1)) - 1;
  if (cfgx.reps < 1) throw ConfigError("simulation.reps must be >= 1");
  if (cfgx.horizon < 1) throw ConfigError("simulation.horizon must be >= 1");
  if (cfgx.initial_age < 0) throw ConfigError("simulation.initial_age must be >= 0");

  if (const auto sweep = v["sweep"]; sweep.is_table()) {
    if (auto fam = cfg::opt_string(sweep["family"], "sweep.family")) cfgx.family = parse_family(*fam);
    if (sweep["grid"] || sweep["start"]) cfgx.grid = detail::parse_grid(sweep);
    if (sweep["policies"])
      for (const auto& name : cfg::string_list(sweep["policies"], "sweep.policies"))
        cfgx.policies.push_back(parse_policy_name(name));
    cfgx.simulate_baselines = sweep["simulate_baselines"].value_or(false);
  }

  if (auto dir = cfg::opt_string(v["output"]["dir"], "output.dir")) cfgx.out_dir = *dir;
  cfgx.raw = std::move(root);
  return cfgx;
}

inline ExperimentConfig load_experiment(const fs::path& path,
                                        const std::vector<std::string>& overrides = {}) {
  toml::table root = cfg::parse_file(path);
  for (const auto& o : overrides) cfg::apply_override(root, o);
  return parse_experiment(std::move(root), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

inline ErrorSurface make_surface(const SurfaceSource& src) {
  if (src.csv) return load_error_surface(src.csv->string());
  return build_error_surface(*src.ar, src.delta_max, src.max_length);
}

/// Network for the experiment, optionally with sigma/alpha replaced (sweeps).
inline DelayNetwork make_network(const ExperimentConfig& c, std::optional<double> sigma = std::nullopt,
                                 std::optional<double> alpha = std::nullopt) {
  toml::table t = c.network;
  if (sigma) t.insert_or_assign("sigma", *sigma);
  if (alpha) t.insert_or_assign("alpha", *alpha);
  if ((sigma || alpha) && !t.contains("preset"))
    throw ConfigError("sigma/alpha sweeps need a two_state network preset");
  return parse_network(t);
}

}  // namespace aoisched
