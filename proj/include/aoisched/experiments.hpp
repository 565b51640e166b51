#pragma once

// Sweep driver: solves the requested policies at each grid point and
// evaluates them exactly when they are fixed-length tables, by simulation
// otherwise.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>
#include <vector>

#include "aoisched/artifacts.hpp"
#include "aoisched/config.hpp"
#include "aoisched/fixed_solver.hpp"
#include "aoisched/rng.hpp"
#include "aoisched/simulator.hpp"
#include "aoisched/variable_solver.hpp"

namespace aoisched {

struct PointSetup {
  DelayNetwork net;
  int buffer_size;
};

inline PointSetup sweep_point(const ExperimentConfig& c, double x) {
  switch (*c.family) {
    case SweepFamily::sigma: return {make_network(c, x, std::nullopt), c.buffer_size};
    case SweepFamily::alpha: return {make_network(c, std::nullopt, x), c.buffer_size};
    case SweepFamily::buffer: {
      if (x < 1.0 || std::floor(x) != x) throw ConfigError("buffer grid values must be positive integers");
      return {make_network(c), static_cast<int>(x)};
    }
  }
  throw ConfigError("unknown sweep family");
}

/// One sweep cell. `seed` drives the simulation-evaluated policies.
inline SweepRow evaluate_cell(const ExperimentConfig& c, const ErrorSurface& surface,
                              const DelayNetwork& net, int buffer_size, const PolicySpec& p,
                              std::uint64_t seed) {
  SweepRow row;
  row.policy = p.name;
  SolveOptions opt;
  opt.tau_bound = c.tau_bound;
  opt.tol = c.tol;
  const int tau_bound = resolve_tau_bound(surface, c.tau_bound);
  SimOptions sim;
  sim.initial_age = c.initial_age;
  sim.initial_state = c.initial_state;
  const auto simulate_rule = [&](const DecisionRule& rule) {
    const auto r = replicate(rule, surface, net, c.horizon, seed, c.reps, sim);
    row.value = r.mean;
    row.ci95 = r.ci95;
    row.method = "simulate";
  };
  const auto exact = [&](const FixedDecisions& d) {
    if (c.simulate_baselines && (p.kind == PolicyKind::zero_wait || p.kind == PolicyKind::iid_baseline)) {
      simulate_rule(fixed_rule(d, buffer_size));
      return;
    }
    row.value = evaluate_fixed(surface, net, d, tau_bound).time_average();
    row.method = "exact";
  };

  switch (p.kind) {
    case PolicyKind::optimal_fixed_all:
      exact(solve_fixed_all(surface, net, buffer_size, opt).best.decisions);
      break;
    case PolicyKind::fixed_threshold:
      exact(solve_fixed(surface, net, p.length, buffer_size, opt).decisions);
      break;
    case PolicyKind::zero_wait:
      if (p.length > buffer_size) throw ConfigError("length out of range");
      exact(zero_wait_decisions(net.num_states(), surface.delta_max(), p.length));
      break;
    case PolicyKind::iid_baseline:
      exact(solve_iid_baseline(surface, net, p.length, buffer_size, opt).policy.decisions);
      break;
    case PolicyKind::variable:
      simulate_rule(variable_rule(policy_iteration(surface, net, buffer_size, tau_bound)));
      break;
  }
  return row;
}

/// Rows in grid order, then policy order; failures land in the error column.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& c, const ErrorSurface& surface,
                                       unsigned threads = 0) {
  if (!c.family) throw ConfigError("missing config key 'sweep.family'");
  if (c.grid.empty()) throw ConfigError("sweep grid is empty");
  if (c.policies.empty()) throw ConfigError("missing config key 'sweep.policies'");
  const std::size_t n = c.grid.size();
  const std::size_t k = c.policies.size();
  std::vector<SweepRow> rows(n * k);

  const auto run_point = [&](std::size_t i) {
    const double x = c.grid[i];
    const std::uint64_t seed = mix64(c.seed) ^ mix64(i + 1);
    std::optional<PointSetup> setup;
    std::string setup_error;
    try {
      setup.emplace(sweep_point(c, x));
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (std::size_t j = 0; j < k; ++j) {
      SweepRow& row = rows[i * k + j];
      try {
        if (!setup) throw ConfigError(setup_error);
        row = evaluate_cell(c, surface, setup->net, setup->buffer_size, c.policies[j], seed);
      } catch (const std::exception& e) {
        row = SweepRow{};
        row.policy = c.policies[j].name;
        row.method = "failed";
        row.error = e.what();
      }
      row.x = x;
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(n));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) run_point(i);
    });
  for (auto& t : pool) t.join();
  return rows;
}

}  // namespace aoisched
