// Minimal library walk-through: AR(10) error surface, two-state network,
// best fixed-length policy, and a simulation check of its gain.

#include <cstdio>

#include "aoisched/delay_model.hpp"
#include "aoisched/error_model.hpp"
#include "aoisched/fixed_solver.hpp"
#include "aoisched/simulator.hpp"

int main() {
  using namespace aoisched;
  ArProcessSpec ar;
  ar.coefficients.assign(10, 0.0);
  ar.coefficients[1] = 0.05;
  ar.coefficients[9] = 0.9;
  ar.noise_var = 0.01;
  ar.obs_noise_var = 0.001;

  const auto surface = build_error_surface(ar, 200, 10);
  const auto net = make_two_state_network(1.0, 1.0 / 20.0);
  const auto all = solve_fixed_all(surface, net, 10);
  for (std::size_t i = 0; i < all.gains.size(); ++i) std::printf("l=%zu  gain=%.6f\n", i + 1, all.gains[i]);

  const auto rule = fixed_rule(all.best.decisions, 10);
  const auto sim = replicate(rule, surface, net, 200000, 7, 8);
  std::printf("best l=%d  gain=%.6f  simulated=%.6f +/- %.6f\n", all.best_length, all.best.gain, sim.mean,
              sim.ci95);
  return 0;
}
