#pragma once

// Scheduling with a time-invariant packet length l: threshold waiting on the
// index function, per-delay-state buffer positions, exact renewal-reward
// epoch statistics and bisection on the optimal gain.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "aoisched/delay_model.hpp"
#include "aoisched/error_model.hpp"
#include "aoisched/errors.hpp"
#include "aoisched/index.hpp"

namespace aoisched {

struct EpochStats {
  double expected_cost = 0.0;    // E[sum of eps over one ACK-to-ACK epoch]
  double expected_length = 0.0;  // E[A_{i+1} - A_i]

  double time_average() const { return expected_cost / expected_length; }
};

/// Decision tables of a stationary policy in the fixed-length class.
struct FixedDecisions {
  int length = 1;
  std::vector<int> buffer;             // b(c), one per delay state
  std::vector<std::vector<int>> wait;  // wait[c][delta], delta in [0, delta_max]

  int delta_max() const { return wait.empty() ? 0 : static_cast<int>(wait.front().size()) - 1; }

  int wait_at(long delta, int c) const {
    const auto& row = wait[c];
    return row[std::clamp<long>(delta, 0, static_cast<long>(row.size()) - 1)];
  }

  friend bool operator==(const FixedDecisions&, const FixedDecisions&) = default;
};

struct FixedLengthPolicy {
  double gain = 0.0;  // optimal time-average error within the class
  FixedDecisions decisions;
  int delta_max = 0;
  int tau_bound = 0;
  int iterations = 0;     // bisection steps taken
  double residual = 0.0;  // |g(gain)|

  int length() const { return decisions.length; }
};

/// Zero-wait baseline: tau = 0, b = 0, constant l.
inline FixedDecisions zero_wait_decisions(int num_states, int delta_max, int length) {
  FixedDecisions d;
  d.length = length;
  d.buffer.assign(num_states, 0);
  d.wait.assign(num_states, std::vector<int>(delta_max + 1, 0));
  return d;
}

/// Everything needed for one packet length, precomputed once: the error
/// column, the epoch laws per delay state and the index columns (which do
/// not depend on the gain).
class FixedLengthModel {
 public:
  FixedLengthModel(const ErrorSurface& surface, const DelayNetwork& net, int length,
                   int tau_bound)
      : length_(length), tau_bound_(tau_bound), delta_max_(surface.delta_max()) {
    if (length < 1 || length > surface.max_length() || length > net.max_length())
      throw ConfigError("length out of range");
    if (tau_bound < 1) throw ConfigError("tau_bound must be >= 1");
    column_ = ErrorColumn(surface, length);
    stationary_ = stationary_distribution(net);
    const int n = net.num_states();
    outcomes_.resize(n);
    next_transmission_.resize(n);
    gamma_.resize(n);
    for (int c = 0; c < n; ++c) {
      outcomes_[c] = epoch_law(net, c, length);
      for (int next = 0; next < n; ++next) {
        const double pn = net.transition(c, next);
        if (pn <= 0.0) continue;
        for (const auto& a : net.transmission(next, length).atoms())
          next_transmission_[c].push_back({a.delay, pn * a.prob});
      }
      gamma_[c] = index_column(expected_error_sequence(surface, net, length, length, c), tau_bound);
    }
  }

  int length() const { return length_; }
  int tau_bound() const { return tau_bound_; }
  int delta_max() const { return delta_max_; }
  int num_states() const { return static_cast<int>(outcomes_.size()); }
  const ErrorColumn& column() const { return column_; }
  const std::vector<double>& stationary() const { return stationary_; }
  const std::vector<double>& index_column_for(int c) const { return gamma_[c]; }

  double index(long delta, int c) const {
    const auto& g = gamma_[c];
    return g[std::min<long>(delta, static_cast<long>(g.size()) - 1)];
  }

  int waiting_time(long delta, int c, double beta) const {
    return first_crossing(gamma_[c], delta, beta, tau_bound_);
  }

  std::vector<std::vector<int>> waiting_table(double beta) const {
    std::vector<std::vector<int>> w;
    for (const auto& g : gamma_) w.push_back(threshold_waits(g, beta, tau_bound_));
    return w;
  }

  /// E[sum_{k < F' + tau' + T''} (eps(b + T' + k) - beta) | C_i = c], with
  /// tau' from the waiting table at AoI b + T' + F' in state C_{i+1}.
  double buffer_objective(int c, int b, double beta,
                          const std::vector<std::vector<int>>& waits) const {
    double total = 0.0;
    for (const auto& o : outcomes_[c]) {
      const long delivered_age = b + o.transmission;
      const long ack_age = delivered_age + o.feedback;
      const auto& row = waits[o.next_state];
      const int tau = row[std::min<long>(ack_age, static_cast<long>(row.size()) - 1)];
      double inner = 0.0;
      for (const auto& [t2, p2] : next_transmission_[o.next_state]) {
        const long span = o.feedback + tau + t2;
        inner += p2 * (column_.sum(delivered_age, span) - beta * static_cast<double>(span));
      }
      total += o.prob * inner;
    }
    return total;
  }

  int buffer_position(int c, double beta, int buffer_size,
                      const std::vector<std::vector<int>>& waits) const {
    if (buffer_size < length_) throw ConfigError("buffer size must be >= packet length");
    int best_b = 0;
    double best = buffer_objective(c, 0, beta, waits);
    const double slack = 1e-12 * (1.0 + std::abs(best));
    for (int b = 1; b <= buffer_size - length_; ++b) {
      const double v = buffer_objective(c, b, beta, waits);
      if (v < best - slack) {
        best = v;
        best_b = b;
      }
    }
    return best_b;
  }

  FixedDecisions decisions(double beta, int buffer_size) const {
    FixedDecisions d;
    d.length = length_;
    d.wait = waiting_table(beta);
    for (int c = 0; c < num_states(); ++c)
      d.buffer.push_back(buffer_position(c, beta, buffer_size, d.wait));
    return d;
  }

  /// Stationary per-epoch cost and length under fixed decision tables.
  /// Enumerates (C_{i-1} ~ pi, C_i, C_{i+1}) with their delays.
  EpochStats epoch_stats(const FixedDecisions& d) const {
    if (d.length != length_) throw ConfigError("decision tables are for a different length");
    if (static_cast<int>(d.buffer.size()) != num_states() ||
        static_cast<int>(d.wait.size()) != num_states())
      throw ConfigError("decision tables do not match the number of delay states");
    long double cost = 0.0L;
    long double len = 0.0L;
    for (int prev = 0; prev < num_states(); ++prev) {
      for (const auto& cur : outcomes_[prev]) {
        const long ack_age = d.buffer[prev] + cur.transmission + cur.feedback;
        const int tau = d.wait_at(ack_age, cur.next_state);
        for (const auto& nxt : outcomes_[cur.next_state]) {
          const long double p = stationary_[prev] * cur.prob * nxt.prob;
          const double c1 = column_.sum(ack_age, tau + nxt.transmission);
          const double c2 = column_.sum(d.buffer[cur.next_state] + nxt.transmission, nxt.feedback);
          cost += p * (c1 + c2);
          len += p * (tau + nxt.transmission + nxt.feedback);
        }
      }
    }
    return {static_cast<double>(cost), static_cast<double>(len)};
  }

  /// g(beta) = E[cost] - beta E[length] under the beta-threshold policy;
  /// -inf when beta exceeds what any threshold can reach (waiting forever
  /// would then be preferable).
  double g(double beta, int buffer_size) const {
    try {
      const auto stats = epoch_stats(decisions(beta, buffer_size));
      return stats.expected_cost - beta * stats.expected_length;
    } catch (const ThresholdNotCrossed&) {
      return -std::numeric_limits<double>::infinity();
    }
  }

 private:
  struct TransmissionAtom {
    int delay;
    double prob;
  };

  int length_;
  int tau_bound_;
  int delta_max_;
  ErrorColumn column_;
  std::vector<double> stationary_;
  std::vector<std::vector<EpochOutcome>> outcomes_;
  std::vector<std::vector<TransmissionAtom>> next_transmission_;
  std::vector<std::vector<double>> gamma_;
};

// Free-function forms of the model queries.

inline int waiting_time(const ErrorSurface& surface, const DelayNetwork& net, long delta, int c,
                        int l, double beta, int tau_bound) {
  const auto gamma = index_column(expected_error_sequence(surface, net, l, l, c), tau_bound);
  return first_crossing(gamma, delta, beta, tau_bound);
}

inline int buffer_position(const ErrorSurface& surface, const DelayNetwork& net, int c, int l,
                           double beta, int buffer_size, int tau_bound) {
  const FixedLengthModel model(surface, net, l, tau_bound);
  return model.buffer_position(c, beta, buffer_size, model.waiting_table(beta));
}

inline EpochStats epoch_stats(const ErrorSurface& surface, const DelayNetwork& net, int l,
                              double beta, int buffer_size, int tau_bound) {
  const FixedLengthModel model(surface, net, l, tau_bound);
  return model.epoch_stats(model.decisions(beta, buffer_size));
}

/// Exact time-average error of arbitrary fixed-length decision tables.
inline EpochStats evaluate_fixed(const ErrorSurface& surface, const DelayNetwork& net,
                                 const FixedDecisions& d, int tau_bound) {
  return FixedLengthModel(surface, net, d.length, tau_bound).epoch_stats(d);
}

struct SolveOptions {
  int tau_bound = 0;  // 0 selects delta_max
  double tol = 1e-9;
  int max_iterations = 60;
};

inline int resolve_tau_bound(const ErrorSurface& surface, int tau_bound) {
  return tau_bound > 0 ? tau_bound : std::max(1, surface.delta_max());
}

/// Bisection on g over [min, max] of the length-l column.
inline FixedLengthPolicy solve_fixed(const FixedLengthModel& model, int buffer_size,
                                     double tol = 1e-9, int max_iterations = 60) {
  if (buffer_size < model.length()) throw ConfigError("buffer size must be >= packet length");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int d = 0; d <= model.delta_max(); ++d) {
    lo = std::min(lo, model.column()(d));
    hi = std::max(hi, model.column()(d));
  }

  FixedLengthPolicy policy;
  policy.delta_max = model.delta_max();
  policy.tau_bound = model.tau_bound();

  const auto finish = [&](double beta, double g_value, int iters) {
    policy.gain = beta;
    policy.decisions = model.decisions(beta, buffer_size);
    policy.iterations = iters;
    policy.residual = std::abs(g_value);
    return policy;
  };

  if (hi - lo <= 1e-15 * std::max(1.0, std::abs(hi))) return finish(lo, 0.0, 0);

  const double g_lo = model.g(lo, buffer_size);
  if (std::abs(g_lo) < tol) return finish(lo, g_lo, 0);
  const double g_hi = model.g(hi, buffer_size);
  if (std::abs(g_hi) < tol) return finish(hi, g_hi, 0);
  if ((g_lo < 0.0) == (g_hi < 0.0)) throw NumericalError("degenerate surface");

  // Track the best finite point; the g < 0 side may be -inf.
  double best_beta = g_lo > 0.0 ? lo : hi;
  double best_g = g_lo > 0.0 ? g_lo : g_hi;
  if (!std::isfinite(best_g)) {
    best_beta = lo;
    best_g = g_lo;
  }
  double a = lo;
  double b = hi;
  const bool increasing = g_lo < 0.0;  // g is decreasing in theory; tolerate either
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    const double mid = 0.5 * (a + b);
    const double gm = model.g(mid, buffer_size);
    if (std::isfinite(gm) && std::abs(gm) < std::abs(best_g)) {
      best_beta = mid;
      best_g = gm;
    }
    if (std::abs(gm) < tol) break;
    if ((gm > 0.0) != increasing)
      a = mid;
    else
      b = mid;
  }
  return finish(best_beta, best_g, iter + 1);
}

inline FixedLengthPolicy solve_fixed(const ErrorSurface& surface, const DelayNetwork& net, int l,
                                     int buffer_size, const SolveOptions& opt = {}) {
  const FixedLengthModel model(surface, net, l, resolve_tau_bound(surface, opt.tau_bound));
  return solve_fixed(model, buffer_size, opt.tol, opt.max_iterations);
}

struct FixedAllResult {
  int best_length = 1;
  FixedLengthPolicy best;
  std::vector<double> gains;  // gains[l-1]
  std::vector<FixedLengthPolicy> policies;
};

inline int searchable_lengths(const ErrorSurface& surface, const DelayNetwork& net,
                              int buffer_size) {
  return std::min({buffer_size, surface.max_length(), net.max_length()});
}

/// Outer search over l in 1..min(B, L_max); ties go to the smaller length.
inline FixedAllResult solve_fixed_all(const ErrorSurface& surface, const DelayNetwork& net,
                                      int buffer_size, const SolveOptions& opt = {}) {
  const int lengths = searchable_lengths(surface, net, buffer_size);
  if (lengths < 1) throw ConfigError("no packet length fits the buffer");
  FixedAllResult out;
  for (int l = 1; l <= lengths; ++l) {
    out.policies.push_back(solve_fixed(surface, net, l, buffer_size, opt));
    out.gains.push_back(out.policies.back().gain);
  }
  int best = 0;
  for (int i = 1; i < lengths; ++i)
    if (out.gains[i] < out.gains[best]) best = i;
  out.best_length = best + 1;
  out.best = out.policies[best];
  return out;
}

struct BaselineResult {
  FixedLengthPolicy policy;  // solved on the memoryless approximation
  EpochStats true_stats;     // evaluated on the actual network
};

/// Policy designed as if delay states were i.i.d. with the stationary law,
/// then evaluated exactly on the true network.
inline BaselineResult solve_iid_baseline(const ErrorSurface& surface, const DelayNetwork& net,
                                         int l, int buffer_size, const SolveOptions& opt = {}) {
  const DelayNetwork iid = iid_approx_network(net);
  BaselineResult out;
  out.policy = solve_fixed(surface, iid, l, buffer_size, opt);
  out.true_stats =
      evaluate_fixed(surface, net, out.policy.decisions, resolve_tau_bound(surface, opt.tau_bound));
  return out;
}

}  // namespace aoisched
