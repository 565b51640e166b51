#pragma once

// Index function gamma(delta, d, l, c) and the threshold waiting rule shared
// by the fixed-length and variable-length schedulers.

#include <algorithm>
#include <limits>
#include <span>
#include <vector>

#include "aoisched/delay_model.hpp"
#include "aoisched/error_model.hpp"
#include "aoisched/errors.hpp"

namespace aoisched {

/// One length-column of a surface with O(1) range sums; ages past delta_max
/// repeat the last row.
class ErrorColumn {
 public:
  ErrorColumn() = default;
  ErrorColumn(const ErrorSurface& surface, int length)
      : last_(surface(surface.delta_max(), length)) {
    const int n = surface.delta_max() + 1;
    values_.resize(n);
    prefix_.assign(n + 1, 0.0L);
    for (int d = 0; d < n; ++d) {
      values_[d] = surface.at(d, length);
      prefix_[d + 1] = prefix_[d] + values_[d];
    }
  }

  double operator()(long delta) const {
    return delta >= static_cast<long>(values_.size()) ? last_ : values_[std::max(0L, delta)];
  }

  /// sum_{k < count} eps(start + k) for start >= 0.
  double sum(long start, long count) const {
    if (count <= 0) return 0.0;
    return static_cast<double>(prefix_at(start + count) - prefix_at(start));
  }

  double tail_value() const { return last_; }
  int delta_max() const { return static_cast<int>(values_.size()) - 1; }

 private:
  long double prefix_at(long n) const {
    const long size = static_cast<long>(values_.size());
    if (n <= size) return prefix_[n];
    return prefix_[size] + static_cast<long double>(n - size) * last_;
  }

  std::vector<double> values_;
  std::vector<long double> prefix_;
  double last_ = 0.0;
};

/// m(x) = E[eps(x + T_{i+1}(l), d) | C_i = c] for x in [0, delta_max]; for
/// larger x the sequence is constant at the last entry.
inline std::vector<double> expected_error_sequence(const ErrorSurface& surface,
                                                   const DelayNetwork& net, int d, int l, int c) {
  const ErrorColumn col(surface, d);
  net.check(c, l);
  std::vector<std::pair<int, double>> delays;  // marginal of T_{i+1}(l)
  for (int next = 0; next < net.num_states(); ++next) {
    const double pn = net.transition(c, next);
    if (pn <= 0.0) continue;
    for (const auto& a : net.transmission(next, l).atoms()) delays.emplace_back(a.delay, pn * a.prob);
  }
  std::vector<double> m(surface.delta_max() + 1);
  for (int x = 0; x <= surface.delta_max(); ++x) {
    double acc = 0.0;
    for (const auto& [t, p] : delays) acc += p * col(x + t);
    m[x] = acc;
  }
  return m;
}

/// gamma(delta) = min_{tau in 1..tau_bound} (1/tau) sum_{k<tau} m(delta + k)
/// for every delta in [0, delta_max], from the prefix sums of m.
inline std::vector<double> index_column(std::span<const double> m, int tau_bound) {
  if (tau_bound < 1) throw ConfigError("tau_bound must be >= 1");
  const long n = static_cast<long>(m.size());
  std::vector<long double> prefix(n + 1, 0.0L);
  for (long x = 0; x < n; ++x) prefix[x + 1] = prefix[x] + m[x];
  const double tail = m.back();
  const auto pre = [&](long y) {
    return y <= n ? prefix[y] : prefix[n] + static_cast<long double>(y - n) * tail;
  };
  std::vector<double> gamma(n);
  for (long delta = 0; delta < n; ++delta) {
    const long double base = pre(delta);
    double best = std::numeric_limits<double>::infinity();
    // Past the end of m every added term equals `tail`, so the running average
    // is monotone there and only the endpoint tau_bound needs checking.
    const long reach = std::min<long>(tau_bound, std::max<long>(1, n - delta));
    for (long tau = 1; tau <= reach; ++tau)
      best = std::min(best, static_cast<double>((pre(delta + tau) - base) / tau));
    if (reach < tau_bound)
      best = std::min(best, static_cast<double>((pre(delta + tau_bound) - base) / tau_bound));
    gamma[delta] = best;
  }
  return gamma;
}

/// Smallest k >= 0 with gamma(delta + k) >= beta, where gamma past the end of
/// the column repeats its last entry. Throws ThresholdNotCrossed if k would
/// exceed tau_bound.
inline int first_crossing(std::span<const double> gamma, long delta, double beta, int tau_bound) {
  const long n = static_cast<long>(gamma.size());
  for (long k = 0; k <= tau_bound; ++k) {
    const long x = std::min(delta + k, n - 1);
    if (gamma[x] >= beta) return static_cast<int>(k);
    if (delta + k >= n - 1) break;  // constant from here on
  }
  throw ThresholdNotCrossed();
}

/// Waiting time for every delta in the column by a backward sweep; -1 marks
/// ages whose threshold is not reached within tau_bound.
inline std::vector<int> threshold_waits_partial(std::span<const double> gamma, double beta,
                                                int tau_bound) {
  const long n = static_cast<long>(gamma.size());
  std::vector<int> waits(n, -1);
  long next_ok = -1;
  for (long delta = n - 1; delta >= 0; --delta) {
    if (gamma[delta] >= beta) next_ok = delta;
    if (next_ok >= 0 && next_ok - delta <= tau_bound) waits[delta] = static_cast<int>(next_ok - delta);
  }
  return waits;
}

/// As threshold_waits_partial, but every age must cross.
inline std::vector<int> threshold_waits(std::span<const double> gamma, double beta, int tau_bound) {
  auto waits = threshold_waits_partial(gamma, beta, tau_bound);
  if (std::find(waits.begin(), waits.end(), -1) != waits.end()) throw ThresholdNotCrossed();
  return waits;
}

/// gamma(delta, d, l, c) for a single state.
inline double index_gamma(const ErrorSurface& surface, const DelayNetwork& net, long delta, int d,
                          int l, int c, int tau_bound) {
  if (delta < 0) throw ConfigError("delta must be >= 0");
  const auto m = expected_error_sequence(surface, net, d, l, c);
  const auto gamma = index_column(m, tau_bound);
  return gamma[std::min<long>(delta, static_cast<long>(gamma.size()) - 1)];
}

}  // namespace aoisched
