#pragma once

// Independent reference computations for the test suites. Nothing here calls
// into the solver internals: expectations are enumerated directly from the
// transition matrix and delay laws, and Monte-Carlo oracles use their own
// generators.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "aoisched/delay_model.hpp"
#include "aoisched/error_model.hpp"

namespace oracle {

using aoisched::DelayNetwork;
using aoisched::ErrorSurface;

inline double eps(const ErrorSurface& s, long delta, int l) {
  return s.at(static_cast<int>(std::min<long>(std::max(0L, delta), s.delta_max())), l);
}

inline double naive_sum(const ErrorSurface& s, long start, long count, int l) {
  double acc = 0.0;
  for (long k = 0; k < count; ++k) acc += eps(s, start + k, l);
  return acc;
}

/// Stationary law by power iteration.
inline std::vector<double> stationary(const DelayNetwork& net) {
  const int n = net.num_states();
  std::vector<double> pi(n, 1.0 / n), next(n);
  for (int it = 0; it < 200000; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) next[j] += 0.5 * pi[i] * net.transition(i, j);
    for (int j = 0; j < n; ++j) next[j] += 0.5 * pi[j];  // lazy chain, same fixed point
    double diff = 0.0;
    for (int j = 0; j < n; ++j) diff = std::max(diff, std::abs(next[j] - pi[j]));
    pi.swap(next);
    if (diff < 1e-16) break;
  }
  return pi;
}

/// E[eps(x + T', d) | C = c] with T' the next epoch's transmission delay.
inline double expected_error(const ErrorSurface& s, const DelayNetwork& net, long x, int d, int l, int c) {
  double acc = 0.0;
  for (int n = 0; n < net.num_states(); ++n)
    for (const auto& a : net.transmission(n, l).atoms()) acc += net.transition(c, n) * a.prob * eps(s, x + a.delay, d);
  return acc;
}

/// Exhaustive min over tau of running averages.
inline double gamma(const ErrorSurface& s, const DelayNetwork& net, long delta, int d, int l, int c, int tau_bound) {
  double best = std::numeric_limits<double>::infinity(), acc = 0.0;
  for (int tau = 1; tau <= tau_bound; ++tau) {
    acc += expected_error(s, net, delta + tau - 1, d, l, c);
    best = std::min(best, acc / tau);
  }
  return best;
}

/// Linear scan; -1 when no k <= tau_bound crosses.
inline int wait(const ErrorSurface& s, const DelayNetwork& net, long delta, int d, int l, int c, double beta,
                int tau_bound) {
  for (int k = 0; k <= tau_bound; ++k)
    if (gamma(s, net, delta + k, d, l, c, tau_bound) >= beta) return k;
  return -1;
}

struct Decisions {
  std::vector<int> buffer;             // per state
  std::vector<std::vector<int>> wait;  // [c][delta], -1 if never crossed
};

/// Threshold tables and buffer positions for fixed l, straight from the
/// definitions.
inline Decisions fixed_decisions(const ErrorSurface& s, const DelayNetwork& net, int l, double beta, int B,
                                 int tau_bound) {
  const int n = net.num_states();
  Decisions out;
  out.wait.assign(n, std::vector<int>(s.delta_max() + 1));
  for (int c = 0; c < n; ++c)
    for (int x = 0; x <= s.delta_max(); ++x) out.wait[c][x] = wait(s, net, x, l, l, c, beta, tau_bound);
  const auto w = [&](long x, int c) { return out.wait[c][std::min<long>(x, s.delta_max())]; };
  for (int c = 0; c < n; ++c) {
    int best_b = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int b = 0; b <= B - l; ++b) {
      double v = 0.0;
      for (int c1 = 0; c1 < n; ++c1)
        for (const auto& t1 : net.transmission(c1, l).atoms())
          for (const auto& f1 : net.feedback(c1).atoms())
            for (int c2 = 0; c2 < n; ++c2)
              for (const auto& t2 : net.transmission(c2, l).atoms()) {
                const double p = net.transition(c, c1) * t1.prob * f1.prob * net.transition(c1, c2) * t2.prob;
                if (p == 0.0) continue;
                const long age = b + t1.delay;
                const long span = f1.delay + w(age + f1.delay, c1) + t2.delay;
                v += p * (naive_sum(s, age, span, l) - beta * span);
              }
      if (b == 0 || v < best - 1e-12 * (1.0 + std::abs(best))) {
        best = v;
        best_b = b;
      }
    }
    out.buffer.push_back(best_b);
  }
  return out;
}

/// Stationary epoch cost and length by enumerating (c_prev, c_i, c_next).
inline std::pair<double, double> epoch_stats(const ErrorSurface& s, const DelayNetwork& net, int l,
                                             const Decisions& dec) {
  const int n = net.num_states();
  const auto pi = stationary(net);
  double cost = 0.0, len = 0.0;
  for (int c0 = 0; c0 < n; ++c0)
    for (int c1 = 0; c1 < n; ++c1)
      for (const auto& t1 : net.transmission(c1, l).atoms())
        for (const auto& f1 : net.feedback(c1).atoms())
          for (int c2 = 0; c2 < n; ++c2)
            for (const auto& t2 : net.transmission(c2, l).atoms())
              for (const auto& f2 : net.feedback(c2).atoms()) {
                const double p = pi[c0] * net.transition(c0, c1) * t1.prob * f1.prob * net.transition(c1, c2) *
                                 t2.prob * f2.prob;
                if (p == 0.0) continue;
                const long theta = dec.buffer[c0] + t1.delay + f1.delay;
                const int tau = dec.wait[c1][std::min<long>(theta, s.delta_max())];
                cost += p * (naive_sum(s, theta, tau + t2.delay, l) +
                             naive_sum(s, dec.buffer[c1] + t2.delay, f2.delay, l));
                len += p * (tau + t2.delay + f2.delay);
              }
  return {cost, len};
}

/// Bellman Q for the variable-length SMDP, from the definitions.
struct Smdp {
  const ErrorSurface& s;
  const DelayNetwork& net;
  int B;
  int L;  // max length
  int index(int delta, int d, int c) const { return (c * L + (d - 1)) * (s.delta_max() + 1) + delta; }
  double q(int delta, int d, int c, int tau, int l, int b, double beta, const std::vector<double>& h) const {
    double v = 0.0;
    for (int c1 = 0; c1 < net.num_states(); ++c1)
      for (const auto& t : net.transmission(c1, l).atoms())
        for (const auto& f : net.feedback(c1).atoms()) {
          const double p = net.transition(c, c1) * t.prob * f.prob;
          if (p == 0.0) continue;
          const long next = std::min<long>(b + t.delay + f.delay, s.delta_max());
          v += p * (naive_sum(s, delta, tau + t.delay, d) - beta * (tau + t.delay) +
                    naive_sum(s, b + t.delay, f.delay, l) - beta * f.delay +
                    h[index(static_cast<int>(next), l, c1)]);
        }
    return v;
  }
};

/// Gaussian AR process Y with observations V = Y + N; returns (Y, V)
/// after a burn-in.
inline std::pair<std::vector<double>, std::vector<double>> simulate_ar(const std::vector<double>& a, double w_var,
                                                                       double n_var, std::size_t n,
                                                                       std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> w(0.0, std::sqrt(w_var)), noise(0.0, std::sqrt(n_var));
  const std::size_t p = a.size(), burn = 20000;
  std::vector<double> y(n + burn + p, 0.0);
  for (std::size_t t = p; t < y.size(); ++t) {
    double v = w(gen);
    for (std::size_t k = 0; k < p; ++k) v += a[k] * y[t - 1 - k];
    y[t] = v;
  }
  std::vector<double> ys(y.end() - n, y.end()), vs(n);
  for (std::size_t t = 0; t < n; ++t) vs[t] = ys[t] + noise(gen);
  return {ys, vs};
}

/// Least-squares residual MSE of Y_t on (V_{t-delta}, ..., V_{t-delta-l+1})
/// for the whole (delta, l) grid, from sample moments.
inline std::vector<std::vector<double>> regression_errors(const std::vector<double>& y, const std::vector<double>& v,
                                                          int delta_max, int max_length) {
  const int lags = delta_max + max_length;
  const std::size_t start = lags;
  const std::size_t n = y.size() - start;
  Eigen::VectorXd cross = Eigen::VectorXd::Zero(lags);
  double yy = 0.0;
  for (std::size_t t = start; t < y.size(); ++t) {
    yy += y[t] * y[t];
    for (int m = 0; m < lags; ++m) cross(m) += y[t] * v[t - m];
  }
  // Each delta gets its own sample Gram matrix over the same t range.
  std::vector<std::vector<double>> out(delta_max + 1, std::vector<double>(max_length));
  for (int delta = 0; delta <= delta_max; ++delta) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(max_length, max_length);
    for (std::size_t t = start; t < y.size(); ++t)
      for (int j = 0; j < max_length; ++j) {
        const double vj = v[t - delta - j];
        for (int k = 0; k <= j; ++k) g(j, k) += vj * v[t - delta - k];
      }
    for (int l = 1; l <= max_length; ++l) {
      Eigen::MatrixXd gl = g.topLeftCorner(l, l).selfadjointView<Eigen::Lower>();
      const Eigen::VectorXd c = cross.segment(delta, l);
      const Eigen::VectorXd coef = gl.ldlt().solve(c);
      out[delta][l - 1] = (yy - c.dot(coef)) / static_cast<double>(n);
    }
  }
  return out;
}

}  // namespace oracle
