#pragma once

// Variable-length scheduling as an average-cost SMDP over states
// (delta, d, c) at ACK instants, solved by policy iteration with either the
// joint (tau, l, b) improvement or the threshold-simplified improvement.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aoisched/delay_model.hpp"
#include "aoisched/error_model.hpp"
#include "aoisched/errors.hpp"
#include "aoisched/index.hpp"

namespace aoisched {

struct SmdpState {
  int delta = 0;  // AoI at the ACK instant, in [0, delta_max]
  int d = 1;      // length of the last delivered packet
  int c = 0;      // delay state of the completed epoch (0-based)
};

struct Action {
  int tau = 0;
  int length = 1;
  int buffer = 0;
  friend bool operator==(const Action&, const Action&) = default;
};

enum class Improvement { original, simplified };

inline const char* to_string(Improvement v) {
  return v == Improvement::original ? "original" : "simplified";
}

struct PolicyTimings {
  double improvement_seconds = 0.0;  // includes index-table setup for the simplified form
  double evaluation_seconds = 0.0;
  double index_setup_seconds = 0.0;
  int rounds = 0;
};

struct VariableLengthPolicy {
  double gain = 0.0;
  int delta_max = 0;
  int buffer_size = 1;
  int max_length = 1;
  int num_states = 1;
  int tau_bound = 1;
  Improvement variant = Improvement::simplified;
  std::vector<Action> actions;  // by state index
  std::vector<double> h;        // relative values, h(reference) = 0
  std::vector<double> gain_history;
  double residual = 0.0;  // max improvement in the last round
  long clamp_events = 0;  // transitions whose next AoI hit delta_max
  PolicyTimings timings;

  std::size_t index(int delta, int d, int c) const {
    return (static_cast<std::size_t>(c) * max_length + (d - 1)) * (delta_max + 1) + delta;
  }
  const Action& action(long delta, int d, int c) const {
    return actions[index(static_cast<int>(std::clamp<long>(delta, 0, delta_max)), d, c)];
  }
};

struct PolicyEvaluation {
  double gain = 0.0;
  std::vector<double> h;
  long clamp_events = 0;
};

/// State space, transition laws and Bellman-equation pieces shared by both
/// improvement variants.
class VariableModel {
 public:
  /// With `only_length`, actions are restricted to that packet length.
  VariableModel(const ErrorSurface& surface, const DelayNetwork& net, int buffer_size,
                int tau_bound, std::optional<int> only_length = std::nullopt)
      : surface_(surface),
        net_(net),
        buffer_size_(buffer_size),
        tau_bound_(tau_bound),
        delta_max_(surface.delta_max()),
        num_states_(net.num_states()) {
    if (buffer_size < 1) throw ConfigError("buffer size must be >= 1");
    if (tau_bound < 1) throw ConfigError("tau_bound must be >= 1");
    max_length_ = std::min({buffer_size, surface.max_length(), net.max_length()});
    if (only_length) {
      if (*only_length < 1 || *only_length > max_length_) throw ConfigError("length out of range");
      lengths_ = {*only_length};
    } else {
      for (int l = 1; l <= max_length_; ++l) lengths_.push_back(l);
    }
    for (int l = 1; l <= max_length_; ++l) columns_.emplace_back(surface, l);
    outcomes_.resize(num_states_);
    for (int c = 0; c < num_states_; ++c)
      for (int l = 1; l <= max_length_; ++l) outcomes_[c].push_back(epoch_law(net, c, l));
  }

  int delta_max() const { return delta_max_; }
  int buffer_size() const { return buffer_size_; }
  int max_length() const { return max_length_; }
  int num_states() const { return num_states_; }
  int tau_bound() const { return tau_bound_; }
  const std::vector<int>& lengths() const { return lengths_; }
  const ErrorSurface& surface() const { return surface_; }
  const DelayNetwork& network() const { return net_; }

  std::size_t state_count() const {
    return static_cast<std::size_t>(delta_max_ + 1) * max_length_ * num_states_;
  }
  std::size_t index(int delta, int d, int c) const {
    return (static_cast<std::size_t>(c) * max_length_ + (d - 1)) * (delta_max_ + 1) + delta;
  }
  SmdpState state(std::size_t i) const {
    const std::size_t per_c = static_cast<std::size_t>(max_length_) * (delta_max_ + 1);
    SmdpState s;
    s.c = static_cast<int>(i / per_c);
    const std::size_t rest = i % per_c;
    s.d = static_cast<int>(rest / (delta_max_ + 1)) + 1;
    s.delta = static_cast<int>(rest % (delta_max_ + 1));
    return s;
  }
  std::size_t reference_state() const { return index(delta_max_, 1, 0); }

  const ErrorColumn& column(int length) const { return columns_[length - 1]; }
  const std::vector<EpochOutcome>& outcomes(int c, int length) const {
    return outcomes_[c][length - 1];
  }

  /// E[sum_{k < tau + T'} (eps(delta + k, d) - beta) | C_i = c].
  double waiting_term(const SmdpState& s, int length, int tau, double beta) const {
    const auto& col = column(s.d);
    double v = 0.0;
    for (const auto& o : outcomes(s.c, length)) {
      const long n = tau + o.transmission;
      v += o.prob * (col.sum(s.delta, n) - beta * static_cast<double>(n));
    }
    return v;
  }

  /// E[sum_{k < F'} (eps(b + T' + k, l) - beta) + h(b + T' + F', l, C') | C_i = c].
  double continuation_term(int c, int length, int buffer, double beta,
                           const std::vector<double>& h) const {
    const auto& col = column(length);
    double v = 0.0;
    for (const auto& o : outcomes(c, length)) {
      const long delivered = buffer + o.transmission;
      const long next_age = std::min<long>(delivered + o.feedback, delta_max_);
      v += o.prob * (col.sum(delivered, o.feedback) - beta * o.feedback +
                     h[index(static_cast<int>(next_age), length, o.next_state)]);
    }
    return v;
  }

  double q_value(const SmdpState& s, const Action& a, double beta,
                 const std::vector<double>& h) const {
    return waiting_term(s, a.length, a.tau, beta) +
           continuation_term(s.c, a.length, a.buffer, beta, h);
  }

  void check_action(const Action& a) const {
    if (a.length < 1 || a.length > max_length_ || a.buffer < 0 ||
        a.buffer > buffer_size_ - a.length || a.tau < 0)
      throw ConfigError("invalid action");
  }

  /// gamma(., d, l, c) over [0, delta_max]; built on first use.
  const std::vector<double>& gamma(int d, int length, int c) const {
    if (gamma_.empty())
      gamma_.resize(static_cast<std::size_t>(max_length_) * max_length_ * num_states_);
    auto& slot = gamma_[(static_cast<std::size_t>(c) * max_length_ + (d - 1)) * max_length_ +
                        (length - 1)];
    if (slot.empty())
      slot = index_column(expected_error_sequence(surface_, net_, d, length, c), tau_bound_);
    return slot;
  }

  /// Solves h(s) = cost(s) - gain * time(s) + sum_s' P(s'|s) h(s') with
  /// h(reference) = 0; the reference column carries the gain.
  PolicyEvaluation evaluate(const std::vector<Action>& actions) const {
    const std::size_t n = state_count();
    if (actions.size() != n) throw ConfigError("policy does not cover the state space");
    const std::size_t ref = reference_state();
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(n * 6);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
    PolicyEvaluation out;
    for (std::size_t i = 0; i < n; ++i) {
      const SmdpState s = state(i);
      const Action& a = actions[i];
      check_action(a);
      const auto& col_d = column(s.d);
      const auto& col_l = column(a.length);
      double cost = 0.0;
      double time = 0.0;
      const auto row = static_cast<Eigen::Index>(i);
      if (i != ref) entries.emplace_back(row, row, 1.0);
      for (const auto& o : outcomes(s.c, a.length)) {
        cost += o.prob * (col_d.sum(s.delta, a.tau + o.transmission) +
                          col_l.sum(a.buffer + o.transmission, o.feedback));
        time += o.prob * (a.tau + o.transmission + o.feedback);
        long next_age = a.buffer + o.transmission + o.feedback;
        if (next_age > delta_max_) {
          ++out.clamp_events;
          next_age = delta_max_;
        }
        const std::size_t j = index(static_cast<int>(next_age), a.length, o.next_state);
        if (j != ref) entries.emplace_back(row, static_cast<Eigen::Index>(j), -o.prob);
      }
      entries.emplace_back(row, static_cast<Eigen::Index>(ref), time);
      rhs(row) = cost;
    }
    Eigen::SparseMatrix<double> m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    m.setFromTriplets(entries.begin(), entries.end());
    m.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(m);
    if (lu.info() != Eigen::Success) throw NumericalError("policy not unichain");
    const Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !x.allFinite()) throw NumericalError("policy not unichain");
    out.gain = x(static_cast<Eigen::Index>(ref));
    out.h.assign(x.data(), x.data() + n);
    out.h[ref] = 0.0;
    return out;
  }

 private:
  ErrorSurface surface_;
  DelayNetwork net_;
  int buffer_size_;
  int tau_bound_;
  int delta_max_;
  int num_states_;
  int max_length_ = 1;
  std::vector<int> lengths_;
  std::vector<ErrorColumn> columns_;
  std::vector<std::vector<std::vector<EpochOutcome>>> outcomes_;  // [c][l-1]
  mutable std::vector<std::vector<double>> gamma_;
};

namespace detail {
inline bool better(double candidate, double incumbent) {
  if (!std::isfinite(incumbent)) return candidate < incumbent;
  return candidate < incumbent - 1e-12 * (1.0 + std::abs(incumbent));
}
}  // namespace detail

/// Joint minimization over (l, b, tau); ties resolve to the smallest l, then
/// b, then tau.
inline Action improve_original(const VariableModel& model, const std::vector<double>& h,
                               double beta, const SmdpState& s) {
  Action best_action;
  double best = std::numeric_limits<double>::infinity();
  for (int l : model.lengths()) {
    for (int b = 0; b <= model.buffer_size() - l; ++b) {
      for (int tau = 0; tau <= model.tau_bound(); ++tau) {
        const Action a{tau, l, b};
        const double v = model.q_value(s, a, beta, h);
        if (detail::better(v, best)) {
          best = v;
          best_action = a;
        }
      }
    }
  }
  return best_action;
}

/// Threshold-simplified improvement for a fixed (h, beta): tau follows the
/// index rule for each candidate length, and the buffer term, which does not
/// depend on (delta, d), is minimized once per (l, c).
class SimplifiedImprover {
 public:
  SimplifiedImprover(const VariableModel& model, const std::vector<double>& h, double beta)
      : model_(model), beta_(beta) {
    const int L = model.max_length();
    const int N = model.num_states();
    waits_.resize(static_cast<std::size_t>(N) * L * L);
    continuation_.assign(static_cast<std::size_t>(N) * L, 0.0);
    best_buffer_.assign(static_cast<std::size_t>(N) * L, 0);
    for (int c = 0; c < N; ++c) {
      for (int l : model.lengths()) {
        for (int d = 1; d <= L; ++d)
          waits_[slot(d, l, c)] = threshold_waits_partial(model.gamma(d, l, c), beta, model.tau_bound());
        double best = std::numeric_limits<double>::infinity();
        int best_b = 0;
        for (int b = 0; b <= model.buffer_size() - l; ++b) {
          const double v = model.continuation_term(c, l, b, beta, h);
          if (detail::better(v, best)) {
            best = v;
            best_b = b;
          }
        }
        continuation_[static_cast<std::size_t>(c) * L + (l - 1)] = best;
        best_buffer_[static_cast<std::size_t>(c) * L + (l - 1)] = best_b;
      }
    }
  }

  /// Threshold wait; when the index never reaches beta inside the window,
  /// the waiting cost is still falling at tau_bound, so the best tau is
  /// found by direct search instead.
  int waiting_time(const SmdpState& s, int length) const {
    const int tau = waits_[slot(s.d, length, s.c)][s.delta];
    return tau >= 0 ? tau : direct_wait(s, length);
  }

  Action improve(const SmdpState& s) const {
    const int L = model_.max_length();
    Action best_action;
    double best = std::numeric_limits<double>::infinity();
    for (int l : model_.lengths()) {
      const int tau = waiting_time(s, l);
      const std::size_t k = static_cast<std::size_t>(s.c) * L + (l - 1);
      const double v = model_.waiting_term(s, l, tau, beta_) + continuation_[k];
      if (detail::better(v, best)) {
        best = v;
        best_action = {tau, l, best_buffer_[k]};
      }
    }
    return best_action;
  }

 private:
  int direct_wait(const SmdpState& s, int length) const {
    int best_tau = 0;
    double best = model_.waiting_term(s, length, 0, beta_);
    for (int tau = 1; tau <= model_.tau_bound(); ++tau) {
      const double v = model_.waiting_term(s, length, tau, beta_);
      if (detail::better(v, best)) {
        best = v;
        best_tau = tau;
      }
    }
    return best_tau;
  }

  std::size_t slot(int d, int l, int c) const {
    const int L = model_.max_length();
    return (static_cast<std::size_t>(c) * L + (d - 1)) * L + (l - 1);
  }

  const VariableModel& model_;
  double beta_;
  std::vector<std::vector<int>> waits_;
  std::vector<double> continuation_;
  std::vector<int> best_buffer_;
};

inline Action improve_simplified(const VariableModel& model, const std::vector<double>& h,
                                 double beta, const SmdpState& s) {
  return SimplifiedImprover(model, h, beta).improve(s);
}

/// min{k >= 0 : gamma(delta + k, d, l, c) >= beta}.
inline int waiting_time_var(const ErrorSurface& surface, const DelayNetwork& net, long delta,
                            int d, int l, int c, double beta, int tau_bound) {
  const auto gamma = index_column(expected_error_sequence(surface, net, d, l, c), tau_bound);
  return first_crossing(gamma, delta, beta, tau_bound);
}

inline PolicyEvaluation evaluate_policy(const VariableModel& model,
                                        const std::vector<Action>& actions) {
  return model.evaluate(actions);
}

struct PolicyIterationOptions {
  Improvement variant = Improvement::simplified;
  int max_iterations = 100;
  double gain_tol = 1e-9;
};

inline VariableLengthPolicy policy_iteration(const VariableModel& model,
                                             const PolicyIterationOptions& opt = {}) {
  using clock = std::chrono::steady_clock;
  const auto seconds = [](clock::duration d) { return std::chrono::duration<double>(d).count(); };

  VariableLengthPolicy policy;
  policy.delta_max = model.delta_max();
  policy.buffer_size = model.buffer_size();
  policy.max_length = model.max_length();
  policy.num_states = model.num_states();
  policy.tau_bound = model.tau_bound();
  policy.variant = opt.variant;
  policy.actions.assign(model.state_count(), Action{0, model.lengths().front(), 0});

  if (opt.variant == Improvement::simplified) {
    const auto t0 = clock::now();
    for (int c = 0; c < model.num_states(); ++c)
      for (int l : model.lengths())
        for (int d = 1; d <= model.max_length(); ++d) model.gamma(d, l, c);
    policy.timings.index_setup_seconds = seconds(clock::now() - t0);
    policy.timings.improvement_seconds += policy.timings.index_setup_seconds;
  }

  std::vector<double> prev_h;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    auto t0 = clock::now();
    PolicyEvaluation ev = model.evaluate(policy.actions);
    policy.timings.evaluation_seconds += seconds(clock::now() - t0);
    policy.gain = ev.gain;
    policy.h = ev.h;
    policy.clamp_events = ev.clamp_events;
    policy.gain_history.push_back(ev.gain);
    policy.timings.rounds = iter + 1;

    t0 = clock::now();
    std::optional<SimplifiedImprover> simplified;
    if (opt.variant == Improvement::simplified) simplified.emplace(model, ev.h, ev.gain);
    bool changed = false;
    double residual = 0.0;
    std::vector<Action> next = policy.actions;
    for (std::size_t i = 0; i < next.size(); ++i) {
      const SmdpState s = model.state(i);
      const Action cand = simplified ? simplified->improve(s)
                                     : improve_original(model, ev.h, ev.gain, s);
      model.check_action(cand);
      const double q_cur = model.q_value(s, policy.actions[i], ev.gain, ev.h);
      const double q_new = model.q_value(s, cand, ev.gain, ev.h);
      residual = std::max(residual, q_cur - q_new);
      if (detail::better(q_new, q_cur)) {
        next[i] = cand;
        changed = true;
      }
    }
    policy.timings.improvement_seconds += seconds(clock::now() - t0);
    policy.residual = residual;
    if (!changed) return policy;

    // Gain and relative values both stalled: the Bellman equation holds to
    // tolerance even though near-tied actions keep swapping.
    if (policy.gain_history.size() >= 2 && !prev_h.empty()) {
      const double dg = std::abs(policy.gain_history.back() -
                                 policy.gain_history[policy.gain_history.size() - 2]);
      double dh = 0.0;
      for (std::size_t i = 0; i < ev.h.size(); ++i) dh = std::max(dh, std::abs(ev.h[i] - prev_h[i]));
      if (dg < opt.gain_tol && dh < opt.gain_tol) return policy;
    }
    prev_h = ev.h;
    policy.actions = std::move(next);
  }
  std::ostringstream msg;
  msg << "policy iteration did not converge in " << opt.max_iterations
      << " rounds (last gain " << policy.gain << ", residual " << policy.residual << ")";
  throw NumericalError(msg.str());
}

inline VariableLengthPolicy policy_iteration(const ErrorSurface& surface, const DelayNetwork& net,
                                             int buffer_size, int tau_bound,
                                             Improvement variant = Improvement::simplified,
                                             std::optional<int> only_length = std::nullopt) {
  const VariableModel model(surface, net, buffer_size, tau_bound, only_length);
  PolicyIterationOptions opt;
  opt.variant = variant;
  return policy_iteration(model, opt);
}

}  // namespace aoisched
