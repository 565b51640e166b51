#pragma once

// Markov-modulated two-way delay: N delay states with a row-stochastic
// transition matrix, a length-dependent transmission-delay law and a
// feedback-delay law per state. Delay states are 0-based internally.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "aoisched/errors.hpp"
#include "aoisched/rng.hpp"

namespace aoisched {

/// Finite-support pmf over delays measured in whole slots (all >= 1).
class DelayLaw {
 public:
  struct Atom {
    int delay;
    double prob;
    friend bool operator==(const Atom&, const Atom&) = default;
  };

  DelayLaw() = default;

  explicit DelayLaw(const std::map<int, double>& pmf) {
    double total = 0.0;
    for (const auto& [delay, prob] : pmf) {
      if (delay < 1) throw ConfigError("delay support must be >= 1 slot");
      if (!(prob >= 0.0) || !std::isfinite(prob))
        throw ConfigError("delay probabilities must be finite and >= 0");
      if (prob > 0.0) atoms_.push_back({delay, prob});
      total += prob;
    }
    if (atoms_.empty() || std::abs(total - 1.0) > 1e-12)
      throw ConfigError("delay pmf must sum to 1");
    double acc = 0.0;
    for (const auto& a : atoms_) cumulative_.push_back(acc += a.prob);
  }

  static DelayLaw point_mass(int delay) { return DelayLaw({{delay, 1.0}}); }

  const std::vector<Atom>& atoms() const { return atoms_; }

  int max_delay() const { return atoms_.back().delay; }
  int min_delay() const { return atoms_.front().delay; }

  double mean() const {
    double m = 0.0;
    for (const auto& a : atoms_) m += a.delay * a.prob;
    return m;
  }

  int sample(Rng& rng) const {
    if (atoms_.size() == 1) return atoms_.front().delay;
    const double u = rng.uniform() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    const auto idx = std::min<std::size_t>(it - cumulative_.begin(), atoms_.size() - 1);
    return atoms_[idx].delay;
  }

  friend bool operator==(const DelayLaw& a, const DelayLaw& b) { return a.atoms_ == b.atoms_; }

 private:
  std::vector<Atom> atoms_;
  std::vector<double> cumulative_;
};

/// One (C_{i+1}, T_{i+1}(l), F_{i+1}) outcome given C_i.
struct EpochOutcome {
  int next_state;
  int transmission;
  int feedback;
  double prob;
};

namespace detail {

inline int gcd_int(int a, int b) { return std::gcd(a, b); }

/// Strong connectivity and aperiodicity of the positive-probability graph.
/// The period of an irreducible chain is the gcd of level(u) + 1 - level(v)
/// over all edges u -> v, with levels taken from a BFS tree.
inline bool is_ergodic(const std::vector<std::vector<double>>& p) {
  const int n = static_cast<int>(p.size());
  const auto reach = [&](bool reverse) {
    std::vector<int> level(n, -1);
    std::queue<int> q;
    level[0] = 0;
    q.push(0);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v = 0; v < n; ++v) {
        const double w = reverse ? p[v][u] : p[u][v];
        if (w > 0.0 && level[v] < 0) {
          level[v] = level[u] + 1;
          q.push(v);
        }
      }
    }
    return level;
  };
  const auto fwd = reach(false);
  const auto bwd = reach(true);
  for (int v = 0; v < n; ++v)
    if (fwd[v] < 0 || bwd[v] < 0) return false;
  int period = 0;
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (p[u][v] > 0.0) period = gcd_int(period, std::abs(fwd[u] + 1 - fwd[v]));
  return period == 1;
}

}  // namespace detail

class DelayNetwork {
 public:
  DelayNetwork() = default;

  /// trans[c][l-1] is the transmission law of state c for length l;
  /// fb[c] the feedback law of state c.
  DelayNetwork(std::vector<std::vector<double>> transition,
               std::vector<std::vector<DelayLaw>> trans, std::vector<DelayLaw> fb)
      : p_(std::move(transition)), trans_(std::move(trans)), fb_(std::move(fb)) {
    const std::size_t n = p_.size();
    if (n == 0) throw ConfigError("network needs at least one delay state");
    if (trans_.size() != n || fb_.size() != n)
      throw ConfigError("delay laws must be given for every delay state");
    for (const auto& row : p_) {
      if (row.size() != n) throw ConfigError("transition matrix must be square");
      double total = 0.0;
      for (double x : row) {
        if (!(x >= 0.0) || !std::isfinite(x))
          throw ConfigError("transition probabilities must be finite and >= 0");
        total += x;
      }
      if (std::abs(total - 1.0) > 1e-12) throw ConfigError("transition rows must sum to 1");
    }
    max_length_ = static_cast<int>(trans_.front().size());
    if (max_length_ < 1) throw ConfigError("transmission laws must cover length 1");
    for (const auto& per_len : trans_)
      if (static_cast<int>(per_len.size()) != max_length_)
        throw ConfigError("every state needs a transmission law per length");
    for (const auto& per_len : trans_)
      for (const auto& law : per_len)
        if (law.atoms().empty()) throw ConfigError("empty transmission law");
    for (const auto& law : fb_)
      if (law.atoms().empty()) throw ConfigError("empty feedback law");
    if (!detail::is_ergodic(p_)) throw ConfigError("not ergodic");
    row_cumulative_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (double x : p_[i]) row_cumulative_[i].push_back(acc += x);
    }
  }

  int num_states() const { return static_cast<int>(p_.size()); }
  int max_length() const { return max_length_; }
  double transition(int from, int to) const { return p_[from][to]; }
  const std::vector<std::vector<double>>& transition_matrix() const { return p_; }

  const DelayLaw& transmission(int state, int length) const {
    check(state, length);
    return trans_[state][length - 1];
  }
  const DelayLaw& feedback(int state) const {
    check(state, 1);
    return fb_[state];
  }

  int sample_next_state(int state, Rng& rng) const {
    const auto& cum = row_cumulative_[state];
    const double u = rng.uniform() * cum.back();
    int next = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    next = std::min(next, num_states() - 1);
    while (p_[state][next] <= 0.0 && next > 0) --next;
    return next;
  }

  void check(int state, int length) const {
    if (state < 0 || state >= num_states()) throw ConfigError("delay state out of range");
    if (length < 1 || length > max_length_) throw ConfigError("length out of range");
  }

 private:
  std::vector<std::vector<double>> p_;
  std::vector<std::vector<DelayLaw>> trans_;
  std::vector<DelayLaw> fb_;
  std::vector<std::vector<double>> row_cumulative_;
  int max_length_ = 0;
};

/// pi P = pi, sum(pi) = 1 via a direct solve with one equation replaced by
/// the normalization.
inline std::vector<double> stationary_distribution(const DelayNetwork& net) {
  const int n = net.num_states();
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = (i == j ? 1.0 : 0.0) - net.transition(j, i);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  m.row(n - 1).setOnes();
  rhs(n - 1) = 1.0;
  const Eigen::VectorXd pi = m.fullPivLu().solve(rhs);
  std::vector<double> out(pi.data(), pi.data() + n);
  for (double x : out)
    if (!(x > 0.0)) throw ConfigError("not ergodic");
  return out;
}

inline std::vector<double> stationary_distribution(const std::vector<std::vector<double>>& p) {
  const int n = static_cast<int>(p.size());
  if (!detail::is_ergodic(p)) throw ConfigError("not ergodic");
  std::vector<std::vector<DelayLaw>> trans(n, {DelayLaw::point_mass(1)});
  std::vector<DelayLaw> fb(n, DelayLaw::point_mass(1));
  return stationary_distribution(DelayNetwork(p, std::move(trans), std::move(fb)));
}

/// Joint law of (C_{i+1}, T_{i+1}(l), F_{i+1}) given C_i = state: the chain
/// moves first, then both delays are drawn from the new state's laws.
inline std::vector<EpochOutcome> epoch_law(const DelayNetwork& net, int state, int length) {
  net.check(state, length);
  std::vector<EpochOutcome> out;
  for (int next = 0; next < net.num_states(); ++next) {
    const double pn = net.transition(state, next);
    if (pn <= 0.0) continue;
    for (const auto& t : net.transmission(next, length).atoms())
      for (const auto& f : net.feedback(next).atoms())
        out.push_back({next, t.delay, f.delay, pn * t.prob * f.prob});
  }
  return out;
}

struct EpochSample {
  int next_state;
  int transmission;
  int feedback;
};

inline EpochSample sample_epoch(const DelayNetwork& net, int state, int length, Rng& rng) {
  net.check(state, length);
  const int next = net.sample_next_state(state, rng);
  const int t = net.transmission(next, length).sample(rng);
  const int f = net.feedback(next).sample(rng);
  return {next, t, f};
}

// ---------------------------------------------------------------------------
// Two-state presets.

enum class DelayVariant { plain, offset };

namespace detail {
/// ceil with a guard against products like 5 * 0.2 * 3 landing just above
/// an integer.
inline int slot_ceil(double x) { return static_cast<int>(std::ceil(x - 1e-9)); }
}  // namespace detail

/// State 1: T(l) = ceil(sigma l), F = 1. State 2: T(l) = ceil(5 sigma l)
/// (plain) or 5 + ceil(5 sigma l) (offset), F = 3. Delays are floored at one
/// slot; p_12 = p_21 = alpha / 2.
inline DelayNetwork make_two_state_network(double sigma, double alpha,
                                           DelayVariant variant = DelayVariant::plain,
                                           int max_length = 10) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be >= 0");
  if (!(alpha > 0.0 && alpha < 2.0)) throw ConfigError("invalid transition mass");
  if (max_length < 1) throw ConfigError("max_length must be >= 1");
  const double cross = alpha / 2.0;
  std::vector<std::vector<double>> p = {{1.0 - cross, cross}, {cross, 1.0 - cross}};
  std::vector<std::vector<DelayLaw>> trans(2);
  for (int l = 1; l <= max_length; ++l) {
    const int fast = std::max(1, detail::slot_ceil(sigma * l));
    int slow = std::max(1, detail::slot_ceil(5.0 * sigma * l));
    if (variant == DelayVariant::offset) slow = 5 + std::max(0, detail::slot_ceil(5.0 * sigma * l));
    trans[0].push_back(DelayLaw::point_mass(fast));
    trans[1].push_back(DelayLaw::point_mass(slow));
  }
  std::vector<DelayLaw> fb = {DelayLaw::point_mass(1), DelayLaw::point_mass(3)};
  return DelayNetwork(std::move(p), std::move(trans), std::move(fb));
}

/// Same delay laws, every transition row replaced by the stationary
/// distribution (the memoryless approximation of the chain).
inline DelayNetwork iid_approx_network(const DelayNetwork& net) {
  const auto pi = stationary_distribution(net);
  const int n = net.num_states();
  std::vector<std::vector<double>> p(n, pi);
  std::vector<std::vector<DelayLaw>> trans(n);
  std::vector<DelayLaw> fb;
  for (int c = 0; c < n; ++c) {
    for (int l = 1; l <= net.max_length(); ++l) trans[c].push_back(net.transmission(c, l));
    fb.push_back(net.feedback(c));
  }
  // Renormalize against rounding so the row-sum check holds at 1e-12.
  for (auto& row : p) {
    const double s = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& x : row) x /= s;
  }
  return DelayNetwork(std::move(p), std::move(trans), std::move(fb));
}

}  // namespace aoisched
