#pragma once

// Slot-level simulation of the selection-from-buffer system under an
// arbitrary decision rule, plus independent replications.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "aoisched/delay_model.hpp"
#include "aoisched/error_model.hpp"
#include "aoisched/errors.hpp"
#include "aoisched/fixed_solver.hpp"
#include "aoisched/index.hpp"
#include "aoisched/rng.hpp"
#include "aoisched/variable_solver.hpp"

namespace aoisched {

/// Maps (AoI at the ACK, delivered length, delay state of the finished
/// epoch) to the next (tau, l, b).
struct DecisionRule {
  std::function<Action(long delta, int d, int c)> decide;
  int buffer_size = 1;
  std::string name;
};

inline DecisionRule fixed_rule(const FixedDecisions& decisions, int buffer_size,
                               std::string name = "fixed") {
  return {[decisions](long delta, int, int c) {
            return Action{decisions.wait_at(delta, c), decisions.length, decisions.buffer[c]};
          },
          buffer_size, std::move(name)};
}

inline DecisionRule variable_rule(const VariableLengthPolicy& policy,
                                  std::string name = "variable") {
  return {[policy](long delta, int d, int c) { return policy.action(delta, d, c); },
          policy.buffer_size, std::move(name)};
}

inline DecisionRule zero_wait_rule(int length, int buffer_size) {
  if (length < 1 || length > buffer_size) throw ConfigError("length out of range");
  return {[length](long, int, int) { return Action{0, length, 0}; }, buffer_size,
          "zero-wait-l" + std::to_string(length)};
}

struct SimOptions {
  long initial_age = 1;   // Delta(0)
  int initial_state = 0;  // c_1
  bool record_trace = false;
};

struct EpochRecord {
  long epoch = 0;
  long S = 0, D = 0, A = 0;
  int c = 0;  // delay state governing this epoch's delays
  int b = 0, l = 1, tau = 0;
  long double cost = 0.0L;  // slot sum over [A_{i-1}, A_i), A_0 = 0
};

struct SimResult {
  long horizon = 0;
  double time_avg_error = 0.0;
  long double total_error = 0.0L;
  long epoch_count = 0;  // ACKs received within the horizon
  std::vector<EpochRecord> trace;
};

inline SimResult simulate(const DecisionRule& rule, const ErrorSurface& surface,
                          const DelayNetwork& net, long horizon, Rng& rng,
                          const SimOptions& opt = {}) {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (opt.initial_state < 0 || opt.initial_state >= net.num_states())
    throw ConfigError("delay state out of range");
  const int max_length = std::min({rule.buffer_size, surface.max_length(), net.max_length()});
  std::vector<ErrorColumn> columns;
  for (int l = 1; l <= max_length; ++l) columns.emplace_back(surface, l);

  SimResult out;
  out.horizon = horizon;

  long origin = -opt.initial_age;  // Delta(t) = t - origin
  int d = 1;
  int c = opt.initial_state;
  long t = 0;
  long start = 0;  // S_i
  Action act{0, 1, 0};
  bool first = true;
  long double total = 0.0L;

  for (long epoch = 1; t < horizon; ++epoch) {
    if (!first) c = net.sample_next_state(c, rng);
    first = false;
    const int trans = net.transmission(c, act.length).sample(rng);
    const int fb = net.feedback(c).sample(rng);
    const long delivery = start + trans;
    const long ack = delivery + fb;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.S = start;
    rec.D = delivery;
    rec.A = ack;
    rec.c = c;
    rec.b = act.buffer;
    rec.l = act.length;
    rec.tau = act.tau;

    long double epoch_cost = 0.0L;
    for (; t < std::min(delivery, horizon); ++t) epoch_cost += columns[d - 1](t - origin);
    if (t == delivery) {
      origin = start - act.buffer;
      d = act.length;
    }
    for (; t < std::min(ack, horizon); ++t) epoch_cost += columns[d - 1](t - origin);
    total += epoch_cost;
    rec.cost = epoch_cost;
    if (opt.record_trace) out.trace.push_back(rec);
    if (t < ack) break;  // horizon reached inside the epoch
    ++out.epoch_count;

    act = rule.decide(ack - origin, d, c);
    if (act.tau < 0 || act.length < 1 || act.length > max_length || act.buffer < 0 ||
        act.buffer > rule.buffer_size - act.length) {
      std::ostringstream msg;
      msg << "invalid action at epoch " << epoch << ": tau=" << act.tau << ", l=" << act.length
          << ", b=" << act.buffer;
      throw ConfigError(msg.str());
    }
    // The transmitter idles through the wait; those slots belong to the next epoch.
    start = ack + act.tau;
  }
  out.total_error = total;
  out.time_avg_error = static_cast<double>(total / horizon);
  return out;
}

inline SimResult simulate(const DecisionRule& rule, const ErrorSurface& surface,
                          const DelayNetwork& net, long horizon, std::uint64_t seed,
                          const SimOptions& opt = {}) {
  Rng rng(seed);
  return simulate(rule, surface, net, horizon, rng, opt);
}

struct ReplicationResult {
  long horizon = 0;
  int reps = 0;
  double mean = 0.0;
  double std = 0.0;   // sample standard deviation across replications
  double ci95 = 0.0;  // half-width of the normal-approximation interval
  long epoch_count = 0;
  std::vector<double> values;
};

inline ReplicationResult summarize(std::vector<double> values, long horizon, long epochs) {
  ReplicationResult r;
  r.horizon = horizon;
  r.reps = static_cast<int>(values.size());
  r.epoch_count = epochs;
  long double sum = 0.0L;
  for (double v : values) sum += v;
  r.mean = static_cast<double>(sum / r.reps);
  if (r.reps > 1) {
    long double ss = 0.0L;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(static_cast<double>(ss / (r.reps - 1)));
    r.ci95 = 1.959963984540054 * r.std / std::sqrt(static_cast<double>(r.reps));
  }
  r.values = std::move(values);
  return r;
}

/// Replication r runs on Rng::substream(base_seed, r); with reps = 1 it uses
/// the base seed directly, so it reproduces simulate(). Results do not depend
/// on the thread count.
inline ReplicationResult replicate(const DecisionRule& rule, const ErrorSurface& surface,
                                   const DelayNetwork& net, long horizon,
                                   std::uint64_t base_seed, int reps, const SimOptions& opt = {},
                                   unsigned threads = 0) {
  if (reps < 1) throw ConfigError("reps must be >= 1");
  SimOptions quiet = opt;
  quiet.record_trace = false;
  std::vector<double> values(reps);
  std::vector<long> epochs(reps);
  const auto run = [&](int r) {
    Rng rng = reps == 1 ? Rng(base_seed) : Rng::substream(base_seed, static_cast<std::uint64_t>(r));
    const auto res = simulate(rule, surface, net, horizon, rng, quiet);
    values[r] = res.time_avg_error;
    epochs[r] = res.epoch_count;
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(reps));
  if (threads <= 1) {
    for (int r = 0; r < reps; ++r) run(r);
  } else {
    std::vector<std::exception_ptr> failures(threads);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int r = static_cast<int>(w); r < reps; r += static_cast<int>(threads)) run(r);
        } catch (...) {
          failures[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& f : failures)
      if (f) std::rethrow_exception(f);
  }
  long total_epochs = 0;
  for (long e : epochs) total_epochs += e;
  return summarize(std::move(values), horizon, total_epochs);
}

}  // namespace aoisched
