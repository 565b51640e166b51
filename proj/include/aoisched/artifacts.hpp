#pragma once

// JSON and CSV artifacts: policies, simulation results, traces and sweeps.
// Delay states are 1-based in every file.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "aoisched/errors.hpp"
#include "aoisched/fixed_solver.hpp"
#include "aoisched/simulator.hpp"
#include "aoisched/variable_solver.hpp"

namespace aoisched {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

inline json to_json(const FixedLengthPolicy& p, int buffer_size) {
  json buffer = json::object();
  for (std::size_t c = 0; c < p.decisions.buffer.size(); ++c)
    buffer[std::to_string(c + 1)] = p.decisions.buffer[c];
  return {{"schema_version", kSchemaVersion},
          {"kind", "fixed"},
          {"length", p.length()},
          {"gain", p.gain},
          {"B", buffer_size},
          {"buffer", buffer},
          {"wait_table", p.decisions.wait},
          {"delta_max", p.delta_max},
          {"tau_bound", p.tau_bound},
          {"bisection_iterations", p.iterations},
          {"residual", p.residual}};
}

struct LoadedFixedPolicy {
  FixedLengthPolicy policy;
  int buffer_size = 1;
};

namespace detail {
inline void check_schema(const json& j, const char* kind) {
  if (!j.is_object() || j.value("schema_version", 0) != kSchemaVersion)
    throw ConfigError("unsupported policy artifact (schema_version must be 1)");
  if (j.value("kind", std::string()) != kind)
    throw ConfigError(std::string("policy artifact is not of kind '") + kind + "'");
}
}  // namespace detail

inline LoadedFixedPolicy fixed_policy_from_json(const json& j) {
  detail::check_schema(j, "fixed");
  try {
    LoadedFixedPolicy out;
    auto& p = out.policy;
    p.gain = j.at("gain").get<double>();
    p.delta_max = j.at("delta_max").get<int>();
    p.tau_bound = j.at("tau_bound").get<int>();
    p.decisions.length = j.at("length").get<int>();
    p.decisions.wait = j.at("wait_table").get<std::vector<std::vector<int>>>();
    const auto& buffer = j.at("buffer");
    p.decisions.buffer.assign(p.decisions.wait.size(), 0);
    for (std::size_t c = 0; c < p.decisions.wait.size(); ++c)
      p.decisions.buffer[c] = buffer.at(std::to_string(c + 1)).get<int>();
    out.buffer_size = j.value("B", p.decisions.length + *std::max_element(p.decisions.buffer.begin(),
                                                                           p.decisions.buffer.end()));
    return out;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed fixed policy artifact: ") + e.what());
  }
}

inline json to_json(const VariableLengthPolicy& p) {
  json actions = json::array();
  for (std::size_t i = 0; i < p.actions.size(); ++i) {
    const std::size_t per_c = static_cast<std::size_t>(p.max_length) * (p.delta_max + 1);
    const int c = static_cast<int>(i / per_c);
    const int d = static_cast<int>((i % per_c) / (p.delta_max + 1)) + 1;
    const int delta = static_cast<int>(i % (p.delta_max + 1));
    const auto& a = p.actions[i];
    actions.push_back({{"delta", delta}, {"d", d}, {"c", c + 1}, {"tau", a.tau}, {"l", a.length}, {"b", a.buffer}});
  }
  return {{"schema_version", kSchemaVersion},
          {"kind", "variable"},
          {"gain", p.gain},
          {"delta_max", p.delta_max},
          {"B", p.buffer_size},
          {"max_length", p.max_length},
          {"n_states", p.num_states},
          {"tau_bound", p.tau_bound},
          {"variant", to_string(p.variant)},
          {"iterations", static_cast<int>(p.gain_history.size())},
          {"gain_history", p.gain_history},
          {"residual", p.residual},
          {"clamp_events", p.clamp_events},
          {"actions", actions},
          {"h", p.h},
          {"timings",
           {{"improvement_seconds", p.timings.improvement_seconds},
            {"evaluation_seconds", p.timings.evaluation_seconds},
            {"index_setup_seconds", p.timings.index_setup_seconds},
            {"rounds", p.timings.rounds}}}};
}

inline VariableLengthPolicy variable_policy_from_json(const json& j) {
  detail::check_schema(j, "variable");
  try {
    VariableLengthPolicy p;
    p.gain = j.at("gain").get<double>();
    p.delta_max = j.at("delta_max").get<int>();
    p.buffer_size = j.at("B").get<int>();
    p.max_length = j.at("max_length").get<int>();
    p.num_states = j.at("n_states").get<int>();
    p.tau_bound = j.value("tau_bound", p.delta_max);
    p.h = j.value("h", std::vector<double>{});
    const std::size_t n = static_cast<std::size_t>(p.delta_max + 1) * p.max_length * p.num_states;
    p.actions.assign(n, Action{});
    std::vector<bool> seen(n, false);
    for (const auto& a : j.at("actions")) {
      const int delta = a.at("delta").get<int>();
      const int d = a.at("d").get<int>();
      const int c = a.at("c").get<int>() - 1;
      if (delta < 0 || delta > p.delta_max || d < 1 || d > p.max_length || c < 0 || c >= p.num_states)
        throw ConfigError("policy action outside the declared state space");
      const std::size_t i = p.index(delta, d, c);
      p.actions[i] = {a.at("tau").get<int>(), a.at("l").get<int>(), a.at("b").get<int>()};
      seen[i] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
      throw ConfigError("policy artifact does not cover every state");
    return p;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed variable policy artifact: ") + e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw ConfigError("write failed: " + path);
}

inline json to_json(const ReplicationResult& r, const std::string& policy) {
  return {{"schema_version", kSchemaVersion},
          {"policy", policy},
          {"horizon", r.horizon},
          {"reps", r.reps},
          {"mean", r.mean},
          {"std", r.std},
          {"ci95", r.ci95},
          {"epoch_count", r.epoch_count},
          {"values", r.values}};
}

inline void write_trace_csv(const std::vector<EpochRecord>& trace, std::ostream& os) {
  os << "epoch,S,D,A,c,b,l,tau\n";
  for (const auto& e : trace)
    os << e.epoch << ',' << e.S << ',' << e.D << ',' << e.A << ',' << e.c + 1 << ',' << e.b << ','
       << e.l << ',' << e.tau << '\n';
}

struct SweepRow {
  double x = 0.0;
  std::string policy;
  double value = std::nan("");
  double ci95 = 0.0;
  std::string method;
  std::string error;
};

namespace detail {
/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}
}  // namespace detail

inline void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os) {
  os << "x,policy,value,ci95,method,error\n";
  for (const auto& r : rows) {
    os << detail::format_double(r.x) << ',' << detail::csv_field(r.policy) << ',';
    if (std::isfinite(r.value)) os << detail::format_double(r.value);
    os << ',' << detail::format_double(r.ci95) << ',' << r.method << ',' << detail::csv_field(r.error) << '\n';
  }
}

}  // namespace aoisched
