#pragma once

// Inference-error surfaces eps(delta, l): construction from Gaussian AR
// sources (linear MMSE), CSV persistence and clamped evaluation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "aoisched/errors.hpp"

namespace aoisched {

/// Y_t = a_1 Y_{t-1} + ... + a_p Y_{t-p} + W_t observed as V_t = Y_t + N_t.
struct ArProcessSpec {
  std::vector<double> coefficients;  // a_1..a_p
  double noise_var = 1.0;            // Var(W_t)
  double obs_noise_var = 0.0;        // Var(N_t)

  int order() const { return static_cast<int>(coefficients.size()); }

  void validate() const {
    if (coefficients.empty()) throw ConfigError("AR order must be positive");
    for (double a : coefficients)
      if (!std::isfinite(a)) throw ConfigError("AR coefficient is not finite");
    if (!(noise_var > 0.0) || !std::isfinite(noise_var))
      throw ConfigError("noise_var must be > 0");
    if (!(obs_noise_var >= 0.0) || !std::isfinite(obs_noise_var))
      throw ConfigError("obs_noise_var must be >= 0");
  }
};

/// Tabulated eps(delta, l) for delta in [0, delta_max], l in [1, max_length].
/// Ages beyond delta_max evaluate to the last row.
class ErrorSurface {
 public:
  ErrorSurface() = default;

  ErrorSurface(int delta_max, int max_length, std::vector<double> values)
      : delta_max_(delta_max), max_length_(max_length), values_(std::move(values)) {
    if (delta_max_ < 0 || max_length_ < 1)
      throw ConfigError("error surface needs delta_max >= 0 and max_length >= 1");
    if (values_.size() != static_cast<std::size_t>(delta_max_ + 1) * max_length_)
      throw ConfigError("incomplete grid");
    for (double v : values_)
      if (!std::isfinite(v) || v < 0.0)
        throw ConfigError("error surface entries must be finite and >= 0");
  }

  int delta_max() const { return delta_max_; }
  int max_length() const { return max_length_; }

  /// Raw grid access; delta must lie in [0, delta_max].
  double at(int delta, int length) const {
    return values_[static_cast<std::size_t>(delta) * max_length_ + (length - 1)];
  }

  /// Clamped evaluation: eps(min(delta, delta_max), l).
  double operator()(long delta, int length) const {
    if (length < 1 || length > max_length_) throw ConfigError("length out of range");
    const long row = std::clamp<long>(delta, 0, delta_max_);
    return at(static_cast<int>(row), length);
  }

  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const ErrorSurface&, const ErrorSurface&) = default;

 private:
  int delta_max_ = 0;
  int max_length_ = 1;
  std::vector<double> values_;
};

inline double eval_error(const ErrorSurface& surface, long delta, int length) {
  return surface(delta, length);
}

namespace detail {

inline Eigen::MatrixXd companion(const ArProcessSpec& spec) {
  const int p = spec.order();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (int j = 0; j < p; ++j) a(0, j) = spec.coefficients[j];
  for (int i = 1; i < p; ++i) a(i, i - 1) = 1.0;
  return a;
}

}  // namespace detail

/// Stationary covariance P of the companion state (Y_t, ..., Y_{t-p+1}),
/// solving P = A P A^T + Q with Q = sigma_W^2 e_1 e_1^T by squaring
/// (P_{k+1} = P_k + A_k P_k A_k^T, A_{k+1} = A_k^2).
inline Eigen::MatrixXd ar_stationary_covariance(const ArProcessSpec& spec) {
  spec.validate();
  const int p = spec.order();
  const Eigen::MatrixXd a0 = detail::companion(spec);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(p, p);
  q(0, 0) = spec.noise_var;

  Eigen::MatrixXd a = a0;
  Eigen::MatrixXd cov = q;
  constexpr int kMaxSquarings = 64;
  bool converged = false;
  for (int k = 0; k < kMaxSquarings; ++k) {
    const Eigen::MatrixXd step = a * cov * a.transpose();
    cov += step;
    if (!cov.allFinite()) break;
    if (step.cwiseAbs().maxCoeff() <= 1e-17 * cov.cwiseAbs().maxCoeff()) {
      converged = true;
      break;
    }
    a = a * a;
  }
  if (!converged) throw NumericalError("unstable process");

  // One fixed-point sweep removes accumulated rounding from the squarings.
  for (int k = 0; k < 2; ++k) {
    cov = a0 * cov * a0.transpose() + q;
    cov = 0.5 * (cov + cov.transpose());
  }
  return cov;
}

/// Max-norm of P - A P A^T - Q.
inline double lyapunov_residual(const ArProcessSpec& spec, const Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd a = detail::companion(spec);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(spec.order(), spec.order());
  q(0, 0) = spec.noise_var;
  return (cov - a * cov * a.transpose() - q).cwiseAbs().maxCoeff();
}

/// r(k) = Cov(Y_t, Y_{t-k}) for k = 0..max_lag.
inline std::vector<double> ar_stationary_autocov(const ArProcessSpec& spec, int max_lag) {
  if (max_lag < 0) throw ConfigError("max_lag must be >= 0");
  const Eigen::MatrixXd cov = ar_stationary_covariance(spec);
  const int p = spec.order();
  std::vector<double> r(static_cast<std::size_t>(max_lag) + 1);
  // First row of P holds r(0..p-1); later lags follow the AR recursion,
  // which is the first row of A^k P.
  for (int k = 0; k <= max_lag; ++k) {
    if (k < p) {
      r[k] = cov(0, k);
    } else {
      double acc = 0.0;
      for (int j = 1; j <= p; ++j) acc += spec.coefficients[j - 1] * r[k - j];
      r[k] = acc;
    }
  }
  return r;
}

/// Linear-MMSE error of Y_t given (V_{t-delta}, ..., V_{t-delta-l+1}), from a
/// precomputed autocovariance with at least delta + l entries.
inline double lmmse_error(const std::vector<double>& autocov, double obs_noise_var, int delta,
                          int length) {
  if (length < 1) throw ConfigError("length out of range");
  if (delta < 0) throw ConfigError("delta must be >= 0");
  if (autocov.size() < static_cast<std::size_t>(delta + length))
    throw ConfigError("autocovariance too short");
  Eigen::MatrixXd gram(length, length);
  Eigen::VectorXd cross(length);
  for (int j = 0; j < length; ++j) {
    cross(j) = autocov[delta + j];
    for (int k = 0; k < length; ++k)
      gram(j, k) = autocov[std::abs(j - k)] + (j == k ? obs_noise_var : 0.0);
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericalError("singular covariance");
  const double r0 = autocov[0];
  const double err = r0 - cross.dot(llt.solve(cross));
  if (!std::isfinite(err)) throw NumericalError("singular covariance");
  return std::clamp(err, 0.0, r0);
}

inline double ar_inference_error(const ArProcessSpec& spec, int delta, int length) {
  if (length < 1) throw ConfigError("length out of range");
  if (delta < 0) throw ConfigError("delta must be >= 0");
  const auto r = ar_stationary_autocov(spec, delta + length);
  return lmmse_error(r, spec.obs_noise_var, delta, length);
}

inline ErrorSurface build_error_surface(const ArProcessSpec& spec, int delta_max,
                                        int max_length) {
  if (delta_max < 1 || max_length < 1)
    throw ConfigError("build_error_surface needs delta_max >= 1 and max_length >= 1");
  const auto r = ar_stationary_autocov(spec, delta_max + max_length);
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(delta_max + 1) * max_length);
  for (int delta = 0; delta <= delta_max; ++delta)
    for (int l = 1; l <= max_length; ++l)
      values.push_back(lmmse_error(r, spec.obs_noise_var, delta, l));
  return ErrorSurface(delta_max, max_length, std::move(values));
}

/// Lengths whose last two rows differ by more than tol, i.e. where the
/// clamped extension past delta_max is probably premature.
inline std::vector<std::string> tail_warnings(const ErrorSurface& surface, double tol = 1e-6) {
  std::vector<std::string> out;
  if (surface.delta_max() < 1) return out;
  for (int l = 1; l <= surface.max_length(); ++l) {
    const double gap = std::abs(surface.at(surface.delta_max(), l) -
                                surface.at(surface.delta_max() - 1, l));
    if (gap > tol) {
      std::ostringstream msg;
      msg << "error surface not settled at delta_max=" << surface.delta_max() << " for l=" << l
          << " (last-row gap " << gap << "); grid likely too short";
      out.push_back(msg.str());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: header "delta,length,error", one row per cell, delta-major.

inline void write_error_surface(const ErrorSurface& surface, std::ostream& os) {
  os << "delta,length,error\n";
  os << std::setprecision(17);
  for (int delta = 0; delta <= surface.delta_max(); ++delta)
    for (int l = 1; l <= surface.max_length(); ++l)
      os << delta << ',' << l << ',' << surface.at(delta, l) << '\n';
}

inline void save_error_surface(const ErrorSurface& surface, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open " + path + " for writing");
  write_error_surface(surface, os);
  if (!os) throw ConfigError("write failed: " + path);
}

inline ErrorSurface read_error_surface(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty error-surface file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "delta,length,error")
    throw ConfigError("error-surface header must be 'delta,length,error', got '" + line + "'");

  std::map<std::pair<int, int>, double> cells;
  int row = 1;  // file line number
  int delta_max = -1;
  int max_length = 0;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fail = [&](const std::string& why) {
      return ConfigError("line " + std::to_string(row) + ": " + why + " ('" + line + "')");
    };
    std::istringstream fields(line);
    std::string f_delta, f_length, f_error, extra;
    if (!std::getline(fields, f_delta, ',') || !std::getline(fields, f_length, ',') ||
        !std::getline(fields, f_error, ',') || std::getline(fields, extra, ','))
      throw fail("malformed row");
    char* end = nullptr;
    const long delta = std::strtol(f_delta.c_str(), &end, 10);
    if (f_delta.empty() || *end != '\0' || delta < 0) throw fail("bad delta");
    const long length = std::strtol(f_length.c_str(), &end, 10);
    if (f_length.empty() || *end != '\0' || length < 1) throw fail("bad length");
    const double err = std::strtod(f_error.c_str(), &end);
    if (f_error.empty() || *end != '\0') throw fail("bad error value");
    if (!std::isfinite(err) || err < 0.0) throw fail("negative or non-finite error");
    if (!cells.emplace(std::pair{static_cast<int>(delta), static_cast<int>(length)}, err).second)
      throw fail("duplicate pair");
    delta_max = std::max(delta_max, static_cast<int>(delta));
    max_length = std::max(max_length, static_cast<int>(length));
  }
  if (cells.empty()) throw ConfigError("error-surface file has no data rows");

  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(delta_max + 1) * max_length);
  for (int delta = 0; delta <= delta_max; ++delta) {
    for (int l = 1; l <= max_length; ++l) {
      const auto it = cells.find({delta, l});
      if (it == cells.end())
        throw ConfigError("incomplete grid: missing delta=" + std::to_string(delta) +
                          ", length=" + std::to_string(l));
      values.push_back(it->second);
    }
  }
  return ErrorSurface(delta_max, max_length, std::move(values));
}

inline ErrorSurface load_error_surface(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open error surface " + path);
  return read_error_surface(is);
}

}  // namespace aoisched
