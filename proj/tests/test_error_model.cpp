#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "aoisched/error_model.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace aoisched;

namespace {

ArProcessSpec ar1(double a, double w, double n = 0.0) {
  ArProcessSpec s;
  s.coefficients = {a};
  s.noise_var = w;
  s.obs_noise_var = n;
  return s;
}

TEST(Autocov, WhiteNoise) {
  const auto r = ar_stationary_autocov(ar1(0.0, 1.0), 5);
  EXPECT_NEAR(r[0], 1.0, 1e-14);
  for (int k = 1; k <= 5; ++k) EXPECT_NEAR(r[k], 0.0, 1e-14);
}

TEST(Autocov, Ar1ClosedForm) {
  const double a = 0.5, w = 0.75;
  const auto r = ar_stationary_autocov(ar1(a, w), 12);
  for (int k = 0; k <= 12; ++k) EXPECT_NEAR(r[k], std::pow(a, k) * w / (1 - a * a), 1e-13) << "k=" << k;
  EXPECT_NEAR(r[1], 0.5, 1e-13);
  EXPECT_NEAR(r[2], 0.25, 1e-13);
}

TEST(Autocov, LyapunovResidualAr10) {
  const auto spec = testutil::ar10();
  const auto P = ar_stationary_covariance(spec);
  EXPECT_LT(lyapunov_residual(spec, P), 1e-12);
}

TEST(Autocov, UnstableProcessRejected) {
  try {
    ar_stationary_autocov(ar1(1.1, 1.0), 3);
    FAIL() << "expected an error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("unstable process"), std::string::npos);
  }
}

TEST(InferenceError, SpecExamples) {
  EXPECT_NEAR(ar_inference_error(ar1(0.0, 1.0), 1, 3), 1.0, 1e-12);
  EXPECT_NEAR(ar_inference_error(ar1(0.0, 1.0), 0, 1), 0.0, 1e-12);
  // r(0) - r(1)^2 / r(0) = 1 - 0.25
  EXPECT_NEAR(ar_inference_error(ar1(0.5, 0.75), 1, 1), 0.75, 1e-12);
}

TEST(InferenceError, SingularCovariance) {
  // Deterministic constant process: r(k) = 0 for every lag.
  std::vector<double> r(4, 0.0);
  EXPECT_THROW(lmmse_error(r, 0.0, 1, 2), NumericalError);
}

TEST(Surface, Ar10GridShapeAndMonotoneInLength) {
  const auto spec = testutil::ar10();
  const auto s = build_error_surface(spec, 50, 10);
  EXPECT_EQ(s.delta_max(), 50);
  EXPECT_EQ(s.max_length(), 10);
  EXPECT_EQ(s.values().size(), 51u * 10u);
  const double r0 = ar_stationary_autocov(spec, 0)[0];
  for (int d = 0; d <= 50; ++d)
    for (int l = 1; l <= 10; ++l) {
      EXPECT_GE(s.at(d, l), 0.0);
      EXPECT_LE(s.at(d, l), r0 + 1e-9);
      if (l < 10) EXPECT_LE(s.at(d, l + 1), s.at(d, l) + 1e-9) << d << "," << l;
    }
}

TEST(Surface, SmallestGrid) {
  const auto s = build_error_surface(ar1(0.3, 1.0, 0.1), 1, 1);
  EXPECT_EQ(s.values().size(), 2u);
}

TEST(Surface, MatchesMonteCarloRegression) {
  const auto spec = testutil::ar10();
  const auto [y, v] = oracle::simulate_ar(spec.coefficients, spec.noise_var, spec.obs_noise_var, 1000000, 99);
  const auto mc = oracle::regression_errors(y, v, 25, 10);
  for (int d : {1, 5, 10, 25})
    for (int l : {1, 4, 10}) {
      const double exact = ar_inference_error(spec, d, l);
      EXPECT_NEAR(exact, mc[d][l - 1], 0.02 * mc[d][l - 1]) << "delta=" << d << " l=" << l;
    }
}

TEST(Surface, TailWarning) {
  const auto s = build_error_surface(testutil::ar10(), 20, 2);
  EXPECT_FALSE(tail_warnings(s).empty());
  const auto flat = build_error_surface(ar1(0.1, 1.0, 0.1), 60, 2);
  EXPECT_TRUE(tail_warnings(flat).empty());
}

TEST(EvalError, PassthroughClampAndRange) {
  const auto s = testutil::surface_from(4, 2, [](int d, int l) { return d + 0.1 * l; });
  EXPECT_DOUBLE_EQ(eval_error(s, 3, 2), 3.2);
  EXPECT_DOUBLE_EQ(eval_error(s, 4 + 7, 1), 4.1);
  EXPECT_THROW(eval_error(s, 1, 3), ConfigError);
}

TEST(SurfaceCsv, TwoRowFile) {
  std::istringstream in("delta,length,error\n0,1,0.5\n1,1,0.7\n");
  const auto s = read_error_surface(in);
  EXPECT_EQ(s.delta_max(), 1);
  EXPECT_EQ(s.max_length(), 1);
  EXPECT_DOUBLE_EQ(s.at(1, 1), 0.7);
}

std::string parse_error(const std::string& text) {
  std::istringstream in(text);
  try {
    read_error_surface(in);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(SurfaceCsv, Errors) {
  EXPECT_NE(parse_error("delta,length,error\n0,1,1\n0,2,1\n1,1,1\n").find("incomplete grid"), std::string::npos);
  EXPECT_NE(parse_error("delta,length,error\n0,1,1\n0,1,2\n").find("line 3"), std::string::npos);
  EXPECT_NE(parse_error("delta,length,error\n0,1,-1\n").find("line 2"), std::string::npos);
  EXPECT_NE(parse_error("delta,length,error\n0,1,nan\n").find("line 2"), std::string::npos);
  EXPECT_NE(parse_error("delta,length,error\n0,1,0.5\n1;1;0.5\n").find("line 3"), std::string::npos);
  EXPECT_NE(parse_error("d,l,e\n0,1,1\n").find("header"), std::string::npos);
}

TEST(SurfaceCsv, RoundTripIsBitIdentical) {
  const auto s = build_error_surface(testutil::ar10(), 30, 4);
  std::stringstream io;
  write_error_surface(s, io);
  const auto back = read_error_surface(io);
  EXPECT_TRUE(back == s);
}

}  // namespace
