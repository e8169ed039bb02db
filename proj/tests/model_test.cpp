#include <gtest/gtest.h>

#include "cstr_fixture.hpp"
#include "sasmpc/model.hpp"
#include "sasmpc/rng.hpp"

namespace sasmpc {
namespace {

using testing::CstrModel;

TEST(ModelTest, CstrIsValid) {
  EXPECT_NO_THROW(CstrModel().validate());
  EXPECT_EQ(CstrModel().n(), 2);
  EXPECT_EQ(CstrModel().m(), 1);
}

TEST(ModelTest, ValidationMessages) {
  auto expect_msg = [](const LtiModel& m, const std::string& text,
                       bool zero_ok = false) {
    try {
      m.validate(zero_ok);
      ADD_FAILURE() << "no throw, expected " << text;
    } catch (const ContractViolation& e) {
      EXPECT_NE(std::string(e.what()).find(text), std::string::npos) << e.what();
    }
  };
  LtiModel m = CstrModel();
  m.A(0, 0) = 1.2;
  expect_msg(m, "Assumption 2a violated");
  m = CstrModel();
  m.u_max(0) = 0.0;
  expect_msg(m, "u_max must be positive");
  m = CstrModel();
  m.B = Mat::Zero(2, 0);
  m.u_max.resize(0);
  expect_msg(m, "m = 0");
  m = CstrModel();
  m.W(0, 1) = 1e-6;
  expect_msg(m, "symmetric");
  m = CstrModel();
  m.W.setZero();
  expect_msg(m, "positive definite");
  EXPECT_NO_THROW(m.validate(true));
  m.W(0, 0) = -1e-6;
  expect_msg(m, "exactly zero", true);
  m = CstrModel();
  m.A(1, 1) = std::nan("");
  expect_msg(m, "non-finite");
}

TEST(ModelTest, NormalizationScalesB) {
  const NormalizedModel nm = normalize(CstrModel());
  EXPECT_EQ(nm.A, CstrModel().A);
  EXPECT_DOUBLE_EQ(nm.B_n(0, 0), -0.0048771 * 25.0);
  EXPECT_DOUBLE_EQ(nm.B_n(1, 0), -0.0020429 * 25.0);
  const Mat K = testing::PaperKActual();
  const Mat Kn = normalize_gain(nm, K);
  EXPECT_DOUBLE_EQ(Kn(0, 0), 27.1573 / 25.0);
  EXPECT_LT((denormalize_gain(nm, Kn) - K).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_DOUBLE_EQ(normalize_input_weight(nm, Mat::Constant(1, 1, 0.1))(0, 0),
                   62.5);
  const Vec u = Vec::Constant(1, -7.5);
  EXPECT_DOUBLE_EQ(normalize_input(nm, u)(0), -0.3);
  EXPECT_DOUBLE_EQ(denormalize_input(nm, normalize_input(nm, u))(0), -7.5);
}

TEST(ModelTest, NormalizedDynamicsAgree) {
  const LtiModel m = CstrModel();
  const NormalizedModel nm = normalize(m);
  Vec x(2);
  x << 0.3, -0.1;
  const Vec u = Vec::Constant(1, 12.0);
  EXPECT_LT((nominal_step(x, normalize_input(nm, u), nm) - (m.A * x + m.B * u))
                .cwiseAbs()
                .maxCoeff(),
            1e-15);
}

TEST(ModelTest, SaturationBoundsExact) {
  const Vec b = Vec::Constant(2, 25.0);
  Vec u(2);
  u << 31.0, -1e9;
  EXPECT_EQ(saturate(u, b)(0), 25.0);
  EXPECT_EQ(saturate(u, b)(1), -25.0);
  u << 3.0, -24.999;
  EXPECT_EQ(saturate(u, b), u);
  EXPECT_THROW(saturate(u, Vec::Zero(2)), ContractViolation);
  Vec v(3);
  v << 1.5, -0.2, -3;
  const Vec s = saturate_unit(v);
  EXPECT_EQ(s(0), 1.0);
  EXPECT_EQ(s(1), -0.2);
  EXPECT_EQ(s(2), -1.0);
  // denormalizing a unit-saturated input never leaves the actuator box
  const NormalizedModel nm = normalize(CstrModel());
  for (double x : {1.0, -1.0, 0.999999999999, 7.0}) {
    const Vec ua = denormalize_input(nm, saturate_unit(Vec::Constant(1, x)));
    EXPECT_LE(std::abs(ua(0)), 25.0);
  }
}

TEST(ModelTest, ErrorStepMatchesSplitDynamics) {
  const NormalizedModel nm = normalize(CstrModel());
  const Mat K = normalize_gain(nm, testing::PaperKActual());
  CounterRng rng(5, 1, 0);
  for (int t = 0; t < 200; ++t) {
    Vec z(2), e(2);
    z << rng.uniform(-1, 1), rng.uniform(-1, 1);
    e << rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5);
    const Vec v = Vec::Constant(1, rng.uniform(-0.96, 0.96));
    // true state x = z + e under u = sat(K e + v)
    const Vec x_next = nm.A * (z + e) + nm.B_n * saturate_unit(K * e + v);
    const Vec z_next = nominal_step(z, v, nm);
    EXPECT_LT((z_next + error_step(e, v, K, nm) - x_next).cwiseAbs().maxCoeff(),
              1e-14);
  }
  EXPECT_THROW(error_step(Vec::Zero(2), Vec::Constant(1, 1.5), K, nm),
               ContractViolation);
}

TEST(ModelTest, ErrorStepLinearInsideRegion) {
  const NormalizedModel nm = normalize(CstrModel());
  const Mat K = normalize_gain(nm, testing::PaperKActual());
  Vec e(2);
  e << 0.01, -0.02;
  const Vec v = Vec::Constant(1, 0.5);
  EXPECT_LT((error_step(e, v, K, nm) - (nm.A + nm.B_n * K) * e).norm(), 1e-15);
}

TEST(RngTest, CounterKeyedStreams) {
  CounterRng a(7, 3, 10), b(7, 3, 10), c(7, 4, 10);
  const double x = a.normal();
  EXPECT_EQ(x, b.normal());
  EXPECT_NE(x, c.normal());
  CounterRng d(7, 3, 0);
  d.seek(10);
  EXPECT_EQ(d.normal(), x);
}

TEST(RngTest, UnitSamplesHaveUnitVariance) {
  for (NoiseKind k : {NoiseKind::kGaussian, NoiseKind::kUniform, NoiseKind::kLaplace}) {
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      CounterRng r(1, 2, i);
      const double x = unit_sample(k, r);
      s += x;
      s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01) << to_string(k);
    EXPECT_NEAR(s2 / n, 1.0, 0.02) << to_string(k);
  }
  EXPECT_EQ(parse_noise_kind("laplace"), NoiseKind::kLaplace);
  EXPECT_THROW(parse_noise_kind("cauchy"), ConfigError);
}

}  // namespace
}  // namespace sasmpc
