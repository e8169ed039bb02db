#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cstr_fixture.hpp"
#include "sasmpc/prs.hpp"

namespace sasmpc {
namespace {

using testing::CstrModel;
using testing::PaperCertificate;

// Smaller root of r_L (mu - l_L)(1 - mu) = trPW (l - l_L), the quadratic
// form of the defining equation.  Independent of the bisection.
double closed_form_rate(double l, double lL, double rL, double t) {
  const double b = 1.0 + lL;
  const double c = lL + t * (l - lL) / rL;
  return 0.5 * (b - std::sqrt(b * b - 4.0 * c));
}

TEST(PrsTest, TraceIdentity) {
  EXPECT_DOUBLE_EQ(trace_pw(Mat::Identity(2, 2), Mat::Identity(2, 2)), 2.0);
}

TEST(PrsTest, TraceCstr) {
  const double t = trace_pw(testing::PaperP(), CstrModel().W);
  EXPECT_NEAR(t, 6.5016e-4, 1e-8);
  EXPECT_NEAR(t, 9e-6 * 72.24012, 1e-15);
}

TEST(PrsTest, TraceLinearInW) {
  Mat P(2, 2);
  P << 2, 0.3, 0.3, 1;
  Mat W(2, 2);
  W << 1, 0.2, 0.2, 3;
  EXPECT_NEAR(trace_pw(P, 3.5 * W), 3.5 * trace_pw(P, W), 1e-12);
  EXPECT_NEAR(trace_pw(P, W), (P * W).trace(), 1e-12);
  EXPECT_THROW(trace_pw(P, Mat::Identity(3, 3)), ContractViolation);
}

TEST(PrsTest, RegionOfLinearityCstr) {
  const ContractionCertificate c = PaperCertificate();
  const LinearityRegion reg = region_of_linearity(c.P, c.K, 24.0 / 25.0);
  // (25 - 24)^2 / (K P^-1 K') in actuator units
  EXPECT_NEAR(reg.r_L, 0.0959, 1e-4);
  EXPECT_NEAR(reg.r_L, 0.09591648464814824, 1e-12);
}

TEST(PrsTest, RegionOfLinearityMembership) {
  const ContractionCertificate c = PaperCertificate();
  const double vss = 0.96;
  const LinearityRegion reg = region_of_linearity(c.P, c.K, vss);
  // maximizer of K e over the ellipsoid
  const Vec k = c.K.row(0).transpose();
  const Vec Pik = c.P.llt().solve(k);
  const Vec e = std::sqrt(reg.r_L / k.dot(Pik)) * Pik;
  EXPECT_NEAR(e.dot(c.P * e), reg.r_L, 1e-14);
  EXPECT_NEAR(std::abs(k.dot(e)), 1.0 - vss, 1e-12);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  for (int s = 0; s < 1000; ++s) {
    Vec d(2);
    d << nd(gen), nd(gen);
    const Vec p = d * std::sqrt(reg.r_L / d.dot(c.P * d));
    EXPECT_LE(std::abs(k.dot(p)), 1.0 - vss + 1e-12);
  }
}

TEST(PrsTest, RegionOfLinearityLimits) {
  const ContractionCertificate c = PaperCertificate();
  EXPECT_LT(region_of_linearity(c.P, c.K, 1.0 - 1e-9).r_L, 1e-16);
  EXPECT_THROW(region_of_linearity(c.P, c.K, 1.0), ContractViolation);
  const double r1 = region_of_linearity(c.P, c.K, 0.5).r_L;
  const double r2 = region_of_linearity(7.0 * c.P, c.K, 0.5).r_L;
  EXPECT_NEAR(r2, 7.0 * r1, 1e-12 * r2);
}

TEST(PrsTest, EffectiveLambdaCstr) {
  const ContractionCertificate c = PaperCertificate();
  const double t = trace_pw(c.P, CstrModel().W);
  const double rL = region_of_linearity(c.P, c.K, 0.96).r_L;
  const EffectiveLambda eff = effective_lambda(c.lambda, c.lambda_L, rL, t);
  ASSERT_TRUE(eff.refined);
  EXPECT_NEAR(eff.value, 0.6752, 1e-3);
  EXPECT_NEAR(eff.value, closed_form_rate(c.lambda, c.lambda_L, rL, t), 1e-9);
  EXPECT_DOUBLE_EQ(select_hat_lambda(eff, c.lambda), eff.value);
}

TEST(PrsTest, EffectiveLambdaZeroNoise) {
  const EffectiveLambda eff = effective_lambda(0.9, 0.5, 0.1, 0.0);
  ASSERT_TRUE(eff.refined);
  EXPECT_EQ(eff.value, 0.5);
}

TEST(PrsTest, EffectiveLambdaNotApplicable) {
  // trPW / (1 - lambda) = 0.1 >= r_L
  const EffectiveLambda eff = effective_lambda(0.9, 0.5, 0.1, 0.01);
  EXPECT_FALSE(eff.refined);
  EXPECT_DOUBLE_EQ(select_hat_lambda(eff, 0.9049), 0.9049);
  EXPECT_THROW(effective_lambda(0.5, 0.6, 1.0, 0.1), ContractViolation);
  EXPECT_THROW(effective_lambda(0.9, 0.5, 0.0, 0.1), ContractViolation);
}

TEST(PrsTest, EffectiveLambdaRandomTuples) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < 10000; ++s) {
    const double l = 0.01 + 0.98 * u(gen);
    const double lL = l * u(gen);
    const double t = std::pow(10.0, -6.0 + 6.0 * u(gen));
    const double rL = t / (1.0 - l) * (1.0 + 1e-3 + 10.0 * u(gen));
    const EffectiveLambda eff = effective_lambda(l, lL, rL, t);
    ASSERT_TRUE(eff.refined);
    const double x = eff.value;
    ASSERT_GE(x, lL);
    ASSERT_LE(x, l);
    EXPECT_LE(x, l);
    EXPECT_NEAR(effective_rate_gap(x, l, lL, rL, t), 0.0, 1e-9);
    EXPECT_NEAR(x, closed_form_rate(l, lL, rL, t), 1e-9);
    for (int q = 1; q < 8; ++q) {
      const double below = lL + (x - lL) * q / 8.0;
      const double above = x + (l - x) * q / 8.0;
      if (x - below > 1e-9) {
        EXPECT_LT(effective_rate_gap(below, l, lL, rL, t), 0.0);
      }
      if (above - x > 1e-9) {
        EXPECT_GT(effective_rate_gap(above, l, lL, rL, t), 0.0);
      }
    }
  }
}

TEST(PrsTest, EffectiveLambdaScaleInvariant) {
  const ContractionCertificate c = PaperCertificate();
  const Mat W = CstrModel().W;
  const auto rate = [&](double s) {
    const Mat P = s * c.P;
    return effective_lambda(c.lambda, c.lambda_L,
                            region_of_linearity(P, c.K, 0.96).r_L,
                            trace_pw(P, W))
        .value;
  };
  EXPECT_NEAR(rate(1.0), rate(0.01), 1e-12);
  EXPECT_NEAR(rate(1.0), rate(250.0), 1e-12);
}

TEST(PrsTest, ScheduleClosedForm) {
  const double t = 6.5016108e-4;
  const PrsSchedule s = prs_schedule(0.6752, t, 0.2, 30);
  ASSERT_EQ(s.horizon(), 30);
  EXPECT_EQ(s.radius(0), 0.0);
  EXPECT_NEAR(s.radius(1), t / 0.2, 1e-18);
  // 6.5016e-4 / (0.2 * 0.3248)
  EXPECT_NEAR(s.r_inf, 0.010009, 1e-6);
  for (int i = 1; i <= 40; ++i) {
    EXPECT_GT(s.radius(i), s.radius(i - 1));
    EXPECT_LT(s.radius(i), s.r_inf);
    EXPECT_EQ(s.radius(i), expectation_bound(i, 0.6752, t) / 0.2);
  }
  EXPECT_NEAR(s.radius(200), s.r_inf, 1e-15);
  EXPECT_THROW(prs_schedule(0.6, t, 1.0, 5), ContractViolation);
  EXPECT_THROW(prs_schedule(0.6, t, 0.2, 0), ContractViolation);
}

TEST(PrsTest, ExpectationBound) {
  const double t = 6.5016108e-4;
  EXPECT_EQ(expectation_bound(0, 0.6752, t), 0.0);
  EXPECT_NEAR(expectation_bound(1, 0.6752, t), t, 1e-18);
  // 6.5016e-4 / 0.3248
  EXPECT_NEAR(expectation_bound(400, 0.6752, t), 2.0017e-3, 1e-7);
  for (int i = 0; i < 50; ++i) {
    EXPECT_LE(expectation_bound(i, 0.6752, t),
              expectation_bound(i + 1, 0.6752, t));
  }
}

TEST(PrsTest, AbsorbingInterval) {
  const double lam = 0.6752;
  const double t = 6.5016108e-4;
  const double top = t / (1.0 - lam);
  for (int q = 0; q <= 100; ++q) {
    const double beta = top * q / 100.0;
    const double next = lam * beta + t;
    EXPECT_GE(next, 0.0);
    EXPECT_LE(next, top * (1.0 + 1e-14));
  }
}

TEST(PrsTest, PubLevelWithSlack) {
  EXPECT_NEAR(pub_level(0.9, 0.01, 0.2), 0.5, 1e-14);
  EXPECT_NEAR(pub_level(0.9, 0.01, 0.2, 0.25), 0.75, 1e-14);
  EXPECT_THROW(pub_level(0.9, 0.01, 0.2, -1.0), ContractViolation);
}

TEST(PrsTest, EllipsoidContainmentMonotone) {
  Ellipsoid a{Mat::Identity(2, 2), 1.0};
  Ellipsoid b{Mat::Identity(2, 2), 2.0};
  Vec e(2);
  e << 1.0, 0.5;
  EXPECT_FALSE(a.contains(e));
  EXPECT_TRUE(b.contains(e));
}

}  // namespace
}  // namespace sasmpc
