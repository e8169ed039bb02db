#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cstr_fixture.hpp"
#include "sasmpc/tightening.hpp"

namespace sasmpc {
namespace {

using testing::CstrModel;
using testing::PaperCertificate;

Polytope Row(double a, double b, double h) {
  Mat H(1, 2);
  H << a, b;
  return Polytope::from_rows(H, Vec::Constant(1, h));
}

Polytope UnitBox() {
  Mat H(4, 2);
  H << 1, 0, -1, 0, 0, 1, 0, -1;
  return Polytope::from_rows(H, Vec::Ones(4));
}

TighteningOptions CstrOptions() {
  TighteningOptions o;
  o.Q = Mat::Zero(2, 2);
  o.Q(0, 0) = 20.0;
  o.Q(1, 1) = 100.0;
  o.R = Mat::Constant(1, 1, 0.1 * 25.0 * 25.0);
  o.epsilon = 0.2;
  o.v_ss = 0.96;
  return o;
}

TEST(PolytopeTest, RowsNormalized) {
  Mat H(2, 2);
  H << 3, 4, 2, 1;
  Vec h(2);
  h << 10, 1.5;
  const Polytope p = Polytope::from_rows(H, h);
  EXPECT_NEAR(p.H.row(0).norm(), 1.0, 1e-15);
  EXPECT_NEAR(p.h(0), 2.0, 1e-15);
  EXPECT_NEAR(p.h(1), 1.5 / std::sqrt(5.0), 1e-15);
  EXPECT_THROW(Polytope::from_rows(Mat::Zero(1, 2), Vec::Ones(1)),
               ContractViolation);
}

TEST(PolytopeTest, Emptiness) {
  EXPECT_FALSE(is_empty(UnitBox()));
  const Polytope contradiction = Row(1, 0, -1).intersect(Row(-1, 0, -1));
  EXPECT_TRUE(is_empty(contradiction));
  // a segment is not empty
  const Polytope flat = Row(0, 1, 0).intersect(Row(0, -1, 0));
  EXPECT_FALSE(is_empty(flat));
  EXPECT_NEAR(chebyshev_radius(UnitBox()), 1.0, 1e-9);
}

TEST(PolytopeTest, SupportAndRedundancy) {
  const Polytope box = UnitBox().intersect(Row(1, 1, 5));
  Vec d(2);
  d << 1, 1;
  const SupportValue s = support(box, d);
  EXPECT_TRUE(s.bounded);
  EXPECT_NEAR(s.value, 2.0, 1e-9);
  const Polytope slim = remove_redundant(box);
  EXPECT_EQ(slim.rows(), 4);
  const SupportValue open = support(Row(0, 1, 1), d);
  EXPECT_FALSE(open.bounded);
}

TEST(ErosionTest, ZeroRadiusUnchanged) {
  const Polytope p = UnitBox();
  const Polytope q = erode_by_ellipsoid(p, {Mat::Identity(2, 2), 0.0});
  EXPECT_EQ(q.h, p.h);
}

TEST(ErosionTest, CstrRow) {
  const Polytope q =
      erode_by_ellipsoid(Row(0, 1, 0.25), {testing::PaperP(), 0.010009});
  // sqrt(r H P^-1 H') with H P^-1 H' = 0.98592
  EXPECT_NEAR(q.h(0), 0.15066, 1e-5);
  EXPECT_NEAR(q.h(0), 0.25 - std::sqrt(0.010009 * 71.2230 /
                                       (71.2230 * 1.01712 - 0.4498 * 0.4498)),
              1e-14);
}

TEST(ErosionTest, UnitBallShrinksBox) {
  const Polytope q = erode_by_ellipsoid(UnitBox(), {Mat::Identity(2, 2), 1.0});
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(q.h(j), 0.0, 1e-15);
}

TEST(ErosionTest, CommutesWithIntersection) {
  const Ellipsoid e{testing::PaperP(), 0.003};
  const Polytope a = UnitBox();
  const Polytope b = Row(2, 1, 1.5).intersect(Row(-1, 3, 0.7));
  const Polytope lhs = erode_by_ellipsoid(a.intersect(b), e);
  const Polytope rhs = erode_by_ellipsoid(a, e).intersect(erode_by_ellipsoid(b, e));
  EXPECT_EQ(lhs.H, rhs.H);
  EXPECT_EQ(lhs.h, rhs.h);
}

TEST(ErosionTest, ScaleInvariant) {
  const Polytope p = UnitBox().intersect(Row(2, 1, 1.5));
  const Polytope a = erode_by_ellipsoid(p, {testing::PaperP(), 0.01});
  const Polytope b = erode_by_ellipsoid(p, {40.0 * testing::PaperP(), 0.4});
  for (int j = 0; j < p.rows(); ++j) EXPECT_NEAR(a.h(j), b.h(j), 1e-14);
}

TEST(TerminalPairTest, ScalarClosedForm) {
  const Mat one = Mat::Ones(1, 1);
  const TerminalPair tp = terminal_pair(0.5 * one, one, one, one);
  // s^2 + s (r - q - a^2 r) - q r = 0 with a = 0.5, q = r = 1
  const double s = (0.25 + std::sqrt(0.0625 + 4.0)) / 2.0;
  EXPECT_NEAR(tp.S(0, 0), s, 1e-11);
  EXPECT_NEAR(tp.K_f(0, 0), -0.5 * s / (1.0 + s), 1e-11);
}

TEST(TerminalPairTest, ZeroStateWeightRejected) {
  const Mat one = Mat::Ones(1, 1);
  EXPECT_THROW(terminal_pair(0.5 * one, one, 0.0 * one, one), DesignFailure);
}

TEST(TerminalPairTest, CstrLyapunovEquality) {
  const NormalizedModel nm = normalize(CstrModel());
  const TighteningOptions o = CstrOptions();
  const TerminalPair tp = terminal_pair(nm.A, nm.B_n, o.Q, o.R);
  const Mat Af = nm.A + nm.B_n * tp.K_f;
  const Mat res =
      Af.transpose() * tp.S * Af - tp.S + o.Q + tp.K_f.transpose() * o.R * tp.K_f;
  EXPECT_LE(res.cwiseAbs().maxCoeff(), 1e-9);
  // discrete algebraic Riccati solution computed independently
  EXPECT_NEAR(tp.S(0, 0), 207.6717328753166, 1e-8);
  EXPECT_NEAR(tp.S(0, 1), 59.32435097028419, 1e-8);
  EXPECT_NEAR(tp.S(1, 1), 288.68342716956647, 1e-8);
  EXPECT_NEAR(tp.K_f(0, 0), 0.430972999679769, 1e-11);
  EXPECT_NEAR(tp.K_f(0, 1), 0.268239407666513, 1e-11);
}

TEST(TerminalSetTest, InvariantBoxReturnedAfterOneIteration) {
  TerminalSetInfo info;
  const Polytope z = terminal_set(0.5 * Mat::Identity(2, 2), UnitBox(), &info);
  EXPECT_EQ(info.iterations, 1);
  EXPECT_TRUE(info.converged);
  EXPECT_TRUE(is_subset(z, UnitBox()) && is_subset(UnitBox(), z));
}

TEST(TerminalSetTest, EmptyBoxFails) {
  const Polytope bad = Row(1, 0, -1).intersect(Row(-1, 0, -1));
  EXPECT_THROW(terminal_set(0.5 * Mat::Identity(2, 2), bad), DesignFailure);
  // nonempty, but excludes the origin every trajectory tends to
  const Polytope off = UnitBox().intersect(Row(0, -1, -0.5));
  EXPECT_THROW(terminal_set(0.5 * Mat::Identity(2, 2), off), DesignFailure);
}

TEST(TerminalSetTest, RotationNeedsSeveralIterations) {
  const double c = std::cos(0.5), s = std::sin(0.5);
  Mat A(2, 2);
  A << c, -s, s, c;
  A *= 0.95;
  TerminalSetInfo info;
  const Polytope z = terminal_set(A, UnitBox(), &info);
  EXPECT_GT(info.iterations, 1);
  EXPECT_TRUE(info.converged);
  EXPECT_TRUE(z.contains(Vec::Zero(2)));
}

Polytope Scenario(int k) {
  Mat H;
  Vec h;
  switch (k) {
    case 1:
      H.resize(1, 2);
      H << 0, 1;
      h = Vec::Constant(1, 0.25);
      break;
    case 2:
      H.resize(3, 2);
      H << 1, 0, 0, 1, 2, 1;
      h.resize(3);
      h << 0.75, 0.25, 1.5;
      break;
    case 3:
      H.resize(5, 2);
      H << 1, 0, 0, 1, 2, 1, -1, 0, 0, -1;
      h.resize(5);
      h << 0.75, 0.25, 1.5, 0.5, 0.25;
      break;
    default:
      H.resize(1, 2);
      H << 0, 1;
      h = Vec::Constant(1, 0.15);
  }
  return Polytope::from_rows(H, h);
}

// Sampled check of invariance, independent of the construction loop.
void ExpectInvariantBySampling(const TighteningSchedule& s,
                               const NormalizedModel& nm) {
  const Mat Af = nm.A + nm.B_n * s.K_f;
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  int inside = 0;
  for (int t = 0; t < 20000; ++t) {
    Vec z(2);
    z << u(gen), u(gen);
    if (!s.Z_f.contains(z, 0.0)) continue;
    ++inside;
    EXPECT_TRUE(s.Z_f.contains(Af * z, 1e-9));
    EXPECT_TRUE(s.Z_inf.contains(z, 1e-9));
    EXPECT_LE((s.K_f * z).cwiseAbs().maxCoeff(), s.v_ss + 1e-9);
  }
  EXPECT_GT(inside, 10);
}

TEST(TighteningTest, CutoffIndex) {
  EXPECT_EQ(prs_cutoff(0.6752), 53);
  EXPECT_EQ(prs_cutoff(0.9049), 208);
  EXPECT_EQ(prs_cutoff(0.0), 1);
  EXPECT_LE(std::pow(0.6752, prs_cutoff(0.6752)), 1e-9);
  EXPECT_GT(std::pow(0.6752, prs_cutoff(0.6752) - 1), 1e-9);
}

TEST(TighteningTest, Scenario1RefinedArm) {
  const NormalizedModel nm = normalize(CstrModel());
  const TighteningSchedule s = build_tightening(
      nm, PaperCertificate(), Scenario(1), Arm::kLambdaStar, CstrOptions());
  ASSERT_TRUE(s.feasible) << s.reason;
  EXPECT_TRUE(s.refined);
  EXPECT_NEAR(s.hat_lambda(), 0.6752, 1e-3);
  EXPECT_NEAR(s.Z_inf.h(0), 0.15066, 1e-5);
  EXPECT_TRUE(s.Z_f.contains(Vec::Zero(2)));
  EXPECT_EQ(&s.Z_at(s.cutoff + 40), &s.Z_inf);
  for (int i = 0; i + 1 < s.cutoff; ++i) {
    EXPECT_GE(s.Z[i].h(0), s.Z[i + 1].h(0));
  }
  EXPECT_GE(s.Z.back().h(0), s.Z_inf.h(0));
  ExpectInvariantBySampling(s, nm);
}

TEST(TighteningTest, RefinedSetsContainConservativeSets) {
  const NormalizedModel nm = normalize(CstrModel());
  for (int k = 1; k <= 3; ++k) {
    const auto a = build_tightening(nm, PaperCertificate(), Scenario(k),
                                    Arm::kLambdaStar, CstrOptions());
    const auto b = build_tightening(nm, PaperCertificate(), Scenario(k),
                                    Arm::kLambda, CstrOptions());
    ASSERT_TRUE(a.feasible && b.feasible);
    for (int i = 0; i < 300; ++i) {
      const Polytope& za = a.Z_at(i);
      const Polytope& zb = b.Z_at(i);
      for (int j = 0; j < za.rows(); ++j) EXPECT_GE(za.h(j), zb.h(j));
    }
    ExpectInvariantBySampling(b, nm);
  }
}

TEST(TighteningTest, Scenario4Feasibility) {
  const NormalizedModel nm = normalize(CstrModel());
  const auto refined = build_tightening(nm, PaperCertificate(), Scenario(4),
                                        Arm::kLambdaStar, CstrOptions());
  const auto conservative = build_tightening(nm, PaperCertificate(), Scenario(4),
                                             Arm::kLambda, CstrOptions());
  EXPECT_TRUE(refined.feasible) << refined.reason;
  EXPECT_FALSE(conservative.feasible);
  EXPECT_EQ(conservative.reason, "terminal set empty");
  EXPECT_LT(conservative.Z_inf.h(0), 0.0);
}

TEST(TerminalWeightTest, ZeroCostAlwaysPasses) {
  const ContractionCertificate c = PaperCertificate();
  const Mat Z = Mat::Zero(2, 2);
  const Mat R = Mat::Constant(1, 1, 1e-300);
  for (double alpha : {0.0, 1.0, 10.0}) {
    EXPECT_TRUE(
        verify_terminal_weight(c.P, c.K, Z, R, 0.6752, alpha, 0.1).pass);
  }
}

TEST(TerminalWeightTest, CstrMinimalAlpha) {
  const ContractionCertificate c = PaperCertificate();
  const TighteningOptions o = CstrOptions();
  const double lam = 0.6752;
  const double delta = (1.0 - lam) / (2.0 * lam);
  const auto rep = verify_terminal_weight(c.P, c.K, o.Q, o.R, lam, 1.0, delta);
  // largest eigenvalue of L^-1 (Q + K'RK) L^-T with P = L L'
  const Mat M = o.Q + c.K.transpose() * o.R * c.K;
  const Mat L = c.P.llt().matrixL();
  const Mat Li = L.inverse();
  const double g = Eigen::SelfAdjointEigenSolver<Mat>(Li * M * Li.transpose())
                       .eigenvalues()
                       .maxCoeff();
  const double want = g / (1.0 - (1.0 + delta) * lam);
  EXPECT_NEAR(rep.alpha_min, want, 1e-9 * want);
  EXPECT_TRUE(verify_terminal_weight(c.P, c.K, o.Q, o.R, lam,
                                     want * (1 + 1e-9), delta)
                  .pass);
  EXPECT_FALSE(
      verify_terminal_weight(c.P, c.K, o.Q, o.R, lam, 0.99 * want, delta).pass);
}

TEST(TerminalWeightTest, DeltaPrecondition) {
  const ContractionCertificate c = PaperCertificate();
  EXPECT_THROW(verify_terminal_weight(c.P, c.K, Mat::Zero(2, 2),
                                      Mat::Ones(1, 1), 0.5, 1.0, 1.01),
               ContractViolation);
  EXPECT_THROW(verify_terminal_weight(c.P, c.K, Mat::Zero(2, 2),
                                      Mat::Ones(1, 1), 0.5, 1.0, 0.0),
               ContractViolation);
}

}  // namespace
}  // namespace sasmpc
