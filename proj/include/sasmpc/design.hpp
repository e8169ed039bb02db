#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sasmpc/common.hpp"
#include "sasmpc/conic/qp.hpp"
#include "sasmpc/conic/sdp.hpp"
#include "sasmpc/linalg.hpp"
#include "sasmpc/model.hpp"
#include "sasmpc/rng.hpp"

namespace sasmpc {

/// Vertex of the saturation embedding: channels in J act linearly.
struct SaturationScenario {
  std::vector<int> J;
  Mat A_K;
};

/// Subsets of {0..m-1} in binary-counter order; bit j of the index selects
/// channel j.  Index 0 is the open loop, index 2^m - 1 is A + B K.
inline std::vector<SaturationScenario> enumerate_scenarios(
    const NormalizedModel& nm, const Mat& K) {
  const int m = nm.m();
  demand(m <= 16, "enumerate_scenarios: m > 16 rejected");
  demand(K.rows() == m && K.cols() == nm.n(), "enumerate_scenarios: K shape");
  std::vector<SaturationScenario> out;
  out.reserve(size_t{1} << m);
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    SaturationScenario s;
    s.A_K = nm.A;
    for (int j = 0; j < m; ++j) {
      if (mask & (1u << j)) {
        s.J.push_back(j);
        s.A_K += nm.B_n.col(j) * K.row(j);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// (P, K, lambda, lambda_L) in normalized input units.
struct ContractionCertificate {
  Mat P;
  Mat K;
  double lambda = 0.0;
  double lambda_L = 0.0;
  std::vector<double> residuals;  // per scenario, lambda P - A_K' P A_K
  double linear_residual = 0.0;   // lambda_L P - A_cl' P A_cl
};

struct ResidualReport {
  bool pass = false;
  std::vector<double> residuals;
  double linear_residual = 0.0;
  double worst = 0.0;
  int worst_scenario = 0;  // scenario index, or -1 for the linear condition
  std::string message;
};

inline ResidualReport verify_certificate(const NormalizedModel& nm,
                                         const ContractionCertificate& cert,
                                         double tol = 1e-8) {
  ResidualReport rep;
  const Mat P = symmetrize(cert.P);
  const auto scenarios = enumerate_scenarios(nm, cert.K);
  rep.worst = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < scenarios.size(); ++i) {
    const Mat& AK = scenarios[i].A_K;
    const double r = min_eigenvalue(cert.lambda * P - AK.transpose() * P * AK);
    rep.residuals.push_back(r);
    if (r < rep.worst) {
      rep.worst = r;
      rep.worst_scenario = static_cast<int>(i);
    }
  }
  const Mat Acl = scenarios.back().A_K;
  rep.linear_residual =
      min_eigenvalue(cert.lambda_L * P - Acl.transpose() * P * Acl);
  if (rep.linear_residual < rep.worst) {
    rep.worst = rep.linear_residual;
    rep.worst_scenario = -1;
  }
  const bool rates_ok = cert.lambda_L <= cert.lambda && cert.lambda < 1.0 &&
                        cert.lambda_L >= 0.0;
  const bool p_ok = is_positive_definite(P);
  rep.pass = rates_ok && p_ok && rep.worst >= -tol;
  if (!rates_ok) {
    rep.message = "rates must satisfy 0 <= lambda_L <= lambda < 1";
  } else if (!p_ok) {
    rep.message = "P is not positive definite";
  } else if (!rep.pass) {
    rep.message = rep.worst_scenario < 0
                      ? "linear contraction condition violated"
                      : "contraction condition violated on scenario " +
                            std::to_string(rep.worst_scenario);
  }
  return rep;
}

/// LMIs in X = P^{-1}, Y = K X at fixed rates, plus X >= I to remove the
/// scaling freedom of the homogeneous conditions.
inline SdpFeasibilityProblem design_problem(const NormalizedModel& nm,
                                            double lambda, double lambda_L,
                                            double margin) {
  const int n = nm.n();
  const int m = nm.m();
  SdpFeasibilityProblem p(n, m, margin);
  p.add_block("normalization", [n](const Mat& X, const Mat&) {
    return Mat(X - Mat::Identity(n, n));
  });
  const Mat A = nm.A;
  const Mat B = nm.B_n;
  auto schur = [n](double rate, const Mat& X, const Mat& M) {
    Mat F(2 * n, 2 * n);
    F.topLeftCorner(n, n) = rate * X;
    F.topRightCorner(n, n) = M.transpose();
    F.bottomLeftCorner(n, n) = M;
    F.bottomRightCorner(n, n) = X;
    return F;
  };
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    p.add_block("contraction_" + std::to_string(mask),
                [=](const Mat& X, const Mat& Y) {
                  Mat M = A * X;
                  for (int j = 0; j < m; ++j)
                    if (mask & (1u << j)) M += B.col(j) * Y.row(j);
                  return schur(lambda, X, M);
                });
  }
  p.add_block("linear", [=](const Mat& X, const Mat& Y) {
    return schur(lambda_L, X, Mat(A * X + B * Y));
  });
  return p;
}

struct DesignOptions {
  double tol = 1e-3;
  double margin = 1e-6;
  double sdp_tol = 1e-9;
  SdpOptions sdp;
};

struct DesignDiagnostics {
  int oracle_calls = 0;
  double lambda_lower = 0.0;  // largest rate rejected by the oracle
  double lambda_upper = 0.0;  // smallest rate accepted
  double lambda_L_lower = 0.0;
  double lambda_L_upper = 0.0;
};

inline ContractionCertificate certificate_from_solution(
    const NormalizedModel& nm, const SdpResult& sol, double lambda,
    double lambda_L) {
  ContractionCertificate c;
  const Mat X = symmetrize(sol.X);
  Eigen::LLT<Mat> llt(X);
  if (llt.info() != Eigen::Success) throw DesignFailure("X is not positive definite");
  c.P = symmetrize(llt.solve(Mat::Identity(X.rows(), X.cols())));
  c.K = llt.solve(sol.Y.transpose()).transpose();
  c.lambda = lambda;
  c.lambda_L = lambda_L;
  const ResidualReport rep = verify_certificate(nm, c);
  c.residuals = rep.residuals;
  c.linear_residual = rep.linear_residual;
  return c;
}

/// Two-level bisection: smallest lambda with lambda_L tied to it, then the
/// smallest lambda_L at that lambda.  The returned (P, K) come from one more
/// solve at (lambda + tol, lambda_L + tol) and the certificate carries those
/// rates.
inline ContractionCertificate design_certificate(
    const NormalizedModel& nm, const DesignOptions& opt = {},
    DesignDiagnostics* diag = nullptr) {
  demand(nm.m() >= 1, "design_certificate: m = 0 rejected");
  demand(opt.tol > 0.0 && opt.tol < 0.5, "design_certificate: tol out of range");
  if (!(spectral_radius(nm.A) < 1.0)) {
    throw DesignFailure("Assumption 2a violated: A is not Schur stable");
  }
  DesignDiagnostics local;
  DesignDiagnostics& dg = diag ? *diag : local;
  SdpOptions probe = opt.sdp;
  probe.nearest_point = false;
  auto oracle = [&](double lam, double lamL) {
    ++dg.oracle_calls;
    const SdpResult r =
        sdp_feasible(design_problem(nm, lam, lamL, opt.margin), opt.sdp_tol, probe);
    if (r.verdict == SdpVerdict::kUnknown) {
      throw DesignFailure("SDP oracle returned Unknown at lambda=" +
                          std::to_string(lam) + ", lambda_L=" +
                          std::to_string(lamL) + " (" + r.detail + ")");
    }
    return r.feasible();
  };
  const double top = 1.0 - opt.tol;
  if (!oracle(top, top)) {
    throw DesignFailure("no certificate with lambda below " + std::to_string(top));
  }
  double lo = 0.0, hi = top;
  while (hi - lo > opt.tol) {
    const double mid = 0.5 * (lo + hi);
    (oracle(mid, mid) ? hi : lo) = mid;
  }
  const double lambda = hi;
  dg.lambda_lower = lo;
  dg.lambda_upper = hi;
  lo = 0.0;
  hi = lambda;
  while (hi - lo > opt.tol) {
    const double mid = 0.5 * (lo + hi);
    (oracle(lambda, mid) ? hi : lo) = mid;
  }
  const double lambda_L = hi;
  dg.lambda_L_lower = lo;
  dg.lambda_L_upper = hi;

  const double lam_f = std::min(lambda + opt.tol, 1.0 - 1e-9);
  const double lamL_f = std::min(lambda_L + opt.tol, lam_f);
  ++dg.oracle_calls;
  const SdpResult sol =
      sdp_feasible(design_problem(nm, lam_f, lamL_f, opt.margin), opt.sdp_tol, opt.sdp);
  if (!sol.feasible()) {
    throw DesignFailure(std::string("final solve returned ") +
                        to_string(sol.verdict) + " (" + sol.detail + ")");
  }
  ContractionCertificate cert = certificate_from_solution(nm, sol, lam_f, lamL_f);
  const ResidualReport rep = verify_certificate(nm, cert);
  if (!rep.pass) throw DesignFailure("designed certificate failed: " + rep.message);
  return cert;
}

struct EmbeddingReport {
  bool pass = true;
  long samples = 0;
  long inequality_violations = 0;
  long hull_violations = 0;
  double worst_inequality_excess = 0.0;  // relative
  double worst_hull_distance = 0.0;      // relative
  Vec witness_e;
  Vec witness_v;
};

/// Randomized check that f(e, v) stays inside the convex hull of the scenario
/// images of e and below the largest scenario energy.
inline EmbeddingReport check_embedding(const NormalizedModel& nm, const Mat& P,
                                       const Mat& K, long samples,
                                       uint64_t seed, double tol = 1e-9) {
  const int n = nm.n();
  const int m = nm.m();
  const auto scenarios = enumerate_scenarios(nm, K);
  const int nv = static_cast<int>(scenarios.size());
  double knorm = 0.0;
  for (int j = 0; j < m; ++j) knorm = std::max(knorm, K.row(j).norm());
  const double escale = knorm > 0.0 ? 1.0 / knorm : 1.0;

  QpOptions qopt;
  qopt.fallback = true;
  QpSolver solver(qopt);
  QpProblem hull;
  hull.A_eq = Mat::Ones(1, nv);
  hull.b_eq = Vec::Ones(1);
  hull.A_in.resize(0, nv);
  hull.b_in.resize(0);
  hull.lb = Vec::Zero(nv);
  hull.ub = Vec::Constant(nv, std::numeric_limits<double>::infinity());

  EmbeddingReport rep;
  Mat V(n, nv);
  for (long s = 0; s < samples; ++s) {
    CounterRng rng(seed, 0x656d62ULL, static_cast<uint64_t>(s));
    Vec e(n);
    for (int i = 0; i < n; ++i) e(i) = rng.normal();
    const double radius = escale * std::pow(10.0, rng.uniform(-4.0, 3.0));
    if (s % 97 == 0) {
      e.setZero();
    } else {
      e *= radius / e.norm();
    }
    Vec v(m);
    for (int j = 0; j < m; ++j) {
      const double u = rng.uniform();
      v(j) = u < 0.125 ? -1.0 : (u < 0.25 ? 1.0 : rng.uniform(-1.0, 1.0));
    }
    const Vec f = error_step(e, v, K, nm);
    double best = 0.0;
    for (int k = 0; k < nv; ++k) {
      V.col(k) = scenarios[k].A_K * e;
      best = std::max(best, V.col(k).dot(P * V.col(k)));
    }
    const double lhs = f.dot(P * f);
    const double excess = (lhs - best) / std::max(1.0, best);
    rep.worst_inequality_excess = std::max(rep.worst_inequality_excess, excess);
    bool bad = false;
    if (excess > tol) {
      ++rep.inequality_violations;
      bad = true;
    }
    // least-distance point of the hull, in data scaled to unit size
    const double vscale = std::max(V.cwiseAbs().maxCoeff(), f.cwiseAbs().maxCoeff());
    double dist = 0.0;
    if (vscale > 0.0) {
      const Mat Vs = V / vscale;
      const Vec fs = f / vscale;
      hull.H = 2.0 * Vs.transpose() * Vs;
      hull.f = -2.0 * Vs.transpose() * fs;
      const QpResult r = solver.solve(hull, 1e-10);
      dist = r.optimal() ? (Vs * r.x - fs).norm()
                         : std::numeric_limits<double>::infinity();
    }
    rep.worst_hull_distance = std::max(rep.worst_hull_distance, dist);
    if (!(dist <= tol)) {
      ++rep.hull_violations;
      bad = true;
    }
    if (bad && rep.witness_e.size() == 0) {
      rep.witness_e = e;
      rep.witness_v = v;
    }
    ++rep.samples;
  }
  rep.pass = rep.inequality_violations == 0 && rep.hull_violations == 0;
  return rep;
}

}  // namespace sasmpc
