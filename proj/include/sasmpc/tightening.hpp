#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sasmpc/common.hpp"
#include "sasmpc/design.hpp"
#include "sasmpc/linalg.hpp"
#include "sasmpc/model.hpp"
#include "sasmpc/polytope.hpp"
#include "sasmpc/prs.hpp"

namespace sasmpc {

struct TerminalPair {
  Mat S;
  Mat K_f;  // u = K_f z
  int iterations = 0;
  double residual = 0.0;  // max |A_f' S A_f - S + Q + K_f' R K_f|, relative
};

/// LQR pair by Riccati value iteration from S = Q.
inline TerminalPair terminal_pair(const Mat& A, const Mat& B, const Mat& Q,
                                  const Mat& R, int max_iterations = 1000000) {
  const Eigen::Index n = A.rows();
  demand(A.cols() == n && B.rows() == n && Q.rows() == n && Q.cols() == n,
         "terminal_pair: shape mismatch");
  demand(R.rows() == B.cols() && R.cols() == B.cols(),
         "terminal_pair: R shape");
  demand(min_eigenvalue(symmetrize(Q)) >= -1e-12,
         "terminal_pair: Q must be positive semidefinite");
  demand(is_positive_definite(symmetrize(R)),
         "terminal_pair: R must be positive definite");
  TerminalPair out;
  Mat S = symmetrize(Q);
  bool converged = false;
  for (int it = 1; it <= max_iterations; ++it) {
    const Mat BtS = B.transpose() * S;
    const Mat G = R + BtS * B;
    const Mat Snew = symmetrize(Q + A.transpose() * S * A -
                                (BtS * A).transpose() * G.llt().solve(BtS * A));
    if (!Snew.allFinite()) {
      throw DesignFailure("terminal_pair: Riccati iteration diverged");
    }
    const double diff = (Snew - S).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, Snew.cwiseAbs().maxCoeff());
    S = Snew;
    out.iterations = it;
    if (diff <= 1e-12 * scale) {
      converged = true;
      break;
    }
    if (scale > 1e200) break;
  }
  if (!converged) {
    throw DesignFailure("terminal_pair: Riccati iteration did not converge");
  }
  const Mat BtS = B.transpose() * S;
  out.K_f = -(R + BtS * B).llt().solve(BtS * A);
  out.S = S;
  if (!is_positive_definite(S)) {
    throw DesignFailure("terminal_pair: terminal weight not positive definite");
  }
  const Mat Af = A + B * out.K_f;
  const Mat res = Af.transpose() * S * Af - S + Q + out.K_f.transpose() * R * out.K_f;
  out.residual = res.cwiseAbs().maxCoeff() / std::max(1.0, S.cwiseAbs().maxCoeff());
  if (!(out.residual <= 1e-9)) {
    throw DesignFailure("terminal_pair: Lyapunov equality residual too large");
  }
  return out;
}

struct TerminalSetInfo {
  int iterations = 0;
  bool converged = false;
};

/// Maximal positively invariant subset of box for z+ = A_f z, by pre-set
/// iteration with redundancy removal.  Throws DesignFailure when the set
/// is empty or the result fails the independent invariance check.
inline Polytope terminal_set(const Mat& A_f, const Polytope& box,
                             TerminalSetInfo* info = nullptr,
                             int max_iterations = 200) {
  demand(spectral_radius(A_f) < 1.0, "terminal_set: A + B K_f not Schur");
  if (is_empty(box)) throw DesignFailure("terminal set empty");
  Polytope C = remove_redundant(box);
  TerminalSetInfo local;
  for (int it = 1; it <= max_iterations; ++it) {
    const Mat HA = C.H * A_f;
    std::vector<int> live;
    for (int j = 0; j < C.rows(); ++j) {
      if (HA.row(j).norm() > 1e-14) {
        live.push_back(j);
      } else if (C.h(j) < 0.0) {
        throw DesignFailure("terminal set empty");
      }
    }
    Mat Hp(static_cast<Eigen::Index>(live.size()), C.dim());
    Vec hp(static_cast<Eigen::Index>(live.size()));
    for (size_t k = 0; k < live.size(); ++k) {
      Hp.row(k) = HA.row(live[k]);
      hp(k) = C.h(live[k]);
    }
    const Polytope pre = Polytope::from_rows(Hp, hp);
    Polytope next = remove_redundant(box.intersect(pre));
    if (next.rows() == 0 || is_empty(next)) {
      throw DesignFailure("terminal set empty");
    }
    local.iterations = it;
    const bool same = is_subset(C, next, 1e-10);
    C = std::move(next);
    if (same) {
      local.converged = true;
      break;
    }
  }
  if (info) *info = local;
  for (int j = 0; j < C.rows(); ++j) {
    const SupportValue s = support(C, A_f.transpose() * C.H.row(j).transpose());
    if (!s.bounded || s.value > C.h(j) + 1e-9) {
      throw DesignFailure("terminal set not invariant");
    }
  }
  if (!is_subset(C, box)) throw DesignFailure("terminal set leaves the box");
  return C;
}

struct TerminalWeightReport {
  bool pass = false;
  double min_eigenvalue = 0.0;  // of alpha (1 - (1+delta) lam) P - Q - K'RK
  double alpha_min = 0.0;       // smallest passing alpha
};

/// Average-cost terminal condition alpha (1 - (1+delta) hat_lambda) P >=
/// Q + K'RK, checked by eigenvalues.  Diagnostic only.
inline TerminalWeightReport verify_terminal_weight(const Mat& P, const Mat& K,
                                                   const Mat& Q, const Mat& R,
                                                   double hat_lambda,
                                                   double alpha, double delta) {
  demand(delta > 0.0, "verify_terminal_weight: delta must be positive");
  demand(delta <= (1.0 - hat_lambda) / hat_lambda * (1.0 + 1e-12),
         "verify_terminal_weight: delta exceeds (1 - lambda) / lambda");
  const double c = std::max(0.0, 1.0 - (1.0 + delta) * hat_lambda);
  const Mat M = symmetrize(Q + K.transpose() * R * K);
  TerminalWeightReport out;
  out.min_eigenvalue = min_eigenvalue(symmetrize(alpha * c * P) - M);
  out.pass = out.min_eigenvalue >= -1e-9;
  const double g = std::max(0.0, generalized_max_eigenvalue(M, symmetrize(P)));
  out.alpha_min = g == 0.0 ? 0.0
                  : c > 0.0 ? g / c
                            : std::numeric_limits<double>::infinity();
  return out;
}

enum class Arm { kLambdaStar, kLambda };

inline const char* to_string(Arm a) {
  return a == Arm::kLambdaStar ? "lambda_star" : "lambda";
}

inline Arm parse_arm(const std::string& s) {
  if (s == "lambda_star") return Arm::kLambdaStar;
  if (s == "lambda") return Arm::kLambda;
  throw ConfigError("unknown arm '" + s + "' (expected lambda_star or lambda)");
}

/// Smallest i >= 1 with hat_lambda^i <= 1e-9; from there on r_inf is used.
inline int prs_cutoff(double hat_lambda) {
  demand(hat_lambda >= 0.0 && hat_lambda < 1.0, "prs_cutoff: rate out of range");
  int i = 1;
  double p = hat_lambda;
  while (p > 1e-9) {
    p *= hat_lambda;
    ++i;
  }
  return i;
}

struct TighteningSchedule {
  Arm arm = Arm::kLambdaStar;
  double lambda = 0.0;
  double lambda_L = 0.0;
  double r_L = 0.0;
  bool refined = false;  // hat_lambda came from the effective-rate root
  PrsSchedule prs;
  Polytope X;
  std::vector<Polytope> Z;  // Z[i], i < cutoff
  Polytope Z_inf;
  Polytope Z_f;
  Mat S;
  Mat K_f;
  double v_ss = 0.0;
  int cutoff = 0;
  int terminal_iterations = 0;
  bool feasible = true;
  std::string reason;

  double hat_lambda() const { return prs.hat_lambda; }

  const Polytope& Z_at(int index) const {
    demand(index >= 0, "TighteningSchedule: negative index");
    return index >= cutoff ? Z_inf : Z[index];
  }
};

struct TighteningOptions {
  Mat Q;
  Mat R;  // normalized input units
  double epsilon = 0.2;
  double v_ss = 0.96;  // normalized
};

/// Offline tightening for one arm.  Empty sets are reported through
/// feasible/reason rather than thrown.
inline TighteningSchedule build_tightening(const NormalizedModel& nm,
                                           const ContractionCertificate& cert,
                                           const Polytope& X, Arm arm,
                                           const TighteningOptions& opt) {
  demand(X.dim() == nm.n(), "build_tightening: constraint dimension");
  demand(opt.epsilon > 0.0 && opt.epsilon < 1.0,
         "build_tightening: epsilon out of (0, 1)");
  TighteningSchedule s;
  s.arm = arm;
  s.lambda = cert.lambda;
  s.lambda_L = cert.lambda_L;
  s.v_ss = opt.v_ss;
  s.X = X;
  const double t = trace_pw(cert.P, nm.W);
  s.r_L = region_of_linearity(cert.P, cert.K, opt.v_ss).r_L;
  const EffectiveLambda eff =
      effective_lambda(cert.lambda, cert.lambda_L, s.r_L, t);
  double hat = cert.lambda;
  if (arm == Arm::kLambdaStar) {
    hat = select_hat_lambda(eff, cert.lambda);
    s.refined = eff.refined;
  }
  s.cutoff = prs_cutoff(hat);
  s.prs = prs_schedule(hat, t, opt.epsilon, s.cutoff);
  s.Z.reserve(s.cutoff);
  for (int i = 0; i < s.cutoff; ++i) {
    s.Z.push_back(erode_by_ellipsoid(X, {cert.P, s.prs.radius(i)}));
  }
  s.Z_inf = erode_by_ellipsoid(X, {cert.P, s.prs.r_inf});
  const TerminalPair tp = terminal_pair(nm.A, nm.B_n, opt.Q, opt.R);
  s.S = tp.S;
  s.K_f = tp.K_f;
  for (int i = 0; i < s.cutoff; ++i) {
    if (is_empty(s.Z[i])) {
      s.feasible = false;
      s.reason = "tightened set Z_" + std::to_string(i) + " empty";
      return s;
    }
  }
  const int m = nm.m();
  Mat Hk(2 * m, nm.n());
  Hk << s.K_f, -s.K_f;
  const Polytope XK =
      Polytope::from_rows(Hk, Vec::Constant(2 * m, opt.v_ss));
  try {
    TerminalSetInfo info;
    s.Z_f = terminal_set(nm.A + nm.B_n * s.K_f, s.Z_inf.intersect(XK), &info);
    s.terminal_iterations = info.iterations;
  } catch (const DesignFailure& e) {
    s.feasible = false;
    s.reason = e.what();
  }
  return s;
}

}  // namespace sasmpc
