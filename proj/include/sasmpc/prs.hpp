#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "sasmpc/common.hpp"
#include "sasmpc/linalg.hpp"

namespace sasmpc {

/// {e : e'Pe <= r}
struct Ellipsoid {
  Mat P;
  double r = 0.0;

  bool contains(const Vec& e, double tol = 0.0) const {
    return e.dot(P * e) <= r + tol;
  }
};

inline double trace_pw(const Mat& P, const Mat& W) {
  demand(P.rows() == W.rows() && P.cols() == W.cols() && P.rows() == P.cols(),
         "trace_pw: shape mismatch");
  return (P.array() * W.transpose().array()).sum();
}

struct LinearityRegion {
  double r_L = 0.0;
  double v_ss = 0.0;
};

/// Largest level r with e'Pe <= r implying |K_j e| <= 1 - v_ss for every
/// channel.  K and v_ss in normalized input units.
inline LinearityRegion region_of_linearity(const Mat& P, const Mat& K,
                                           double v_ss) {
  demand(v_ss >= 0.0 && v_ss < 1.0, "region_of_linearity: need 0 <= v_ss < 1");
  demand(K.cols() == P.rows(), "region_of_linearity: K columns");
  const Eigen::LLT<Mat> llt(symmetrize(P));
  demand(llt.info() == Eigen::Success,
         "region_of_linearity: P not positive definite");
  LinearityRegion out;
  out.v_ss = v_ss;
  out.r_L = std::numeric_limits<double>::infinity();
  const double num = (1.0 - v_ss) * (1.0 - v_ss);
  for (Eigen::Index j = 0; j < K.rows(); ++j) {
    const Vec kj = K.row(j).transpose();
    const double q = kj.dot(llt.solve(kj));
    if (q > 0.0) out.r_L = std::min(out.r_L, num / q);
  }
  return out;
}

/// g(mu) = (mu - lambda_L)/(lambda - lambda_L) r_L - trPW/(1 - mu).
/// Concave on [lambda_L, lambda]; its zero is the effective rate.
inline double effective_rate_gap(double mu, double lambda, double lambda_L,
                                 double r_L, double trPW) {
  return (mu - lambda_L) / (lambda - lambda_L) * r_L - trPW / (1.0 - mu);
}

struct EffectiveLambda {
  bool refined = false;
  double value = std::numeric_limits<double>::quiet_NaN();  // set if refined
};

/// Bisection on the gap function, run until the bracket stops shrinking
/// (well below 1e-10).  The upper end is returned, so the gap is
/// nonnegative at the reported rate.
inline EffectiveLambda effective_lambda(double lambda, double lambda_L,
                                        double r_L, double trPW) {
  demand(lambda_L >= 0.0 && lambda_L <= lambda && lambda < 1.0,
         "effective_lambda: need 0 <= lambda_L <= lambda < 1");
  demand(r_L > 0.0, "effective_lambda: r_L must be positive");
  demand(trPW >= 0.0, "effective_lambda: trPW must be nonnegative");
  EffectiveLambda out;
  if (!(trPW / (1.0 - lambda) < r_L)) return out;
  out.refined = true;
  if (trPW == 0.0 || lambda == lambda_L) {
    out.value = lambda_L;
    return out;
  }
  double lo = lambda_L;
  double hi = lambda;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (!(mid > lo && mid < hi)) break;
    if (effective_rate_gap(mid, lambda, lambda_L, r_L, trPW) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  out.value = hi;
  return out;
}

inline double select_hat_lambda(const EffectiveLambda& eff, double lambda) {
  return eff.refined ? eff.value : lambda;
}

/// Deterministic bound on E[e_i' P e_i] from e_0 = 0.
inline double expectation_bound(int i, double hat_lambda, double trPW) {
  demand(i >= 0, "expectation_bound: negative index");
  demand(hat_lambda >= 0.0 && hat_lambda < 1.0,
         "expectation_bound: rate out of [0, 1)");
  return (1.0 - std::pow(hat_lambda, i)) / (1.0 - hat_lambda) * trPW;
}

/// Ultimate-bound level trPW / (eps (1 - lambda)) + zeta.  The tightening
/// uses zeta = 0.
inline double pub_level(double lambda, double trPW, double epsilon,
                        double zeta = 0.0) {
  demand(epsilon > 0.0 && epsilon < 1.0, "pub_level: epsilon out of (0, 1)");
  demand(zeta >= 0.0, "pub_level: zeta must be nonnegative");
  return trPW / (epsilon * (1.0 - lambda)) + zeta;
}

struct PrsSchedule {
  double hat_lambda = 0.0;
  double trPW = 0.0;
  double epsilon = 0.0;
  std::vector<double> radii;  // r_0 .. r_horizon
  double r_inf = 0.0;

  int horizon() const { return static_cast<int>(radii.size()) - 1; }

  /// r_i for any i >= 0; past the table the closed form is evaluated.
  double radius(int i) const {
    demand(i >= 0, "PrsSchedule: negative index");
    if (i < static_cast<int>(radii.size())) return radii[i];
    return expectation_bound(i, hat_lambda, trPW) / epsilon;
  }
};

inline PrsSchedule prs_schedule(double hat_lambda, double trPW, double epsilon,
                                int horizon) {
  demand(epsilon > 0.0 && epsilon < 1.0, "prs_schedule: epsilon out of (0, 1)");
  demand(horizon >= 1, "prs_schedule: horizon must be >= 1");
  PrsSchedule s;
  s.hat_lambda = hat_lambda;
  s.trPW = trPW;
  s.epsilon = epsilon;
  s.radii.reserve(horizon + 1);
  for (int i = 0; i <= horizon; ++i) {
    s.radii.push_back(expectation_bound(i, hat_lambda, trPW) / epsilon);
  }
  s.r_inf = pub_level(hat_lambda, trPW, epsilon);
  return s;
}

}  // namespace sasmpc
