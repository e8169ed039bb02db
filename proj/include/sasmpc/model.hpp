#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "sasmpc/common.hpp"
#include "sasmpc/linalg.hpp"

namespace sasmpc {

/// x+ = A x + B u + w with |u_j| <= u_max_j and E[w w'] = W.
struct LtiModel {
  Mat A;
  Mat B;
  Vec u_max;
  Mat W;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }

  /// Throws ContractViolation naming the first broken invariant.  A zero
  /// disturbance is accepted only when allow_zero_noise is set (test mode).
  void validate(bool allow_zero_noise = false) const {
    demand(A.rows() > 0 && A.rows() == A.cols(), "model: A must be square");
    demand(B.rows() == A.rows(), "model: B row count must match A");
    demand(B.cols() > 0, "model: m = 0 is not a control problem");
    demand(u_max.size() == B.cols(), "model: u_max length must equal m");
    demand(W.rows() == A.rows() && W.cols() == A.cols(),
           "model: W must be n x n");
    demand(A.allFinite() && B.allFinite() && u_max.allFinite() &&
               W.allFinite(),
           "model: non-finite entries");
    demand((u_max.array() > 0.0).all(), "model: u_max must be positive");
    demand(is_symmetric(W, 1e-12), "model: W must be symmetric");
    if (allow_zero_noise) {
      demand(W.isZero(0.0) || is_positive_definite(W),
             "model: W must be positive definite or exactly zero");
    } else {
      demand(is_positive_definite(W), "model: W must be positive definite");
    }
    demand(spectral_radius(A) < 1.0,
           "Assumption 2a violated: A is not Schur stable");
  }
};

/// The same plant with input units rescaled so every bound is 1.
struct NormalizedModel {
  Mat A;
  Mat B_n;
  Vec scale;
  Mat W;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B_n.cols()); }
};

/// Nominal/error decomposition of a predicted state, x = z + e.
struct SplitState {
  Vec z;
  Vec e;
  Vec v;

  Vec x() const { return z + e; }
};

inline Vec saturate(const Vec& u, const Vec& bounds) {
  demand(u.size() == bounds.size(), "saturate: dimension mismatch");
  demand((bounds.array() > 0.0).all(), "saturate: bounds must be positive");
  Vec out(u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    out(j) = std::clamp(u(j), -bounds(j), bounds(j));
  }
  return out;
}

inline Vec saturate_unit(const Vec& u) {
  Vec out(u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    out(j) = std::clamp(u(j), -1.0, 1.0);
  }
  return out;
}

/// Columns of B are multiplied by u_max; nothing else changes.
inline NormalizedModel normalize(const LtiModel& model) {
  NormalizedModel nm;
  nm.A = model.A;
  nm.B_n = model.B;
  for (int j = 0; j < model.m(); ++j) nm.B_n.col(j) *= model.u_max(j);
  nm.scale = model.u_max;
  nm.W = model.W;
  return nm;
}

/// Normalized -> actuator units.  Multiplication only: with |u'| <= 1 the
/// product never exceeds the bound, so saturate(denormalize(u')) equals
/// denormalize(saturate_unit(u')) bit for bit.
inline Vec denormalize_input(const NormalizedModel& nm, const Vec& u_n) {
  demand(u_n.size() == nm.scale.size(), "denormalize_input: dimension");
  return nm.scale.cwiseProduct(u_n);
}

inline Vec normalize_input(const NormalizedModel& nm, const Vec& u) {
  demand(u.size() == nm.scale.size(), "normalize_input: dimension");
  return u.cwiseQuotient(nm.scale);
}

/// Row j of an actuator-unit gain divided by u_max_j.
inline Mat normalize_gain(const NormalizedModel& nm, const Mat& K) {
  demand(K.rows() == nm.m() && K.cols() == nm.n(), "normalize_gain: shape");
  Mat Kn = K;
  for (int j = 0; j < nm.m(); ++j) Kn.row(j) /= nm.scale(j);
  return Kn;
}

inline Mat denormalize_gain(const NormalizedModel& nm, const Mat& K_n) {
  demand(K_n.rows() == nm.m() && K_n.cols() == nm.n(),
         "denormalize_gain: shape");
  Mat K = K_n;
  for (int j = 0; j < nm.m(); ++j) K.row(j) *= nm.scale(j);
  return K;
}

/// Cost weight on normalized inputs equivalent to R on actuator inputs.
inline Mat normalize_input_weight(const NormalizedModel& nm, const Mat& R) {
  demand(R.rows() == nm.m() && R.cols() == nm.m(),
         "normalize_input_weight: shape");
  return nm.scale.asDiagonal() * R * nm.scale.asDiagonal();
}

/// f(e, v) = A e + B_n (sat(K e + v) - v).
inline Vec error_step(const Vec& e, const Vec& v, const Mat& K,
                      const NormalizedModel& nm) {
  demand(e.size() == nm.n() && v.size() == nm.m(), "error_step: dimension");
  demand(K.rows() == nm.m() && K.cols() == nm.n(), "error_step: K shape");
  demand(v.size() == 0 || v.cwiseAbs().maxCoeff() <= 1.0,
         "error_step: nominal input outside the unit box");
  return nm.A * e + nm.B_n * (saturate_unit(K * e + v) - v);
}

inline Vec nominal_step(const Vec& z, const Vec& v, const NormalizedModel& nm) {
  demand(z.size() == nm.n() && v.size() == nm.m(), "nominal_step: dimension");
  return nm.A * z + nm.B_n * v;
}

}  // namespace sasmpc
