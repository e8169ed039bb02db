#pragma once

#include <cmath>
#include <complex>

#include <Eigen/Eigenvalues>

#include "sasmpc/common.hpp"

namespace sasmpc {

inline Mat symmetrize(const Mat& M) { return 0.5 * (M + M.transpose()); }

inline bool is_symmetric(const Mat& M, double tol = 1e-12) {
  if (M.rows() != M.cols()) return false;
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline Vec sym_eigenvalues(const Mat& M) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(M), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_eigenvalue(const Mat& M) {
  return sym_eigenvalues(M).minCoeff();
}

inline double max_eigenvalue(const Mat& M) {
  return sym_eigenvalues(M).maxCoeff();
}

inline double spectral_radius(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline bool is_positive_definite(const Mat& M) {
  if (!is_symmetric(M, 1e-9)) return false;
  Eigen::LLT<Mat> llt(symmetrize(M));
  return llt.info() == Eigen::Success && min_eigenvalue(M) > 0.0;
}

/// Largest eigenvalue of P^{-1/2} Q P^{-1/2}, i.e. the smallest c with Q <= c P.
inline double generalized_max_eigenvalue(const Mat& Q, const Mat& P) {
  Eigen::LLT<Mat> llt(symmetrize(P));
  demand(llt.info() == Eigen::Success, "generalized_max_eigenvalue: P not PD");
  const Mat L = llt.matrixL();
  const Mat Li = L.triangularView<Eigen::Lower>().solve(
      Mat::Identity(P.rows(), P.cols()));
  return max_eigenvalue(Li * symmetrize(Q) * Li.transpose());
}

/// Lower Cholesky factor; requires positive definiteness.
inline Mat cholesky_lower(const Mat& M) {
  Eigen::LLT<Mat> llt(symmetrize(M));
  demand(llt.info() == Eigen::Success, "cholesky_lower: matrix not PD");
  return llt.matrixL();
}

}  // namespace sasmpc
