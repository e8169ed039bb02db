#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "sasmpc/common.hpp"
#include "sasmpc/conic/qp.hpp"
#include "sasmpc/prs.hpp"

namespace sasmpc {

/// {x : Hx <= h} with unit-norm rows.
struct Polytope {
  Mat H;
  Vec h;

  /// Normalizes each row to unit Euclidean norm.  Zero rows are rejected.
  static Polytope from_rows(const Mat& H, const Vec& h) {
    demand(H.rows() == h.size(), "Polytope: row count mismatch");
    Polytope p;
    p.H = H;
    p.h = h;
    for (Eigen::Index j = 0; j < H.rows(); ++j) {
      const double nrm = H.row(j).norm();
      demand(nrm > 0.0, "Polytope: zero row");
      p.H.row(j) /= nrm;
      p.h(j) /= nrm;
    }
    return p;
  }

  static Polytope whole_space(int n) {
    Polytope p;
    p.H.resize(0, n);
    p.h.resize(0);
    return p;
  }

  int rows() const { return static_cast<int>(H.rows()); }
  int dim() const { return static_cast<int>(H.cols()); }

  bool contains(const Vec& x, double tol = 1e-9) const {
    if (rows() == 0) return true;
    return ((H * x - h).array() <= tol).all();
  }

  Polytope intersect(const Polytope& o) const {
    demand(dim() == o.dim(), "Polytope: dimension mismatch");
    Polytope p;
    p.H.resize(rows() + o.rows(), dim());
    p.h.resize(rows() + o.rows());
    p.H << H, o.H;
    p.h << h, o.h;
    return p;
  }
};

struct SupportValue {
  bool empty = false;
  bool bounded = true;
  double value = 0.0;
};

/// max d'x over the polytope.
inline SupportValue support(const Polytope& poly, const Vec& d) {
  SupportValue out;
  if (poly.rows() == 0) {
    out.bounded = d.squaredNorm() == 0.0;
    return out;
  }
  const LpResult r = lp_minimize(-d, poly.H, poly.h);
  if (r.status == QpStatus::kInfeasible) {
    out.empty = true;
    out.value = -std::numeric_limits<double>::infinity();
    return out;
  }
  demand(r.status == QpStatus::kOptimal, "support: LP did not converge");
  out.value = -r.value;
  out.bounded = !r.hit_box;
  return out;
}

/// Largest t with Hx + t <= h for some x, capped at 1.  Negative values
/// measure how far the system is from feasible.
inline double chebyshev_radius(const Polytope& poly) {
  const int n = poly.dim();
  if (poly.rows() == 0) return 1.0;
  Mat A(poly.rows() + 1, n + 1);
  Vec b(poly.rows() + 1);
  A.setZero();
  A.topLeftCorner(poly.rows(), n) = poly.H;
  A.block(0, n, poly.rows(), 1).setOnes();
  A(poly.rows(), n) = 1.0;
  b << poly.h, 1.0;
  Vec c = Vec::Zero(n + 1);
  c(n) = -1.0;
  const LpResult r = lp_minimize(c, A, b);
  return r.x(n);
}

inline bool is_empty(const Polytope& poly, double tol = 1e-9) {
  return chebyshev_radius(poly) < -tol;
}

/// Drops rows implied by the others (support value within tol of the offset).
inline Polytope remove_redundant(const Polytope& poly, double tol = 1e-10) {
  std::vector<int> keep;
  std::vector<bool> alive(poly.rows(), true);
  for (int j = 0; j < poly.rows(); ++j) {
    Polytope rest;
    int cnt = 0;
    for (int i = 0; i < poly.rows(); ++i) cnt += (alive[i] && i != j);
    rest.H.resize(cnt, poly.dim());
    rest.h.resize(cnt);
    int row = 0;
    for (int i = 0; i < poly.rows(); ++i) {
      if (!alive[i] || i == j) continue;
      rest.H.row(row) = poly.H.row(i);
      rest.h(row) = poly.h(i);
      ++row;
    }
    const SupportValue s = support(rest, poly.H.row(j).transpose());
    if (!s.empty && s.bounded && s.value <= poly.h(j) + tol) alive[j] = false;
  }
  for (int j = 0; j < poly.rows(); ++j) {
    if (alive[j]) keep.push_back(j);
  }
  Polytope out;
  out.H.resize(static_cast<Eigen::Index>(keep.size()), poly.dim());
  out.h.resize(static_cast<Eigen::Index>(keep.size()));
  for (size_t k = 0; k < keep.size(); ++k) {
    out.H.row(k) = poly.H.row(keep[k]);
    out.h(k) = poly.h(keep[k]);
  }
  return out;
}

/// a subset of b (every row of b holds on a within tol)
inline bool is_subset(const Polytope& a, const Polytope& b, double tol = 1e-9) {
  for (int j = 0; j < b.rows(); ++j) {
    const SupportValue s = support(a, b.H.row(j).transpose());
    if (s.empty) return true;
    if (!s.bounded || s.value > b.h(j) + tol) return false;
  }
  return true;
}

/// Pontryagin difference with an ellipsoid: each offset drops by the
/// support function sqrt(r H_j P^-1 H_j').
inline Polytope erode_by_ellipsoid(const Polytope& poly, const Ellipsoid& ell) {
  demand(ell.r >= 0.0, "erode_by_ellipsoid: negative level");
  demand(ell.P.rows() == poly.dim(), "erode_by_ellipsoid: dimension mismatch");
  Polytope out = poly;
  if (ell.r == 0.0) return out;
  const Eigen::LLT<Mat> llt(symmetrize(ell.P));
  demand(llt.info() == Eigen::Success,
         "erode_by_ellipsoid: P not positive definite");
  for (int j = 0; j < poly.rows(); ++j) {
    const Vec hj = poly.H.row(j).transpose();
    out.h(j) -= std::sqrt(ell.r * hj.dot(llt.solve(hj)));
  }
  return out;
}

}  // namespace sasmpc
