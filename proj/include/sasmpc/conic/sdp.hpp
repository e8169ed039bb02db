#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sasmpc/common.hpp"
#include "sasmpc/linalg.hpp"

namespace sasmpc {

/// F(x) = C + sum_i x_i G_i, required >= margin * I.
struct LmiBlock {
  std::string name;
  Mat C;
  std::vector<Mat> G;

  int size() const { return static_cast<int>(C.rows()); }

  Mat evaluate(const Vec& x) const {
    Mat F = C;
    for (size_t i = 0; i < G.size(); ++i) F += x(static_cast<Eigen::Index>(i)) * G[i];
    return F;
  }
};

/// Variables: a symmetric n x n block X and an m x n block Y, packed as the
/// upper triangle of X (row by row) followed by Y in row-major order.
struct SdpFeasibilityProblem {
  int n = 0;
  int m = 0;
  double margin = 1e-6;
  std::vector<LmiBlock> blocks;

  using Expression = std::function<Mat(const Mat& X, const Mat& Y)>;

  SdpFeasibilityProblem() = default;
  SdpFeasibilityProblem(int n_, int m_, double margin_ = 1e-6)
      : n(n_), m(m_), margin(margin_) {}

  int num_variables() const { return n * (n + 1) / 2 + m * n; }

  Mat X_of(const Vec& x) const {
    Mat X(n, n);
    int k = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j, ++k) {
        X(i, j) = x(k);
        X(j, i) = x(k);
      }
    }
    return X;
  }

  Mat Y_of(const Vec& x) const {
    Mat Y(m, n);
    int k = n * (n + 1) / 2;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j, ++k) Y(i, j) = x(k);
    return Y;
  }

  Vec pack(const Mat& X, const Mat& Y) const {
    Vec x(num_variables());
    int k = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j, ++k) x(k) = X(i, j);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j, ++k) x(k) = Y(i, j);
    return x;
  }

  /// Records an expression in (X, Y).  Coefficients come from evaluations at
  /// the origin and the unit vectors; a probe at a generic point rejects
  /// expressions that are not affine or not symmetric.
  void add_block(const std::string& name, const Expression& expr) {
    const int d = num_variables();
    const Vec zero = Vec::Zero(d);
    LmiBlock b;
    b.name = name;
    b.C = expr(X_of(zero), Y_of(zero));
    demand(b.C.rows() == b.C.cols() && b.C.rows() > 0,
           "add_block: expression must be a nonempty square matrix");
    for (int i = 0; i < d; ++i) {
      const Vec e = Vec::Unit(d, i);
      b.G.push_back(expr(X_of(e), Y_of(e)) - b.C);
      demand(b.G.back().rows() == b.C.rows() && b.G.back().cols() == b.C.cols(),
             "add_block: inconsistent expression size");
      demand(is_symmetric(b.G.back(), 1e-12),
             "add_block: coefficient of variable " + std::to_string(i) +
                 " in block '" + name + "' is not symmetric");
    }
    demand(is_symmetric(b.C, 1e-12),
           "add_block: constant term of '" + name + "' is not symmetric");
    Vec probe(d);
    for (int i = 0; i < d; ++i) probe(i) = 0.37 + 0.731 * std::sin(1.0 + 2.3 * i);
    const Mat direct = expr(X_of(probe), Y_of(probe));
    const Mat affine = b.evaluate(probe);
    const double scale = std::max(1.0, direct.cwiseAbs().maxCoeff());
    demand((direct - affine).cwiseAbs().maxCoeff() <= 1e-9 * scale,
           "add_block: expression '" + name + "' is not affine in (X, Y)");
    blocks.push_back(std::move(b));
  }

  /// Minimum over blocks of lambda_min(F_b(x)).
  double min_block_eigenvalue(const Vec& x) const {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& b : blocks) worst = std::min(worst, min_eigenvalue(b.evaluate(x)));
    return worst;
  }
};

enum class SdpVerdict { kFeasible, kInfeasible, kUnknown };

inline const char* to_string(SdpVerdict v) {
  switch (v) {
    case SdpVerdict::kFeasible: return "Feasible";
    case SdpVerdict::kInfeasible: return "Infeasible";
    case SdpVerdict::kUnknown: return "Unknown";
  }
  return "?";
}

enum class SdpMethod { kBarrier, kAlternatingProjections };

struct SdpOptions {
  SdpMethod method = SdpMethod::kBarrier;
  /// Point the returned solution is pulled towards; empty means X = I, Y = 0.
  Vec anchor;
  /// Barrier method only: move a feasible phase I point to the feasible point
  /// nearest the anchor.  Verdicts do not depend on it.
  bool nearest_point = true;
  // Barrier method.
  int max_newton_iterations = 5000;
  double radius = 1e4;  // |x| <= radius * max(1, |anchor|) keeps phase I compact
  double final_barrier_weight = 1e-10;
  // Alternating projections.
  int max_iterations = 50000;
  int stall_window = 1000;
};

struct SdpResult {
  SdpVerdict verdict = SdpVerdict::kUnknown;
  Mat X;
  Mat Y;
  Vec x;
  double min_margin = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  std::string detail;

  bool feasible() const { return verdict == SdpVerdict::kFeasible; }
};

namespace internal {

/// Newton direction; falls back to a lightly regularized system when the
/// Hessian is numerically indefinite.
inline Vec newton_direction(const Mat& H, const Vec& g) {
  Eigen::LLT<Mat> llt(H);
  if (llt.info() == Eigen::Success) {
    Vec step = -llt.solve(g);
    if (step.allFinite()) return step;
  }
  const double shift = 1e-12 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
  return -(H + shift * Mat::Identity(H.rows(), H.cols())).ldlt().solve(g);
}

/// Cholesky of every shifted block; false if any is not positive definite.
inline bool shifted_inverses(const SdpFeasibilityProblem& p, const Vec& x,
                             double shift, std::vector<Mat>* inverses,
                             double* logdet) {
  double ld = 0.0;
  if (inverses) inverses->clear();
  for (const auto& b : p.blocks) {
    Mat S = b.evaluate(x);
    S.diagonal().array() -= shift;
    Eigen::LLT<Mat> llt(S);
    if (llt.info() != Eigen::Success) return false;
    const Vec diag = Mat(llt.matrixL()).diagonal();
    if (!(diag.minCoeff() > 0.0)) return false;
    ld += 2.0 * diag.array().log().sum();
    if (inverses) inverses->push_back(llt.solve(Mat::Identity(S.rows(), S.cols())));
  }
  if (logdet) *logdet = ld;
  return true;
}

/// Phase I: maximize t subject to F_b(x) >= t I and |x| <= radius.
/// Stops as soon as t clears the margin, or once the duality-gap bound
/// proves the optimum lies below it.
inline SdpVerdict barrier_phase_one(const SdpFeasibilityProblem& p, Vec* x_io,
                                    const SdpOptions& opt, int* iterations) {
  const int d = p.num_variables();
  Vec x = *x_io;
  const double radius = opt.radius * std::max(1.0, x.norm());
  const double R2 = radius * radius;
  double t = p.min_block_eigenvalue(x) - 1.0;
  double nu = 1.0;
  for (const auto& b : p.blocks) nu += b.size();
  const double mu = p.margin;
  auto feasible_value = [&](double tv) { return tv > mu * (1.0 + 1e-3) + 1e-12; };
  auto value = [&](const Vec& xv, double tv, double s, bool* ok) {
    const double q = R2 - xv.squaredNorm();
    double ld = 0.0;
    if (q <= 0.0 || !shifted_inverses(p, xv, tv, nullptr, &ld)) {
      *ok = false;
      return 0.0;
    }
    *ok = true;
    return -s * tv - ld - std::log(q);
  };
  double s = 1.0;
  std::vector<Mat> inv;
  for (int outer = 0; outer < 200; ++outer) {
    for (int inner = 0; inner < 200; ++inner) {
      if (++*iterations > opt.max_newton_iterations) return SdpVerdict::kUnknown;
      if (feasible_value(t)) {
        *x_io = x;
        return SdpVerdict::kFeasible;
      }
      if (!shifted_inverses(p, x, t, &inv, nullptr)) return SdpVerdict::kUnknown;
      Vec g = Vec::Zero(d + 1);
      Mat H = Mat::Zero(d + 1, d + 1);
      g(d) = -s;
      for (size_t b = 0; b < p.blocks.size(); ++b) {
        const auto& blk = p.blocks[b];
        std::vector<Mat> SD(d + 1);
        for (int i = 0; i < d; ++i) SD[i] = inv[b] * blk.G[i];
        SD[d] = -inv[b];
        for (int i = 0; i <= d; ++i) {
          g(i) -= SD[i].trace();
          for (int j = i; j <= d; ++j) {
            const double h = (SD[i].array() * SD[j].transpose().array()).sum();
            H(i, j) += h;
            if (j != i) H(j, i) += h;
          }
        }
      }
      const double q = R2 - x.squaredNorm();
      g.head(d) += 2.0 * x / q;
      H.topLeftCorner(d, d) += (2.0 / q) * Mat::Identity(d, d) +
                               (4.0 / (q * q)) * x * x.transpose();
      const Vec step = newton_direction(H, g);
      const double dec = -g.dot(step);
      if (!(dec >= 0.0) || !step.allFinite()) return SdpVerdict::kUnknown;
      if (dec < 1e-18 * std::max(1.0, s)) break;
      bool ok = false;
      const double f0 = value(x, t, s, &ok);
      double a = 1.0;
      while (a > 1e-16) {
        const Vec xn = x + a * step.head(d);
        const double tn = t + a * step(d);
        const double fn = value(xn, tn, s, &ok);
        if (ok && fn <= f0 - 0.25 * a * dec) {
          x = xn;
          t = tn;
          break;
        }
        a *= 0.5;
      }
      if (a <= 1e-16) break;
      if (dec < 1e-12) break;
    }
    if (feasible_value(t)) {
      *x_io = x;
      return SdpVerdict::kFeasible;
    }
    const double gap = nu / s;
    if (t + gap < mu) {
      *x_io = x;
      return SdpVerdict::kInfeasible;
    }
    if (gap < 1e-13 * std::max(1.0, std::abs(t))) {
      *x_io = x;
      return t >= mu ? SdpVerdict::kFeasible : SdpVerdict::kInfeasible;
    }
    s *= 8.0;
  }
  return SdpVerdict::kUnknown;
}

/// From a strictly feasible x, follows the central path of
///   min 0.5 |x - a|^2 - tau sum_b log det(F_b(x) - margin I)
/// towards the point of the feasible set nearest to the anchor a.
inline bool barrier_nearest(const SdpFeasibilityProblem& p, const Vec& anchor,
                            Vec* x_io, const SdpOptions& opt, int* iterations) {
  const int d = p.num_variables();
  Vec x = *x_io;
  const double mu = p.margin;
  double tau = std::max(1.0, 0.5 * (x - anchor).squaredNorm());
  std::vector<Mat> inv;
  auto value = [&](const Vec& xv, bool* ok) {
    double ld = 0.0;
    *ok = shifted_inverses(p, xv, mu, nullptr, &ld);
    return *ok ? 0.5 * (xv - anchor).squaredNorm() - tau * ld : 0.0;
  };
  while (true) {
    for (int inner = 0; inner < 200; ++inner) {
      if (++*iterations > opt.max_newton_iterations) return false;
      if (!shifted_inverses(p, x, mu, &inv, nullptr)) return false;
      Vec g = x - anchor;
      Mat H = Mat::Identity(d, d);
      for (size_t b = 0; b < p.blocks.size(); ++b) {
        std::vector<Mat> SD(d);
        for (int i = 0; i < d; ++i) SD[i] = inv[b] * p.blocks[b].G[i];
        for (int i = 0; i < d; ++i) {
          g(i) -= tau * SD[i].trace();
          for (int j = i; j < d; ++j) {
            const double h = tau * (SD[i].array() * SD[j].transpose().array()).sum();
            H(i, j) += h;
            if (j != i) H(j, i) += h;
          }
        }
      }
      const Vec step = newton_direction(H, g);
      const double dec = -g.dot(step);
      if (!(dec >= 0.0) || !step.allFinite()) return false;
      if (dec < 1e-20 * std::max(1.0, x.squaredNorm())) break;
      bool ok = false;
      const double f0 = value(x, &ok);
      double a = 1.0;
      while (a > 1e-16) {
        const Vec xn = x + a * step;
        const double fn = value(xn, &ok);
        if (ok && fn <= f0 - 0.25 * a * dec) {
          x = xn;
          break;
        }
        a *= 0.5;
      }
      if (a <= 1e-16) break;
    }
    *x_io = x;
    if (tau <= opt.final_barrier_weight) return true;
    tau *= 0.1;
  }
}

/// Dykstra's alternating projections between the affine set
/// {S_b = F_b(x) - margin I} and the product of PSD cones.
inline SdpResult alternating_projections(const SdpFeasibilityProblem& p,
                                         const Vec& anchor, double tol,
                                         const SdpOptions& opt) {
  const int d = p.num_variables();
  const int nb = static_cast<int>(p.blocks.size());
  const double mu = p.margin + tol;
  // Normal equations of the affine projection.
  Mat M = Mat::Identity(d, d);
  for (const auto& b : p.blocks) {
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        const double v = (b.G[i].array() * b.G[j].array()).sum();
        M(i, j) += v;
        if (j != i) M(j, i) += v;
      }
  }
  Eigen::LLT<Mat> normal(M);
  struct Point {
    Vec x;
    std::vector<Mat> S;
  };
  auto project_affine = [&](const Point& in) {
    Vec rhs = in.x;
    for (int b = 0; b < nb; ++b) {
      Mat T = in.S[b] - p.blocks[b].C;
      T.diagonal().array() += mu;
      for (int i = 0; i < d; ++i) rhs(i) += (p.blocks[b].G[i].array() * T.array()).sum();
    }
    Point out;
    out.x = normal.solve(rhs);
    for (int b = 0; b < nb; ++b) {
      Mat S = p.blocks[b].evaluate(out.x);
      S.diagonal().array() -= mu;
      out.S.push_back(S);
    }
    return out;
  };
  auto project_psd = [&](const Point& in) {
    Point out;
    out.x = in.x;
    for (int b = 0; b < nb; ++b) {
      Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(in.S[b]));
      const Vec ev = es.eigenvalues().cwiseMax(0.0);
      out.S.push_back(es.eigenvectors() * ev.asDiagonal() *
                      es.eigenvectors().transpose());
    }
    return out;
  };
  auto add = [&](const Point& a, const Point& b, double sb) {
    Point out;
    out.x = a.x + sb * b.x;
    for (int k = 0; k < nb; ++k) out.S.push_back(a.S[k] + sb * b.S[k]);
    return out;
  };
  auto distance = [&](const Point& a, const Point& b) {
    double s2 = (a.x - b.x).squaredNorm();
    for (int k = 0; k < nb; ++k) s2 += (a.S[k] - b.S[k]).squaredNorm();
    return std::sqrt(s2);
  };
  Point w;
  w.x = anchor;
  for (int b = 0; b < nb; ++b) {
    Mat S = p.blocks[b].evaluate(anchor);
    S.diagonal().array() -= mu;
    w.S.push_back(S);
  }
  Point pc{Vec::Zero(d), std::vector<Mat>(nb)};
  Point qc{Vec::Zero(d), std::vector<Mat>(nb)};
  for (int b = 0; b < nb; ++b) {
    pc.S[b] = Mat::Zero(p.blocks[b].size(), p.blocks[b].size());
    qc.S[b] = pc.S[b];
  }
  std::deque<double> history;
  SdpResult res;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const Point wp = add(w, pc, 1.0);
    const Point y = project_affine(wp);
    pc = add(wp, y, -1.0);
    const Point yq = add(y, qc, 1.0);
    w = project_psd(yq);
    qc = add(yq, w, -1.0);
    res.iterations = it;
    if (p.min_block_eigenvalue(y.x) >= p.margin) {
      res.verdict = SdpVerdict::kFeasible;
      res.x = y.x;
      return res;
    }
    const double r = distance(y, w);
    history.push_back(r);
    if (static_cast<int>(history.size()) > opt.stall_window) {
      const double old = history.front();
      history.pop_front();
      if (r > 0.99 * old && r > 10.0 * tol) {
        res.verdict = SdpVerdict::kInfeasible;
        res.x = y.x;
        res.detail = "projection residual stalled at " + std::to_string(r);
        return res;
      }
    }
  }
  res.verdict = SdpVerdict::kUnknown;
  res.x = w.x;
  res.detail = "iteration cap reached";
  return res;
}

}  // namespace internal

/// Feasibility of every block >= margin * I.  A Feasible answer is always
/// re-checked by eigenvalue decomposition of the raw blocks; a point that
/// fails the check is reported as Unknown.
inline SdpResult sdp_feasible(const SdpFeasibilityProblem& p, double tol,
                              const SdpOptions& opt = {}) {
  demand(p.margin > 0.0, "sdp_feasible: margin must be positive");
  demand(tol > 0.0, "sdp_feasible: tol must be positive");
  demand(!p.blocks.empty(), "sdp_feasible: no blocks");
  const int d = p.num_variables();
  for (const auto& b : p.blocks) {
    demand(static_cast<int>(b.G.size()) == d,
           "sdp_feasible: block '" + b.name + "' has wrong coefficient count");
  }
  Vec anchor = opt.anchor;
  if (anchor.size() == 0) {
    anchor = p.pack(Mat::Identity(p.n, p.n), Mat::Zero(p.m, p.n));
  }
  demand(anchor.size() == d, "sdp_feasible: anchor length");

  SdpResult res;
  if (opt.method == SdpMethod::kAlternatingProjections) {
    res = internal::alternating_projections(p, anchor, tol, opt);
  } else {
    Vec x = anchor;
    int iters = 0;
    res.verdict = internal::barrier_phase_one(p, &x, opt, &iters);
    if (res.verdict == SdpVerdict::kFeasible && opt.nearest_point) {
      Vec near = x;
      if (internal::barrier_nearest(p, anchor, &near, opt, &iters)) x = near;
    }
    res.x = x;
    res.iterations = iters;
    if (res.verdict == SdpVerdict::kUnknown) res.detail = "Newton budget exhausted";
  }
  if (res.x.size() == d) {
    res.X = p.X_of(res.x);
    res.Y = p.Y_of(res.x);
    res.min_margin = p.min_block_eigenvalue(res.x);
  }
  if (res.verdict == SdpVerdict::kFeasible && !(res.min_margin >= p.margin - tol)) {
    res.verdict = SdpVerdict::kUnknown;
    res.detail = "a posteriori eigenvalue check failed";
  }
  return res;
}

}  // namespace sasmpc
