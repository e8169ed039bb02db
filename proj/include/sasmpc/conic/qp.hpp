#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sasmpc/common.hpp"
#include "sasmpc/linalg.hpp"

namespace sasmpc {

/// minimize 0.5 x'Hx + f'x  s.t.  A_eq x = b_eq,  A_in x <= b_in,  lb <= x <= ub.
/// lb/ub may be empty (no bounds) or hold +-infinity per coordinate.
struct QpProblem {
  Mat H;
  Vec f;
  Mat A_eq;
  Vec b_eq;
  Mat A_in;
  Vec b_in;
  Vec lb;
  Vec ub;

  int dim() const { return static_cast<int>(H.rows()); }

  double objective(const Vec& x) const { return 0.5 * x.dot(H * x) + f.dot(x); }

  void check_dimensions() const {
    const Eigen::Index d = H.rows();
    demand(H.cols() == d, "QpProblem: H must be square");
    demand(f.size() == d, "QpProblem: f length");
    demand(A_eq.rows() == b_eq.size(), "QpProblem: equality rows");
    demand(A_eq.rows() == 0 || A_eq.cols() == d, "QpProblem: A_eq columns");
    demand(A_in.rows() == b_in.size(), "QpProblem: inequality rows");
    demand(A_in.rows() == 0 || A_in.cols() == d, "QpProblem: A_in columns");
    demand(lb.size() == 0 || lb.size() == d, "QpProblem: lb length");
    demand(ub.size() == 0 || ub.size() == d, "QpProblem: ub length");
  }
};

enum class QpStatus { kOptimal, kInfeasible, kMaxIterations, kNumericalFailure };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::kOptimal: return "Optimal";
    case QpStatus::kInfeasible: return "Infeasible";
    case QpStatus::kMaxIterations: return "MaxIterations";
    case QpStatus::kNumericalFailure: return "NumericalFailure";
  }
  return "?";
}

struct SolveStatus {
  QpStatus status = QpStatus::kNumericalFailure;
  int iterations = 0;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
};

enum class QpMethod { kActiveSet, kOperatorSplitting };

struct QpOptions {
  QpMethod method = QpMethod::kActiveSet;
  int max_iterations = 0;  // 0: 20 * (d + rows) for active set
  int max_prox_iterations = 500;
  double prox_sigma = 0.0;  // 0: chosen from the Hessian scale
  int admm_max_iterations = 20000;
  bool fallback = true;
  bool record_dual_objective = false;
};

struct QpResult {
  SolveStatus status;
  Vec x;
  double objective = std::numeric_limits<double>::quiet_NaN();
  Vec y_eq;   // multipliers of A_eq x = b_eq
  Vec y_in;   // multipliers of A_in x <= b_in (>= 0)
  Vec y_lb;   // multipliers of x >= lb (>= 0)
  Vec y_ub;   // multipliers of x <= ub (>= 0)
  bool used_fallback = false;
  std::vector<double> dual_objective_trace;

  bool optimal() const { return status.status == QpStatus::kOptimal; }
};

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
  double multiplier_sign = 0.0;
  double scale = 1.0;

  bool within(double tol) const {
    return primal <= tol * scale && dual <= tol * scale &&
           complementarity <= tol * scale && multiplier_sign <= tol * scale;
  }
};

/// Residuals recomputed from the raw problem data.  Scale is
/// 1 + max(|Hx|, |f|, |b|), so tolerances are relative for large weights.
inline KktResiduals kkt_residuals(const QpProblem& p, const QpResult& r) {
  KktResiduals k;
  const Vec& x = r.x;
  const int d = p.dim();
  Vec grad = p.H * x + p.f;
  double scale = std::max(grad.size() ? (p.H * x).cwiseAbs().maxCoeff() : 0.0,
                          p.f.size() ? p.f.cwiseAbs().maxCoeff() : 0.0);
  if (p.b_eq.size()) scale = std::max(scale, p.b_eq.cwiseAbs().maxCoeff());
  if (p.b_in.size()) scale = std::max(scale, p.b_in.cwiseAbs().maxCoeff());
  k.scale = 1.0 + scale;
  if (p.A_eq.rows()) {
    k.primal = std::max(k.primal, (p.A_eq * x - p.b_eq).cwiseAbs().maxCoeff());
    grad += p.A_eq.transpose() * r.y_eq;
  }
  if (p.A_in.rows()) {
    const Vec s = p.A_in * x - p.b_in;
    k.primal = std::max(k.primal, s.maxCoeff());
    grad += p.A_in.transpose() * r.y_in;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      k.complementarity =
          std::max(k.complementarity, std::abs(r.y_in(i) * s(i)));
      k.multiplier_sign = std::max(k.multiplier_sign, -r.y_in(i));
    }
  }
  for (int j = 0; j < d; ++j) {
    if (p.lb.size() && std::isfinite(p.lb(j))) {
      const double s = p.lb(j) - x(j);
      k.primal = std::max(k.primal, s);
      grad(j) -= r.y_lb(j);
      k.complementarity = std::max(k.complementarity, std::abs(r.y_lb(j) * s));
      k.multiplier_sign = std::max(k.multiplier_sign, -r.y_lb(j));
    }
    if (p.ub.size() && std::isfinite(p.ub(j))) {
      const double s = x(j) - p.ub(j);
      k.primal = std::max(k.primal, s);
      grad(j) += r.y_ub(j);
      k.complementarity = std::max(k.complementarity, std::abs(r.y_ub(j) * s));
      k.multiplier_sign = std::max(k.multiplier_sign, -r.y_ub(j));
    }
  }
  k.primal = std::max(k.primal, 0.0);
  k.dual = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  return k;
}

namespace internal {

/// Inequalities in the form n_i'x >= c_i, gathered from A_in and the bounds.
struct GeRows {
  Mat N;
  Vec c;
  std::vector<int> source;  // row in A_in, or -(j+1) lower / -(d+j+1) upper
};

inline GeRows gather_ge_rows(const QpProblem& p) {
  const int d = p.dim();
  int count = static_cast<int>(p.A_in.rows());
  for (int j = 0; j < d; ++j) {
    if (p.lb.size() && std::isfinite(p.lb(j))) ++count;
    if (p.ub.size() && std::isfinite(p.ub(j))) ++count;
  }
  GeRows g;
  g.N.setZero(count, d);
  g.c.setZero(count);
  int row = 0;
  for (Eigen::Index i = 0; i < p.A_in.rows(); ++i, ++row) {
    g.N.row(row) = -p.A_in.row(i);
    g.c(row) = -p.b_in(i);
    g.source.push_back(static_cast<int>(i));
  }
  for (int j = 0; j < d; ++j) {
    if (p.lb.size() && std::isfinite(p.lb(j))) {
      g.N(row, j) = 1.0;
      g.c(row) = p.lb(j);
      g.source.push_back(-(j + 1));
      ++row;
    }
    if (p.ub.size() && std::isfinite(p.ub(j))) {
      g.N(row, j) = -1.0;
      g.c(row) = -p.ub(j);
      g.source.push_back(-(d + j + 1));
      ++row;
    }
  }
  return g;
}

inline void scatter_multipliers(const QpProblem& p, const GeRows& g,
                                const Vec& u_eq, const Vec& u_ge,
                                QpResult* r) {
  const int d = p.dim();
  r->y_eq = -u_eq;
  r->y_in = Vec::Zero(p.A_in.rows());
  r->y_lb = Vec::Zero(d);
  r->y_ub = Vec::Zero(d);
  for (size_t k = 0; k < g.source.size(); ++k) {
    const int s = g.source[k];
    if (s >= 0) {
      r->y_in(s) = u_ge(k);
    } else if (s >= -d) {
      r->y_lb(-s - 1) = u_ge(k);
    } else {
      r->y_ub(-s - d - 1) = u_ge(k);
    }
  }
}

/// Goldfarb-Idnani dual active-set method for strictly convex QPs.
class GoldfarbIdnani {
 public:
  enum class Outcome { kOptimal, kInfeasible, kMaxIterations, kNumerical };

  /// H must be positive definite.  Equalities rows E x = e, inequalities
  /// N x >= c.  On success x, u_eq, u_ge hold the primal point and the
  /// multipliers of the convention Hx + f = E'u_eq + N'u_ge.
  /// A row that blocks progress while violated only at rounding level
  /// (degenerate active set) is waived and the solve restarted without it;
  /// callers certify the final point against the full problem.
  Outcome solve(const Mat& H, const Vec& f, const Mat& E, const Vec& e,
                const Mat& N, const Vec& c, int max_iter,
                std::vector<double>* trace) {
    std::vector<char> waived(N.rows(), 0);
    int total = 0;
    while (true) {
      const Outcome o = solve_once(H, f, E, e, N, c, max_iter, trace, waived);
      total += iterations;
      iterations = total;
      if (o != Outcome::kInfeasible || blocked < 0 || waived[blocked] ||
          !(blocked_violation <= kWaiveTol)) {
        return o;
      }
      waived[blocked] = 1;
      if (trace) trace->clear();
    }
  }

  Vec x;
  Vec u_eq;
  Vec u_ge;
  int iterations = 0;

 private:
  Outcome solve_once(const Mat& H, const Vec& f, const Mat& E, const Vec& e,
                     const Mat& N, const Vec& c, int max_iter,
                     std::vector<double>* trace,
                     const std::vector<char>& waived) {
    blocked = -1;
    blocked_violation = kInf;
    const int d = static_cast<int>(H.rows());
    const int me = static_cast<int>(E.rows());
    const int mi = static_cast<int>(N.rows());
    iterations = 0;
    Eigen::LLT<Mat> llt(H);
    if (llt.info() != Eigen::Success) return Outcome::kNumerical;
    const Mat L = llt.matrixL();
    const double min_pivot = L.diagonal().minCoeff();
    if (!(min_pivot > 1e-14 * std::max(1.0, L.diagonal().maxCoeff()))) {
      return Outcome::kNumerical;
    }
    // J = L^{-T}
    J_ = L.transpose().triangularView<Eigen::Upper>().solve(Mat::Identity(d, d));
    R_.setZero(d, d);
    x = -llt.solve(f);
    double fval = 0.5 * f.dot(x);
    if (trace) trace->push_back(fval);
    r_norm_ = 1.0;
    const double c1 = H.trace();
    const double c2 = J_.trace();
    (void)c1;
    (void)c2;

    active_.assign(d + 1, 0);
    u_.setZero(d + 1);
    dvec_.resize(d);
    z_.resize(d);
    r_.resize(d + 1);
    int iq = 0;

    for (int i = 0; i < me; ++i) {
      const Vec np = E.row(i).transpose();
      compute_d(np);
      update_z(iq);
      update_r(iq);
      const double ztn = z_.dot(np);
      double t2 = 0.0;
      if (std::abs(ztn) > kEps * np.norm()) {
        t2 = (e(i) - np.dot(x)) / ztn;
      }
      x += t2 * z_;
      u_(iq) = t2;
      for (int k = 0; k < iq; ++k) u_(k) -= t2 * r_(k);
      fval += 0.5 * t2 * t2 * ztn;
      active_[iq] = -i - 1;
      if (!add_constraint(iq)) {
        return Outcome::kNumerical;
      }
    }

    std::vector<char> is_active(waived);
    Vec s(mi);
    const int cap = max_iter > 0 ? max_iter : 20 * (d + me + mi) + 100;
    const double xscale_floor = 1.0;
    while (true) {
      if (++iterations > cap) return finish(Outcome::kMaxIterations, me, mi, iq);
      // most violated inactive inequality
      int ip = -1;
      double worst = 0.0;
      if (mi > 0) s.noalias() = N * x - c;
      const double xs = std::max(xscale_floor, x.cwiseAbs().maxCoeff());
      for (int i = 0; i < mi; ++i) {
        if (is_active[i]) continue;
        const double thresh = -kViolTol * std::max({1.0, std::abs(c(i)), xs});
        if (s(i) < thresh && s(i) < worst) {
          worst = s(i);
          ip = i;
        }
      }
      if (ip < 0) return finish(Outcome::kOptimal, me, mi, iq);

      const Vec np = N.row(ip).transpose();
      u_(iq) = 0.0;
      active_[iq] = ip;
      double s_ip = s(ip);
      while (true) {
        compute_d(np);
        update_z(iq);
        update_r(iq);
        // partial (dual) step length
        double t1 = kInf;
        int l = -1;
        for (int k = me; k < iq; ++k) {
          if (r_(k) > 0.0) {
            const double ratio = u_(k) / r_(k);
            if (ratio < t1) {
              t1 = ratio;
              l = active_[k];
            }
          }
        }
        const double ztn = z_.dot(np);
        double t2 = kInf;
        if (z_.norm() > kEps * std::max(1.0, np.norm())) t2 = -s_ip / ztn;
        if (t2 < 0.0) t2 = kInf;
        const double t = std::min(t1, t2);
        if (!(t < kInf)) {
          blocked = ip;
          blocked_violation = -s_ip /
              std::max({1.0, std::abs(c(ip)), x.cwiseAbs().maxCoeff()});
          return finish(Outcome::kInfeasible, me, mi, iq);
        }
        if (!(t2 < kInf)) {
          for (int k = 0; k < iq; ++k) u_(k) -= t * r_(k);
          u_(iq) += t;
          is_active[l] = 0;
          delete_constraint(l, me, &iq, d);
          if (++iterations > cap) return finish(Outcome::kMaxIterations, me, mi, iq);
          continue;
        }
        x += t * z_;
        const double fold = fval;
        fval += t * ztn * (0.5 * t + u_(iq));
        assert(fval >= fold - 1e-9 * std::max(1.0, std::abs(fold)));
        (void)fold;
        if (trace) trace->push_back(fval);
        for (int k = 0; k < iq; ++k) u_(k) -= t * r_(k);
        u_(iq) += t;
        if (t == t2) {
          if (!add_constraint(iq)) return Outcome::kNumerical;
          is_active[ip] = 1;
          break;
        }
        is_active[l] = 0;
        delete_constraint(l, me, &iq, d);
        s_ip = np.dot(x) - c(ip);
        if (++iterations > cap) return finish(Outcome::kMaxIterations, me, mi, iq);
      }
    }
  }

  static constexpr double kEps = 1e-14;
  static constexpr double kViolTol = 1e-12;
  static constexpr double kWaiveTol = 1e-9;
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  Outcome finish(Outcome o, int me, int mi, int iq) {
    u_eq.setZero(me);
    u_ge.setZero(mi);
    for (int k = 0; k < iq; ++k) {
      const int a = active_[k];
      if (a < 0) {
        u_eq(-a - 1) = u_(k);
      } else {
        u_ge(a) = u_(k);
      }
    }
    return o;
  }

  void compute_d(const Vec& np) { dvec_.noalias() = J_.transpose() * np; }

  void update_z(int iq) {
    const int d = static_cast<int>(J_.rows());
    z_.noalias() = J_.rightCols(d - iq) * dvec_.tail(d - iq);
  }

  void update_r(int iq) {
    for (int i = iq - 1; i >= 0; --i) {
      double sum = dvec_(i);
      for (int j = i + 1; j < iq; ++j) sum -= R_(i, j) * r_(j);
      r_(i) = sum / R_(i, i);
    }
  }

  bool add_constraint(int& iq) {
    const int d = static_cast<int>(J_.rows());
    for (int j = d - 1; j >= iq + 1; --j) {
      double cc = dvec_(j - 1);
      double ss = dvec_(j);
      const double h = std::hypot(cc, ss);
      if (h < kEps) continue;
      dvec_(j) = 0.0;
      ss /= h;
      cc /= h;
      if (cc < 0.0) {
        cc = -cc;
        ss = -ss;
        dvec_(j - 1) = -h;
      } else {
        dvec_(j - 1) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int k = 0; k < d; ++k) {
        const double t1 = J_(k, j - 1);
        const double t2 = J_(k, j);
        J_(k, j - 1) = t1 * cc + t2 * ss;
        J_(k, j) = xny * (t1 + J_(k, j - 1)) - t2;
      }
    }
    ++iq;
    for (int i = 0; i < iq; ++i) R_(i, iq - 1) = dvec_(i);
    if (std::abs(dvec_(iq - 1)) <= kEps * r_norm_) return false;
    r_norm_ = std::max(r_norm_, std::abs(dvec_(iq - 1)));
    return true;
  }

  void delete_constraint(int l, int me, int* iq_ptr, int d) {
    int& iq = *iq_ptr;
    int qq = -1;
    for (int i = me; i < iq; ++i) {
      if (active_[i] == l) {
        qq = i;
        break;
      }
    }
    if (qq < 0) return;
    for (int i = qq; i < iq - 1; ++i) {
      active_[i] = active_[i + 1];
      u_(i) = u_(i + 1);
      R_.col(i) = R_.col(i + 1);
    }
    active_[iq - 1] = active_[iq];
    u_(iq - 1) = u_(iq);
    active_[iq] = 0;
    u_(iq) = 0.0;
    for (int j = 0; j < iq; ++j) R_(j, iq - 1) = 0.0;
    --iq;
    if (iq == 0) return;
    for (int j = qq; j < iq; ++j) {
      double cc = R_(j, j);
      double ss = R_(j + 1, j);
      const double h = std::hypot(cc, ss);
      if (h < kEps) continue;
      cc /= h;
      ss /= h;
      R_(j + 1, j) = 0.0;
      if (cc < 0.0) {
        R_(j, j) = -h;
        cc = -cc;
        ss = -ss;
      } else {
        R_(j, j) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int k = j + 1; k < iq; ++k) {
        const double t1 = R_(j, k);
        const double t2 = R_(j + 1, k);
        R_(j, k) = t1 * cc + t2 * ss;
        R_(j + 1, k) = xny * (t1 + R_(j, k)) - t2;
      }
      for (int k = 0; k < d; ++k) {
        const double t1 = J_(k, j);
        const double t2 = J_(k, j + 1);
        J_(k, j) = t1 * cc + t2 * ss;
        J_(k, j + 1) = xny * (J_(k, j) + t1) - t2;
      }
    }
  }

  Mat J_;
  Mat R_;
  Vec u_;
  Vec dvec_;
  Vec z_;
  Vec r_;
  std::vector<int> active_;
  double r_norm_ = 1.0;
  int blocked = -1;
  double blocked_violation = kInf;
};

}  // namespace internal

/// Dense convex QP solver holding reusable workspace.  Not thread safe;
/// use one instance per worker.
class QpSolver {
 public:
  explicit QpSolver(QpOptions options = {}) : options_(options) {}

  const QpOptions& options() const { return options_; }

  QpResult solve(const QpProblem& p, double tol = 1e-8) {
    p.check_dimensions();
    QpResult result;
    const int d = p.dim();
    if (d == 0) {
      result.x = Vec();
      result.status.status = QpStatus::kOptimal;
      result.objective = 0.0;
      return result;
    }
    const internal::GeRows g = internal::gather_ge_rows(p);
    if (options_.method == QpMethod::kActiveSet) {
      result = solve_active_set(p, g, tol);
      if (result.status.status == QpStatus::kOptimal) {
        certify(p, tol, &result);
      }
      if (result.status.status != QpStatus::kNumericalFailure ||
          !options_.fallback) {
        return result;
      }
    }
    QpResult admm = solve_operator_splitting(p, g, tol);
    admm.used_fallback = options_.method == QpMethod::kActiveSet;
    admm.status.iterations += result.status.iterations;
    return admm;
  }

 private:
  static bool hessian_is_pd(const Mat& H) {
    Eigen::LLT<Mat> llt(H);
    if (llt.info() != Eigen::Success) return false;
    const Vec diag = Mat(llt.matrixL()).diagonal();
    return diag.minCoeff() > 1e-7 * std::max(1.0, diag.maxCoeff());
  }

  QpResult solve_active_set(const QpProblem& p, const internal::GeRows& g,
                            double tol) {
    QpResult result;
    std::vector<double>* trace =
        options_.record_dual_objective ? &result.dual_objective_trace : nullptr;
    const int d = p.dim();
    using Outcome = internal::GoldfarbIdnani::Outcome;
    auto to_status = [](Outcome o) {
      switch (o) {
        case Outcome::kOptimal: return QpStatus::kOptimal;
        case Outcome::kInfeasible: return QpStatus::kInfeasible;
        case Outcome::kMaxIterations: return QpStatus::kMaxIterations;
        case Outcome::kNumerical: return QpStatus::kNumericalFailure;
      }
      return QpStatus::kNumericalFailure;
    };
    const Mat Hs = symmetrize(p.H);
    if (hessian_is_pd(Hs)) {
      const Outcome o =
          gi_.solve(Hs, p.f, p.A_eq, p.b_eq, g.N, g.c, options_.max_iterations,
                    trace);
      result.status.status = to_status(o);
      result.status.iterations = gi_.iterations;
      result.x = gi_.x;
      internal::scatter_multipliers(p, g, gi_.u_eq, gi_.u_ge, &result);
      return result;
    }
    // Proximal point iterations: each subproblem is strictly convex.
    double sigma = options_.prox_sigma;
    if (sigma <= 0.0) {
      const double hs = Hs.size() ? Hs.cwiseAbs().maxCoeff() : 0.0;
      sigma = 1e-6 * (hs > 0.0 ? hs : 1.0);
    }
    const Mat Hp = Hs + sigma * Mat::Identity(d, d);
    Vec xk = Vec::Zero(d);
    int total = 0;
    for (int it = 0; it < options_.max_prox_iterations; ++it) {
      const Vec fk = p.f - sigma * xk;
      const Outcome o = gi_.solve(Hp, fk, p.A_eq, p.b_eq, g.N, g.c,
                                  options_.max_iterations, nullptr);
      total += gi_.iterations;
      if (o != Outcome::kOptimal) {
        result.status.status = to_status(o);
        result.status.iterations = total;
        result.x = gi_.x;
        internal::scatter_multipliers(p, g, gi_.u_eq, gi_.u_ge, &result);
        return result;
      }
      const double step = (gi_.x - xk).cwiseAbs().maxCoeff();
      xk = gi_.x;
      if (trace) trace->push_back(p.objective(xk));
      if (step <= 1e-13 * std::max(1.0, xk.cwiseAbs().maxCoeff())) {
        result.status.status = QpStatus::kOptimal;
        result.status.iterations = total;
        result.x = xk;
        internal::scatter_multipliers(p, g, gi_.u_eq, gi_.u_ge, &result);
        return result;
      }
      result.x = xk;
      internal::scatter_multipliers(p, g, gi_.u_eq, gi_.u_ge, &result);
      // Accept once the raw KKT system holds; the subproblem solutions are
      // only accurate to about eps / sigma, so a pure step test can cycle.
      if (kkt_residuals(p, result).within(std::min(tol, 1e-9))) {
        result.status.status = QpStatus::kOptimal;
        result.status.iterations = total;
        return result;
      }
    }
    result.status.status = QpStatus::kMaxIterations;
    result.status.iterations = total;
    result.x = xk;
    return result;
  }

  void certify(const QpProblem& p, double tol, QpResult* r) const {
    const KktResiduals k = kkt_residuals(p, *r);
    r->status.primal_residual = k.primal;
    r->status.dual_residual = std::max({k.dual, k.complementarity,
                                        k.multiplier_sign});
    r->objective = p.objective(r->x);
    if (!k.within(tol)) r->status.status = QpStatus::kNumericalFailure;
  }

  /// ADMM on l <= Cx <= u followed by an active-set polish.
  QpResult solve_operator_splitting(const QpProblem& p,
                                    const internal::GeRows& g, double tol) {
    const int d = p.dim();
    const int me = static_cast<int>(p.A_eq.rows());
    const int mg = static_cast<int>(g.N.rows());
    const int rows = me + mg;
    Mat C(rows, d);
    Vec lo(rows), hi(rows);
    const double inf = std::numeric_limits<double>::infinity();
    if (me) {
      C.topRows(me) = p.A_eq;
      lo.head(me) = p.b_eq;
      hi.head(me) = p.b_eq;
    }
    if (mg) {
      C.bottomRows(mg) = g.N;
      lo.tail(mg) = g.c;
      hi.tail(mg).setConstant(inf);
    }
    const Mat Hs = symmetrize(p.H);
    const double sigma = 1e-6;
    const double rho = 0.1 * std::max(1.0, Hs.size() ? Hs.diagonal().maxCoeff() : 1.0);
    Vec rho_vec(rows);
    for (int i = 0; i < rows; ++i) rho_vec(i) = (i < me) ? 1e3 * rho : rho;
    const Mat M = Hs + sigma * Mat::Identity(d, d) +
                  C.transpose() * rho_vec.asDiagonal() * C;
    Eigen::LLT<Mat> llt(M);
    QpResult result;
    if (llt.info() != Eigen::Success) {
      result.status.status = QpStatus::kNumericalFailure;
      result.x = Vec::Zero(d);
      return result;
    }
    Vec x = Vec::Zero(d), z = Vec::Zero(rows), y = Vec::Zero(rows);
    const double alpha = 1.6;
    int it = 0;
    for (; it < options_.admm_max_iterations; ++it) {
      const Vec rhs = sigma * x - p.f +
                      C.transpose() * (rho_vec.cwiseProduct(z) - y);
      const Vec xt = llt.solve(rhs);
      const Vec zt = C * xt;
      x = alpha * xt + (1.0 - alpha) * x;
      const Vec zr = alpha * zt + (1.0 - alpha) * z;
      Vec zn = zr + y.cwiseQuotient(rho_vec);
      for (int i = 0; i < rows; ++i) zn(i) = std::clamp(zn(i), lo(i), hi(i));
      y += rho_vec.cwiseProduct(zr - zn);
      z = zn;
      if (it % 25 == 24) {
        const double rp = rows ? (C * x - z).cwiseAbs().maxCoeff() : 0.0;
        const double rd =
            (Hs * x + p.f + C.transpose() * y).cwiseAbs().maxCoeff();
        if (rp < 1e-9 && rd < 1e-9) break;
      }
    }
    // Polish: equality-constrained QP on the detected active set.
    std::vector<int> act;
    for (int i = 0; i < rows; ++i) {
      if (i < me) {
        act.push_back(i);
      } else if (y(i) < -1e-12 || std::abs(C.row(i).dot(x) - lo(i)) < 1e-7) {
        act.push_back(i);
      }
    }
    const int na = static_cast<int>(act.size());
    Mat KKT = Mat::Zero(d + na, d + na);
    Vec rhs = Vec::Zero(d + na);
    KKT.topLeftCorner(d, d) = Hs;
    rhs.head(d) = -p.f;
    for (int k = 0; k < na; ++k) {
      KKT.block(0, d + k, d, 1) = C.row(act[k]).transpose();
      KKT.block(d + k, 0, 1, d) = C.row(act[k]);
      rhs(d + k) = lo(act[k]);
    }
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(KKT);
    const Vec sol = cod.solve(rhs);
    Vec u_eq = Vec::Zero(me), u_ge = Vec::Zero(mg);
    for (int k = 0; k < na; ++k) {
      // KKT rows give H x + f + C_a' w = 0; convention wants N'u with u >= 0.
      const double w = sol(d + k);
      if (act[k] < me) {
        u_eq(act[k]) = -w;
      } else {
        u_ge(act[k] - me) = -w;
      }
    }
    QpResult polished;
    polished.x = sol.head(d);
    internal::scatter_multipliers(p, g, u_eq, u_ge, &polished);
    polished.status.status = QpStatus::kOptimal;
    polished.status.iterations = it;
    certify(p, tol, &polished);
    if (polished.optimal()) return polished;
    // Unpolished ADMM iterate, certified the same way.
    result.x = x;
    Vec ue = Vec::Zero(me), ug = Vec::Zero(mg);
    for (int i = 0; i < rows; ++i) {
      if (i < me) {
        ue(i) = -y(i);
      } else {
        ug(i - me) = std::max(0.0, -y(i));
      }
    }
    internal::scatter_multipliers(p, g, ue, ug, &result);
    result.status.status = QpStatus::kOptimal;
    result.status.iterations = it;
    certify(p, tol, &result);
    if (!result.optimal() && it >= options_.admm_max_iterations) {
      result.status.status = QpStatus::kMaxIterations;
    }
    return result;
  }

  QpOptions options_;
  internal::GoldfarbIdnani gi_;
};

inline QpResult qp_solve(const QpProblem& p, double tol = 1e-8,
                         QpOptions options = {}) {
  QpSolver solver(options);
  return solver.solve(p, tol);
}

/// Result of minimize c'x over {A x <= b, |x_j| <= box}.
struct LpResult {
  QpStatus status = QpStatus::kNumericalFailure;
  Vec x;
  double value = std::numeric_limits<double>::quiet_NaN();
  bool hit_box = false;  // optimum touches the artificial box (unbounded LP)
};

/// Small dense LP solved as a sequence of proximal QPs.  The artificial box
/// keeps the problem bounded; hit_box flags a solution limited only by it.
inline LpResult lp_minimize(const Vec& c, const Mat& A, const Vec& b,
                            double box = 1e6) {
  const int d = static_cast<int>(c.size());
  QpProblem p;
  p.H = Mat::Zero(d, d);
  p.f = c;
  p.A_eq.resize(0, d);
  p.b_eq.resize(0);
  p.A_in = A;
  p.b_in = b;
  p.lb = Vec::Constant(d, -box);
  p.ub = Vec::Constant(d, box);
  QpOptions opt;
  opt.fallback = false;
  opt.max_prox_iterations = 2000;
  opt.prox_sigma = std::max(1e-12, c.norm()) / box;
  QpSolver solver(opt);
  QpResult r = solver.solve(p, 1e-9);
  LpResult out;
  out.status = r.status.status;
  out.x = r.x;
  if (r.x.size()) {
    out.value = c.dot(r.x);
    out.hit_box = r.x.cwiseAbs().maxCoeff() >= box * (1.0 - 1e-9);
  }
  return out;
}

}  // namespace sasmpc
