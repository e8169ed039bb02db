#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "sasmpc/common.hpp"
#include "sasmpc/conic/qp.hpp"
#include "sasmpc/design.hpp"
#include "sasmpc/model.hpp"
#include "sasmpc/tightening.hpp"

namespace sasmpc {

struct MpcConfig {
  int N = 15;
  Mat Q;
  Mat R;  // normalized input units
  Mat S;
  double rho0 = 0.0;
  double gamma = 0.9;
  double epsilon = 0.2;
  double v_ss = 0.96;
  double qp_tol = 1e-8;
  std::shared_ptr<const NormalizedModel> model;
  std::shared_ptr<const ContractionCertificate> certificate;
  std::shared_ptr<const TighteningSchedule> schedule;

  void validate() const {
    demand(N >= 1, "MpcConfig: N must be >= 1");
    demand(rho0 > 0.0, "MpcConfig: rho0 must be positive");
    demand(gamma > 0.0 && gamma < 1.0, "MpcConfig: gamma must lie in (0, 1)");
    if (!model || !certificate || !schedule) {
      throw ConfigError("MpcConfig: model, certificate and schedule required");
    }
    if (!schedule->feasible) {
      throw ConfigError("MpcConfig: tightening infeasible (" +
                        schedule->reason + ")");
    }
    const int n = model->n();
    const int m = model->m();
    demand(Q.rows() == n && Q.cols() == n, "MpcConfig: Q shape");
    demand(R.rows() == m && R.cols() == m, "MpcConfig: R shape");
    demand(S.rows() == n && S.cols() == n, "MpcConfig: S shape");
  }
};

/// rho0 = 1e3 lambda_max(S), gamma = 0.9.
inline MpcConfig make_config(std::shared_ptr<const NormalizedModel> model,
                             std::shared_ptr<const ContractionCertificate> cert,
                             std::shared_ptr<const TighteningSchedule> schedule,
                             const Mat& Q, const Mat& R, int N = 15) {
  MpcConfig c;
  c.N = N;
  c.Q = Q;
  c.R = R;
  c.S = schedule->S;
  c.rho0 = 1e3 * max_eigenvalue(schedule->S);
  c.v_ss = schedule->v_ss;
  c.epsilon = schedule->prs.epsilon;
  c.model = std::move(model);
  c.certificate = std::move(cert);
  c.schedule = std::move(schedule);
  return c;
}

inline double rho_schedule(int k, const MpcConfig& cfg) {
  demand(k >= 0, "rho_schedule: negative time");
  return cfg.rho0 * std::pow(cfg.gamma, k);
}

/// Optimal (or fallback) nominal plan of one step.
struct Plan {
  Mat v;  // m x N
  Mat z;  // n x (N + 1)
  double xi = 0.0;
};

struct ControllerState {
  int k = 0;
  std::optional<Vec> z_prev_1;
  std::optional<Plan> last_plan;
  bool infeasible_flag = false;
  int fallback_count = 0;
};

struct StepResult {
  Vec u_applied;  // actuator units
  Vec u_normalized;
  Vec v0;
  Vec z0;
  double xi = 0.0;
  double objective = 0.0;
  double solve_time = 0.0;  // seconds
  QpStatus status = QpStatus::kOptimal;
  bool used_fallback = false;
  Plan plan;
};

/// Offsets of the blocks of the decision vector (v_0..v_{N-1}, z_0..z_N, xi).
struct DecisionLayout {
  int n = 0;
  int m = 0;
  int N = 0;

  int v(int i) const { return i * m; }
  int z(int i) const { return N * m + i * n; }
  int xi() const { return N * m + (N + 1) * n; }
  int size() const { return xi() + 1; }
};

inline DecisionLayout layout_of(const MpcConfig& cfg) {
  return {cfg.model->n(), cfg.model->m(), cfg.N};
}

inline QpProblem build_problem(const Vec& x_k, const ControllerState& state,
                               const MpcConfig& cfg) {
  cfg.validate();
  const NormalizedModel& nm = *cfg.model;
  const TighteningSchedule& ts = *cfg.schedule;
  const DecisionLayout L = layout_of(cfg);
  const int n = L.n, m = L.m, N = L.N, d = L.size();
  demand(x_k.size() == n, "build_problem: state dimension");
  if (state.k > 0 && !state.z_prev_1) {
    throw ConfigError("build_problem: z_prev_1 missing for k > 0");
  }
  const double inf = std::numeric_limits<double>::infinity();

  QpProblem p;
  p.H = Mat::Zero(d, d);
  for (int i = 0; i < N; ++i) {
    p.H.block(L.z(i), L.z(i), n, n) = 2.0 * cfg.Q;
    p.H.block(L.v(i), L.v(i), m, m) = 2.0 * cfg.R;
  }
  p.H.block(L.z(N), L.z(N), n, n) = 2.0 * cfg.S;
  p.H(L.xi(), L.xi()) = 2.0 * rho_schedule(state.k, cfg);
  p.f = Vec::Zero(d);

  p.A_eq = Mat::Zero(N * n + n, d);
  p.b_eq = Vec::Zero(N * n + n);
  for (int i = 0; i < N; ++i) {
    const int r = i * n;
    p.A_eq.block(r, L.z(i + 1), n, n) = Mat::Identity(n, n);
    p.A_eq.block(r, L.z(i), n, n) = -nm.A;
    p.A_eq.block(r, L.v(i), n, m) = -nm.B_n;
  }
  // z_0 + xi (x_k - z_prev_1) = x_k; at k = 0 xi is pinned to zero.
  const int r0 = N * n;
  p.A_eq.block(r0, L.z(0), n, n) = Mat::Identity(n, n);
  if (state.k > 0) {
    p.A_eq.block(r0, L.xi(), n, 1) = x_k - *state.z_prev_1;
  }
  p.b_eq.segment(r0, n) = x_k;

  int rows = ts.Z_f.rows();
  for (int i = 0; i < N; ++i) rows += ts.Z_at(state.k + i).rows();
  p.A_in = Mat::Zero(rows, d);
  p.b_in = Vec::Zero(rows);
  int r = 0;
  for (int i = 0; i < N; ++i) {
    const Polytope& Zi = ts.Z_at(state.k + i);
    p.A_in.block(r, L.z(i), Zi.rows(), n) = Zi.H;
    p.b_in.segment(r, Zi.rows()) = Zi.h;
    r += Zi.rows();
  }
  p.A_in.block(r, L.z(N), ts.Z_f.rows(), n) = ts.Z_f.H;
  p.b_in.segment(r, ts.Z_f.rows()) = ts.Z_f.h;

  p.lb = Vec::Constant(d, -inf);
  p.ub = Vec::Constant(d, inf);
  p.lb.head(N * m).setConstant(-cfg.v_ss);
  p.ub.head(N * m).setConstant(cfg.v_ss);
  p.lb(L.xi()) = 0.0;
  p.ub(L.xi()) = state.k > 0 ? 1.0 : 0.0;
  return p;
}

inline Plan unpack_plan(const Vec& x, const DecisionLayout& L) {
  Plan plan;
  plan.v.resize(L.m, L.N);
  plan.z.resize(L.n, L.N + 1);
  for (int i = 0; i < L.N; ++i) plan.v.col(i) = x.segment(L.v(i), L.m);
  for (int i = 0; i <= L.N; ++i) plan.z.col(i) = x.segment(L.z(i), L.n);
  plan.xi = x(L.xi());
  return plan;
}

inline Vec pack_plan(const Plan& plan, const DecisionLayout& L) {
  Vec x(L.size());
  for (int i = 0; i < L.N; ++i) x.segment(L.v(i), L.m) = plan.v.col(i);
  for (int i = 0; i <= L.N; ++i) x.segment(L.z(i), L.n) = plan.z.col(i);
  x(L.xi()) = plan.xi;
  return x;
}

/// Previous plan shifted by one step with K_f z_N appended and xi = 1.
inline Plan shifted_candidate(const Plan& prev, const MpcConfig& cfg) {
  const NormalizedModel& nm = *cfg.model;
  const Mat& K_f = cfg.schedule->K_f;
  const int N = cfg.N;
  Plan c;
  c.v.resize(prev.v.rows(), N);
  c.z.resize(prev.z.rows(), N + 1);
  for (int i = 0; i + 1 < N; ++i) c.v.col(i) = prev.v.col(i + 1);
  for (int i = 0; i < N; ++i) c.z.col(i) = prev.z.col(i + 1);
  const Vec zN = prev.z.col(N);
  c.v.col(N - 1) = K_f * zN;
  c.z.col(N) = nm.A * zN + nm.B_n * c.v.col(N - 1);
  c.xi = 1.0;
  return c;
}

/// Largest violation of any equality, inequality or bound row at x
/// (absolute, zero when x is feasible).
inline double constraint_violation(const QpProblem& p, const Vec& x) {
  double v = 0.0;
  if (p.A_eq.rows()) v = std::max(v, (p.A_eq * x - p.b_eq).cwiseAbs().maxCoeff());
  if (p.A_in.rows()) v = std::max(v, (p.A_in * x - p.b_in).maxCoeff());
  for (int j = 0; j < p.dim(); ++j) {
    if (p.lb.size()) v = std::max(v, p.lb(j) - x(j));
    if (p.ub.size()) v = std::max(v, x(j) - p.ub(j));
  }
  return v;
}

struct Presolved {
  QpProblem problem;
  bool infeasible = false;
};

/// The z_0 rows depend on xi alone (z_0 = x_k - xi (x_k - z_prev_1)), so
/// they are replaced by an interval on xi.  Solved through the interpolation
/// row their multipliers scale like rho / |x_k - z_prev_1|, which costs the
/// active-set method most of its digits.  A collapsed interval pins xi with
/// an equality row.
inline Presolved presolve_interpolation(const QpProblem& p,
                                        const DecisionLayout& L,
                                        int z0_rows) {
  Presolved out;
  const int n = L.n;
  const int j = L.xi();
  const int r0 = L.N * n;  // first interpolation equality row
  const Vec x_k = p.b_eq.segment(r0, n);
  const Vec d = p.A_eq.block(r0, j, n, 1);  // x_k - z_prev_1 (zero at k = 0)
  double lo = p.lb(j), hi = p.ub(j);
  for (int r = 0; r < z0_rows; ++r) {
    const Vec h_row = p.A_in.block(r, L.z(0), 1, n).transpose();
    const double a = -h_row.dot(d);
    const double b = p.b_in(r) - h_row.dot(x_k);
    const double tol = 1e-9 * std::max(1.0, std::abs(p.b_in(r)));
    if (std::abs(a) <= 1e-15 * std::max(1.0, h_row.norm() * x_k.norm())) {
      if (b < -tol) out.infeasible = true;
    } else if (a > 0.0) {
      hi = std::min(hi, b / a);
    } else {
      lo = std::max(lo, b / a);
    }
  }
  QpProblem& q = out.problem;
  q = p;
  const int keep = static_cast<int>(p.A_in.rows()) - z0_rows;
  q.A_in = p.A_in.bottomRows(keep);
  q.b_in = p.b_in.tail(keep);
  if (lo > hi + 1e-9) out.infeasible = true;
  if (hi - lo <= 1e-12) {
    const double pin = std::clamp(0.5 * (lo + hi), p.lb(j), p.ub(j));
    q.A_eq.conservativeResize(q.A_eq.rows() + 1, Eigen::NoChange);
    q.A_eq.bottomRows(1).setZero();
    q.A_eq(q.A_eq.rows() - 1, j) = 1.0;
    q.b_eq.conservativeResize(q.b_eq.size() + 1);
    q.b_eq(q.b_eq.size() - 1) = pin;
    q.lb(j) = -std::numeric_limits<double>::infinity();
    q.ub(j) = std::numeric_limits<double>::infinity();
  } else {
    q.lb(j) = lo;
    q.ub(j) = hi;
  }
  return out;
}

/// One pass of the online loop.  Updates state (k, z_prev_1, last plan).
inline StepResult step(const Vec& x_k, ControllerState& state,
                       const MpcConfig& cfg, QpSolver* solver = nullptr) {
  const QpProblem p = build_problem(x_k, state, cfg);
  const DecisionLayout L = layout_of(cfg);
  const NormalizedModel& nm = *cfg.model;
  QpSolver local;
  QpSolver& qp = solver ? *solver : local;

  const auto t0 = std::chrono::steady_clock::now();
  const Presolved pre =
      presolve_interpolation(p, L, cfg.schedule->Z_at(state.k).rows());
  QpResult r;
  if (pre.infeasible) {
    r.status.status = QpStatus::kInfeasible;
  } else {
    r = qp.solve(pre.problem, cfg.qp_tol);
    if (r.optimal() && !(constraint_violation(p, r.x) <=
                         cfg.qp_tol * (1.0 + p.b_eq.cwiseAbs().maxCoeff()))) {
      r.status.status = QpStatus::kNumericalFailure;
    }
  }
  const auto t1 = std::chrono::steady_clock::now();

  StepResult out;
  out.solve_time = std::chrono::duration<double>(t1 - t0).count();
  out.status = r.status.status;
  if (r.optimal()) {
    out.plan = unpack_plan(r.x, L);
    out.objective = p.objective(r.x);
  } else {
    if (!state.last_plan) {
      throw DesignFailure(
          "controller: problem infeasible at k = 0 (initial feasibility "
          "assumption violated), solver status " +
          std::string(to_string(r.status.status)));
    }
    out.plan = shifted_candidate(*state.last_plan, cfg);
    out.objective = p.objective(pack_plan(out.plan, L));
    out.used_fallback = true;
    state.infeasible_flag = true;
    ++state.fallback_count;
  }
  out.v0 = out.plan.v.col(0);
  out.z0 = out.plan.z.col(0);
  out.xi = out.plan.xi;
  const Mat& K = cfg.certificate->K;
  out.u_normalized = saturate_unit(out.v0 + K * (x_k - out.z0));
  out.u_applied = denormalize_input(nm, out.u_normalized);

  state.z_prev_1 = out.plan.z.col(1);
  state.last_plan = out.plan;
  ++state.k;
  return out;
}

}  // namespace sasmpc
