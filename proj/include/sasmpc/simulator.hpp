#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "sasmpc/common.hpp"
#include "sasmpc/controller.hpp"
#include "sasmpc/design.hpp"
#include "sasmpc/model.hpp"
#include "sasmpc/prs.hpp"
#include "sasmpc/rng.hpp"
#include "sasmpc/tightening.hpp"

namespace sasmpc {

struct DisturbanceSpec {
  NoiseKind kind = NoiseKind::kGaussian;
  Mat W;
  uint64_t seed = 7;
};

/// w = L s with L L' = W and s of unit variance per component.
class DisturbanceSampler {
 public:
  explicit DisturbanceSampler(const DisturbanceSpec& spec) : kind_(spec.kind) {
    demand(spec.W.rows() == spec.W.cols(), "DisturbanceSampler: W square");
    if (spec.W.isZero(0.0)) {
      L_ = Mat::Zero(spec.W.rows(), spec.W.cols());
    } else {
      L_ = cholesky_lower(spec.W);
    }
  }

  Vec sample(CounterRng& rng) const {
    Vec s(L_.cols());
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = unit_sample(kind_, rng);
    return L_ * s;
  }

 private:
  NoiseKind kind_;
  Mat L_;
};

struct Scenario {
  std::string name;
  Polytope X;  // probabilistic state rows
  Vec x0;
  double epsilon = 0.2;
  int T = 100;
  int n_traj = 1000;
  int N = 15;
  Mat Q;
  Mat R;  // actuator units
};

inline LtiModel cstr_model() {
  LtiModel m;
  m.A.resize(2, 2);
  m.A << 0.95123, 0.0, 0.08833, 0.81873;
  m.B.resize(2, 1);
  m.B << -0.0048771, -0.0020429;
  m.u_max = Vec::Constant(1, 25.0);
  m.W = 0.003 * 0.003 * Mat::Identity(2, 2);
  return m;
}

/// CSTR scenarios 1-4 (deviation coordinates).
inline Scenario scenario_preset(int index) {
  Scenario s;
  s.Q = Mat::Zero(2, 2);
  s.Q(0, 0) = 20.0;
  s.Q(1, 1) = 100.0;
  s.R = Mat::Constant(1, 1, 0.1);
  s.x0.resize(2);
  s.x0 << 0.5, 0.2;
  Mat H;
  Vec h;
  switch (index) {
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
      H << 1, 0, 0, 1, -1, 0, 0, -1, 2, 1;
      h.resize(5);
      h << 0.75, 0.25, 0.5, 0.25, 1.5;
      break;
    case 4:
      H.resize(1, 2);
      H << 0, 1;
      h = Vec::Constant(1, 0.15);
      s.x0 << 0.5, 0.12;
      break;
    default:
      throw ConfigError("unknown scenario preset " + std::to_string(index) +
                        " (expected 1-4)");
  }
  s.name = "s" + std::to_string(index);
  s.X = Polytope::from_rows(H, h);
  return s;
}

/// Offline artifacts of one arm on one scenario.
struct ArmSetup {
  Arm arm = Arm::kLambdaStar;
  std::shared_ptr<const TighteningSchedule> schedule;
  MpcConfig cfg;  // meaningful only when feasible()

  bool feasible() const { return schedule && schedule->feasible; }
};

inline ArmSetup prepare_arm(const LtiModel& model,
                            const ContractionCertificate& cert,
                            const Scenario& sc, Arm arm) {
  auto nm = std::make_shared<const NormalizedModel>(normalize(model));
  auto c = std::make_shared<const ContractionCertificate>(cert);
  TighteningOptions opt;
  opt.Q = sc.Q;
  opt.R = normalize_input_weight(*nm, sc.R);
  opt.epsilon = sc.epsilon;
  ArmSetup a;
  a.arm = arm;
  a.schedule = std::make_shared<const TighteningSchedule>(
      build_tightening(*nm, cert, sc.X, arm, opt));
  if (a.schedule->feasible) {
    a.cfg = make_config(nm, c, a.schedule, opt.Q, opt.R, sc.N);
  }
  return a;
}

struct TraceRow {
  int k = 0;
  Vec x;
  Vec u;  // actuator units
  Vec e;  // x_k - z_{0|k}
  Vec z0;
  Vec v0;
  double xi = 0.0;
  double objective = 0.0;
  QpStatus status = QpStatus::kOptimal;
  bool fallback = false;
  double solve_time = 0.0;
};

struct Trajectory {
  std::vector<TraceRow> rows;
  double cost = 0.0;
  bool failed = false;
  std::string error;
};

/// One closed-loop run for k = 0..T.  The disturbance of step k is drawn
/// from the generator keyed by (seed, traj_index, k).
inline Trajectory rollout(const LtiModel& model, const ArmSetup& arm,
                          const Scenario& sc, const DisturbanceSpec& dist,
                          uint64_t traj_index, QpSolver* solver = nullptr) {
  if (!arm.feasible()) throw ConfigError("rollout: arm is infeasible");
  const DisturbanceSampler sampler(dist);
  Trajectory tr;
  tr.rows.reserve(sc.T + 1);
  ControllerState state;
  Vec x = sc.x0;
  for (int k = 0; k <= sc.T; ++k) {
    TraceRow row;
    row.k = k;
    row.x = x;
    StepResult r;
    try {
      r = step(x, state, arm.cfg, solver);
    } catch (const std::exception& ex) {
      tr.failed = true;
      tr.error = ex.what();
      return tr;
    }
    row.u = r.u_applied;
    row.z0 = r.z0;
    row.v0 = r.v0;
    row.e = x - r.z0;
    row.xi = r.xi;
    row.objective = r.objective;
    row.status = r.status;
    row.fallback = r.used_fallback;
    row.solve_time = r.solve_time;
    tr.cost += x.dot(sc.Q * x) + row.u.dot(sc.R * row.u);
    CounterRng rng(dist.seed, traj_index, static_cast<uint64_t>(k));
    x = model.A * x + model.B * row.u + sampler.sample(rng);
    tr.rows.push_back(std::move(row));
  }
  return tr;
}

/// Worker count: explicit value, else SA_SMPC_JOBS, else the hardware.
inline int resolve_jobs(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SA_SMPC_JOBS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i, worker) for i in [0, count) on a pool of workers.  Items are
/// claimed from a shared counter; callers write results into slot i so the
/// outcome does not depend on scheduling.
template <class Body>
void parallel_for(int count, int jobs, Body body) {
  const int workers = std::max(1, std::min(jobs, count));
  std::atomic<int> next{0};
  auto run = [&](int w) {
    for (int i = next++; i < count; i = next++) body(i, w);
  };
  if (workers == 1) {
    run(0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
  for (auto& t : pool) t.join();
}

struct ArmReport {
  Arm arm = Arm::kLambdaStar;
  bool feasible = false;
  std::string reason;
  double hat_lambda = 0.0;
  int n_traj = 0;
  int failed_trajectories = 0;
  long steps = 0;
  long qp_failures = 0;       // steps answered by the shifted candidate
  long input_violations = 0;  // |u_j| > u_max_j
  double max_abs_input = 0.0;
  double mean_cost = 0.0;
  double std_cost = 0.0;
  std::vector<std::vector<double>> violation;  // [row][k]
  std::vector<double> max_violation;           // per row, over k
  std::vector<double> mean_sq_state;           // E ||x_k||_Q^2
  std::vector<double> prs_coverage;            // Pr{e_k in E(P, r_k)}
  // timing, kept out of the deterministic report
  double mean_solve_time = 0.0;
  double max_solve_time = 0.0;
};

struct SimulationReport {
  std::string scenario;
  uint64_t seed = 0;
  int T = 0;
  NoiseKind kind = NoiseKind::kGaussian;
  std::vector<ArmReport> arms;
};

struct MonteCarloOptions {
  int n_traj = 1000;
  uint64_t seed = 7;
  NoiseKind kind = NoiseKind::kGaussian;
  int jobs = 0;
  int keep_traces = 0;  // full traces retained for the first trajectories
  bool zero_noise = false;  // test mode: design with W, simulate with w = 0
};

struct MonteCarloResult {
  SimulationReport report;
  std::vector<std::vector<Trajectory>> traces;  // [arm][traj]
};

namespace internal {

struct TrajSummary {
  double cost = 0.0;
  bool failed = false;
  long steps = 0;
  long fallbacks = 0;
  long input_violations = 0;
  double max_abs_input = 0.0;
  std::vector<std::vector<char>> violated;  // [row][k]
  std::vector<double> sq_state;
  std::vector<char> covered;
  double solve_time = 0.0;
  double max_solve_time = 0.0;
};

inline TrajSummary summarize(const Trajectory& tr, const Scenario& sc,
                             const LtiModel& model, const ArmSetup& arm) {
  TrajSummary s;
  const int K = sc.T + 1;
  s.cost = tr.cost;
  s.failed = tr.failed;
  s.violated.assign(sc.X.rows(), std::vector<char>(K, 0));
  s.sq_state.assign(K, 0.0);
  s.covered.assign(K, 0);
  const Mat& P = arm.cfg.certificate->P;
  for (const TraceRow& r : tr.rows) {
    ++s.steps;
    s.fallbacks += r.fallback;
    for (Eigen::Index j = 0; j < r.u.size(); ++j) {
      const double a = std::abs(r.u(j));
      s.max_abs_input = std::max(s.max_abs_input, a);
      if (a > model.u_max(j)) ++s.input_violations;
    }
    for (int j = 0; j < sc.X.rows(); ++j) {
      s.violated[j][r.k] = sc.X.H.row(j).dot(r.x) > sc.X.h(j);
    }
    s.sq_state[r.k] = r.x.dot(sc.Q * r.x);
    s.covered[r.k] = r.e.dot(P * r.e) <= arm.schedule->prs.radius(r.k) + 1e-12;
    s.solve_time += r.solve_time;
    s.max_solve_time = std::max(s.max_solve_time, r.solve_time);
  }
  return s;
}

}  // namespace internal

/// Monte Carlo over trajectories for each arm.  Reduction runs in
/// trajectory order, so reports do not depend on the worker count.
inline MonteCarloResult monte_carlo(const LtiModel& model,
                                    const ContractionCertificate& cert,
                                    const Scenario& sc,
                                    const std::vector<Arm>& arms,
                                    const MonteCarloOptions& opt) {
  demand(opt.n_traj >= 1, "monte_carlo: n_traj must be >= 1");
  MonteCarloResult out;
  SimulationReport& rep = out.report;
  rep.scenario = sc.name;
  rep.seed = opt.seed;
  rep.T = sc.T;
  rep.kind = opt.kind;
  DisturbanceSpec dist{opt.kind, model.W, opt.seed};
  if (opt.zero_noise) dist.W = Mat::Zero(model.n(), model.n());
  const int jobs = resolve_jobs(opt.jobs);
  const int K = sc.T + 1;
  for (Arm a : arms) {
    const ArmSetup setup = prepare_arm(model, cert, sc, a);
    ArmReport ar;
    ar.arm = a;
    ar.feasible = setup.feasible();
    ar.reason = setup.schedule->reason;
    ar.hat_lambda = setup.schedule->hat_lambda();
    ar.n_traj = opt.n_traj;
    out.traces.emplace_back();
    if (!ar.feasible) {
      rep.arms.push_back(std::move(ar));
      continue;
    }
    std::vector<internal::TrajSummary> sums(opt.n_traj);
    std::vector<Trajectory> kept(std::min(opt.keep_traces, opt.n_traj));
    std::vector<QpSolver> solvers(std::max(1, std::min(jobs, opt.n_traj)));
    parallel_for(opt.n_traj, jobs, [&](int i, int w) {
      Trajectory tr = rollout(model, setup, sc, dist, static_cast<uint64_t>(i),
                              &solvers[w]);
      sums[i] = internal::summarize(tr, sc, model, setup);
      if (i < static_cast<int>(kept.size())) kept[i] = std::move(tr);
    });
    out.traces.back() = std::move(kept);

    ar.violation.assign(sc.X.rows(), std::vector<double>(K, 0.0));
    ar.mean_sq_state.assign(K, 0.0);
    ar.prs_coverage.assign(K, 0.0);
    std::vector<long> reached(K, 0);
    double sum = 0.0, sum2 = 0.0, time = 0.0;
    int ok = 0;
    for (const auto& s : sums) {
      ar.steps += s.steps;
      ar.qp_failures += s.fallbacks;
      ar.input_violations += s.input_violations;
      ar.max_abs_input = std::max(ar.max_abs_input, s.max_abs_input);
      time += s.solve_time;
      ar.max_solve_time = std::max(ar.max_solve_time, s.max_solve_time);
      if (s.failed) {
        ++ar.failed_trajectories;
        continue;
      }
      ++ok;
      sum += s.cost;
      sum2 += s.cost * s.cost;
      for (int k = 0; k < K; ++k) {
        ++reached[k];
        for (int j = 0; j < sc.X.rows(); ++j) ar.violation[j][k] += s.violated[j][k];
        ar.mean_sq_state[k] += s.sq_state[k];
        ar.prs_coverage[k] += s.covered[k];
      }
    }
    if (ok > 0) {
      ar.mean_cost = sum / ok;
      ar.std_cost = ok > 1 ? std::sqrt(std::max(0.0, (sum2 - ok * ar.mean_cost *
                                                              ar.mean_cost) /
                                                         (ok - 1)))
                           : 0.0;
    }
    for (int k = 0; k < K; ++k) {
      const double c = std::max<long>(1, reached[k]);
      for (int j = 0; j < sc.X.rows(); ++j) ar.violation[j][k] /= c;
      ar.mean_sq_state[k] /= c;
      ar.prs_coverage[k] /= c;
    }
    ar.max_violation.assign(sc.X.rows(), 0.0);
    for (int j = 0; j < sc.X.rows(); ++j) {
      ar.max_violation[j] =
          *std::max_element(ar.violation[j].begin(), ar.violation[j].end());
    }
    ar.mean_solve_time = ar.steps ? time / ar.steps : 0.0;
    rep.arms.push_back(std::move(ar));
  }
  return out;
}

enum class StressPolicy { kUpper, kLower, kRandom };

struct PrsValidation {
  NoiseKind kind = NoiseKind::kGaussian;
  double hat_lambda = 0.0;
  double trPW = 0.0;
  double epsilon = 0.0;
  std::vector<double> radius;       // r_i
  std::vector<double> bound;        // expectation_bound(i)
  std::vector<double> mean_energy;  // E[e_i' P e_i], control-variate estimate
  std::vector<double> raw_mean_energy;  // plain sample mean
  std::vector<double> std_error;        // of mean_energy
  std::vector<double> raw_std_error;
  std::vector<double> coverage;  // empirical Pr{e_i in E(P, r_i)}

  double min_coverage() const {
    return *std::min_element(coverage.begin(), coverage.end());
  }
  /// Largest estimate - bound over i (<= 0 when the bound holds).
  double worst_energy_excess() const { return worst_excess(mean_energy); }
  double worst_raw_energy_excess() const { return worst_excess(raw_mean_energy); }

 private:
  double worst_excess(const std::vector<double>& est) const {
    double w = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < bound.size(); ++i) w = std::max(w, est[i] - bound[i]);
    return w;
  }
};

/// Raw error recursion e+ = f(e, v) + w from e = 0 under a stress nominal
/// input: rollout t uses v = +v_ss, -v_ss or a fresh uniform draw in
/// [-v_ss, v_ss] per step, cycling with t.
///
/// The expectation is estimated with the unsaturated recursion
/// l+ = (A + B K) l + w, driven by the same noise, as a control variate:
/// E[l_i' P l_i] is known exactly, and e - l vanishes until the input
/// saturates.
inline PrsValidation validate_prs(const NormalizedModel& nm,
                                  const ContractionCertificate& cert,
                                  const TighteningSchedule& schedule,
                                  NoiseKind kind, int n_traj, int depth,
                                  uint64_t seed, int jobs = 0) {
  demand(n_traj >= 1 && depth >= 0, "validate_prs: bad sizes");
  PrsValidation out;
  out.kind = kind;
  out.hat_lambda = schedule.hat_lambda();
  out.trPW = schedule.prs.trPW;
  out.epsilon = schedule.prs.epsilon;
  const Mat& P = cert.P;
  const Mat A_cl = nm.A + nm.B_n * cert.K;
  std::vector<double> linear(depth + 1, 0.0);
  Mat sigma = Mat::Zero(nm.n(), nm.n());
  for (int i = 0; i <= depth; ++i) {
    out.radius.push_back(schedule.prs.radius(i));
    out.bound.push_back(expectation_bound(i, out.hat_lambda, out.trPW));
    linear[i] = trace_pw(P, sigma);
    sigma = symmetrize(A_cl * sigma * A_cl.transpose() + nm.W);
  }
  const DisturbanceSampler sampler({kind, nm.W, seed});
  const int m = nm.m();
  const double vss = schedule.v_ss;
  std::vector<std::vector<double>> energy(n_traj), diff(n_traj);
  parallel_for(n_traj, resolve_jobs(jobs), [&](int t, int) {
    std::vector<double>& en = energy[t];
    std::vector<double>& df = diff[t];
    en.assign(depth + 1, 0.0);
    df.assign(depth + 1, 0.0);
    const auto policy = static_cast<StressPolicy>(t % 3);
    Vec e = Vec::Zero(nm.n());
    Vec l = Vec::Zero(nm.n());
    for (int i = 0; i < depth; ++i) {
      CounterRng rng(seed, 0x707273ULL + static_cast<uint64_t>(t),
                     static_cast<uint64_t>(i));
      Vec v(m);
      for (int j = 0; j < m; ++j) {
        v(j) = policy == StressPolicy::kUpper   ? vss
               : policy == StressPolicy::kLower ? -vss
                                                : rng.uniform(-vss, vss);
      }
      const Vec w = sampler.sample(rng);
      e = error_step(e, v, cert.K, nm) + w;
      l = A_cl * l + w;
      en[i + 1] = e.dot(P * e);
      df[i + 1] = en[i + 1] - l.dot(P * l);
    }
  });
  const int D = depth + 1;
  out.mean_energy.assign(D, 0.0);
  out.raw_mean_energy.assign(D, 0.0);
  out.std_error.assign(D, 0.0);
  out.raw_std_error.assign(D, 0.0);
  out.coverage.assign(D, 0.0);
  std::vector<double> s2(D, 0.0), d1(D, 0.0), d2(D, 0.0);
  for (int t = 0; t < n_traj; ++t) {
    for (int i = 0; i < D; ++i) {
      out.raw_mean_energy[i] += energy[t][i];
      s2[i] += energy[t][i] * energy[t][i];
      d1[i] += diff[t][i];
      d2[i] += diff[t][i] * diff[t][i];
      out.coverage[i] += energy[t][i] <= out.radius[i];
    }
  }
  const double n = n_traj;
  auto sem = [n](double s, double ss) {
    const double mu = s / n;
    return n > 1 ? std::sqrt(std::max(0.0, (ss - n * mu * mu) / (n - 1) / n)) : 0.0;
  };
  for (int i = 0; i < D; ++i) {
    out.raw_std_error[i] = sem(out.raw_mean_energy[i], s2[i]);
    out.std_error[i] = sem(d1[i], d2[i]);
    out.raw_mean_energy[i] /= n;
    out.mean_energy[i] = d1[i] / n + linear[i];
    out.coverage[i] /= n;
  }
  return out;
}

struct RealCostSeries {
  std::vector<double> stage;            // l(x_k, phi(u_k))
  std::vector<double> running_average;  // mean of stage[0..k]
};

inline RealCostSeries diagnostic_real_cost(const Trajectory& tr, const Mat& Q,
                                           const Mat& R) {
  RealCostSeries s;
  double acc = 0.0;
  for (const TraceRow& r : tr.rows) {
    const double l = r.x.dot(Q * r.x) + r.u.dot(R * r.u);
    s.stage.push_back(l);
    acc += l;
    s.running_average.push_back(acc / static_cast<double>(s.stage.size()));
  }
  return s;
}

/// Average real-cost bound (1 + 1/delta) 4 / (1 - hat_lambda) Tr(S W) with
/// S = alpha P.
inline double real_cost_average_bound(const Mat& P, const Mat& W,
                                      double hat_lambda, double alpha,
                                      double delta) {
  demand(delta > 0.0, "real_cost_average_bound: delta must be positive");
  demand(hat_lambda >= 0.0 && hat_lambda < 1.0,
         "real_cost_average_bound: rate out of [0, 1)");
  return (1.0 + 1.0 / delta) * 4.0 / (1.0 - hat_lambda) *
         trace_pw(alpha * P, W);
}

/// Lambda_max(P^-1/2 Q P^-1/2) Tr(PW) / (1 - hat_lambda).
inline double mean_square_bound(const Mat& P, const Mat& Q, const Mat& W,
                                double hat_lambda) {
  return generalized_max_eigenvalue(symmetrize(Q), symmetrize(P)) *
         trace_pw(P, W) / (1.0 - hat_lambda);
}

}  // namespace sasmpc
