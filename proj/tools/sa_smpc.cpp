// sa-smpc: offline design, closed-loop simulation and validation for
// saturation-aware stochastic MPC.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sasmpc/design.hpp"
#include "sasmpc/io.hpp"
#include "sasmpc/simulator.hpp"
#include "sasmpc/tightening.hpp"

namespace fs = std::filesystem;
using namespace sasmpc;

namespace {

enum Exit { kOk = 0, kUsage = 1, kDesign = 2, kValidation = 3 };

struct Common {
  std::string model = "data/cstr_model.json";
  std::string certificate;  // empty: design one
  std::string scenario = "s1";
  std::string arm = "both";
  std::string out = "out";
  std::string noise = "gaussian";
  int traj = 0;  // 0: scenario default
  int T = -1;
  int keep = 10;
  int jobs = 0;
  uint64_t seed = 7;
  double tol = 1e-3;
  double cert_tol = 1e-8;
  long samples = 1000000;
  int depth = 50;
};

Scenario load_scenario(const std::string& s) {
  if (s.size() == 2 && s[0] == 's' && s[1] >= '1' && s[1] <= '4') {
    return scenario_preset(s[1] - '0');
  }
  return io::scenario_from_json(io::read_json_file(s));
}

std::vector<Arm> arms_of(const std::string& a) {
  if (a == "both") return {Arm::kLambdaStar, Arm::kLambda};
  return {parse_arm(a)};
}

LtiModel load_model(const Common& c) {
  LtiModel m = io::model_from_json(io::read_json_file(c.model));
  m.validate();
  return m;
}

ContractionCertificate obtain_certificate(const Common& c, const LtiModel& m) {
  const NormalizedModel nm = normalize(m);
  if (!c.certificate.empty()) {
    return io::certificate_from_json(nm, io::read_json_file(c.certificate));
  }
  std::fprintf(stderr, "no --certificate given; designing one (tol %g)\n", c.tol);
  DesignOptions opt;
  opt.tol = c.tol;
  return design_certificate(nm, opt);
}

TighteningOptions tightening_options(const NormalizedModel& nm, const Scenario& sc) {
  TighteningOptions opt;
  opt.Q = sc.Q;
  opt.R = normalize_input_weight(nm, sc.R);
  opt.epsilon = sc.epsilon;
  return opt;
}

void ensure_dir(const std::string& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw ConfigError("cannot create '" + d + "': " + ec.message());
}

std::string path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

int cmd_design(const Common& c) {
  const LtiModel m = load_model(c);
  const NormalizedModel nm = normalize(m);
  DesignOptions opt;
  opt.tol = c.tol;
  DesignDiagnostics dg;
  const ContractionCertificate cert = design_certificate(nm, opt, &dg);
  ensure_dir(c.out);
  io::write_json_file(path(c.out, "certificate.json"),
                      io::certificate_to_json(nm, cert));
  const Scenario sc = load_scenario(c.scenario);
  std::printf("lambda     %.6f\nlambda_L   %.6f\n", cert.lambda, cert.lambda_L);
  std::printf("oracle     %d SDP solves\n", dg.oracle_calls);
  for (Arm a : arms_of(c.arm)) {
    const TighteningSchedule s =
        build_tightening(nm, cert, sc.X, a, tightening_options(nm, sc));
    const std::string tag = to_string(a);
    io::write_json_file(path(c.out, "tightening_" + tag + ".json"),
                        io::tightening_to_json(nm, s));
    io::write_text_file(path(c.out, "prs_" + tag + ".csv"),
                        io::schedule_csv(s, std::max(s.cutoff, c.depth)));
    std::printf("[%s] hat_lambda %.6f  r_L %.6g  Tr(PW) %.6g  r_inf %.6g  %s\n",
                tag.c_str(), s.hat_lambda(), s.r_L, s.prs.trPW, s.prs.r_inf,
                s.feasible ? "feasible" : ("infeasible: " + s.reason).c_str());
  }
  std::printf("wrote %s\n", c.out.c_str());
  return kOk;
}

void print_arm(const std::string& scenario, const ArmReport& a) {
  if (!a.feasible) {
    std::printf("%-8s %-12s Infeasible (%s)\n", scenario.c_str(), to_string(a.arm),
                a.reason.c_str());
    return;
  }
  std::printf(
      "%-8s %-12s cost %9.3f +- %-7.3f  max viol %.4f  qp fallbacks %ld  "
      "|u|max %.4f  %.1f us/step\n",
      scenario.c_str(), to_string(a.arm), a.mean_cost, a.std_cost,
      a.max_violation.empty()
          ? 0.0
          : *std::max_element(a.max_violation.begin(), a.max_violation.end()),
      a.qp_failures, a.max_abs_input, 1e6 * a.mean_solve_time);
}

MonteCarloResult run_scenario(const Common& c, const LtiModel& m,
                              const ContractionCertificate& cert, Scenario sc) {
  if (c.T >= 0) sc.T = c.T;
  if (c.traj > 0) sc.n_traj = c.traj;
  MonteCarloOptions opt;
  opt.n_traj = sc.n_traj;
  opt.seed = c.seed;
  opt.kind = parse_noise_kind(c.noise);
  opt.jobs = c.jobs;
  opt.keep_traces = c.keep;
  return monte_carlo(m, cert, sc, arms_of(c.arm), opt);
}

void write_simulation(const std::string& dir, const LtiModel& m,
                      const Scenario& sc, const MonteCarloResult& r) {
  ensure_dir(dir);
  io::write_json_file(path(dir, "report.json"), io::report_to_json(r.report));
  io::write_json_file(path(dir, "timings.json"), io::timings_to_json(r.report));
  for (size_t i = 0; i < r.report.arms.size(); ++i) {
    const ArmReport& a = r.report.arms[i];
    const auto& trs = r.traces[i];
    if (!a.feasible || trs.empty()) continue;
    const std::string tag = to_string(a.arm);
    io::write_text_file(path(dir, "trace_" + tag + ".csv"),
                        io::trace_csv(trs, m.n(), m.m()));
    io::write_text_file(path(dir, "timing_" + tag + ".csv"), io::timing_csv(trs));
    for (int j = 0; j < m.n(); ++j) {
      io::write_text_file(
          path(dir, "x" + std::to_string(j + 1) + "_" + tag + ".svg"),
          io::svg_plot(io::state_plot(trs, sc.X, j, sc.name + " " + tag)));
    }
    for (int j = 0; j < m.m(); ++j) {
      io::write_text_file(
          path(dir, "u" + std::to_string(j + 1) + "_" + tag + ".svg"),
          io::svg_plot(io::input_plot(trs, m.u_max, j, sc.name + " " + tag)));
    }
  }
}

int cmd_simulate(const Common& c) {
  const LtiModel m = load_model(c);
  const ContractionCertificate cert = obtain_certificate(c, m);
  const Scenario sc = load_scenario(c.scenario);
  const MonteCarloResult r = run_scenario(c, m, cert, sc);
  write_simulation(c.out, m, sc, r);
  for (const ArmReport& a : r.report.arms) print_arm(sc.name, a);
  std::printf("wrote %s\n", c.out.c_str());
  return kOk;
}

int cmd_compare(const Common& c) {
  const LtiModel m = load_model(c);
  const ContractionCertificate cert = obtain_certificate(c, m);
  Common cc = c;
  cc.arm = "both";
  io::Json rows = io::Json::array();
  for (int s = 1; s <= 4; ++s) {
    const Scenario sc = scenario_preset(s);
    const MonteCarloResult r = run_scenario(cc, m, cert, sc);
    write_simulation(path(c.out, sc.name), m, sc, r);
    io::Json row = {{"scenario", sc.name}};
    for (const ArmReport& a : r.report.arms) {
      print_arm(sc.name, a);
      row[to_string(a.arm)] =
          a.feasible ? io::Json{{"mean_cost", a.mean_cost},
                                {"std_cost", a.std_cost},
                                {"qp_failures", a.qp_failures}}
                     : io::Json("Infeasible");
    }
    rows.push_back(std::move(row));
  }
  io::write_json_file(path(c.out, "compare.json"),
                      {{"schema", io::kSchema}, {"seed", c.seed}, {"rows", rows}});
  std::printf("wrote %s\n", c.out.c_str());
  return kOk;
}

int cmd_validate(const Common& c) {
  const LtiModel m = load_model(c);
  const NormalizedModel nm = normalize(m);
  const ContractionCertificate cert = obtain_certificate(c, m);
  const Scenario sc = load_scenario(c.scenario);
  bool ok = true;
  io::Json checks = io::Json::object();
  auto verdict = [&](const char* name, bool pass, const std::string& detail) {
    std::printf("%-20s %s  %s\n", name, pass ? "pass" : "FAIL", detail.c_str());
    ok = ok && pass;
  };

  const ResidualReport rr = verify_certificate(nm, cert, c.cert_tol);
  verdict("certificate", rr.pass,
          "worst residual " + io::fmt(rr.worst) + " (tol " + io::fmt(c.cert_tol) + ")");
  checks["certificate"] = {{"pass", rr.pass},
                           {"worst", rr.worst},
                           {"worst_scenario", rr.worst_scenario},
                           {"residuals", rr.residuals},
                           {"linear_residual", rr.linear_residual},
                           {"message", rr.message}};

  const EmbeddingReport er = check_embedding(nm, cert.P, cert.K, c.samples, c.seed);
  verdict("embedding", er.pass,
          std::to_string(er.inequality_violations) + " inequality / " +
              std::to_string(er.hull_violations) + " hull violations in " +
              std::to_string(er.samples) + " samples");
  io::Json ej = {{"pass", er.pass},
                 {"samples", er.samples},
                 {"inequality_violations", er.inequality_violations},
                 {"hull_violations", er.hull_violations},
                 {"worst_inequality_excess", er.worst_inequality_excess},
                 {"worst_hull_distance", er.worst_hull_distance}};
  if (!er.pass) {
    ej["witness_e"] = io::to_json(er.witness_e);
    ej["witness_v"] = io::to_json(er.witness_v);
  }
  checks["embedding"] = ej;

  const TighteningSchedule s =
      build_tightening(nm, cert, sc.X, Arm::kLambdaStar, tightening_options(nm, sc));
  const int n_prs = c.traj > 0 ? c.traj : 10000;
  io::Json prs = io::Json::array();
  for (NoiseKind k : {NoiseKind::kGaussian, NoiseKind::kUniform, NoiseKind::kLaplace}) {
    const PrsValidation v = validate_prs(nm, cert, s, k, n_prs, c.depth, c.seed, c.jobs);
    const bool pass =
        v.min_coverage() >= 1.0 - sc.epsilon - 0.02 && v.worst_energy_excess() <= 0.0;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "%s: min coverage %.4f, worst E[e'Pe] - bound %.3g", to_string(k),
                  v.min_coverage(), v.worst_energy_excess());
    verdict("prs", pass, buf);
    io::Json j = io::prs_validation_to_json(v);
    j["pass"] = pass;
    prs.push_back(std::move(j));
  }
  checks["prs"] = prs;

  const double hat = s.hat_lambda();
  const double delta = 0.5 * (1.0 - hat) / hat;
  const TerminalWeightReport tw = verify_terminal_weight(
      cert.P, cert.K, sc.Q, normalize_input_weight(nm, sc.R), hat,
      1.0, delta);
  const bool tw_pass = std::isfinite(tw.alpha_min);
  verdict("terminal_weight", tw_pass,
          "alpha_min " + io::fmt(tw.alpha_min) + " at delta " + io::fmt(delta));
  checks["terminal_weight"] = {{"pass", tw_pass},
                               {"alpha_min", tw.alpha_min},
                               {"delta", delta},
                               {"hat_lambda", hat}};

  ensure_dir(c.out);
  io::write_json_file(path(c.out, "validation.json"),
                      {{"schema", io::kSchema}, {"pass", ok}, {"checks", checks}});
  return ok ? kOk : kValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Saturation-aware stochastic MPC: design, simulate, compare, validate"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--model", c.model, "model JSON")->capture_default_str();
    sub->add_option("--out", c.out, "output directory")->capture_default_str();
    sub->add_option("--scenario", c.scenario, "s1..s4 or a scenario JSON")
        ->capture_default_str();
    sub->add_option("--arm", c.arm, "lambda_star, lambda or both")
        ->check(CLI::IsMember({"lambda_star", "lambda", "both"}))
        ->capture_default_str();
    sub->add_option("--tol", c.tol, "bisection tolerance for the design")
        ->check(CLI::Range(1e-6, 0.4))
        ->capture_default_str();
  };
  auto add_run = [&](CLI::App* sub) {
    sub->add_option("--certificate", c.certificate,
                    "certificate JSON (designed when absent)");
    sub->add_option("--traj", c.traj, "trajectories (scenario default when 0)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", c.seed, "random seed")->capture_default_str();
    sub->add_option("--jobs", c.jobs, "worker threads (SA_SMPC_JOBS, else all cores)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--noise", c.noise, "gaussian, uniform or laplace")
        ->check(CLI::IsMember({"gaussian", "uniform", "laplace"}))
        ->capture_default_str();
  };

  CLI::App* design = app.add_subcommand("design", "synthesize certificate and tightening");
  add_common(design);
  design->add_option("--depth", c.depth, "rows of the PRS schedule CSV")
      ->capture_default_str();

  CLI::App* simulate = app.add_subcommand("simulate", "closed-loop Monte Carlo");
  add_common(simulate);
  add_run(simulate);
  simulate->add_option("--steps", c.T, "override the scenario horizon T");
  simulate->add_option("--keep", c.keep, "trajectories written to CSV/SVG")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  CLI::App* compare = app.add_subcommand("compare", "both arms on scenarios 1-4");
  add_common(compare);
  add_run(compare);
  compare->add_option("--steps", c.T, "override the scenario horizon T");
  compare->add_option("--keep", c.keep, "trajectories written to CSV/SVG")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  CLI::App* validate = app.add_subcommand("validate", "certificate, embedding, PRS checks");
  add_common(validate);
  add_run(validate);
  validate->add_option("--cert-tol", c.cert_tol, "LMI residual tolerance")
      ->capture_default_str();
  validate->add_option("--samples", c.samples, "embedding samples")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  validate->add_option("--depth", c.depth, "PRS validation depth")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*design) return cmd_design(c);
    if (*simulate) return cmd_simulate(c);
    if (*compare) return cmd_compare(c);
    if (*validate) return cmd_validate(c);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const DesignFailure& e) {
    std::fprintf(stderr, "design failure: %s\n", e.what());
    return kDesign;
  } catch (const ContractViolation& e) {
    std::fprintf(stderr, "design failure: %s\n", e.what());
    return kDesign;
  }
  return kUsage;
}
