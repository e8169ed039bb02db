#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "cstr_fixture.hpp"
#include "sasmpc/io.hpp"

namespace sasmpc {
namespace {

using testing::CstrModel;
using testing::PaperCertificate;

TEST(JsonTest, MatrixRoundTrip) {
  Mat M(2, 3);
  M << 1, -2.5, 3e-17, 0.1, 1.0 / 3.0, -7;
  EXPECT_EQ(io::mat_from_json(io::to_json(M), "M"), M);
  const Vec v = io::vec_from_json(io::Json::parse("[1, 2, 3]"), "v");
  EXPECT_EQ(v.size(), 3);
  EXPECT_THROW(io::mat_from_json(io::Json::parse("[[1, 2], [3]]"), "M"),
               ConfigError);
  EXPECT_THROW(io::mat_from_json(io::Json::parse("[]"), "M"), ConfigError);
}

TEST(JsonTest, ModelRoundTrip) {
  const LtiModel m = CstrModel();
  const LtiModel r = io::model_from_json(io::model_to_json(m));
  EXPECT_EQ(r.A, m.A);
  EXPECT_EQ(r.B, m.B);
  EXPECT_EQ(r.u_max, m.u_max);
  EXPECT_EQ(r.W, m.W);
}

TEST(JsonTest, SchemaIsChecked) {
  io::Json j = io::model_to_json(CstrModel());
  j["schema"] = 2;
  EXPECT_THROW(io::model_from_json(j), ConfigError);
  j.erase("schema");
  EXPECT_THROW(io::model_from_json(j), ConfigError);
  io::Json k = io::model_to_json(CstrModel());
  k.erase("W");
  EXPECT_THROW(io::model_from_json(k), ConfigError);
}

TEST(JsonTest, CertificateStoredInActuatorUnits) {
  const NormalizedModel nm = normalize(CstrModel());
  const ContractionCertificate c = PaperCertificate();
  const io::Json j = io::certificate_to_json(nm, c);
  EXPECT_NEAR(j["K"][0][0].get<double>(), 27.1573, 1e-12);
  EXPECT_NEAR(j["K"][0][1].get<double>(), 0.09622, 1e-14);
  const ContractionCertificate r = io::certificate_from_json(nm, j);
  EXPECT_LT((r.K - c.K).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(r.P, c.P);
  EXPECT_EQ(r.lambda, c.lambda);
  EXPECT_EQ(r.lambda_L, c.lambda_L);
}

TEST(JsonTest, ScenarioRoundTripAndValidation) {
  const Scenario s = scenario_preset(3);
  const Scenario r = io::scenario_from_json(io::scenario_to_json(s));
  EXPECT_EQ(r.name, "s3");
  // rows are renormalized on load
  EXPECT_LT((r.X.H - s.X.H).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((r.X.h - s.X.h).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(r.x0, s.x0);
  io::Json bad = io::scenario_to_json(s);
  bad["epsilon"] = 1.0;
  EXPECT_THROW(io::scenario_from_json(bad), ConfigError);
}

TEST(DataFilesTest, MatchBuiltInPresets) {
  const LtiModel m = io::model_from_json(io::read_json_file("data/cstr_model.json"));
  EXPECT_EQ(m.A, CstrModel().A);
  EXPECT_EQ(m.B, CstrModel().B);
  EXPECT_EQ(m.W, CstrModel().W);
  const NormalizedModel nm = normalize(m);
  const ContractionCertificate c =
      io::certificate_from_json(nm, io::read_json_file("data/cstr_certificate.json"));
  EXPECT_EQ(c.P, PaperCertificate().P);
  EXPECT_LT((c.K - PaperCertificate().K).cwiseAbs().maxCoeff(), 1e-15);
  for (int i = 1; i <= 4; ++i) {
    const std::string path = "data/scenarios/s" + std::to_string(i) + ".json";
    const Scenario f = io::scenario_from_json(io::read_json_file(path));
    const Scenario p = scenario_preset(i);
    EXPECT_EQ(f.X.H, p.X.H) << path;
    EXPECT_EQ(f.X.h, p.X.h) << path;
    EXPECT_EQ(f.x0, p.x0) << path;
    EXPECT_EQ(f.Q, p.Q) << path;
    EXPECT_EQ(f.R, p.R) << path;
    EXPECT_EQ(f.T, p.T) << path;
    EXPECT_EQ(f.N, p.N) << path;
  }
  EXPECT_THROW(io::read_json_file("data/missing.json"), ConfigError);
}

TEST(CsvTest, FormatsRoundTripDoubles) {
  EXPECT_EQ(io::fmt(0.1), "0.10000000000000001");
  EXPECT_EQ(std::strtod(io::fmt(1.0 / 3.0).c_str(), nullptr), 1.0 / 3.0);
  Trajectory tr;
  TraceRow r;
  r.k = 3;
  r.x = Vec::Constant(2, 0.5);
  r.u = Vec::Constant(1, -25.0);
  r.e = Vec::Zero(2);
  r.xi = 1.0;
  r.objective = 2.0;
  r.fallback = true;
  r.solve_time = 1.5e-4;
  tr.rows.push_back(r);
  const std::string csv = io::trace_csv({tr}, 2, 1);
  EXPECT_EQ(csv,
            "traj,k,x1,x2,u1,e1,e2,xi,objective,status,fallback\n"
            "0,3,0.5,0.5,-25,0,0,1,2,Optimal,1\n");
  EXPECT_EQ(csv.find("0.00015"), std::string::npos);
  EXPECT_EQ(io::timing_csv({tr}), "traj,k,solve_time_s\n0,3,0.00014999999999999999\n");
}

TEST(CsvTest, ScheduleRows) {
  const NormalizedModel nm = normalize(CstrModel());
  TighteningOptions opt;
  opt.Q = scenario_preset(1).Q;
  opt.R = normalize_input_weight(nm, scenario_preset(1).R);
  const TighteningSchedule s = build_tightening(nm, PaperCertificate(),
                                                scenario_preset(1).X,
                                                Arm::kLambda, opt);
  const std::string csv = io::schedule_csv(s, 4);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "i,r_i,expectation_bound");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  const io::Json j = io::tightening_to_json(nm, s);
  EXPECT_EQ(j["schema"], 1);
  EXPECT_EQ(j["arm"], "lambda");
  EXPECT_NEAR(j["K_f"][0][0].get<double>(), (s.K_f * 25.0)(0, 0), 1e-12);
}

TEST(ReportTest, InfeasibleArmCarriesNoCost) {
  SimulationReport r;
  r.scenario = "s4";
  ArmReport a;
  a.arm = Arm::kLambda;
  a.feasible = false;
  a.reason = "terminal set empty";
  a.mean_solve_time = 1.0;
  r.arms.push_back(a);
  const io::Json j = io::report_to_json(r);
  EXPECT_EQ(j["schema"], 1);
  EXPECT_EQ(j["arms"][0]["verdict"], "Infeasible");
  EXPECT_FALSE(j["arms"][0].contains("mean_cost"));
  EXPECT_EQ(j.dump().find("solve_time"), std::string::npos);
  EXPECT_TRUE(io::timings_to_json(r)["arms"][0].contains("mean_solve_time_s"));
}

TEST(ReportTest, RepeatedRunsAreByteIdentical) {
  Scenario sc = scenario_preset(2);
  sc.T = 12;
  MonteCarloOptions opt;
  opt.n_traj = 4;
  opt.keep_traces = 2;
  opt.jobs = 2;
  auto run = [&] {
    const auto r = monte_carlo(CstrModel(), PaperCertificate(), sc,
                               {Arm::kLambdaStar, Arm::kLambda}, opt);
    return io::report_to_json(r.report).dump(2) + io::trace_csv(r.traces[0], 2, 1) +
           io::trace_csv(r.traces[1], 2, 1);
  };
  const std::string a = run();
  EXPECT_EQ(a, run());
  EXPECT_GT(a.size(), 1000u);
}

TEST(SvgTest, PlotHasSeriesAndLimits) {
  Trajectory tr;
  for (int k = 0; k < 5; ++k) {
    TraceRow r;
    r.k = k;
    r.x = Vec::Constant(2, 0.1 * k);
    r.u = Vec::Constant(1, 5.0 * k);
    tr.rows.push_back(r);
  }
  const std::string s =
      io::svg_plot(io::state_plot({tr, tr}, scenario_preset(3).X, 1, "x2"));
  EXPECT_EQ(s.rfind("<svg", 0), 0u);
  EXPECT_NE(s.find("</svg>"), std::string::npos);
  size_t lines = 0, pos = 0;
  while ((pos = s.find("<polyline", pos)) != std::string::npos) ++lines, ++pos;
  EXPECT_EQ(lines, 2u);
  size_t dashed = 0;
  pos = 0;
  while ((pos = s.find("stroke-dasharray", pos)) != std::string::npos) ++dashed, ++pos;
  EXPECT_EQ(dashed, 2u);  // x2 <= 0.25 and -x2 <= 0.25
  const std::string u =
      io::svg_plot(io::input_plot({tr}, Vec::Constant(1, 25.0), 0, "u"));
  EXPECT_NE(u.find("u_max"), std::string::npos);
}

TEST(FileTest, WriteAndReadBack) {
  const auto dir = std::filesystem::temp_directory_path() / "sasmpc_io_test";
  std::filesystem::create_directories(dir);
  const std::string p = (dir / "m.json").string();
  io::write_json_file(p, io::model_to_json(CstrModel()));
  EXPECT_EQ(io::model_from_json(io::read_json_file(p)).A, CstrModel().A);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace sasmpc
