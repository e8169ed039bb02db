#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sasmpc/common.hpp"
#include "sasmpc/design.hpp"
#include "sasmpc/model.hpp"
#include "sasmpc/simulator.hpp"
#include "sasmpc/tightening.hpp"

namespace sasmpc::io {

using Json = nlohmann::json;

inline constexpr int kSchema = 1;

// ---- primitives -----------------------------------------------------------

inline Json to_json(const Mat& M) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Json to_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

inline double number(const Json& j, const char* what) {
  if (!j.is_number()) throw ConfigError(std::string(what) + ": expected a number");
  return j.get<double>();
}

/// Accepts a list of rows; a flat list is read as a column.
inline Mat mat_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError(std::string(what) + ": expected a nonempty array");
  }
  if (!j.front().is_array()) {
    Mat M(j.size(), 1);
    for (size_t i = 0; i < j.size(); ++i) M(i, 0) = number(j[i], what);
    return M;
  }
  const size_t cols = j.front().size();
  Mat M(j.size(), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      throw ConfigError(std::string(what) + ": ragged matrix");
    }
    for (size_t c = 0; c < cols; ++c) M(i, c) = number(j[i][c], what);
  }
  return M;
}

inline Vec vec_from_json(const Json& j, const char* what) {
  if (j.is_number()) return Vec::Constant(1, j.get<double>());
  const Mat M = mat_from_json(j, what);
  if (M.cols() != 1) throw ConfigError(std::string(what) + ": expected a vector");
  return M.col(0);
}

inline void check_schema(const Json& j, const std::string& kind) {
  if (!j.is_object()) throw ConfigError(kind + ": expected a JSON object");
  if (!j.contains("schema") || j["schema"] != kSchema) {
    throw ConfigError(kind + ": unsupported or missing schema (expected 1)");
  }
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

inline void write_json_file(const std::string& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

/// %.17g round-trips every double.
inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---- model ------------------------------------------------------------------

inline Json model_to_json(const LtiModel& m) {
  return {{"schema", kSchema}, {"A", to_json(m.A)}, {"B", to_json(m.B)},
          {"u_max", to_json(m.u_max)}, {"W", to_json(m.W)}};
}

inline LtiModel model_from_json(const Json& j) {
  check_schema(j, "model");
  LtiModel m;
  m.A = mat_from_json(field(j, "A"), "A");
  m.B = mat_from_json(field(j, "B"), "B");
  m.u_max = vec_from_json(field(j, "u_max"), "u_max");
  m.W = mat_from_json(field(j, "W"), "W");
  return m;
}

// ---- certificate (K in actuator units on disk) ------------------------------

inline Json certificate_to_json(const NormalizedModel& nm,
                                const ContractionCertificate& c) {
  Json res = Json::array();
  for (double r : c.residuals) res.push_back(r);
  return {{"schema", kSchema},
          {"P", to_json(c.P)},
          {"K", to_json(denormalize_gain(nm, c.K))},
          {"lambda", c.lambda},
          {"lambda_L", c.lambda_L},
          {"residuals", res},
          {"linear_residual", c.linear_residual}};
}

inline ContractionCertificate certificate_from_json(const NormalizedModel& nm,
                                                    const Json& j) {
  check_schema(j, "certificate");
  ContractionCertificate c;
  c.P = mat_from_json(field(j, "P"), "P");
  c.K = mat_from_json(field(j, "K"), "K");
  if (c.K.cols() == 1 && c.K.rows() == nm.n() && nm.m() == 1 && nm.n() > 1) {
    c.K.transposeInPlace();
  }
  if (c.P.rows() != nm.n() || c.P.cols() != nm.n() || c.K.rows() != nm.m() ||
      c.K.cols() != nm.n()) {
    throw ConfigError("certificate: P or K shape does not match the model");
  }
  c.K = normalize_gain(nm, c.K);
  c.lambda = number(field(j, "lambda"), "lambda");
  c.lambda_L = number(field(j, "lambda_L"), "lambda_L");
  if (j.contains("residuals")) {
    for (const Json& r : j["residuals"]) c.residuals.push_back(number(r, "residuals"));
  }
  if (j.contains("linear_residual")) {
    c.linear_residual = number(j["linear_residual"], "linear_residual");
  }
  return c;
}

// ---- scenario ---------------------------------------------------------------

inline Json scenario_to_json(const Scenario& s) {
  return {{"schema", kSchema},  {"name", s.name},     {"H", to_json(s.X.H)},
          {"h", to_json(s.X.h)}, {"x0", to_json(s.x0)}, {"epsilon", s.epsilon},
          {"T", s.T},           {"n_traj", s.n_traj}, {"N", s.N},
          {"Q", to_json(s.Q)},  {"R", to_json(s.R)}};
}

inline Scenario scenario_from_json(const Json& j) {
  check_schema(j, "scenario");
  Scenario s;
  s.name = j.value("name", std::string("custom"));
  s.X = Polytope::from_rows(mat_from_json(field(j, "H"), "H"),
                            vec_from_json(field(j, "h"), "h"));
  s.x0 = vec_from_json(field(j, "x0"), "x0");
  s.epsilon = number(field(j, "epsilon"), "epsilon");
  s.T = j.value("T", s.T);
  s.n_traj = j.value("n_traj", s.n_traj);
  s.N = j.value("N", s.N);
  s.Q = mat_from_json(field(j, "Q"), "Q");
  s.R = mat_from_json(field(j, "R"), "R");
  if (!(s.epsilon > 0.0 && s.epsilon < 1.0)) {
    throw ConfigError("scenario: epsilon must lie in (0, 1)");
  }
  if (s.T < 0 || s.n_traj < 1 || s.N < 1) {
    throw ConfigError("scenario: T >= 0, n_traj >= 1 and N >= 1 required");
  }
  if (s.x0.size() != s.X.dim() || s.Q.rows() != s.X.dim()) {
    throw ConfigError("scenario: dimension mismatch");
  }
  return s;
}

// ---- tightening ---------------------------------------------------------------

inline Json polytope_to_json(const Polytope& p) {
  return {{"H", to_json(p.H)}, {"h", to_json(p.h)}};
}

inline Json tightening_to_json(const NormalizedModel& nm,
                               const TighteningSchedule& s) {
  Json radii = Json::array();
  for (double r : s.prs.radii) radii.push_back(r);
  Json j = {{"schema", kSchema},
            {"arm", to_string(s.arm)},
            {"feasible", s.feasible},
            {"reason", s.reason},
            {"lambda", s.lambda},
            {"lambda_L", s.lambda_L},
            {"hat_lambda", s.hat_lambda()},
            {"refined", s.refined},
            {"r_L", s.r_L},
            {"trPW", s.prs.trPW},
            {"epsilon", s.prs.epsilon},
            {"r_inf", s.prs.r_inf},
            {"radii", radii},
            {"cutoff", s.cutoff},
            {"v_ss", s.v_ss},
            {"S", to_json(s.S)},
            {"K_f", to_json(denormalize_gain(nm, s.K_f))},
            {"Z_inf", polytope_to_json(s.Z_inf)}};
  if (s.feasible) {
    j["Z_f"] = polytope_to_json(s.Z_f);
    j["terminal_iterations"] = s.terminal_iterations;
  }
  return j;
}

/// i, r_i, expectation bound
inline std::string schedule_csv(const TighteningSchedule& s, int depth) {
  std::string out = "i,r_i,expectation_bound\n";
  for (int i = 0; i <= depth; ++i) {
    out += std::to_string(i) + "," + fmt(s.prs.radius(i)) + "," +
           fmt(expectation_bound(i, s.hat_lambda(), s.prs.trPW)) + "\n";
  }
  return out;
}

// ---- reports ------------------------------------------------------------------

/// Deterministic part of a simulation report; timings are written separately.
inline Json report_to_json(const SimulationReport& r) {
  Json arms = Json::array();
  for (const ArmReport& a : r.arms) {
    Json j = {{"arm", to_string(a.arm)},
              {"feasible", a.feasible},
              {"hat_lambda", a.hat_lambda},
              {"n_traj", a.n_traj}};
    if (!a.feasible) {
      j["verdict"] = "Infeasible";
      j["reason"] = a.reason;
      arms.push_back(std::move(j));
      continue;
    }
    j["verdict"] = "Feasible";
    j["mean_cost"] = a.mean_cost;
    j["std_cost"] = a.std_cost;
    j["steps"] = a.steps;
    j["qp_failures"] = a.qp_failures;
    j["failed_trajectories"] = a.failed_trajectories;
    j["input_violations"] = a.input_violations;
    j["max_abs_input"] = a.max_abs_input;
    j["max_violation"] = a.max_violation;
    j["violation"] = a.violation;
    j["mean_sq_state"] = a.mean_sq_state;
    j["prs_coverage"] = a.prs_coverage;
    arms.push_back(std::move(j));
  }
  return {{"schema", kSchema}, {"scenario", r.scenario}, {"seed", r.seed},
          {"T", r.T},          {"noise", to_string(r.kind)}, {"arms", arms}};
}

inline Json timings_to_json(const SimulationReport& r) {
  Json arms = Json::array();
  for (const ArmReport& a : r.arms) {
    arms.push_back({{"arm", to_string(a.arm)},
                    {"mean_solve_time_s", a.mean_solve_time},
                    {"max_solve_time_s", a.max_solve_time}});
  }
  return {{"schema", kSchema}, {"scenario", r.scenario}, {"arms", arms}};
}

inline Json prs_validation_to_json(const PrsValidation& v) {
  return {{"schema", kSchema},
          {"noise", to_string(v.kind)},
          {"hat_lambda", v.hat_lambda},
          {"trPW", v.trPW},
          {"epsilon", v.epsilon},
          {"radius", v.radius},
          {"bound", v.bound},
          {"mean_energy", v.mean_energy},
          {"raw_mean_energy", v.raw_mean_energy},
          {"coverage", v.coverage},
          {"min_coverage", v.min_coverage()},
          {"worst_energy_excess", v.worst_energy_excess()}};
}

// ---- traces -------------------------------------------------------------------

inline std::string trace_csv_header(int n, int m) {
  std::string h = "traj,k";
  for (int i = 1; i <= n; ++i) h += ",x" + std::to_string(i);
  for (int i = 1; i <= m; ++i) h += ",u" + std::to_string(i);
  for (int i = 1; i <= n; ++i) h += ",e" + std::to_string(i);
  return h + ",xi,objective,status,fallback\n";
}

/// One row per step; solve times are left to timing_csv.
inline std::string trace_csv(const std::vector<Trajectory>& trs, int n, int m) {
  std::string out = trace_csv_header(n, m);
  for (size_t t = 0; t < trs.size(); ++t) {
    for (const TraceRow& r : trs[t].rows) {
      out += std::to_string(t) + "," + std::to_string(r.k);
      for (int i = 0; i < n; ++i) out += "," + fmt(r.x(i));
      for (int i = 0; i < m; ++i) out += "," + fmt(r.u(i));
      for (int i = 0; i < n; ++i) out += "," + fmt(r.e(i));
      out += "," + fmt(r.xi) + "," + fmt(r.objective) + "," +
             to_string(r.status) + "," + (r.fallback ? "1" : "0") + "\n";
    }
  }
  return out;
}

inline std::string timing_csv(const std::vector<Trajectory>& trs) {
  std::string out = "traj,k,solve_time_s\n";
  for (size_t t = 0; t < trs.size(); ++t) {
    for (const TraceRow& r : trs[t].rows) {
      out += std::to_string(t) + "," + std::to_string(r.k) + "," +
             fmt(r.solve_time) + "\n";
    }
  }
  return out;
}

// ---- SVG ----------------------------------------------------------------------

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Plot {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<Series> series;
  std::vector<std::pair<std::string, double>> hlines;  // dashed limits
};

inline std::string svg_plot(const Plot& p, int width = 720, int height = 360) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const Series& s : p.series) {
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  for (const auto& h : p.hlines) y0 = std::min(y0, h.second), y1 = std::max(y1, h.second);
  if (x0 > x1) x0 = 0, x1 = 1;
  if (y0 > y1) y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double L = 70, R = 20, T = 36, B = 48;
  const double W = width - L - R, H = height - T - B;
  auto X = [&](double v) { return L + (v - x0) / (x1 - x0) * W; };
  auto Y = [&](double v) { return T + (y1 - v) / (y1 - y0) * H; };
  char buf[256];
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
    << "\" height=\"" << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
    << p.title << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" "
                "fill=\"none\" stroke=\"black\"/>\n",
                L, T, W, H);
  o << buf;
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0, yv = y0 + (y1 - y0) * t / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.4g</text>\n"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.4g</text>\n",
                  X(xv), T + H + 16, xv, L - 6, Y(yv) + 4, yv);
    o << buf;
  }
  o << "<text x=\"" << L + W / 2 << "\" y=\"" << height - 10
    << "\" text-anchor=\"middle\">" << p.xlabel << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<text transform=\"translate(16,%.1f) rotate(-90)\" "
                "text-anchor=\"middle\">",
                T + H / 2);
  o << buf << p.ylabel << "</text>\n";
  for (const auto& h : p.hlines) {
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.2f\" x2=\"%.1f\" y2=\"%.2f\" "
                  "stroke=\"black\" stroke-dasharray=\"6,4\"/>\n",
                  L, Y(h.second), L + W, Y(h.second));
    o << buf;
    o << "<text x=\"" << L + W - 4 << "\" y=\"" << Y(h.second) - 4
      << "\" text-anchor=\"end\">" << h.first << "</text>\n";
  }
  for (size_t s = 0; s < p.series.size(); ++s) {
    const Series& ser = p.series[s];
    o << "<polyline fill=\"none\" stroke-width=\"1.2\" stroke=\"" << kColors[s % 8]
      << "\" points=\"";
    for (size_t i = 0; i < ser.x.size() && i < ser.y.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", X(ser.x[i]),
                    Y(ser.y[i]));
      o << buf;
    }
    o << "\"/>\n";
    if (!ser.label.empty()) {
      o << "<text x=\"" << L + 8 << "\" y=\"" << T + 16 + 14 * s << "\" fill=\""
        << kColors[s % 8] << "\">" << ser.label << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

/// State component `index` of each trace against k, with the axis-aligned
/// limits of X on that component drawn dashed.
inline Plot state_plot(const std::vector<Trajectory>& trs, const Polytope& X,
                       int index, const std::string& title) {
  Plot p;
  p.title = title;
  p.xlabel = "k";
  p.ylabel = "x" + std::to_string(index + 1);
  for (size_t t = 0; t < trs.size(); ++t) {
    Series s;
    for (const TraceRow& r : trs[t].rows) {
      s.x.push_back(r.k);
      s.y.push_back(r.x(index));
    }
    p.series.push_back(std::move(s));
  }
  for (int j = 0; j < X.rows(); ++j) {
    const Vec row = X.H.row(j).transpose();
    if (std::abs(std::abs(row(index)) - 1.0) < 1e-12) {
      p.hlines.emplace_back("limit", X.h(j) / row(index));
    }
  }
  return p;
}

inline Plot input_plot(const std::vector<Trajectory>& trs, const Vec& u_max,
                       int index, const std::string& title) {
  Plot p;
  p.title = title;
  p.xlabel = "k";
  p.ylabel = "u" + std::to_string(index + 1);
  for (const Trajectory& tr : trs) {
    Series s;
    for (const TraceRow& r : tr.rows) {
      s.x.push_back(r.k);
      s.y.push_back(r.u(index));
    }
    p.series.push_back(std::move(s));
  }
  p.hlines.emplace_back("u_max", u_max(index));
  p.hlines.emplace_back("-u_max", -u_max(index));
  return p;
}

}  // namespace sasmpc::io
