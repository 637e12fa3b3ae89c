#pragma once

// JSON and CSV serialization for models, kernels, plans, reports and tables.
// Doubles are written in shortest round-trip form, so plan files reload
// bit-exactly.

#include <cctype>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "betamon/errors.hpp"
#include "betamon/format.hpp"
#include "betamon/inference.hpp"
#include "betamon/model.hpp"
#include "betamon/monitor.hpp"
#include "betamon/statistic.hpp"
#include "betamon/threshold.hpp"

namespace betamon {

using json = nlohmann::json;

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw config_error("matrix: expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw config_error("matrix: ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

/// Required key lookup with a readable error.
inline const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw config_error(std::string("missing required key '") + key + "'");
  return j.at(key);
}

inline void to_json(json& j, const Clamp& c) { j = json::array({c.lo, c.hi}); }
inline void from_json(const json& j, Clamp& c) {
  if (!j.is_array() || j.size() != 2) throw config_error("clamp must be [lo, hi]");
  c.lo = j[0].get<double>();
  c.hi = j[1].get<double>();
}

inline void to_json(json& j, const GBetaArModel& m) {
  j = json{{"p", m.p},     {"q", m.q},         {"phi0", m.phi0},       {"phi", m.phi},
           {"psi", m.psi}, {"tau", m.tau},     {"x_clamp", m.x_clamp}, {"w_clamp", m.w_clamp},
           {"exogenous", m.exogenous}};
}
inline void from_json(const json& j, GBetaArModel& m) {
  m = GBetaArModel{};
  m.p = require(j, "p").get<int>();
  m.exogenous = j.value("exogenous", true);
  m.q = j.value("q", 0);
  m.phi0 = require(j, "phi0").get<double>();
  m.phi = require(j, "phi").get<std::vector<double>>();
  m.psi = m.exogenous ? require(j, "psi").get<std::vector<double>>() : j.value("psi", std::vector<double>{});
  m.tau = require(j, "tau").get<double>();
  if (j.contains("x_clamp")) m.x_clamp = j.at("x_clamp").get<Clamp>();
  if (j.contains("w_clamp")) m.w_clamp = j.at("w_clamp").get<Clamp>();
  m.validate();
}

inline void to_json(json& j, const ExogenousSpec& s) {
  j = json{{"ar", s.ar}, {"ma", s.ma}, {"innovation_sd", s.innovation_sd}, {"burn_in", s.burn_in}};
}
inline void from_json(const json& j, ExogenousSpec& s) {
  s = ExogenousSpec{};
  s.ar = j.value("ar", std::vector<double>{});
  s.ma = j.value("ma", std::vector<double>{});
  s.innovation_sd = require(j, "innovation_sd").get<double>();
  s.burn_in = j.value("burn_in", std::size_t{500});
  validate(s);
}

inline void to_json(json& j, const QuantileGrid& g) { j = json{{"u", g.u}, {"x", g.x}}; }
inline void from_json(const json& j, QuantileGrid& g) {
  g.u = require(j, "u").get<std::vector<double>>();
  g.x = require(j, "x").get<std::vector<double>>();
  g.validate();
}

inline void to_json(json& j, const CovKernel& k) {
  j = json{{"gamma", matrix_to_json(k.gamma)},
           {"t_star", k.t_star},
           {"psd_adjusted", k.psd_adjusted},
           {"clip_magnitude", k.clip_magnitude}};
}
inline void from_json(const json& j, CovKernel& k) {
  k.gamma = matrix_from_json(require(j, "gamma"));
  k.t_star = require(j, "t_star").get<std::size_t>();
  k.psd_adjusted = j.value("psd_adjusted", false);
  k.clip_magnitude = j.value("clip_magnitude", 0.0);
}

inline constexpr const char* kPlanFormat = "betamon-plan/1";

inline void to_json(json& j, const MonitorPlan& p) {
  j = json{{"format", kPlanFormat},
           {"m", p.m},
           {"n_ratio", p.n_ratio},
           {"gamma", p.gamma},
           {"delta", p.delta},
           {"alpha", p.alpha},
           {"threshold", p.threshold},
           {"grid", p.grid},
           {"kernel", p.kernel},
           {"a_matrix", matrix_to_json(p.a_matrix)},
           {"baseline_ecdf", p.baseline_ecdf}};
}
inline void from_json(const json& j, MonitorPlan& p) {
  if (j.value("format", std::string{}) != kPlanFormat) throw config_error("plan: unrecognized format tag");
  p.m = require(j, "m").get<std::size_t>();
  p.n_ratio = require(j, "n_ratio").get<double>();
  p.gamma = require(j, "gamma").get<double>();
  p.delta = require(j, "delta").get<double>();
  p.alpha = require(j, "alpha").get<double>();
  p.threshold = require(j, "threshold").get<double>();
  p.grid = require(j, "grid").get<QuantileGrid>();
  p.kernel = require(j, "kernel").get<CovKernel>();
  p.a_matrix = matrix_from_json(require(j, "a_matrix"));
  p.baseline_ecdf = require(j, "baseline_ecdf").get<std::vector<double>>();
  p.validate();
}

inline void to_json(json& j, const DetectionReport& r) {
  j = json::object();
  j["alarm_index"] = r.alarm_index ? json(*r.alarm_index) : json(nullptr);
  j["horizon_end_index"] = r.horizon_end_index;
  j["gamma"] = r.gamma;
  j["alpha"] = r.alpha;
  j["threshold"] = r.threshold;
  json traj = json::array();
  for (const auto& [k, q] : r.trajectory) traj.push_back(json::array({k, q}));
  j["trajectory"] = std::move(traj);
  j["truncated"] = r.truncated;
  if (r.true_change) j["true_change"] = *r.true_change;
  if (r.delay) j["delay"] = *r.delay;
}

inline void to_json(json& j, const ThresholdTable& t) {
  j = json{{"gammas", t.gammas}, {"alphas", t.alphas}, {"c", t.c}, {"mc_se", t.mc_se}};
}
inline void from_json(const json& j, ThresholdTable& t) {
  t.gammas = require(j, "gammas").get<std::vector<double>>();
  t.alphas = require(j, "alphas").get<std::vector<double>>();
  t.c = require(j, "c").get<std::vector<std::vector<double>>>();
  t.mc_se = j.value("mc_se", std::vector<std::vector<double>>{});
}

inline void to_json(json& j, const FitResult& f) {
  j = json{{"model", f.model}, {"loglik", f.loglik},         {"aic", f.aic},     {"mae", f.mae},
           {"converged", f.converged}, {"iterations", f.iterations}, {"start", f.start}, {"n_eff", f.n_eff},
           {"method", f.method}};
}

inline void to_json(json& j, const DetrendModel& d) {
  j = json{{"intercept", d.intercept},
           {"year_slope", d.year_slope},
           {"month_effect", d.month_effect},
           {"base_year", d.base_year},
           {"reference_month", 12}};
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open " + path);
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw config_error(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write " + path);
  out << text;
}

// ---------------------------------------------------------------- CSV ----

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) throw config_error(where + ": cannot parse number '" + s + "'");
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return header.size();
  }
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    auto fields = split_csv_line(line);
    if (first) {
      t.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != t.header.size())
      throw config_error("csv line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                         " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (first) throw config_error("csv: missing header");
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open " + path);
  return read_csv(in);
}

/// Monthly observation of the documented input schema:
/// date (YYYY-MM), value in [0, 1], optional exogenous column(s).
struct MonthlyRow {
  int year = 0;
  int month = 0;
  double value = 0.0;
  std::vector<double> exogenous;
};

struct MonthlySeries {
  std::vector<std::string> exogenous_names;
  std::vector<MonthlyRow> rows;
};

inline void parse_month(const std::string& s, int& year, int& month, const std::string& where) {
  if (s.size() != 7 || s[4] != '-') throw config_error(where + ": date must be YYYY-MM, got '" + s + "'");
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u})
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) throw config_error(where + ": date must be YYYY-MM, got '" + s + "'");
  year = std::stoi(s.substr(0, 4));
  month = std::stoi(s.substr(5, 2));
  if (month < 1 || month > 12) throw config_error(where + ": month out of range in '" + s + "'");
}

/// Validates the monthly schema with row-level diagnostics: values in [0, 1]
/// and consecutive, strictly increasing months.
inline MonthlySeries parse_monthly(const CsvTable& t) {
  if (t.header.size() < 2 || t.header[0] != "date" || t.header[1] != "value")
    throw config_error("csv: header must start with 'date,value'");
  MonthlySeries s;
  s.exogenous_names.assign(t.header.begin() + 2, t.header.end());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = "row " + std::to_string(r + 1);
    MonthlyRow row;
    parse_month(t.rows[r][0], row.year, row.month, where);
    row.value = parse_double(t.rows[r][1], where);
    if (!(row.value >= 0.0 && row.value <= 1.0)) throw config_error(where + ": value outside [0, 1]");
    for (std::size_t c = 2; c < t.header.size(); ++c) row.exogenous.push_back(parse_double(t.rows[r][c], where));
    if (!s.rows.empty()) {
      const auto& prev = s.rows.back();
      const int expect_year = prev.month == 12 ? prev.year + 1 : prev.year;
      const int expect_month = prev.month == 12 ? 1 : prev.month + 1;
      if (row.year != expect_year || row.month != expect_month)
        throw config_error(where + ": dates must be consecutive months (expected " + std::to_string(expect_year) +
                           "-" + (expect_month < 10 ? "0" : "") + std::to_string(expect_month) + ")");
    }
    s.rows.push_back(std::move(row));
  }
  if (s.rows.empty()) throw config_error("csv: no data rows");
  return s;
}

/// Series CSV with columns x and (optionally) w, as written by `simulate`.
inline SeriesPair parse_series(const CsvTable& t) {
  const std::size_t xc = t.column("x");
  if (xc == t.header.size()) throw config_error("csv: series file needs an 'x' column");
  const std::size_t wc = t.column("w");
  SeriesPair s;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = "row " + std::to_string(r + 1);
    s.x.push_back(parse_double(t.rows[r][xc], where));
    s.w.push_back(wc < t.header.size() ? parse_double(t.rows[r][wc], where) : 0.0);
    if (!(s.x.back() >= 0.0 && s.x.back() <= 1.0)) throw config_error(where + ": x outside [0, 1]");
  }
  return s;
}

/// Accepts either a series file (x[,w]) or the monthly schema (first
/// exogenous column becomes w).
inline SeriesPair load_series(const std::string& path) {
  const CsvTable t = read_csv_file(path);
  if (!t.header.empty() && t.header[0] == "date") {
    const MonthlySeries ms = parse_monthly(t);
    SeriesPair s;
    for (const auto& row : ms.rows) {
      s.x.push_back(row.value);
      s.w.push_back(row.exogenous.empty() ? 0.0 : row.exogenous[0]);
    }
    return s;
  }
  return parse_series(t);
}

/// Stream records "index,value" (or bare values); header lines are skipped.
inline std::vector<double> read_stream_values(std::istream& in) {
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto fields = split_csv_line(t);
    const std::string& v = fields.back();
    if (!v.empty() && (std::isalpha(static_cast<unsigned char>(v[0])) && v != "inf" && v != "nan")) continue;
    out.push_back(parse_double(v, "stream line " + std::to_string(lineno)));
  }
  return out;
}

inline void write_trajectory_csv(std::ostream& os, const DetectionReport& r) {
  os << "k,quad\n";
  for (const auto& [k, q] : r.trajectory) os << k << "," << Num{q} << "\n";
}

}  // namespace betamon
