#include "evpanel/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

namespace evpanel {

using njson = nlohmann::ordered_json;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int t0_to_disk(int t0) { return t0 == EventDesign::never_treated ? 0 : t0; }

int t0_from_disk(long v) {
  return v == 0 ? EventDesign::never_treated : static_cast<int>(v);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::out | std::ios::trunc);
  require(os.is_open(), ErrorCode::io, "cannot open '", path, "' for writing");
  return os;
}

void finish_out(std::ofstream& os, const std::string& path) {
  os.flush();
  require(os.good(), ErrorCode::io, "write to '", path, "' failed");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double_field(const std::string& tok, const std::string& path,
                          int lineno, const std::string& col) {
  const char* s = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(s, &end);
  require(!tok.empty() && end == s + tok.size(), ErrorCode::data, "'", path,
          "' line ", lineno, ": column ", col, ": cannot parse number from '",
          tok, "'");
  return v;
}

long parse_int_field(const std::string& tok, const std::string& path, int lineno,
                     const std::string& col) {
  const char* s = tok.c_str();
  char* end = nullptr;
  long v = std::strtol(s, &end, 10);
  require(!tok.empty() && end == s + tok.size(), ErrorCode::data, "'", path,
          "' line ", lineno, ": column ", col, ": cannot parse integer from '",
          tok, "'");
  return v;
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

njson load_json(const std::string& path) {
  std::ifstream is(path);
  require(is.is_open(), ErrorCode::io, "cannot open '", path, "' for reading");
  try {
    return njson::parse(is);
  } catch (const njson::parse_error& e) {
    fail(ErrorCode::config, "'", path, "': ", e.what());
  }
}

void expect_object(const njson& j, const std::string& ctx) {
  require(j.is_object(), ErrorCode::config, ctx, " must be an object");
}

void check_keys(const njson& j, const std::string& ctx,
                const std::vector<std::string>& allowed) {
  expect_object(j, ctx);
  for (const auto& item : j.items()) {
    bool known = false;
    for (const auto& k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      std::string list;
      for (std::size_t i = 0; i < allowed.size(); ++i) {
        if (i > 0) list += ", ";
        list += allowed[i];
      }
      fail(ErrorCode::config, "unknown key '", item.key(), "' in ", ctx,
           " (allowed: ", list, ")");
    }
  }
}

const njson& get_req(const njson& j, const std::string& ctx, const char* key) {
  auto it = j.find(key);
  require(it != j.end(), ErrorCode::config, ctx, " is missing required key '",
          key, "'");
  return *it;
}

double as_num(const njson& j, const std::string& ctx, bool null_is_nan = false) {
  if (null_is_nan && j.is_null()) return kNaN;
  require(j.is_number(), ErrorCode::config, ctx, " must be a number");
  return j.get<double>();
}

long long as_int(const njson& j, const std::string& ctx) {
  require(j.is_number_integer() || j.is_number_unsigned(), ErrorCode::config,
          ctx, " must be an integer");
  return j.get<long long>();
}

int as_int32(const njson& j, const std::string& ctx) {
  long long v = as_int(j, ctx);
  require(v >= std::numeric_limits<int>::min() &&
              v <= std::numeric_limits<int>::max(),
          ErrorCode::config, ctx, " is out of range: ", v);
  return static_cast<int>(v);
}

std::uint64_t as_u64(const njson& j, const std::string& ctx) {
  require(j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0),
          ErrorCode::config, ctx, " must be a non-negative integer");
  return j.get<std::uint64_t>();
}

bool as_bool(const njson& j, const std::string& ctx) {
  require(j.is_boolean(), ErrorCode::config, ctx, " must be true or false");
  return j.get<bool>();
}

std::string as_string(const njson& j, const std::string& ctx) {
  require(j.is_string(), ErrorCode::config, ctx, " must be a string");
  return j.get<std::string>();
}

Vector as_vector(const njson& j, const std::string& ctx, Eigen::Index size = -1,
                 bool null_is_nan = false) {
  require(j.is_array(), ErrorCode::config, ctx, " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] =
        as_num(j[i], cat(ctx, "[", i, "]"), null_is_nan);
  }
  require(size < 0 || v.size() == size, ErrorCode::dimension, ctx, " must have ",
          size, " entries, got ", v.size());
  return v;
}

Matrix as_matrix(const njson& j, const std::string& ctx, Eigen::Index rows,
                 Eigen::Index cols) {
  require(j.is_array() && !j.empty(), ErrorCode::config, ctx,
          " must be a non-empty array of rows");
  Eigen::Index r = static_cast<Eigen::Index>(j.size());
  Vector first = as_vector(j[0], cat(ctx, "[0]"));
  Matrix m(r, first.size());
  m.row(0) = first;
  for (Eigen::Index i = 1; i < r; ++i) {
    m.row(i) = as_vector(j[static_cast<std::size_t>(i)], cat(ctx, "[", i, "]"),
                         first.size());
  }
  require(rows < 0 || m.rows() == rows, ErrorCode::dimension, ctx, " must have ",
          rows, " rows, got ", m.rows());
  require(cols < 0 || m.cols() == cols, ErrorCode::dimension, ctx, " must have ",
          cols, " columns, got ", m.cols());
  return m;
}

njson vec_json(const Vector& v) {
  njson a = njson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

njson mat_json(const Matrix& m) {
  njson a = njson::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    njson row = njson::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(row);
  }
  return a;
}

void check_schema_version(const njson& j, const std::string& ctx) {
  int v = as_int32(get_req(j, ctx, "schema_version"),
                   cat(ctx, ".schema_version"));
  require(v == 1, ErrorCode::config, ctx, ".schema_version must be 1, got ", v);
}

std::vector<int> parse_cohort_list(const njson& j, const std::string& ctx,
                                   int T_hint) {
  require(j.is_array(), ErrorCode::config, ctx,
          " must be an array of event dates (0 = never treated)");
  std::vector<int> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string ectx = cat(ctx, "[", i, "]");
    int disk = as_int32(j[i], ectx);
    require(disk >= 0 && (T_hint < 0 || disk <= T_hint), ErrorCode::config, ectx,
            " = ", disk, " is not a valid event date (0 = never treated)");
    out.push_back(t0_from_disk(disk));
  }
  return out;
}

njson cohort_list_json(const std::vector<int>& values) {
  njson a = njson::array();
  for (int v : values) a.push_back(t0_to_disk(v));
  return a;
}

// ---------------------------------------------------------------------------
// Model-section parsers shared by the simulate and study configs
// ---------------------------------------------------------------------------

EventDesign parse_design(const njson& j, const std::string& ctx) {
  check_keys(j, ctx, {"T", "K", "J_max"});
  EventDesign d;
  d.T = as_int32(get_req(j, ctx, "T"), cat(ctx, ".T"));
  d.K = as_int32(get_req(j, ctx, "K"), cat(ctx, ".K"));
  d.J_max = as_int32(get_req(j, ctx, "J_max"), cat(ctx, ".J_max"));
  d.validate();
  return d;
}

StructuralParams parse_theta(const njson& j, const EventDesign& d,
                             const std::string& ctx) {
  check_keys(j, ctx,
             {"rho_Y", "rho_delta", "beta", "sigma2_U", "sigma2_eps", "gamma"});
  StructuralParams th;
  th.rho_Y = as_num(get_req(j, ctx, "rho_Y"), cat(ctx, ".rho_Y"));
  th.rho_delta = as_num(get_req(j, ctx, "rho_delta"), cat(ctx, ".rho_delta"));
  th.beta = as_vector(get_req(j, ctx, "beta"), cat(ctx, ".beta"), d.K);
  th.sigma2_U = as_num(get_req(j, ctx, "sigma2_U"), cat(ctx, ".sigma2_U"));
  th.sigma2_eps = as_num(get_req(j, ctx, "sigma2_eps"), cat(ctx, ".sigma2_eps"));
  if (j.contains("gamma")) {
    th.gamma = as_vector(j["gamma"], cat(ctx, ".gamma"), d.T);
  }
  th.validate(d);
  return th;
}

HeterogeneityModel parse_het(const njson& j, const EventDesign& d,
                             const std::string& ctx) {
  check_keys(j, ctx, {"mean_coef", "cov", "cohort_values"});
  HeterogeneityModel h;
  if (j.contains("cohort_values")) {
    h.cohort_values =
        parse_cohort_list(j["cohort_values"], cat(ctx, ".cohort_values"), d.T);
  }
  h.mean_coef = as_matrix(get_req(j, ctx, "mean_coef"), cat(ctx, ".mean_coef"),
                          2, 2 + d.K + h.C());
  h.cov = as_matrix(get_req(j, ctx, "cov"), cat(ctx, ".cov"), 2, 2);
  h.validate(d);
  return h;
}

FeedbackModel parse_feedback(const njson& j, const EventDesign& d,
                             const std::string& ctx) {
  check_keys(j, ctx, {"A_x", "a_y", "a_d", "c", "Sigma_X"});
  FeedbackModel f;
  f.A_x = as_matrix(get_req(j, ctx, "A_x"), cat(ctx, ".A_x"), d.K, d.K);
  f.a_y = as_vector(get_req(j, ctx, "a_y"), cat(ctx, ".a_y"), d.K);
  f.a_d = as_matrix(get_req(j, ctx, "a_d"), cat(ctx, ".a_d"), d.K,
                    d.n_event_times());
  f.c = as_vector(get_req(j, ctx, "c"), cat(ctx, ".c"), d.K);
  f.Sigma_X =
      as_matrix(get_req(j, ctx, "Sigma_X"), cat(ctx, ".Sigma_X"), d.K, d.K);
  f.validate(d);
  return f;
}

InitialLaw parse_initial(const njson& j, const EventDesign& d,
                         const std::string& ctx) {
  expect_object(j, ctx);
  std::string kind = as_string(get_req(j, ctx, "kind"), cat(ctx, ".kind"));
  InitialLaw law;
  if (kind == "fixed") {
    check_keys(j, ctx, {"kind", "y0", "x0"});
    law.kind = InitialLaw::Kind::fixed;
    law.y0 = as_num(get_req(j, ctx, "y0"), cat(ctx, ".y0"));
    law.x0 = as_vector(get_req(j, ctx, "x0"), cat(ctx, ".x0"), d.K);
  } else if (kind == "gaussian") {
    check_keys(j, ctx, {"kind", "mean", "cov"});
    law.kind = InitialLaw::Kind::gaussian;
    law.mean = as_vector(get_req(j, ctx, "mean"), cat(ctx, ".mean"), 1 + d.K);
    law.cov = as_matrix(get_req(j, ctx, "cov"), cat(ctx, ".cov"), 1 + d.K,
                        1 + d.K);
  } else {
    fail(ErrorCode::config, ctx, ".kind must be \"fixed\" or \"gaussian\", got \"",
         kind, "\"");
  }
  law.validate(d);
  return law;
}

CohortLaw parse_cohorts(const njson& j, const EventDesign& d,
                        const std::string& ctx) {
  check_keys(j, ctx, {"values", "probs", "tilt_y0", "tilt_x0"});
  CohortLaw law;
  law.values = parse_cohort_list(get_req(j, ctx, "values"),
                                 cat(ctx, ".values"), d.T);
  law.probs = as_vector(get_req(j, ctx, "probs"), cat(ctx, ".probs"),
                        static_cast<Eigen::Index>(law.values.size()));
  if (j.contains("tilt_y0")) {
    law.tilt_y0 = as_vector(j["tilt_y0"], cat(ctx, ".tilt_y0"),
                            static_cast<Eigen::Index>(law.values.size()));
  }
  if (j.contains("tilt_x0")) {
    law.tilt_x0 = as_matrix(j["tilt_x0"], cat(ctx, ".tilt_x0"),
                            static_cast<Eigen::Index>(law.values.size()), d.K);
  }
  law.validate(d);
  return law;
}

SimConfig parse_sim_body(const njson& j, const std::string& ctx,
                         bool top_level) {
  std::vector<std::string> allowed = {"N",        "design", "theta",
                                      "heterogeneity", "feedback", "initial",
                                      "cohorts"};
  if (top_level) {
    allowed.push_back("schema_version");
    allowed.push_back("seed");
  }
  check_keys(j, ctx, allowed);
  SimConfig cfg;
  cfg.N = as_int32(get_req(j, ctx, "N"), cat(ctx, ".N"));
  cfg.design = parse_design(get_req(j, ctx, "design"), cat(ctx, ".design"));
  cfg.theta =
      parse_theta(get_req(j, ctx, "theta"), cfg.design, cat(ctx, ".theta"));
  cfg.het = parse_het(get_req(j, ctx, "heterogeneity"), cfg.design,
                      cat(ctx, ".heterogeneity"));
  cfg.feedback = parse_feedback(get_req(j, ctx, "feedback"), cfg.design,
                                cat(ctx, ".feedback"));
  cfg.initial = parse_initial(get_req(j, ctx, "initial"), cfg.design,
                              cat(ctx, ".initial"));
  cfg.cohorts = parse_cohorts(get_req(j, ctx, "cohorts"), cfg.design,
                              cat(ctx, ".cohorts"));
  if (top_level) {
    cfg.seed = as_u64(get_req(j, ctx, "seed"), cat(ctx, ".seed"));
  }
  cfg.validate();
  return cfg;
}

GammaMode parse_gamma_mode(const njson& j, const std::string& ctx) {
  std::string s = as_string(j, ctx);
  if (s == "none") return GammaMode::none;
  if (s == "estimate") return GammaMode::estimate;
  fail(ErrorCode::config, ctx, " must be \"none\" or \"estimate\", got \"", s,
       "\"");
}

const char* gamma_mode_name(GammaMode mode) {
  return mode == GammaMode::estimate ? "estimate" : "none";
}

FitOptions parse_fit_options(const njson& j, const std::string& ctx) {
  check_keys(j, ctx,
             {"gamma_mode", "cohort_dummies", "multi_start", "start_seed",
              "max_iter", "tol_obj", "tol_step", "fd_step", "nm_max_iter",
              "compute_se"});
  FitOptions opt;
  if (j.contains("gamma_mode")) {
    opt.gamma_mode = parse_gamma_mode(j["gamma_mode"], cat(ctx, ".gamma_mode"));
  }
  if (j.contains("cohort_dummies")) {
    opt.cohort_dummies = as_bool(j["cohort_dummies"], cat(ctx, ".cohort_dummies"));
  }
  if (j.contains("multi_start")) {
    opt.multi_start = as_int32(j["multi_start"], cat(ctx, ".multi_start"));
    require(opt.multi_start >= 1, ErrorCode::config, ctx,
            ".multi_start must be >= 1, got ", opt.multi_start);
  }
  if (j.contains("start_seed")) {
    opt.start_seed = as_u64(j["start_seed"], cat(ctx, ".start_seed"));
  }
  if (j.contains("max_iter")) {
    opt.max_iter = as_int32(j["max_iter"], cat(ctx, ".max_iter"));
    require(opt.max_iter >= 1, ErrorCode::config, ctx,
            ".max_iter must be >= 1, got ", opt.max_iter);
  }
  if (j.contains("tol_obj")) {
    opt.tol_obj = as_num(j["tol_obj"], cat(ctx, ".tol_obj"));
    require(opt.tol_obj > 0.0, ErrorCode::config, ctx,
            ".tol_obj must be positive");
  }
  if (j.contains("tol_step")) {
    opt.tol_step = as_num(j["tol_step"], cat(ctx, ".tol_step"));
    require(opt.tol_step > 0.0, ErrorCode::config, ctx,
            ".tol_step must be positive");
  }
  if (j.contains("fd_step")) {
    opt.fd_step = as_num(j["fd_step"], cat(ctx, ".fd_step"));
    require(opt.fd_step > 0.0, ErrorCode::config, ctx,
            ".fd_step must be positive");
  }
  if (j.contains("nm_max_iter")) {
    opt.nm_max_iter = as_int32(j["nm_max_iter"], cat(ctx, ".nm_max_iter"));
    require(opt.nm_max_iter >= 0, ErrorCode::config, ctx,
            ".nm_max_iter must be >= 0, got ", opt.nm_max_iter);
  }
  if (j.contains("compute_se")) {
    opt.compute_se = as_bool(j["compute_se"], cat(ctx, ".compute_se"));
  }
  return opt;
}

}  // namespace

// ---------------------------------------------------------------------------
// Panel CSV
// ---------------------------------------------------------------------------

void write_panel_csv(const std::string& path, const PanelData& panel) {
  std::ofstream os = open_out(path);
  os << "unit,t,y";
  for (int k = 1; k <= panel.K; ++k) os << ",x" << k;
  os << ",t0\n";
  for (int i = 0; i < panel.N(); ++i) {
    const UnitData& u = panel.units[static_cast<std::size_t>(i)];
    os << i << ",0," << fmt_double(u.y0);
    for (int k = 0; k < panel.K; ++k) os << ',' << fmt_double(u.x0[k]);
    os << ',' << t0_to_disk(u.t0) << '\n';
  }
  for (int i = 0; i < panel.N(); ++i) {
    const UnitData& u = panel.units[static_cast<std::size_t>(i)];
    for (int t = 1; t <= panel.T; ++t) {
      os << i << ',' << t << ',' << fmt_double(u.y[t - 1]);
      for (int k = 0; k < panel.K; ++k) os << ',' << fmt_double(u.x(t - 1, k));
      os << ',' << t0_to_disk(u.t0) << '\n';
    }
  }
  finish_out(os, path);
}

PanelData read_panel_csv(const std::string& path) {
  std::ifstream is(path);
  require(is.is_open(), ErrorCode::io, "cannot open '", path, "' for reading");

  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCode::data, "'", path,
          "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header = split_csv(line);
  require(header.size() >= 4, ErrorCode::data, "'", path,
          "' header must be unit,t,y,x1..xK,t0");
  require(header[0] == "unit", ErrorCode::data, "'", path,
          "' header missing column 'unit'");
  require(header[1] == "t", ErrorCode::data, "'", path,
          "' header missing column 't'");
  require(header[2] == "y", ErrorCode::data, "'", path,
          "' header missing column 'y'");
  require(header.back() == "t0", ErrorCode::data, "'", path,
          "' header missing column 't0'");
  const int K = static_cast<int>(header.size()) - 4;
  for (int k = 0; k < K; ++k) {
    const std::string want = cat("x", k + 1);
    require(header[static_cast<std::size_t>(3 + k)] == want, ErrorCode::data,
            "'", path, "' header missing column '", want, "'");
  }

  struct Row {
    int unit;
    int t;
    double y;
    Vector x;
    int t0;
    int lineno;
  };
  std::vector<Row> rows;
  int max_unit = -1;
  int max_t = 0;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> tok = split_csv(line);
    require(tok.size() == header.size(), ErrorCode::data, "'", path, "' line ",
            lineno, ": expected ", header.size(), " fields, got ", tok.size());
    Row r;
    r.lineno = lineno;
    long unit = parse_int_field(tok[0], path, lineno, "unit");
    require(unit >= 0, ErrorCode::data, "'", path, "' line ", lineno,
            ": unit must be >= 0, got ", unit);
    r.unit = static_cast<int>(unit);
    long t = parse_int_field(tok[1], path, lineno, "t");
    require(t >= 0, ErrorCode::data, "'", path, "' line ", lineno,
            ": t must be >= 0, got ", t);
    r.t = static_cast<int>(t);
    r.y = parse_double_field(tok[2], path, lineno, "y");
    r.x = Vector(K);
    for (int k = 0; k < K; ++k) {
      r.x[k] = parse_double_field(tok[static_cast<std::size_t>(3 + k)], path,
                                  lineno, cat("x", k + 1));
    }
    long t0 = parse_int_field(tok.back(), path, lineno, "t0");
    require(t0 >= 0, ErrorCode::data, "'", path, "' line ", lineno,
            ": t0 must be >= 0 (0 = never treated), got ", t0);
    r.t0 = t0_from_disk(t0);
    max_unit = std::max(max_unit, r.unit);
    max_t = std::max(max_t, r.t);
    rows.push_back(std::move(r));
  }

  require(max_unit >= 0, ErrorCode::data, "'", path, "' has no data rows");
  require(max_t >= 1, ErrorCode::data, "'", path,
          "' has no rows with t >= 1");
  const int N = max_unit + 1;
  const int T = max_t;

  PanelData panel;
  panel.T = T;
  panel.K = K;
  panel.units.assign(static_cast<std::size_t>(N), UnitData{});
  std::vector<std::vector<int>> seen(
      static_cast<std::size_t>(N), std::vector<int>(static_cast<std::size_t>(T + 1), 0));
  std::vector<int> has_t0(static_cast<std::size_t>(N), 0);
  for (auto& u : panel.units) {
    u.x0 = Vector::Zero(K);
    u.y = Vector::Zero(T);
    u.x = Matrix::Zero(T, K);
  }

  for (const Row& r : rows) {
    UnitData& u = panel.units[static_cast<std::size_t>(r.unit)];
    int& mark = seen[static_cast<std::size_t>(r.unit)][static_cast<std::size_t>(r.t)];
    require(mark == 0, ErrorCode::data, "'", path, "' line ", r.lineno,
            ": duplicate row for unit ", r.unit, ", t ", r.t);
    mark = 1;
    if (has_t0[static_cast<std::size_t>(r.unit)]) {
      require(u.t0 == r.t0, ErrorCode::data, "'", path, "' line ", r.lineno,
              ": unit ", r.unit, " has inconsistent t0 values");
    } else {
      require(r.t0 == EventDesign::never_treated || (r.t0 >= 1 && r.t0 <= T),
              ErrorCode::data, "'", path, "' line ", r.lineno, ": unit ",
              r.unit, ": t0 = ", t0_to_disk(r.t0), " outside 1..", T,
              " (0 = never treated)");
      u.t0 = r.t0;
      has_t0[static_cast<std::size_t>(r.unit)] = 1;
    }
    if (r.t == 0) {
      u.y0 = r.y;
      u.x0 = r.x;
    } else {
      u.y[r.t - 1] = r.y;
      u.x.row(r.t - 1) = r.x;
    }
  }

  for (int i = 0; i < N; ++i) {
    for (int t = 0; t <= T; ++t) {
      require(seen[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] == 1,
              ErrorCode::data, "'", path, "': unit ", i,
              " is missing the row for t = ", t);
    }
  }
  return panel;
}

void write_latents_csv(const std::string& path, const LatentRecord& latents) {
  std::ofstream os = open_out(path);
  const Eigen::Index J =
      latents.units.empty() ? 0 : latents.units.front().eps.size();
  const Eigen::Index T =
      latents.units.empty() ? 0 : latents.units.front().shocks_u.size();
  os << "unit,alpha,delta0";
  for (Eigen::Index j = 1; j <= J; ++j) os << ",eps" << j;
  for (Eigen::Index t = 1; t <= T; ++t) os << ",u" << t;
  os << '\n';
  for (std::size_t i = 0; i < latents.units.size(); ++i) {
    const UnitLatent& u = latents.units[i];
    require(u.eps.size() == J && u.shocks_u.size() == T, ErrorCode::dimension,
            "latent record ", i, " has inconsistent dimensions");
    os << i << ',' << fmt_double(u.lambda.alpha) << ','
       << fmt_double(u.lambda.delta0);
    for (Eigen::Index j = 0; j < J; ++j) os << ',' << fmt_double(u.eps[j]);
    for (Eigen::Index t = 0; t < T; ++t) os << ',' << fmt_double(u.shocks_u[t]);
    os << '\n';
  }
  finish_out(os, path);
}

// ---------------------------------------------------------------------------
// Configuration documents
// ---------------------------------------------------------------------------

SimConfig parse_sim_config(const std::string& path) {
  njson j = load_json(path);
  check_schema_version(j, "config");
  return parse_sim_body(j, "config", true);
}

EstimateConfig parse_estimate_config(const std::string& path) {
  njson j = load_json(path);
  check_keys(j, "config", {"schema_version", "design", "options"});
  check_schema_version(j, "config");
  EstimateConfig cfg;
  cfg.design = parse_design(get_req(j, "config", "design"), "config.design");
  if (j.contains("options")) {
    cfg.options = parse_fit_options(j["options"], "config.options");
  }
  return cfg;
}

ScenarioConfig parse_scenario_config(const std::string& path,
                                     const EventDesign& design) {
  njson j = load_json(path);
  check_keys(j, "config", {"schema_version", "scenario"});
  check_schema_version(j, "config");
  const njson& s = get_req(j, "config", "scenario");
  check_keys(s, "config.scenario",
             {"t0_star", "y0_star", "x0_star", "n_draws", "seed",
              "lambda_source"});

  ScenarioConfig cfg;
  Scenario& sc = cfg.scenario;
  const njson& t0j = get_req(s, "config.scenario", "t0_star");
  if (t0j.is_array()) {
    sc.t0_star = parse_cohort_list(t0j, "config.scenario.t0_star", design.T);
    require(!sc.t0_star.empty(), ErrorCode::config,
            "config.scenario.t0_star must not be empty");
  } else {
    int disk = as_int32(t0j, "config.scenario.t0_star");
    require(disk >= 0 && disk <= design.T, ErrorCode::config,
            "config.scenario.t0_star = ", disk, " outside 0..", design.T,
            " (0 = never treated)");
    sc.t0_star = {t0_from_disk(disk)};
  }
  if (s.contains("y0_star")) {
    sc.y0_star = as_vector(s["y0_star"], "config.scenario.y0_star");
    require(sc.y0_star.size() >= 1, ErrorCode::config,
            "config.scenario.y0_star must not be empty");
  }
  if (s.contains("x0_star")) {
    sc.x0_star = as_matrix(s["x0_star"], "config.scenario.x0_star", -1, design.K);
  }
  if (sc.y0_star.size() > 0 && sc.x0_star.rows() > 0) {
    require(sc.y0_star.size() == sc.x0_star.rows(), ErrorCode::dimension,
            "config.scenario: y0_star has ", sc.y0_star.size(),
            " entries but x0_star has ", sc.x0_star.rows(), " rows");
    cfg.has_units = true;
  }
  sc.n_draws = as_int32(get_req(s, "config.scenario", "n_draws"),
                        "config.scenario.n_draws");
  require(sc.n_draws >= 1, ErrorCode::config,
          "config.scenario.n_draws must be >= 1, got ", sc.n_draws);
  sc.seed = as_u64(get_req(s, "config.scenario", "seed"),
                   "config.scenario.seed");
  if (s.contains("lambda_source")) {
    std::string src = as_string(s["lambda_source"],
                                "config.scenario.lambda_source");
    if (src == "prior") {
      sc.lambda_source = LambdaSource::prior;
    } else if (src == "posterior") {
      sc.lambda_source = LambdaSource::posterior;
    } else {
      fail(ErrorCode::config,
           "config.scenario.lambda_source must be \"prior\" or \"posterior\", got \"",
           src, "\"");
    }
  }
  return cfg;
}

McConfig parse_mc_config(const std::string& path) {
  njson j = load_json(path);
  check_keys(j, "config", {"schema_version", "n_reps", "seed", "cells"});
  check_schema_version(j, "config");
  McConfig cfg;
  cfg.n_reps = as_int32(get_req(j, "config", "n_reps"), "config.n_reps");
  require(cfg.n_reps >= 1, ErrorCode::config,
          "config.n_reps must be >= 1, got ", cfg.n_reps);
  cfg.seed = as_u64(get_req(j, "config", "seed"), "config.seed");
  const njson& cells = get_req(j, "config", "cells");
  require(cells.is_array() && !cells.empty(), ErrorCode::config,
          "config.cells must be a non-empty array");
  std::set<std::string> names;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string ctx = cat("config.cells[", i, "]");
    const njson& cj = cells[i];
    check_keys(cj, ctx, {"name", "sim", "fit", "run_naive", "truth"});
    McCell cell;
    cell.name = as_string(get_req(cj, ctx, "name"), cat(ctx, ".name"));
    require(!cell.name.empty(), ErrorCode::config, ctx, ".name must not be empty");
    require(cell.name.find_first_of(",\"\n\r") == std::string::npos,
            ErrorCode::config, ctx,
            ".name must not contain commas, quotes, or newlines");
    require(names.insert(cell.name).second, ErrorCode::config,
            "duplicate cell name '", cell.name, "'");
    cell.sim = parse_sim_body(get_req(cj, ctx, "sim"), cat(ctx, ".sim"), false);
    if (cj.contains("fit")) {
      cell.fit = parse_fit_options(cj["fit"], cat(ctx, ".fit"));
    }
    if (cj.contains("run_naive")) {
      cell.run_naive = as_bool(cj["run_naive"], cat(ctx, ".run_naive"));
    }
    if (cj.contains("truth")) {
      const njson& tj = cj["truth"];
      expect_object(tj, cat(ctx, ".truth"));
      for (const auto& item : tj.items()) {
        cell.truth[item.key()] =
            as_num(item.value(), cat(ctx, ".truth.", item.key()));
      }
    }
    cfg.cells.push_back(std::move(cell));
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Fit report
// ---------------------------------------------------------------------------

void write_fit_report(const std::string& path, const FitResult& fit,
                      const EventDesign& design, const std::string& trace_file) {
  njson j;
  j["schema_version"] = 1;
  j["design"] = {{"T", design.T}, {"K", design.K}, {"J_max", design.J_max}};
  j["gamma_mode"] = gamma_mode_name(fit.gamma_mode);

  njson est;
  est["rho_Y"] = fit.theta.rho_Y;
  est["rho_delta"] = fit.theta.rho_delta;
  est["sigma2_U"] = fit.theta.sigma2_U;
  est["sigma2_eps"] = fit.theta.sigma2_eps;
  est["beta"] = vec_json(fit.theta.beta);
  est["gamma"] = vec_json(fit.theta.gamma);
  est["mean_coef"] = mat_json(fit.het.mean_coef);
  est["cov_lambda"] = mat_json(fit.het.cov);
  est["cohort_values"] = cohort_list_json(fit.het.cohort_values);
  j["estimates"] = std::move(est);

  njson nat;
  nat["names"] = fit.param_names;
  nat["estimate"] = vec_json(fit.natural);
  nat["se"] = vec_json(fit.se_natural);
  j["natural"] = std::move(nat);

  if (fit.has_feedback) {
    const FeedbackFit& fb = fit.feedback;
    njson f;
    f["A_x"] = mat_json(fb.model.A_x);
    f["a_y"] = vec_json(fb.model.a_y);
    f["a_d"] = mat_json(fb.model.a_d);
    f["c"] = vec_json(fb.model.c);
    f["Sigma_X"] = mat_json(fb.model.Sigma_X);
    f["coef_names"] = fb.colnames;
    f["coef"] = mat_json(fb.coef);
    f["coef_se"] = mat_json(fb.coef_se);
    f["nobs"] = fb.nobs;
    f["flags"] = fb.flags;
    j["feedback"] = std::move(f);
  }

  njson ll;
  ll["Y"] = fit.loglik_Y;
  if (fit.has_feedback) ll["X"] = fit.feedback.loglik_X;
  j["loglik"] = std::move(ll);

  njson conv;
  conv["converged"] = fit.converged;
  conv["iterations"] = fit.iterations;
  conv["n_evals"] = fit.n_evals;
  conv["grad_inf_norm"] = fit.grad_inf_norm;
  conv["n_starts"] = fit.n_starts;
  conv["best_start"] = fit.best_start;
  conv["hessian_cond"] = fit.hessian_cond;
  conv["flags"] = fit.flags;
  j["convergence"] = std::move(conv);

  j["trace_file"] = trace_file;

  std::ofstream os = open_out(path);
  os << j.dump(2) << '\n';
  finish_out(os, path);
}

FitReport read_fit_report(const std::string& path) {
  njson j = load_json(path);
  check_keys(j, "report",
             {"schema_version", "design", "gamma_mode", "estimates", "natural",
              "feedback", "loglik", "convergence", "trace_file"});
  check_schema_version(j, "report");

  FitReport rep;
  rep.design = parse_design(get_req(j, "report", "design"), "report.design");
  rep.gamma_mode = parse_gamma_mode(get_req(j, "report", "gamma_mode"),
                                    "report.gamma_mode");

  const njson& est = get_req(j, "report", "estimates");
  check_keys(est, "report.estimates",
             {"rho_Y", "rho_delta", "sigma2_U", "sigma2_eps", "beta", "gamma",
              "mean_coef", "cov_lambda", "cohort_values"});
  const std::string ectx = "report.estimates";
  rep.theta.rho_Y = as_num(get_req(est, ectx, "rho_Y"), ectx + ".rho_Y");
  rep.theta.rho_delta =
      as_num(get_req(est, ectx, "rho_delta"), ectx + ".rho_delta");
  rep.theta.sigma2_U = as_num(get_req(est, ectx, "sigma2_U"), ectx + ".sigma2_U");
  rep.theta.sigma2_eps =
      as_num(get_req(est, ectx, "sigma2_eps"), ectx + ".sigma2_eps");
  rep.theta.beta =
      as_vector(get_req(est, ectx, "beta"), ectx + ".beta", rep.design.K);
  rep.theta.gamma = as_vector(get_req(est, ectx, "gamma"), ectx + ".gamma");
  require(rep.theta.gamma.size() == 0 || rep.theta.gamma.size() == rep.design.T,
          ErrorCode::dimension, ectx, ".gamma must be empty or have ",
          rep.design.T, " entries, got ", rep.theta.gamma.size());
  rep.het.cohort_values = parse_cohort_list(
      get_req(est, ectx, "cohort_values"), ectx + ".cohort_values", rep.design.T);
  rep.het.mean_coef =
      as_matrix(get_req(est, ectx, "mean_coef"), ectx + ".mean_coef", 2,
                2 + rep.design.K + rep.het.C());
  rep.het.cov =
      as_matrix(get_req(est, ectx, "cov_lambda"), ectx + ".cov_lambda", 2, 2);

  const njson& nat = get_req(j, "report", "natural");
  check_keys(nat, "report.natural", {"names", "estimate", "se"});

  if (j.contains("feedback")) {
    const njson& f = j["feedback"];
    check_keys(f, "report.feedback",
               {"A_x", "a_y", "a_d", "c", "Sigma_X", "coef_names", "coef",
                "coef_se", "nobs", "flags"});
    const std::string fctx = "report.feedback";
    rep.feedback.A_x = as_matrix(get_req(f, fctx, "A_x"), fctx + ".A_x",
                                 rep.design.K, rep.design.K);
    rep.feedback.a_y =
        as_vector(get_req(f, fctx, "a_y"), fctx + ".a_y", rep.design.K);
    rep.feedback.a_d = as_matrix(get_req(f, fctx, "a_d"), fctx + ".a_d",
                                 rep.design.K, rep.design.n_event_times());
    rep.feedback.c = as_vector(get_req(f, fctx, "c"), fctx + ".c", rep.design.K);
    rep.feedback.Sigma_X = as_matrix(get_req(f, fctx, "Sigma_X"),
                                     fctx + ".Sigma_X", rep.design.K,
                                     rep.design.K);
    rep.has_feedback = true;
  }

  const njson& ll = get_req(j, "report", "loglik");
  check_keys(ll, "report.loglik", {"Y", "X"});
  rep.loglik_Y = as_num(get_req(ll, "report.loglik", "Y"), "report.loglik.Y",
                        true);
  rep.loglik_X = ll.contains("X") ? as_num(ll["X"], "report.loglik.X", true)
                                  : kNaN;

  const njson& conv = get_req(j, "report", "convergence");
  check_keys(conv, "report.convergence",
             {"converged", "iterations", "n_evals", "grad_inf_norm", "n_starts",
              "best_start", "hessian_cond", "flags"});
  rep.converged = as_bool(get_req(conv, "report.convergence", "converged"),
                          "report.convergence.converged");

  as_string(get_req(j, "report", "trace_file"), "report.trace_file");

  rep.theta.validate(rep.design);
  rep.het.validate(rep.design);
  if (rep.has_feedback) rep.feedback.validate(rep.design);
  return rep;
}

void write_trace_csv(const std::string& path,
                     const std::vector<TracePoint>& trace) {
  std::ofstream os = open_out(path);
  os << "iter,objective,grad_inf,step_inf\n";
  for (const TracePoint& p : trace) {
    os << p.iter << ',' << fmt_double(p.f) << ',' << fmt_double(p.grad_inf)
       << ',' << fmt_double(p.step_inf) << '\n';
  }
  finish_out(os, path);
}

// ---------------------------------------------------------------------------
// Counterfactual tables
// ---------------------------------------------------------------------------

namespace {

void write_arm_metadata(std::ofstream& os, std::uint64_t seed, int n_draws,
                        const Scenario& scenario) {
  os << "# seed: " << seed << '\n';
  os << "# n_draws: " << n_draws << '\n';
  os << "# lambda_source: "
     << (scenario.lambda_source == LambdaSource::posterior ? "posterior"
                                                           : "prior")
     << '\n';
  os << "# arm A: scenario event dates, covariate feedback active\n";
  os << "# arm B: never treated, covariate feedback active\n";
  os << "# arm C: scenario event dates in the outcome equation, covariate "
        "path forced to arm B\n";
  os << "# effects: total = A - B, direct = C - B, indirect = A - C\n";
}

void write_effect_table(const std::string& path, const char* index_col,
                        const std::vector<EffectCell>& cells,
                        const DecompositionResult& result,
                        const Scenario& scenario) {
  std::ofstream os = open_out(path);
  write_arm_metadata(os, result.seed, result.n_draws, scenario);
  os << index_col << ",total,direct,indirect,se_total,se_direct,se_indirect\n";
  for (const EffectCell& c : cells) {
    os << c.index << ',' << fmt_double(c.total) << ',' << fmt_double(c.direct)
       << ',' << fmt_double(c.indirect) << ',' << fmt_double(c.se_total) << ','
       << fmt_double(c.se_direct) << ',' << fmt_double(c.se_indirect) << '\n';
  }
  finish_out(os, path);
}

}  // namespace

void write_decomposition_csv(const std::string& event_path,
                             const std::string& calendar_path,
                             const DecompositionResult& result,
                             const Scenario& scenario) {
  write_effect_table(event_path, "j", result.by_event_time, result, scenario);
  write_effect_table(calendar_path, "t", result.by_calendar_time, result,
                     scenario);
}

void write_scenario_csv(const std::string& path, const std::string& units_path,
                        const ScenarioResult& result, const Scenario& scenario) {
  {
    std::ofstream os = open_out(path);
    os << "# seed: " << scenario.seed << '\n';
    os << "# n_draws: " << scenario.n_draws << '\n';
    os << "# lambda_source: "
       << (scenario.lambda_source == LambdaSource::posterior ? "posterior"
                                                             : "prior")
       << '\n';
    os << "t,mean_y,se_mean_y\n";
    for (Eigen::Index t = 0; t < result.mean_path.size(); ++t) {
      os << (t + 1) << ',' << fmt_double(result.mean_path[t]) << ','
         << fmt_double(result.se_path[t]) << '\n';
    }
    finish_out(os, path);
  }
  {
    std::ofstream os = open_out(units_path);
    os << "unit,t,mean_y\n";
    for (Eigen::Index i = 0; i < result.unit_mean_y.rows(); ++i) {
      for (Eigen::Index t = 0; t < result.unit_mean_y.cols(); ++t) {
        os << i << ',' << (t + 1) << ',' << fmt_double(result.unit_mean_y(i, t))
           << '\n';
      }
    }
    finish_out(os, units_path);
  }
}

// ---------------------------------------------------------------------------
// Study table
// ---------------------------------------------------------------------------

struct McCsvWriter::Impl {
  std::ofstream os;
  std::string path;
};

McCsvWriter::McCsvWriter(const std::string& path) : impl_(new Impl) {
  impl_->path = path;
  impl_->os.open(path, std::ios::out | std::ios::trunc);
  if (!impl_->os.is_open()) {
    delete impl_;
    impl_ = nullptr;
    fail(ErrorCode::io, "cannot open '", path, "' for writing");
  }
  impl_->os << "cell,param,truth,n_reps,n_ok,n_fail,cell_failed,mean,bias,mae,"
               "rmse,mean_se,mc_se,cov3se\n";
  impl_->os.flush();
  require(impl_->os.good(), ErrorCode::io, "write to '", path, "' failed");
}

McCsvWriter::~McCsvWriter() { delete impl_; }

void McCsvWriter::append(const McCellResult& cell) {
  std::ofstream& os = impl_->os;
  for (const McParamStat& s : cell.stats) {
    os << cell.cell << ',' << s.param << ',' << fmt_double(s.truth) << ','
       << cell.n_reps << ',' << cell.n_ok << ',' << cell.n_fail << ','
       << (cell.failed ? 1 : 0) << ',' << fmt_double(s.mean) << ','
       << fmt_double(s.bias) << ',' << fmt_double(s.mae) << ','
       << fmt_double(s.rmse) << ',' << fmt_double(s.mean_se) << ','
       << fmt_double(s.mc_se) << ',' << fmt_double(s.cov3se) << '\n';
  }
  os.flush();
  require(os.good(), ErrorCode::io, "write to '", impl_->path, "' failed");
}

}  // namespace evpanel
