#include "bifem/app.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

#include <spdlog/spdlog.h>

#include "bifem/oracle.hpp"

namespace fs = std::filesystem;

namespace bifem::app {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

// ---- schema helpers -------------------------------------------------------

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw Error(ErrorCode::config_error, (path.empty() ? "/" : path) + ": " + message);
}

std::string join(const std::string& path, const std::string& key) { return path + "/" + key; }

void check_object(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; });
    if (!known) fail(join(path, it.key()), "unknown field");
  }
}

double as_number(const Json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(path, "must be finite");
  return d;
}

double number(const Json& obj, const std::string& path, const char* key, double fallback) {
  return obj.contains(key) ? as_number(obj[key], join(path, key)) : fallback;
}

double positive(const Json& obj, const std::string& path, const char* key, double fallback) {
  const double v = number(obj, path, key, fallback);
  if (!(v > 0.0)) fail(join(path, key), "must be positive");
  return v;
}

double required_number(const Json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) fail(join(path, key), "missing required field");
  return as_number(obj[key], join(path, key));
}

long long integer(const Json& obj, const std::string& path, const char* key, long long fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj[key];
  if (!v.is_number_integer()) fail(join(path, key), "expected an integer");
  return v.get<long long>();
}

bool boolean(const Json& obj, const std::string& path, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_boolean()) fail(join(path, key), "expected true or false");
  return obj[key].get<bool>();
}

std::string string(const Json& obj, const std::string& path, const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string()) fail(join(path, key), "expected a string");
  return obj[key].get<std::string>();
}

std::string choice(const Json& obj, const std::string& path, const char* key, const std::string& fallback,
                   std::initializer_list<const char*> options) {
  const std::string v = string(obj, path, key, fallback);
  if (std::none_of(options.begin(), options.end(), [&](const char* o) { return v == o; })) {
    std::string list;
    for (const char* o : options) list += (list.empty() ? "" : ", ") + std::string(o);
    fail(join(path, key), "'" + v + "' is not one of: " + list);
  }
  return v;
}

Vec2 point(const Json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "expected [x, y]");
  return {as_number(v[0], path + "/0"), as_number(v[1], path + "/1")};
}

std::vector<double> number_list(const Json& obj, const std::string& path, const char* key) {
  std::vector<double> out;
  if (!obj.contains(key)) return out;
  const Json& v = obj[key];
  if (!v.is_array()) fail(join(path, key), "expected an array of numbers");
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], join(path, key) + "/" + std::to_string(i)));
  return out;
}

std::string resolve(const std::string& file, const fs::path& base) {
  if (file.empty()) return file;
  fs::path p(file);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal().string();
}

double polygon_area(const std::vector<Vec2>& v) {
  double a = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2& p = v[i];
    const Vec2& q = v[(i + 1) % v.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double t = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * d)).norm();
}

bool inside_domain(const DomainSpec& d, const Vec2& x) {
  if (d.type == "disk") return (x - d.center).norm() < d.radius;
  bool in = false;
  const auto& v = d.vertices;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if (segment_distance(x, v[j], v[i]) == 0.0) return false;
    if ((v[i].y() > x.y()) != (v[j].y() > x.y()) &&
        x.x() < (v[j].x() - v[i].x()) * (x.y() - v[i].y()) / (v[j].y() - v[i].y()) + v[i].x())
      in = !in;
  }
  return in;
}

Json point_json(const Vec2& p) { return Json::array({p.x(), p.y()}); }

// ---- small text tables ----------------------------------------------------

std::vector<std::vector<double>> read_table(const fs::path& path, std::size_t columns, ErrorCode code) {
  std::ifstream in(path);
  if (!in) throw Error(code, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::replace(line.begin(), line.end(), ',', ' ');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    std::vector<double> row;
    std::string tok;
    bool numeric = true;
    while (is >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && lineno == 1) continue;  // header
      throw Error(code, path.string() + ":" + std::to_string(lineno) + ": not a number");
    }
    if (row.size() != columns)
      throw Error(code, path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(columns) +
                            " columns, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw Error(ErrorCode::io_error, "failed writing " + path.string());
}

void write_nodal_csv(const fs::path& path, const Mesh& mesh, const NodalField& u) {
  std::ostringstream s;
  s << "x,y,u\n";
  for (std::size_t i = 0; i < mesh.node_count(); ++i)
    s << format_double(mesh.node(i).x()) << ',' << format_double(mesh.node(i).y()) << ',' << format_double(u[i])
      << '\n';
  write_text(path, s.str());
}

void write_tilt_csv(const fs::path& path, const Problem& p, const NodalField& u, double slack_floor) {
  const TiltField tw = tilt(FeasibleField::make(*p.mesh, p.metric, u), p.metric, *p.mesh, slack_floor);
  std::ostringstream s;
  s << "triangle,cx,cy,w,saturated\n";
  for (std::size_t t = 0; t < p.mesh->triangle_count(); ++t) {
    const Vec2 c = p.mesh->centroid(t);
    s << t << ',' << format_double(c.x()) << ',' << format_double(c.y()) << ',' << format_double(tw.w[t]) << ','
      << (tw.saturated[t] ? 1 : 0) << '\n';
  }
  write_text(path, s.str());
}

void write_metric_csv(const fs::path& path, const MetricField& m) {
  std::ostringstream s;
  s << "triangle,alpha,s11,s12,s22\n";
  for (std::size_t t = 0; t < m.size(); ++t)
    s << t << ',' << format_double(m.alpha[t]) << ',' << format_double(m.sigma[t](0, 0)) << ','
      << format_double(m.sigma[t](0, 1)) << ',' << format_double(m.sigma[t](1, 1)) << '\n';
  write_text(path, s.str());
}

std::string density_csv(const Mesh& mesh, const TriangleField& d) {
  std::ostringstream s;
  s << "triangle,cx,cy,density\n";
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const Vec2 c = mesh.centroid(t);
    s << t << ',' << format_double(c.x()) << ',' << format_double(c.y()) << ',' << format_double(d[t]) << '\n';
  }
  return s.str();
}

void write_diagnostic_tables(const fs::path& dir, const Mesh& mesh, const DiagnosticsReport& r) {
  std::ostringstream b;
  b << "center,cx,cy,s,mass,ratio\n";
  for (std::size_t k = 0; k < r.ball_growth_table.size(); ++k) {
    const BallGrowth& g = r.ball_growth_table[k];
    for (const auto& row : g.rows)
      b << k << ',' << format_double(g.center.x()) << ',' << format_double(g.center.y()) << ','
        << format_double(row.s) << ',' << format_double(row.mass) << ',' << format_double(row.ratio) << '\n';
  }
  write_text(dir / "ball_growth.csv", b.str());
  std::ostringstream s;
  s << "source,sx,sy,target,tx,ty,ratio\n";
  for (const ScanRow& row : r.scan_rows) {
    const Vec2& x = mesh.node(row.source);
    s << row.source << ',' << format_double(x.x()) << ',' << format_double(x.y()) << ',' << row.target << ',';
    if (row.target >= 0) {
      const Vec2& y = mesh.node(row.target);
      s << format_double(y.x()) << ',' << format_double(y.y());
    } else {
      s << ',';
    }
    s << ',' << format_double(row.ratio) << '\n';
  }
  write_text(dir / "light_scan.csv", s.str());
}

Json error_record(const Error& e) {
  Json j;
  j["status"] = to_string(e.code());
  j["code"] = static_cast<int>(e.code());
  j["message"] = e.what();
  return j;
}

struct LogRow {
  int stage;
  IterationRecord record;
};

void write_log(const fs::path& path, const std::vector<LogRow>& rows) {
  std::ostringstream s;
  s << "stage,iteration,primal_residual,dual_residual,energy\n";
  for (const LogRow& r : rows)
    s << r.stage << ',' << r.record.iteration << ',' << format_double(r.record.primal_residual) << ','
      << format_double(r.record.dual_residual) << ',' << format_double(r.record.energy) << '\n';
  write_text(path, s.str());
}

Json mesh_summary(const Mesh& mesh) {
  Json j;
  j["nodes"] = mesh.node_count();
  j["triangles"] = mesh.triangle_count();
  j["h"] = characteristic_h(mesh);
  j["h_max"] = mesh.h_max();
  j["min_angle_deg"] = mesh.min_angle_deg();
  return j;
}

}  // namespace

// ---- configuration --------------------------------------------------------

DiagnosticsConfig parse_diagnostics(const Json& d, const std::string& path) {
  check_object(d, path,
               {"enabled", "exclusion_radius", "delta_sing", "scan_sample", "light_scan", "ball_centers", "ball_radii",
                "light_ratio_max", "ball_growth_factor", "flux_tolerance", "slack_floor"});
  DiagnosticsConfig c;
  if (d.contains("exclusion_radius") && !d["exclusion_radius"].is_null()) {
    c.exclusion_radius = as_number(d["exclusion_radius"], join(path, "exclusion_radius"));
    if (*c.exclusion_radius < 0.0) fail(join(path, "exclusion_radius"), "must be >= 0");
  }
  c.delta_sing = number(d, path, "delta_sing", c.delta_sing);
  if (!(c.delta_sing > 0.0 && c.delta_sing < 1.0)) fail(join(path, "delta_sing"), "must lie in (0, 1)");
  if (d.contains("scan_sample")) {
    const Json& s = d["scan_sample"];
    if (!s.is_array()) fail(join(path, "scan_sample"), "expected an array of node indices");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s[i].is_number_integer() || s[i].get<long long>() < 0)
        fail(join(path, "scan_sample") + "/" + std::to_string(i), "expected a node index");
      c.scan_sample.push_back(s[i].get<int>());
    }
  }
  c.light_scan = boolean(d, path, "light_scan", c.light_scan);
  if (d.contains("ball_centers")) {
    const Json& s = d["ball_centers"];
    if (!s.is_array()) fail(join(path, "ball_centers"), "expected an array of [x, y]");
    for (std::size_t i = 0; i < s.size(); ++i)
      c.ball_centers.push_back(point(s[i], join(path, "ball_centers") + "/" + std::to_string(i)));
  }
  c.ball_radii = number_list(d, path, "ball_radii");
  for (std::size_t i = 0; i < c.ball_radii.size(); ++i)
    if (!(c.ball_radii[i] > 0.0)) fail(join(path, "ball_radii") + "/" + std::to_string(i), "must be positive");
  c.light_ratio_max = positive(d, path, "light_ratio_max", c.light_ratio_max);
  c.ball_growth_factor = positive(d, path, "ball_growth_factor", c.ball_growth_factor);
  c.flux_tolerance = positive(d, path, "flux_tolerance", c.flux_tolerance);
  c.slack_floor = positive(d, path, "slack_floor", c.slack_floor);
  return c;
}

Json to_json(const DiagnosticsConfig& c) {
  Json j;
  j["exclusion_radius"] = c.exclusion_radius ? Json(*c.exclusion_radius) : Json(nullptr);
  j["delta_sing"] = c.delta_sing;
  j["scan_sample"] = c.scan_sample;
  j["light_scan"] = c.light_scan;
  j["ball_centers"] = Json::array();
  for (const Vec2& p : c.ball_centers) j["ball_centers"].push_back(point_json(p));
  j["ball_radii"] = c.ball_radii;
  j["light_ratio_max"] = c.light_ratio_max;
  j["ball_growth_factor"] = c.ball_growth_factor;
  j["flux_tolerance"] = c.flux_tolerance;
  j["slack_floor"] = c.slack_floor;
  return j;
}

RunConfig parse_config(const Json& doc, const fs::path& base) {
  check_object(doc, "", {"domain", "h", "mesh", "metric", "charges", "boundary", "solver", "diagnostics", "output"});
  RunConfig c;

  if (!doc.contains("domain")) fail("/domain", "missing required field");
  {
    const Json& d = doc["domain"];
    const std::string p = "/domain";
    if (!d.is_object()) fail(p, "expected an object");
    c.domain.type = choice(d, p, "type", "disk", {"disk", "polygon"});
    if (c.domain.type == "disk") {
      check_object(d, p, {"type", "radius", "center"});
      c.domain.radius = positive(d, p, "radius", 1.0);
      if (d.contains("center")) c.domain.center = point(d["center"], join(p, "center"));
    } else {
      check_object(d, p, {"type", "vertices"});
      if (!d.contains("vertices") || !d["vertices"].is_array()) fail(join(p, "vertices"), "expected an array of [x, y]");
      for (std::size_t i = 0; i < d["vertices"].size(); ++i)
        c.domain.vertices.push_back(point(d["vertices"][i], join(p, "vertices") + "/" + std::to_string(i)));
      if (c.domain.vertices.size() < 3) fail(join(p, "vertices"), "a polygon needs at least 3 vertices");
      if (!(std::abs(polygon_area(c.domain.vertices)) > 0.0)) fail(join(p, "vertices"), "polygon has zero area");
    }
  }

  if (!doc.contains("h")) fail("/h", "missing required field");
  c.mesh.h = positive(doc, "", "h", 0.0);
  if (doc.contains("mesh")) {
    const Json& m = doc["mesh"];
    check_object(m, "/mesh", {"min_angle_deg", "jitter", "seed"});
    c.mesh.min_angle_deg = number(m, "/mesh", "min_angle_deg", c.mesh.min_angle_deg);
    if (c.mesh.min_angle_deg < 0.0 || c.mesh.min_angle_deg >= 60.0) fail("/mesh/min_angle_deg", "must lie in [0, 60)");
    c.mesh.jitter = number(m, "/mesh", "jitter", c.mesh.jitter);
    if (c.mesh.jitter < 0.0 || c.mesh.jitter >= 0.5) fail("/mesh/jitter", "must lie in [0, 0.5)");
    const long long seed = integer(m, "/mesh", "seed", c.mesh.seed);
    if (seed < 0 || seed > std::numeric_limits<unsigned>::max()) fail("/mesh/seed", "out of range");
    c.mesh.seed = static_cast<unsigned>(seed);
  }

  if (doc.contains("metric")) {
    const Json& m = doc["metric"];
    const std::string p = "/metric";
    if (!m.is_object()) fail(p, "expected an object");
    c.metric.type = choice(m, p, "type", "flat", {"flat", "uniform", "preset", "files"});
    if (c.metric.type == "flat") {
      check_object(m, p, {"type"});
    } else if (c.metric.type == "uniform") {
      check_object(m, p, {"type", "alpha", "sigma"});
      c.metric.alpha = positive(m, p, "alpha", 1.0);
      if (m.contains("sigma")) {
        const Json& s = m["sigma"];
        if (!s.is_array() || s.size() != 2) fail(join(p, "sigma"), "expected [[s11, s12], [s21, s22]]");
        for (int r = 0; r < 2; ++r) {
          const Vec2 row = point(s[r], join(p, "sigma") + "/" + std::to_string(r));
          c.metric.sigma(r, 0) = row.x();
          c.metric.sigma(r, 1) = row.y();
        }
        if (c.metric.sigma(0, 1) != c.metric.sigma(1, 0)) fail(join(p, "sigma"), "must be symmetric");
        if (!(c.metric.sigma(0, 0) > 0.0 && c.metric.sigma.determinant() > 0.0))
          fail(join(p, "sigma"), "must be positive definite");
      }
    } else if (c.metric.type == "preset") {
      check_object(m, p, {"type", "name", "strength"});
      if (!m.contains("name")) fail(join(p, "name"), "missing required field");
      c.metric.preset = choice(m, p, "name", "", {"lapse", "conformal", "anisotropic"});
      c.metric.strength = number(m, p, "strength", 0.0);
    } else {
      check_object(m, p, {"type", "alpha", "sigma"});
      c.metric.alpha_file = resolve(string(m, p, "alpha", ""), base);
      c.metric.sigma_file = resolve(string(m, p, "sigma", ""), base);
      if (c.metric.alpha_file.empty() && c.metric.sigma_file.empty())
        fail(p, "files metric needs an alpha or a sigma file");
    }
  }

  if (doc.contains("charges")) {
    const Json& q = doc["charges"];
    const std::string p = "/charges";
    check_object(q, p, {"atoms", "density"});
    if (q.contains("atoms")) {
      const Json& atoms = q["atoms"];
      if (!atoms.is_array()) fail(join(p, "atoms"), "expected an array of {x, y, a}");
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        const std::string ap = join(p, "atoms") + "/" + std::to_string(i);
        check_object(atoms[i], ap, {"x", "y", "a"});
        Atom a{{required_number(atoms[i], ap, "x"), required_number(atoms[i], ap, "y")},
               required_number(atoms[i], ap, "a")};
        c.atoms.push_back(a);
      }
    }
    if (q.contains("density")) {
      const Json& d = q["density"];
      const std::string dp = join(p, "density");
      if (!d.is_object()) fail(dp, "expected an object");
      c.density.type = choice(d, dp, "type", "none", {"none", "uniform", "gaussian", "file"});
      if (c.density.type == "none") {
        check_object(d, dp, {"type"});
      } else if (c.density.type == "uniform") {
        check_object(d, dp, {"type", "value"});
        c.density.value = required_number(d, dp, "value");
      } else if (c.density.type == "gaussian") {
        check_object(d, dp, {"type", "x0", "y0", "s", "mass"});
        c.density.center = {number(d, dp, "x0", 0.0), number(d, dp, "y0", 0.0)};
        c.density.width = positive(d, dp, "s", c.density.width);
        c.density.mass = required_number(d, dp, "mass");
      } else {
        check_object(d, dp, {"type", "path"});
        c.density.path = resolve(string(d, dp, "path", ""), base);
        if (c.density.path.empty()) fail(join(dp, "path"), "missing required field");
      }
    }
  }

  if (doc.contains("boundary")) {
    const Json& b = doc["boundary"];
    const std::string p = "/boundary";
    if (!b.is_object()) fail(p, "expected an object");
    c.boundary.type = choice(b, p, "type", "constant", {"constant", "affine", "file"});
    if (c.boundary.type == "constant") {
      check_object(b, p, {"type", "value", "spacelike_margin"});
      c.boundary.value = number(b, p, "value", 0.0);
    } else if (c.boundary.type == "affine") {
      check_object(b, p, {"type", "a", "b", "c", "spacelike_margin"});
      c.boundary.a = number(b, p, "a", 0.0);
      c.boundary.b = number(b, p, "b", 0.0);
      c.boundary.c = number(b, p, "c", 0.0);
    } else {
      check_object(b, p, {"type", "path", "spacelike_margin"});
      c.boundary.path = resolve(string(b, p, "path", ""), base);
      if (c.boundary.path.empty()) fail(join(p, "path"), "missing required field");
    }
    c.spacelike_margin = number(b, p, "spacelike_margin", c.spacelike_margin);
    if (c.spacelike_margin < 0.0 || c.spacelike_margin >= 1.0) fail(join(p, "spacelike_margin"), "must lie in [0, 1)");
  }

  if (doc.contains("solver")) {
    const Json& s = doc["solver"];
    const std::string p = "/solver";
    check_object(s, p,
                 {"method", "beta", "tol_primal", "tol_dual", "max_iters", "epsilon_schedule", "eps0_factor",
                  "eps_min_factor", "eps_ratio", "linear_solver", "linear_tol", "seed", "init", "adaptive_beta",
                  "max_beta_changes", "polish", "polish_threshold", "picard_theta", "picard_margin", "slack_floor"});
    SolverConfig& k = c.solver;
    c.method = choice(s, p, "method", c.method, {"continuation", "admm", "picard"});
    k.beta = positive(s, p, "beta", k.beta);
    k.tol_primal = positive(s, p, "tol_primal", k.tol_primal);
    k.tol_dual = positive(s, p, "tol_dual", k.tol_dual);
    const long long iters = integer(s, p, "max_iters", k.max_iters);
    if (iters < 1 || iters > std::numeric_limits<int>::max()) fail(join(p, "max_iters"), "must be a positive integer");
    k.max_iters = static_cast<int>(iters);
    k.epsilon_schedule = number_list(s, p, "epsilon_schedule");
    for (std::size_t i = 0; i < k.epsilon_schedule.size(); ++i) {
      if (!(k.epsilon_schedule[i] > 0.0))
        fail(join(p, "epsilon_schedule") + "/" + std::to_string(i), "must be positive");
      if (i > 0 && !(k.epsilon_schedule[i] < k.epsilon_schedule[i - 1]))
        fail(join(p, "epsilon_schedule") + "/" + std::to_string(i), "schedule must be strictly decreasing");
    }
    k.eps0_factor = positive(s, p, "eps0_factor", k.eps0_factor);
    k.eps_min_factor = positive(s, p, "eps_min_factor", k.eps_min_factor);
    k.eps_ratio = positive(s, p, "eps_ratio", k.eps_ratio);
    if (!(k.eps_ratio < 1.0)) fail(join(p, "eps_ratio"), "must lie in (0, 1)");
    k.linear_solver = choice(s, p, "linear_solver", "cholesky", {"cholesky", "pcg"}) == "pcg"
                          ? LinearSolverKind::pcg
                          : LinearSolverKind::cholesky;
    k.linear_tol = positive(s, p, "linear_tol", k.linear_tol);
    const long long seed = integer(s, p, "seed", k.seed);
    if (seed < 0 || seed > std::numeric_limits<unsigned>::max()) fail(join(p, "seed"), "out of range");
    k.seed = static_cast<unsigned>(seed);
    const std::string init = choice(s, p, "init", "boundary_data", {"boundary_data", "zero", "random"});
    k.init = init == "zero" ? InitialGuess::zero : init == "random" ? InitialGuess::random : InitialGuess::boundary_data;
    k.adaptive_beta = boolean(s, p, "adaptive_beta", k.adaptive_beta);
    const long long changes = integer(s, p, "max_beta_changes", k.max_beta_changes);
    if (changes < 0 || changes > 1000) fail(join(p, "max_beta_changes"), "must lie in [0, 1000]");
    k.max_beta_changes = static_cast<int>(changes);
    k.polish = boolean(s, p, "polish", k.polish);
    k.polish_threshold = positive(s, p, "polish_threshold", k.polish_threshold);
    k.picard_theta = positive(s, p, "picard_theta", k.picard_theta);
    if (k.picard_theta > 1.0) fail(join(p, "picard_theta"), "must lie in (0, 1]");
    k.picard_margin = positive(s, p, "picard_margin", k.picard_margin);
    if (!(k.picard_margin < 1.0)) fail(join(p, "picard_margin"), "must lie in (0, 1)");
    k.slack_floor = positive(s, p, "slack_floor", k.slack_floor);
  }

  if (doc.contains("diagnostics")) {
    c.diagnostics = parse_diagnostics(doc["diagnostics"], "/diagnostics");
    c.diagnostics_enabled = boolean(doc["diagnostics"], "/diagnostics", "enabled", true);
  }

  if (doc.contains("output")) {
    const Json& o = doc["output"];
    check_object(o, "/output", {"dir", "vtk"});
    c.output_dir = resolve(string(o, "/output", "dir", ""), base);
    c.vtk = boolean(o, "/output", "vtk", false);
  }

  // cross-field checks
  for (std::size_t i = 0; i < c.atoms.size(); ++i)
    if (!inside_domain(c.domain, c.atoms[i].location))
      fail("/charges/atoms/" + std::to_string(i), "atom " + std::to_string(i) + " at (" +
                                                      format_double(c.atoms[i].location.x()) + ", " +
                                                      format_double(c.atoms[i].location.y()) +
                                                      ") lies outside the open domain");
  for (std::size_t i = 0; i < c.diagnostics.ball_centers.size(); ++i)
    if (!inside_domain(c.domain, c.diagnostics.ball_centers[i]))
      fail("/diagnostics/ball_centers/" + std::to_string(i), "center lies outside the domain");
  if (c.boundary.type == "affine" && (c.metric.type == "flat" || c.metric.type == "uniform")) {
    const Vec2 g(c.boundary.a, c.boundary.b);
    const double slope = std::sqrt(g.dot(c.metric.sigma.inverse() * g)) / c.metric.alpha;
    if (!(slope <= 1.0 - c.spacelike_margin))
      throw Error(ErrorCode::spacelike_violation,
                  "/boundary: affine data has |Dphi|_sigma / alpha = " + format_double(slope) +
                      ", boundary data must stay spacelike (below " + format_double(1.0 - c.spacelike_margin) + ")");
  }
  return c;
}

RunConfig parse_config_text(const std::string& text, const fs::path& base) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::config_error, std::string("config: ") + e.what());
  }
  return parse_config(doc, base);
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str(), path.parent_path());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

Json to_json(const RunConfig& c) {
  Json j;
  Json d;
  d["type"] = c.domain.type;
  if (c.domain.type == "disk") {
    d["radius"] = c.domain.radius;
    d["center"] = point_json(c.domain.center);
  } else {
    d["vertices"] = Json::array();
    for (const Vec2& v : c.domain.vertices) d["vertices"].push_back(point_json(v));
  }
  j["domain"] = d;
  j["h"] = c.mesh.h;
  j["mesh"] = {{"min_angle_deg", c.mesh.min_angle_deg}, {"jitter", c.mesh.jitter}, {"seed", c.mesh.seed}};

  Json m;
  m["type"] = c.metric.type;
  if (c.metric.type == "uniform") {
    m["alpha"] = c.metric.alpha;
    m["sigma"] = Json::array({Json::array({c.metric.sigma(0, 0), c.metric.sigma(0, 1)}),
                              Json::array({c.metric.sigma(1, 0), c.metric.sigma(1, 1)})});
  } else if (c.metric.type == "preset") {
    m["name"] = c.metric.preset;
    m["strength"] = c.metric.strength;
  } else if (c.metric.type == "files") {
    if (!c.metric.alpha_file.empty()) m["alpha"] = c.metric.alpha_file;
    if (!c.metric.sigma_file.empty()) m["sigma"] = c.metric.sigma_file;
  }
  j["metric"] = m;

  Json q;
  q["atoms"] = Json::array();
  for (const Atom& a : c.atoms) q["atoms"].push_back({{"x", a.location.x()}, {"y", a.location.y()}, {"a", a.charge}});
  Json den;
  den["type"] = c.density.type;
  if (c.density.type == "uniform") den["value"] = c.density.value;
  if (c.density.type == "gaussian") {
    den["x0"] = c.density.center.x();
    den["y0"] = c.density.center.y();
    den["s"] = c.density.width;
    den["mass"] = c.density.mass;
  }
  if (c.density.type == "file") den["path"] = c.density.path;
  q["density"] = den;
  j["charges"] = q;

  Json b;
  b["type"] = c.boundary.type;
  if (c.boundary.type == "constant") b["value"] = c.boundary.value;
  if (c.boundary.type == "affine") {
    b["a"] = c.boundary.a;
    b["b"] = c.boundary.b;
    b["c"] = c.boundary.c;
  }
  if (c.boundary.type == "file") b["path"] = c.boundary.path;
  b["spacelike_margin"] = c.spacelike_margin;
  j["boundary"] = b;

  const SolverConfig& k = c.solver;
  Json s;
  s["method"] = c.method;
  s["beta"] = k.beta;
  s["tol_primal"] = k.tol_primal;
  s["tol_dual"] = k.tol_dual;
  s["max_iters"] = k.max_iters;
  s["epsilon_schedule"] = k.epsilon_schedule;
  s["eps0_factor"] = k.eps0_factor;
  s["eps_min_factor"] = k.eps_min_factor;
  s["eps_ratio"] = k.eps_ratio;
  s["linear_solver"] = k.linear_solver == LinearSolverKind::pcg ? "pcg" : "cholesky";
  s["linear_tol"] = k.linear_tol;
  s["seed"] = k.seed;
  s["init"] = k.init == InitialGuess::zero ? "zero" : k.init == InitialGuess::random ? "random" : "boundary_data";
  s["adaptive_beta"] = k.adaptive_beta;
  s["max_beta_changes"] = k.max_beta_changes;
  s["polish"] = k.polish;
  s["polish_threshold"] = k.polish_threshold;
  s["picard_theta"] = k.picard_theta;
  s["picard_margin"] = k.picard_margin;
  s["slack_floor"] = k.slack_floor;
  j["solver"] = s;

  Json dg;
  dg["enabled"] = c.diagnostics_enabled;
  const Json diag = to_json(c.diagnostics);
  for (auto it = diag.begin(); it != diag.end(); ++it) dg[it.key()] = it.value();
  j["diagnostics"] = dg;
  j["output"] = {{"dir", c.output_dir}, {"vtk", c.vtk}};
  return j;
}

// ---- problem assembly -----------------------------------------------------

Mesh build_mesh(const RunConfig& c) {
  MeshOptions opt;
  opt.min_angle_deg = c.mesh.min_angle_deg;
  opt.jitter = c.mesh.jitter;
  opt.seed = c.mesh.seed;
  if (c.domain.type == "disk") {
    for (const Atom& a : c.atoms) opt.required_points.push_back(a.location - c.domain.center);
    Mesh m = triangulate_disk(c.domain.radius, c.mesh.h, opt);
    if (c.domain.center.isZero(0.0)) return m;
    std::vector<Vec2> nodes = m.nodes();
    for (Vec2& x : nodes) x += c.domain.center;
    return Mesh(std::move(nodes), m.triangles());
  }
  for (const Atom& a : c.atoms) opt.required_points.push_back(a.location);
  return triangulate_polygon(c.domain.vertices, c.mesh.h, opt);
}

MetricField build_metric(const MetricSpec& spec, const Mesh& mesh) {
  const std::size_t n = mesh.triangle_count();
  MetricField m;
  if (spec.type == "flat") {
    m = MetricField::flat(n);
  } else if (spec.type == "uniform") {
    m = MetricField::uniform(n, spec.alpha, spec.sigma);
  } else if (spec.type == "preset") {
    m = MetricField::flat(n);
    for (std::size_t t = 0; t < n; ++t) {
      const Vec2 x = mesh.centroid(t);
      const double r2 = x.squaredNorm();
      if (spec.preset == "lapse") {
        m.alpha[t] = 1.0 + spec.strength * r2;
      } else if (spec.preset == "conformal") {
        m.sigma[t] = (1.0 + spec.strength * r2) * Mat2::Identity();
      } else {
        m.sigma[t](1, 1) = 1.0 + spec.strength;
      }
    }
  } else {
    m = MetricField::flat(n);
    if (!spec.alpha_file.empty()) {
      const auto rows = read_table(spec.alpha_file, 1, ErrorCode::config_error);
      if (rows.size() != n)
        fail("/metric/alpha", "file has " + std::to_string(rows.size()) + " values for " + std::to_string(n) +
                                  " triangles");
      for (std::size_t t = 0; t < n; ++t) m.alpha[t] = rows[t][0];
    }
    if (!spec.sigma_file.empty()) {
      const auto rows = read_table(spec.sigma_file, 3, ErrorCode::config_error);
      if (rows.size() != n)
        fail("/metric/sigma", "file has " + std::to_string(rows.size()) + " rows for " + std::to_string(n) +
                                  " triangles");
      for (std::size_t t = 0; t < n; ++t) m.sigma[t] << rows[t][0], rows[t][1], rows[t][1], rows[t][2];
    }
  }
  try {
    m.validate(mesh);
  } catch (const Error& e) {
    fail("/metric", e.what());
  }
  return m;
}

ChargeMeasure build_charges(const RunConfig& c, const Mesh& mesh, const MetricField&) {
  std::optional<TriangleField> density;
  const std::size_t n = mesh.triangle_count();
  if (c.density.type == "uniform") {
    density = TriangleField(n, c.density.value);
  } else if (c.density.type == "gaussian") {
    density = TriangleField(n);
    const double s2 = c.density.width * c.density.width;
    for (std::size_t t = 0; t < n; ++t)
      (*density)[t] = c.density.mass / (2.0 * std::numbers::pi * s2) *
                      std::exp(-(mesh.centroid(t) - c.density.center).squaredNorm() / (2.0 * s2));
  } else if (c.density.type == "file") {
    const auto rows = read_table(c.density.path, 1, ErrorCode::config_error);
    if (rows.size() != n)
      fail("/charges/density/path",
           "file has " + std::to_string(rows.size()) + " values for " + std::to_string(n) + " triangles");
    density = TriangleField(n);
    for (std::size_t t = 0; t < n; ++t) (*density)[t] = rows[t][0];
  }
  ChargeMeasure rho(c.atoms, density);
  rho.validate(mesh);
  return rho;
}

NodalField build_boundary(const BoundarySpec& spec, const Mesh& mesh) {
  NodalField phi(mesh.node_count());
  if (spec.type == "constant") {
    for (double& v : phi.values) v = spec.value;
  } else if (spec.type == "affine") {
    for (std::size_t i = 0; i < mesh.node_count(); ++i)
      phi[i] = spec.a * mesh.node(i).x() + spec.b * mesh.node(i).y() + spec.c;
  } else {
    const auto rows = read_table(spec.path, 3, ErrorCode::config_error);
    if (rows.empty()) fail("/boundary/path", "file has no rows");
    for (int b : mesh.boundary_nodes()) {
      const Vec2& x = mesh.node(b);
      double best = std::numeric_limits<double>::infinity();
      double value = 0.0;
      for (const auto& r : rows) {
        const double d = (Vec2(r[0], r[1]) - x).norm();
        if (d < best) {
          best = d;
          value = r[2];
        }
      }
      if (best > 1e-9 * (1.0 + x.norm()))
        fail("/boundary/path", "no value for boundary node " + std::to_string(b) + " at (" + format_double(x.x()) +
                                   ", " + format_double(x.y()) + ")");
      phi[b] = value;
    }
  }
  return phi;
}

Problem build_problem(const RunConfig& c) {
  Problem p;
  auto mesh = std::make_shared<const Mesh>(build_mesh(c));
  p.mesh = mesh;
  p.metric = build_metric(c.metric, *mesh);
  p.rho = build_charges(c, *mesh, p.metric);
  p.phi = build_boundary(c.boundary, *mesh);
  p.spacelike_margin = c.spacelike_margin;
  p.validate();
  return p;
}

// ---- reports --------------------------------------------------------------

Json to_json(const DiagnosticsReport& r) {
  Json j;
  j["tilt_l1"] = r.tilt_l1;
  j["tilt_loglinear"] = r.tilt_loglinear;
  j["saturated_count"] = r.saturated_count;
  j["exclusion_radius"] = r.exclusion_radius;
  j["light_segment_max_ratio"] = r.light_segment_max_ratio;
  j["offending_pair"] =
      r.offending_pair ? Json::array({r.offending_pair->first, r.offending_pair->second}) : Json(nullptr);
  j["delta_sing"] = r.delta_sing;
  j["singular_fraction"] = r.singular_fraction;
  j["singular_count"] = r.singular_count;
  j["ball_growth_table"] = Json::array();
  for (const BallGrowth& b : r.ball_growth_table) {
    Json e;
    e["center"] = point_json(b.center);
    e["clipped"] = b.clipped;
    e["median_ratio"] = b.median_ratio;
    e["spread"] = b.spread;
    e["rows"] = Json::array();
    for (const auto& row : b.rows) e["rows"].push_back({{"s", row.s}, {"mass", row.mass}, {"ratio", row.ratio}});
    j["ball_growth_table"].push_back(e);
  }
  j["hessian_integrals"] = {{"method", r.hessian_integrals.method},
                            {"j1", r.hessian_integrals.j1},
                            {"j2", r.hessian_integrals.j2},
                            {"j3", r.hessian_integrals.j3}};
  j["field_energy"] = r.field_energy;
  j["flux"] = {{"boundary_flux", r.flux.boundary_flux}, {"total_charge", r.flux.total_charge}};
  j["flux_mismatch"] = r.flux.mismatch;
  j["pass_flags"] = {{"finite", r.pass_flags.finite},
                     {"light_segments", r.pass_flags.light_segments},
                     {"ball_growth", r.pass_flags.ball_growth},
                     {"flux_balance", r.pass_flags.flux_balance}};
  return j;
}

Json to_json(const SolveResult& r) {
  Json j;
  j["method"] = r.method;
  j["iterations"] = r.iterations;
  j["polish_iterations"] = r.polish_iterations;
  j["primal_residual"] = r.primal_residual;
  j["dual_residual"] = r.dual_residual;
  j["energy"] = r.energy_value;
  j["beta"] = r.beta;
  j["wall_time"] = r.wall_time;
  j["continuation_trace"] = Json::array();
  for (const auto& s : r.continuation_trace)
    j["continuation_trace"].push_back({{"epsilon", s.epsilon}, {"iterations", s.iterations}, {"energy", s.energy}});
  return j;
}

// ---- commands -------------------------------------------------------------

SolveOutcome cmd_solve(const RunConfig& config, const fs::path& out_dir) {
  if (out_dir.empty()) throw Error(ErrorCode::usage_error, "an output directory is required");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create " + out_dir.string() + ": " + ec.message());

  write_text(out_dir / "config.json", to_json(config).dump(2) + "\n");
  SolveOutcome out;
  std::vector<LogRow> log;
  try {
    out.problem = build_problem(config);
    const Problem& p = out.problem;
    write_mesh_files(*p.mesh, (out_dir / "nodes.txt").string(), (out_dir / "triangles.txt").string());
    write_metric_csv(out_dir / "metric.csv", p.metric);
    if (p.rho.density()) write_text(out_dir / "density.csv", density_csv(*p.mesh, *p.rho.density()));

    SolverConfig k = config.solver;
    int stage = 0;
    int last = 0;
    k.on_iteration = [&](const IterationRecord& r) {
      if (r.iteration <= last && !log.empty()) ++stage;
      last = r.iteration;
      log.push_back({stage, r});
    };
    spdlog::info("solving with {} on {} nodes, {} triangles", config.method, p.mesh->node_count(),
                 p.mesh->triangle_count());
    if (config.method == "admm")
      out.result = solve_admm(p, k);
    else if (config.method == "picard")
      out.result = solve_picard(p, k);
    else
      out.result = solve_continuation(p, k);
    spdlog::info("converged in {} iterations, energy {}", out.result.iterations, out.result.energy_value);
  } catch (const Error& e) {
    write_log(out_dir / "solver.log", log);
    write_text(out_dir / "error.json", error_record(e).dump(2) + "\n");
    throw;
  }
  const Problem& p = out.problem;
  write_log(out_dir / "solver.log", log);
  write_nodal_csv(out_dir / "u.csv", *p.mesh, out.result.u);
  write_tilt_csv(out_dir / "w.csv", p, out.result.u, config.solver.slack_floor);

  Json report;
  report["mesh"] = mesh_summary(*p.mesh);
  report["solver"] = to_json(out.result);
  if (config.diagnostics_enabled) {
    out.report = run_diagnostics(p, out.result.u, config.diagnostics);
    report["diagnostics"] = to_json(*out.report);
    write_diagnostic_tables(out_dir, *p.mesh, *out.report);
  }
  write_text(out_dir / "report.json", report.dump(2) + "\n");
  if (config.vtk) {
    const TiltField tw = tilt(FeasibleField::make(*p.mesh, p.metric, out.result.u), p.metric, *p.mesh);
    write_vtk((out_dir / "solution.vtk").string(), *p.mesh, {{"u", &out.result.u}}, {{"w", &tw.w}});
  }
  return out;
}

Bundle load_bundle(const fs::path& dir) {
  auto need = [&](const char* name) {
    const fs::path f = dir / name;
    if (!fs::exists(f)) throw Error(ErrorCode::io_error, "bundle " + dir.string() + " is missing " + name);
    return f;
  };
  Bundle b;
  try {
    b.config = load_config(need("config.json"));
  } catch (const Error& e) {
    throw Error(ErrorCode::io_error, std::string("corrupt bundle config: ") + e.what());
  }
  auto mesh = std::make_shared<const Mesh>(
      read_mesh_files(need("nodes.txt").string(), need("triangles.txt").string()));
  b.problem.mesh = mesh;
  const std::size_t nt = mesh->triangle_count();
  const std::size_t nn = mesh->node_count();

  const auto metric = read_table(need("metric.csv"), 5, ErrorCode::io_error);
  if (metric.size() != nt) throw Error(ErrorCode::io_error, "metric.csv does not match the triangle count");
  b.problem.metric = MetricField::flat(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    b.problem.metric.alpha[t] = metric[t][1];
    b.problem.metric.sigma[t] << metric[t][2], metric[t][3], metric[t][3], metric[t][4];
  }
  b.problem.metric.validate(*mesh);

  std::optional<TriangleField> density;
  if (fs::exists(dir / "density.csv")) {
    const auto rows = read_table(dir / "density.csv", 4, ErrorCode::io_error);
    if (rows.size() != nt) throw Error(ErrorCode::io_error, "density.csv does not match the triangle count");
    density = TriangleField(nt);
    for (std::size_t t = 0; t < nt; ++t) (*density)[t] = rows[t][3];
  } else if (b.config.density.type != "none") {
    throw Error(ErrorCode::io_error, "bundle " + dir.string() + " is missing density.csv");
  }
  b.problem.rho = ChargeMeasure(b.config.atoms, density);
  b.problem.rho.validate(*mesh);

  const auto u = read_table(need("u.csv"), 3, ErrorCode::io_error);
  if (u.size() != nn) throw Error(ErrorCode::io_error, "u.csv does not match the node count");
  b.u = NodalField(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    const Vec2& x = mesh->node(i);
    if (std::abs(u[i][0] - x.x()) > 1e-12 * (1.0 + std::abs(x.x())) ||
        std::abs(u[i][1] - x.y()) > 1e-12 * (1.0 + std::abs(x.y())))
      throw Error(ErrorCode::io_error, "u.csv row " + std::to_string(i + 2) + " does not match node " +
                                           std::to_string(i));
    if (!std::isfinite(u[i][2])) throw Error(ErrorCode::io_error, "u.csv row " + std::to_string(i + 2) + " is not finite");
    b.u[i] = u[i][2];
  }
  b.problem.phi = b.u;
  b.problem.spacelike_margin = 0.0;
  return b;
}

DiagnosticsReport cmd_diagnose(const fs::path& bundle_dir, const std::optional<DiagnosticsConfig>& diagnostics,
                               const fs::path& report_path) {
  const Bundle b = load_bundle(bundle_dir);
  const DiagnosticsConfig cfg = diagnostics.value_or(b.config.diagnostics);
  if (!fs::exists(bundle_dir / "w.csv")) {
    spdlog::info("w.csv missing; recomputing from u.csv");
    write_tilt_csv(bundle_dir / "w.csv", b.problem, b.u, cfg.slack_floor);
  }
  DiagnosticsReport report;
  try {
    report = run_diagnostics(b.problem, b.u, cfg);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::domain_error) throw Error(ErrorCode::io_error, std::string("corrupt bundle: ") + e.what());
    throw;
  }
  const fs::path target = report_path.empty() ? bundle_dir / "diagnostics.json" : report_path;
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  write_text(target, to_json(report).dump(2) + "\n");
  write_diagnostic_tables(target.has_parent_path() ? target.parent_path() : fs::path("."), *b.problem.mesh, report);
  return report;
}

void cmd_oracle(double a, int m, double r_min, double r_max, int n, std::ostream& out) {
  if (m < 2) throw Error(ErrorCode::usage_error, "oracle: dimension m must be at least 2");
  if (!std::isfinite(a)) throw Error(ErrorCode::usage_error, "oracle: charge must be finite");
  if (!(r_min > 0.0) || !(r_max > r_min) || !std::isfinite(r_max))
    throw Error(ErrorCode::usage_error, "oracle: need 0 < r_min < r_max");
  if (n < 2) throw Error(ErrorCode::usage_error, "oracle: need at least 2 rows");
  RadialSolution s;
  try {
    s = radial_table(a, m, r_min, r_max, n);
  } catch (const Error& e) {
    throw Error(ErrorCode::usage_error, std::string("oracle: ") + e.what());
  }
  out << "r,u_prime,u,w,I\n";
  for (std::size_t i = 0; i < s.r.size(); ++i)
    out << format_double(s.r[i]) << ',' << format_double(s.u_prime[i]) << ',' << format_double(s.u[i]) << ','
        << format_double(s.w[i]) << ',' << format_double(s.tilt_mass[i]) << '\n';
}

std::vector<ConvergenceRow> cmd_convergence(const RunConfig& config, const std::vector<double>& hs,
                                            const fs::path& out_dir) {
  const bool constant_metric = config.metric.type == "flat" || config.metric.type == "uniform";
  const bool radial = config.domain.type == "disk" && config.metric.type == "flat" && config.atoms.size() == 1 &&
                      config.density.type == "none" && config.boundary.type == "constant" &&
                      (config.atoms[0].location - config.domain.center).norm() == 0.0;
  const bool affine = config.atoms.empty() && config.density.type == "none" && constant_metric &&
                      (config.boundary.type == "affine" || config.boundary.type == "constant");
  if (!radial && !affine)
    throw Error(ErrorCode::usage_error,
                "convergence: no exact solution for this configuration; supported are a single atom at the "
                "center of a disk (flat metric, constant boundary data) and rho = 0 with affine boundary data "
                "under a constant metric");
  if (hs.empty()) throw Error(ErrorCode::usage_error, "convergence: empty h list");
  for (double h : hs)
    if (!(h > 0.0)) throw Error(ErrorCode::usage_error, "convergence: every h must be positive");

  std::vector<ConvergenceRow> rows;
  for (double h : hs) {
    RunConfig c = config;
    c.mesh.h = h;
    const Problem p = build_problem(c);
    SolverConfig k = c.solver;
    const SolveResult r = c.method == "admm" ? solve_admm(p, k) : c.method == "picard" ? solve_picard(p, k)
                                                                                        : solve_continuation(p, k);
    ConvergenceRow row;
    row.h = h;
    row.nodes = p.mesh->node_count();
    row.iterations = r.iterations;
    const NodalField affine_exact = radial ? NodalField() : build_boundary(c.boundary, *p.mesh);
    for (std::size_t i = 0; i < p.mesh->node_count(); ++i) {
      const Vec2 x = p.mesh->node(i) - c.domain.center;
      double exact;
      if (radial) {
        const double rr = x.norm();
        if (rr < 0.1) continue;
        const double a = c.atoms[0].charge;
        exact = c.boundary.value - radial_potential(a, 2, rr, c.domain.radius);
      } else {
        exact = affine_exact[i];
      }
      row.max_error = std::max(row.max_error, std::abs(r.u[i] - exact));
    }
    if (!rows.empty() && rows.back().max_error > 0.0 && row.max_error > 0.0)
      row.order = std::log(rows.back().max_error / row.max_error) / std::log(rows.back().h / h);
    spdlog::info("h = {}: max error {}", h, row.max_error);
    rows.push_back(row);
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ostringstream s;
    s << "h,nodes,max_error,order,iterations\n";
    for (const auto& r : rows)
      s << format_double(r.h) << ',' << r.nodes << ',' << format_double(r.max_error) << ','
        << (r.order ? format_double(*r.order) : "") << ',' << r.iterations << '\n';
    write_text(out_dir / "convergence.csv", s.str());
  }
  return rows;
}

ChargeMeasure cmd_mollify(const RunConfig& config, double epsilon, std::ostream& out) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::usage_error, "mollify: epsilon must be positive");
  const Mesh mesh = build_mesh(config);
  const MetricField metric = build_metric(config.metric, mesh);
  const ChargeMeasure rho = build_charges(config, mesh, metric);
  ChargeMeasure m = mollify(rho, MollifierKernel(epsilon), mesh, metric);
  out << density_csv(mesh, m.density() ? *m.density() : TriangleField(mesh.triangle_count()));
  return m;
}

}  // namespace bifem::app
