#include "bifem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <queue>
#include <sstream>
#include <unordered_map>

#include "bifem/error.hpp"

namespace bifem {

namespace {

std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double angle_at(const Vec2& p, const Vec2& q, const Vec2& r) {
  const Vec2 u = q - p;
  const Vec2 v = r - p;
  return std::atan2(std::abs(cross(u, v)), u.dot(v));
}

bool is_spd(const Mat2& m) {
  if (!m.allFinite()) return false;
  if (std::abs(m(0, 1) - m(1, 0)) > 1e-12 * (std::abs(m(0, 1)) + 1.0)) return false;
  return m(0, 0) > 0.0 && m.determinant() > 0.0;
}

}  // namespace

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::invalid_geometry: return "invalid_geometry";
    case ErrorCode::domain_error: return "domain_error";
    case ErrorCode::point_location: return "point_location";
    case ErrorCode::mollification_radius: return "mollification_radius";
    case ErrorCode::gradient_undefined: return "gradient_undefined";
    case ErrorCode::convergence_failure: return "convergence_failure";
    case ErrorCode::invalid_problem: return "invalid_problem";
    case ErrorCode::spacelike_violation: return "spacelike_violation";
    case ErrorCode::picard_stall: return "picard_stall";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::config_error: return "config_error";
    case ErrorCode::usage_error: return "usage_error";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// MetricField

MetricField MetricField::flat(std::size_t triangle_count) {
  return uniform(triangle_count, 1.0, Mat2::Identity());
}

MetricField MetricField::uniform(std::size_t triangle_count, double alpha, const Mat2& sigma) {
  MetricField m;
  m.sigma.assign(triangle_count, sigma);
  m.alpha.assign(triangle_count, alpha);
  return m;
}

void MetricField::validate(const Mesh& mesh) const {
  if (sigma.size() != mesh.triangle_count() || alpha.size() != mesh.triangle_count())
    throw Error(ErrorCode::invalid_argument, "metric field size does not match triangle count");
  for (std::size_t t = 0; t < alpha.size(); ++t) {
    if (!std::isfinite(alpha[t]) || alpha[t] <= 0.0)
      throw Error(ErrorCode::invalid_argument,
                  "lapse must be finite and positive (triangle " + std::to_string(t) + ")");
    if (!is_spd(sigma[t]))
      throw Error(ErrorCode::invalid_argument,
                  "metric is not symmetric positive definite (triangle " + std::to_string(t) + ")");
  }
}

MetricField MetricField::conformal() const {
  MetricField m;
  m.sigma.resize(sigma.size());
  m.alpha.assign(alpha.size(), 1.0);
  for (std::size_t t = 0; t < sigma.size(); ++t) m.sigma[t] = alpha[t] * alpha[t] * sigma[t];
  return m;
}

// ---------------------------------------------------------------------------
// Mesh

Mesh::Mesh(std::vector<Vec2> nodes, std::vector<Triangle> triangles, double min_angle_deg)
    : nodes_(std::move(nodes)), triangles_(std::move(triangles)) {
  if (nodes_.empty() || triangles_.empty())
    throw Error(ErrorCode::invalid_geometry, "mesh needs at least one triangle");
  const int n = static_cast<int>(nodes_.size());
  for (const Vec2& p : nodes_)
    if (!p.allFinite()) throw Error(ErrorCode::invalid_geometry, "non-finite node coordinate");
  std::vector<char> used(nodes_.size(), 0);
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    Triangle& tri = triangles_[t];
    for (int v : tri) {
      if (v < 0 || v >= n)
        throw Error(ErrorCode::invalid_geometry, "triangle " + std::to_string(t) + " references a missing node");
      used[v] = 1;
    }
    const double o = cross(nodes_[tri[1]] - nodes_[tri[0]], nodes_[tri[2]] - nodes_[tri[0]]);
    if (o < 0.0) std::swap(tri[1], tri[2]);
  }
  for (int i = 0; i < n; ++i)
    if (!used[i]) throw Error(ErrorCode::invalid_geometry, "node " + std::to_string(i) + " is not used by any triangle");

  build_geometry();
  build_topology();
  build_grid();

  if (min_angle_deg > 0.0 && min_angle_deg_ < min_angle_deg - 1e-9) {
    std::ostringstream os;
    os << "minimum interior angle " << min_angle_deg_ << " deg is below the quality floor " << min_angle_deg;
    throw Error(ErrorCode::invalid_geometry, os.str());
  }
}

void Mesh::build_geometry() {
  const std::size_t nt = triangles_.size();
  areas_.resize(nt);
  shape_grads_.resize(nt);
  total_area_ = 0.0;
  double min_angle = std::numbers::pi;
  for (std::size_t t = 0; t < nt; ++t) {
    const Vec2& a = nodes_[triangles_[t][0]];
    const Vec2& b = nodes_[triangles_[t][1]];
    const Vec2& c = nodes_[triangles_[t][2]];
    const double twice = cross(b - a, c - a);
    if (!(twice > 0.0))
      throw Error(ErrorCode::invalid_geometry, "triangle " + std::to_string(t) + " has non-positive area");
    areas_[t] = 0.5 * twice;
    total_area_ += areas_[t];
    // grad eta_i = rot90(opposite edge) / (2A)
    const std::array<Vec2, 3> p{a, b, c};
    for (int i = 0; i < 3; ++i) {
      const Vec2 e = p[(i + 2) % 3] - p[(i + 1) % 3];
      shape_grads_[t][i] = Vec2(-e.y(), e.x()) / twice;
    }
    min_angle = std::min({min_angle, angle_at(a, b, c), angle_at(b, c, a), angle_at(c, a, b)});
  }
  min_angle_deg_ = min_angle * 180.0 / std::numbers::pi;
}

void Mesh::build_topology() {
  std::unordered_map<std::uint64_t, int> index;
  index.reserve(triangles_.size() * 2);
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    for (int i = 0; i < 3; ++i) {
      const int a = triangles_[t][(i + 1) % 3];
      const int b = triangles_[t][(i + 2) % 3];
      const auto key = edge_key(a, b);
      auto it = index.find(key);
      if (it == index.end()) {
        index.emplace(key, static_cast<int>(edges_.size()));
        edges_.emplace_back(std::min(a, b), std::max(a, b));
        edge_triangles_.push_back({static_cast<int>(t), -1});
      } else {
        auto& et = edge_triangles_[it->second];
        if (et[1] >= 0)
          throw Error(ErrorCode::invalid_geometry, "edge shared by more than two triangles (non-conforming mesh)");
        et[1] = static_cast<int>(t);
      }
    }
  }
  const std::size_t n = nodes_.size();
  on_boundary_.assign(n, 0);
  node_edges_.assign(n, {});
  node_triangles_.assign(n, {});
  h_max_ = 0.0;
  h_min_ = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto [a, b] = edges_[e];
    node_edges_[a].emplace_back(b, static_cast<int>(e));
    node_edges_[b].emplace_back(a, static_cast<int>(e));
    const double len = (nodes_[a] - nodes_[b]).norm();
    h_max_ = std::max(h_max_, len);
    h_min_ = std::min(h_min_, len);
    if (edge_triangles_[e][1] < 0) {
      // orient boundary edges along the owning triangle (domain on the left)
      const Triangle& tri = triangles_[edge_triangles_[e][0]];
      int ea = a, eb = b;
      for (int i = 0; i < 3; ++i)
        if (tri[i] == b && tri[(i + 1) % 3] == a) std::swap(ea, eb);
      boundary_edges_.emplace_back(ea, eb);
      on_boundary_[a] = 1;
      on_boundary_[b] = 1;
    }
  }
  for (std::size_t t = 0; t < triangles_.size(); ++t)
    for (int v : triangles_[t]) node_triangles_[v].push_back(static_cast<int>(t));
  for (std::size_t i = 0; i < n; ++i)
    if (on_boundary_[i]) boundary_nodes_.push_back(static_cast<int>(i));
}

void Mesh::build_grid() {
  Vec2 lo = nodes_.front(), hi = nodes_.front();
  for (const Vec2& p : nodes_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  grid_cell_ = std::max(h_max_, 1e-12);
  grid_origin_ = lo;
  grid_nx_ = std::max(1, static_cast<int>(std::ceil((hi.x() - lo.x()) / grid_cell_)) + 1);
  grid_ny_ = std::max(1, static_cast<int>(std::ceil((hi.y() - lo.y()) / grid_cell_)) + 1);
  grid_.assign(static_cast<std::size_t>(grid_nx_) * grid_ny_, {});
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    Vec2 tlo = nodes_[triangles_[t][0]], thi = tlo;
    for (int v : triangles_[t]) {
      tlo = tlo.cwiseMin(nodes_[v]);
      thi = thi.cwiseMax(nodes_[v]);
    }
    const int i0 = std::clamp(static_cast<int>((tlo.x() - lo.x()) / grid_cell_), 0, grid_nx_ - 1);
    const int i1 = std::clamp(static_cast<int>((thi.x() - lo.x()) / grid_cell_), 0, grid_nx_ - 1);
    const int j0 = std::clamp(static_cast<int>((tlo.y() - lo.y()) / grid_cell_), 0, grid_ny_ - 1);
    const int j1 = std::clamp(static_cast<int>((thi.y() - lo.y()) / grid_cell_), 0, grid_ny_ - 1);
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) grid_[static_cast<std::size_t>(j) * grid_nx_ + i].push_back(static_cast<int>(t));
  }
}

Vec2 Mesh::centroid(std::size_t t) const {
  const Triangle& tri = triangles_[t];
  return (nodes_[tri[0]] + nodes_[tri[1]] + nodes_[tri[2]]) / 3.0;
}

PointLocation Mesh::locate(const Vec2& p) const {
  PointLocation best;
  double best_min = -std::numeric_limits<double>::infinity();
  const int i = static_cast<int>(std::floor((p.x() - grid_origin_.x()) / grid_cell_));
  const int j = static_cast<int>(std::floor((p.y() - grid_origin_.y()) / grid_cell_));
  if (i < 0 || j < 0 || i >= grid_nx_ || j >= grid_ny_) return best;
  for (int t : grid_[static_cast<std::size_t>(j) * grid_nx_ + i]) {
    const Triangle& tri = triangles_[t];
    const Vec2& a = nodes_[tri[0]];
    const Vec2& b = nodes_[tri[1]];
    const Vec2& c = nodes_[tri[2]];
    const double d = cross(b - a, c - a);
    const std::array<double, 3> lam{cross(b - p, c - p) / d, cross(c - p, a - p) / d, cross(a - p, b - p) / d};
    const double m = std::min({lam[0], lam[1], lam[2]});
    // Prefer exact containment; otherwise keep the least-violating candidate
    // so points on shared edges still resolve.
    if (m > best_min) {
      best_min = m;
      best.triangle = t;
      best.barycentric = lam;
    }
  }
  if (best_min < -1e-12) return PointLocation{};
  if (best.triangle >= 0) {
    // Snap barycentrics that are zero up to round-off.
    for (double& l : best.barycentric) l = std::max(l, 0.0);
    const double s = best.barycentric[0] + best.barycentric[1] + best.barycentric[2];
    for (double& l : best.barycentric) l /= s;
  }
  return best;
}

std::vector<int> Mesh::triangles_near(const Vec2& p, double r) const {
  const int i0 = std::clamp(static_cast<int>(std::floor((p.x() - r - grid_origin_.x()) / grid_cell_)), 0, grid_nx_ - 1);
  const int i1 = std::clamp(static_cast<int>(std::floor((p.x() + r - grid_origin_.x()) / grid_cell_)), 0, grid_nx_ - 1);
  const int j0 = std::clamp(static_cast<int>(std::floor((p.y() - r - grid_origin_.y()) / grid_cell_)), 0, grid_ny_ - 1);
  const int j1 = std::clamp(static_cast<int>(std::floor((p.y() + r - grid_origin_.y()) / grid_cell_)), 0, grid_ny_ - 1);
  std::vector<int> out;
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i)
      for (int t : grid_[static_cast<std::size_t>(j) * grid_nx_ + i]) out.push_back(t);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  std::vector<int> hits;
  for (int t : out) {
    Vec2 lo = nodes_[triangles_[t][0]], hi = lo;
    for (int v : triangles_[t]) {
      lo = lo.cwiseMin(nodes_[v]);
      hi = hi.cwiseMax(nodes_[v]);
    }
    const Vec2 q = p.cwiseMax(lo).cwiseMin(hi);
    if ((q - p).norm() <= r) hits.push_back(t);
  }
  return hits;
}

double Mesh::distance_to_boundary(const Vec2& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [a, b] : boundary_edges_) {
    const Vec2 ab = nodes_[b] - nodes_[a];
    const double s = std::clamp((p - nodes_[a]).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    best = std::min(best, (nodes_[a] + s * ab - p).norm());
  }
  return best;
}

// ---------------------------------------------------------------------------
// Operators

TriangleVectorField p1_gradient(const Mesh& mesh, const NodalField& u) {
  if (u.size() != mesh.node_count())
    throw Error(ErrorCode::invalid_argument, "nodal field size does not match node count");
  TriangleVectorField g;
  g.values.resize(mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangle(t);
    const auto& dg = mesh.shape_gradients(t);
    g.values[t] = u[tri[0]] * dg[0] + u[tri[1]] * dg[1] + u[tri[2]] * dg[2];
  }
  return g;
}

SparseMatrix assemble_weighted_stiffness(const Mesh& mesh, std::span<const Mat2> weights) {
  if (weights.size() != mesh.triangle_count())
    throw Error(ErrorCode::invalid_argument, "weight count does not match triangle count");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const Mat2& w = weights[t];
    if (!is_spd(w))
      throw Error(ErrorCode::invalid_argument, "stiffness weight is not SPD on triangle " + std::to_string(t));
    const auto& tri = mesh.triangle(t);
    const auto& dg = mesh.shape_gradients(t);
    const double a = mesh.area(t);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trip.emplace_back(tri[i], tri[j], a * dg[i].dot(w * dg[j]));
  }
  const auto n = static_cast<Eigen::Index>(mesh.node_count());
  SparseMatrix k(n, n);
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

NodalField graph_distance(const Mesh& mesh, const MetricField& metric, int source) {
  if (source < 0 || static_cast<std::size_t>(source) >= mesh.node_count())
    throw Error(ErrorCode::invalid_argument, "graph_distance source index out of range");
  metric.validate(mesh);
  const auto& edges = mesh.edges();
  const auto& et = mesh.edge_triangles();
  auto measure = [&](int t, const Vec2& v) { return metric.alpha[t] * std::sqrt(v.dot(metric.sigma[t] * v)); };
  auto opposite = [&](int t, int a, int b) {
    for (int k : mesh.triangle(t))
      if (k != a && k != b) return k;
    return -1;
  };

  // Mesh edges, plus the chord across each convex pair of triangles. A chord is
  // measured piecewise through both triangles, so it is the length of an actual
  // path in the domain and distances stay upper bounds.
  std::vector<std::vector<std::pair<int, double>>> adj(mesh.node_count());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [a, b] = edges[e];
    const Vec2 v = mesh.node(b) - mesh.node(a);
    double sum = 0.0;
    int cnt = 0;
    for (int t : et[e]) {
      if (t < 0) continue;
      sum += measure(t, v);
      ++cnt;
    }
    adj[a].emplace_back(b, sum / cnt);
    adj[b].emplace_back(a, sum / cnt);
    if (et[e][0] < 0 || et[e][1] < 0) continue;
    const int i = opposite(et[e][0], a, b), k = opposite(et[e][1], a, b);
    const Vec2 pa = mesh.node(a), pi = mesh.node(i), pk = mesh.node(k);
    const Vec2 c = pk - pi;
    const double den = c.x() * v.y() - c.y() * v.x();
    if (den == 0.0) continue;
    const Vec2 w = pa - pi;
    const double s = (w.x() * v.y() - w.y() * v.x()) / den;  // along the chord
    const double r = (w.x() * c.y() - w.y() * c.x()) / den;   // along the edge
    if (!(s > 0.0 && s < 1.0 && r > 0.0 && r < 1.0)) continue;
    const double len = measure(et[e][0], s * c) + measure(et[e][1], (1.0 - s) * c);
    adj[i].emplace_back(k, len);
    adj[k].emplace_back(i, len);
  }

  NodalField dist(mesh.node_count(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[source] = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v]) continue;
    for (const auto& [nb, len] : adj[v]) {
      const double nd = d + len;
      if (nd < dist[nb]) {
        dist[nb] = nd;
        queue.emplace(nd, nb);
      }
    }
  }
  for (double d : dist.values)
    if (!std::isfinite(d)) throw Error(ErrorCode::invalid_geometry, "mesh is not connected");
  return dist;
}

// ---------------------------------------------------------------------------
// I/O

void write_mesh_files(const Mesh& mesh, const std::string& node_path, const std::string& triangle_path) {
  std::ofstream nf(node_path);
  std::ofstream tf(triangle_path);
  if (!nf || !tf) throw Error(ErrorCode::io_error, "cannot open mesh files for writing");
  nf << std::setprecision(17);
  for (std::size_t i = 0; i < mesh.node_count(); ++i)
    nf << mesh.node(i).x() << ' ' << mesh.node(i).y() << ' ' << (mesh.is_boundary(i) ? 1 : 0) << '\n';
  for (const auto& tri : mesh.triangles()) tf << tri[0] << ' ' << tri[1] << ' ' << tri[2] << '\n';
}

Mesh read_mesh_files(const std::string& node_path, const std::string& triangle_path, double min_angle_deg) {
  std::ifstream nf(node_path);
  std::ifstream tf(triangle_path);
  if (!nf) throw Error(ErrorCode::io_error, "cannot open node file " + node_path);
  if (!tf) throw Error(ErrorCode::io_error, "cannot open triangle file " + triangle_path);
  std::vector<Vec2> nodes;
  std::vector<int> flags;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(nf, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    double x, y;
    int flag;
    if (!(is >> x >> y >> flag))
      throw Error(ErrorCode::io_error, node_path + ":" + std::to_string(lineno) + ": expected 'x y boundary_flag'");
    nodes.emplace_back(x, y);
    flags.push_back(flag);
  }
  std::vector<Triangle> tris;
  lineno = 0;
  while (std::getline(tf, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    Triangle t;
    if (!(is >> t[0] >> t[1] >> t[2]))
      throw Error(ErrorCode::io_error, triangle_path + ":" + std::to_string(lineno) + ": expected 'i j k'");
    tris.push_back(t);
  }
  Mesh mesh(std::move(nodes), std::move(tris), min_angle_deg);
  for (std::size_t i = 0; i < flags.size(); ++i)
    if ((flags[i] != 0) != mesh.is_boundary(i))
      throw Error(ErrorCode::io_error, "boundary flag of node " + std::to_string(i) + " disagrees with mesh topology");
  return mesh;
}

void write_vtk(const std::string& path, const Mesh& mesh,
               const std::map<std::string, const NodalField*>& point_data,
               const std::map<std::string, const TriangleField*>& cell_data) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::io_error, "cannot open " + path);
  os << std::setprecision(17);
  os << "# vtk DataFile Version 3.0\nbifem field export\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.node_count() << " double\n";
  for (const Vec2& p : mesh.nodes()) os << p.x() << ' ' << p.y() << " 0\n";
  os << "CELLS " << mesh.triangle_count() << ' ' << 4 * mesh.triangle_count() << '\n';
  for (const auto& t : mesh.triangles()) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os << "CELL_TYPES " << mesh.triangle_count() << '\n';
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) os << "5\n";
  if (!point_data.empty()) {
    os << "POINT_DATA " << mesh.node_count() << '\n';
    for (const auto& [name, f] : point_data) {
      os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : f->values) os << v << '\n';
    }
  }
  if (!cell_data.empty()) {
    os << "CELL_DATA " << mesh.triangle_count() << '\n';
    for (const auto& [name, f] : cell_data) {
      os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : f->values) os << v << '\n';
    }
  }
}

}  // namespace bifem
