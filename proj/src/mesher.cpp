// Conforming Delaunay refinement for planar straight-line domains.
//
// Seeds (a ring layout for disks, a jittered triangular lattice for polygons)
// are triangulated incrementally; boundary segments are split until none is
// encroached, then triangles below the angle floor or above the size bound
// are refined by circumcenter insertion (Ruppert's rule: a circumcenter that
// encroaches a segment splits the segment instead).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "bifem/error.hpp"
#include "bifem/mesh.hpp"
#include "delaunay.hpp"

namespace bifem {

namespace {

using detail::Delaunay;

std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}

bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double s = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + s * ab - p).norm();
}

double distance_to_polygon(const std::vector<Vec2>& poly, const Vec2& p) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i)
    d = std::min(d, distance_to_segment(p, poly[i], poly[(i + 1) % poly.size()]));
  return d;
}

bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double o1 = detail::orient2d(a, b, c);
  const double o2 = detail::orient2d(a, b, d);
  const double o3 = detail::orient2d(c, d, a);
  const double o4 = detail::orient2d(c, d, b);
  if (((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0))) return true;
  auto on = [](const Vec2& p, const Vec2& q, const Vec2& r, double o) {
    return o == 0.0 && std::min(p.x(), q.x()) <= r.x() && r.x() <= std::max(p.x(), q.x()) &&
           std::min(p.y(), q.y()) <= r.y() && r.y() <= std::max(p.y(), q.y());
  };
  return on(a, b, c, o1) || on(a, b, d, o2) || on(c, d, a, o3) || on(c, d, b, o4);
}

double min_angle(const Vec2& a, const Vec2& b, const Vec2& c) {
  auto ang = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    const Vec2 u = q - p, v = r - p;
    return std::atan2(std::abs(u.x() * v.y() - u.y() * v.x()), u.dot(v));
  };
  return std::min({ang(a, b, c), ang(b, c, a), ang(c, a, b)});
}

// diametral-circle test for segment (a, b)
bool encroaches(const Vec2& p, const Vec2& a, const Vec2& b) {
  return (a - p).dot(b - p) < -1e-12 * (b - a).squaredNorm();
}

struct Pslg {
  std::vector<Vec2> outline;              // CCW boundary polygon (for inside tests)
  std::vector<Vec2> boundary_points;      // boundary seeds in order
  std::vector<Vec2> interior_points;      // interior seeds
};

Mesh build(const Pslg& pslg, double h, const MeshOptions& options) {
  Vec2 lo = pslg.outline.front(), hi = lo;
  for (const Vec2& p : pslg.outline) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Delaunay dt(lo, hi);

  std::vector<int> bid;
  bid.reserve(pslg.boundary_points.size());
  for (const Vec2& p : pslg.boundary_points) bid.push_back(dt.insert(p));
  for (const Vec2& p : pslg.interior_points) dt.insert(p);

  std::vector<std::pair<int, int>> segments;
  for (std::size_t i = 0; i < bid.size(); ++i) segments.emplace_back(bid[i], bid[(i + 1) % bid.size()]);

  const double floor_rad = options.min_angle_deg * std::numbers::pi / 180.0;
  const double size_bound = 1.4 * h;
  const int max_rounds = 400;

  auto inside = [&](const Vec2& p) { return point_in_polygon(pslg.outline, p); };

  for (int round = 0;; ++round) {
    if (round == max_rounds)
      throw Error(ErrorCode::invalid_geometry, "mesh refinement did not reach the quality floor");

    const auto& pts = dt.points();
    const auto& tris = dt.tris();
    std::unordered_map<std::uint64_t, std::array<int, 2>> edge_tris;
    edge_tris.reserve(tris.size() * 2);
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if (!tris[t].alive) continue;
      for (int i = 0; i < 3; ++i) {
        auto [it, fresh] = edge_tris.try_emplace(edge_key(tris[t].v[(i + 1) % 3], tris[t].v[(i + 2) % 3]),
                                                 std::array<int, 2>{static_cast<int>(t), -1});
        if (!fresh) it->second[1] = static_cast<int>(t);
      }
    }

    // Phase 1: every segment must be an unencroached edge.
    std::vector<std::pair<int, int>> next;
    bool split = false;
    for (const auto& [a, b] : segments) {
      bool bad = true;
      if (auto it = edge_tris.find(edge_key(a, b)); it != edge_tris.end()) {
        bad = false;
        for (int t : it->second) {
          if (t < 0) continue;
          for (int v : tris[t].v)
            if (v != a && v != b && v >= 3 && encroaches(pts[v], pts[a], pts[b])) bad = true;
        }
      }
      if (bad) {
        const Vec2 m = 0.5 * (pts[a] + pts[b]);
        const int mid = dt.insert(m);
        next.emplace_back(a, mid);
        next.emplace_back(mid, b);
        split = true;
      } else {
        next.emplace_back(a, b);
      }
    }
    segments = std::move(next);
    if (split) continue;

    // Phase 2: quality.
    struct Candidate {
      Vec2 center;
      double radius;
    };
    std::vector<Candidate> candidates;
    for (const auto& t : tris) {
      if (!t.alive || dt.has_super_vertex(t)) continue;
      const Vec2& a = pts[t.v[0]];
      const Vec2& b = pts[t.v[1]];
      const Vec2& c = pts[t.v[2]];
      if (!inside((a + b + c) / 3.0)) continue;
      const double longest = std::max({(a - b).norm(), (b - c).norm(), (c - a).norm()});
      if (min_angle(a, b, c) < floor_rad - 1e-9 || longest > size_bound) {
        const Vec2 cc = detail::circumcenter(a, b, c);
        candidates.push_back({cc, (cc - a).norm()});
      }
    }
    if (candidates.empty()) break;

    std::vector<Vec2> accepted;
    std::unordered_set<std::uint64_t> to_split;
    for (const auto& cand : candidates) {
      bool near = false;
      for (const Vec2& q : accepted)
        if ((q - cand.center).norm() < 0.5 * cand.radius) {
          near = true;
          break;
        }
      if (near) continue;
      bool enc = false;
      for (const auto& [a, b] : segments)
        if (encroaches(cand.center, pts[a], pts[b])) {
          to_split.insert(edge_key(a, b));
          enc = true;
        }
      if (enc || !inside(cand.center)) continue;
      accepted.push_back(cand.center);
    }
    if (!to_split.empty()) {
      std::vector<std::pair<int, int>> refined;
      for (const auto& [a, b] : segments) {
        if (to_split.count(edge_key(a, b))) {
          const int mid = dt.insert(0.5 * (dt.points()[a] + dt.points()[b]));
          refined.emplace_back(a, mid);
          refined.emplace_back(mid, b);
        } else {
          refined.emplace_back(a, b);
        }
      }
      segments = std::move(refined);
      continue;  // segment splits change the picture; recompute candidates
    }
    if (accepted.empty())
      throw Error(ErrorCode::invalid_geometry, "mesh refinement stalled below the quality floor");
    for (const Vec2& c : accepted) dt.insert(c);
  }

  // Extract interior triangles and compact vertex numbering.
  const auto& pts = dt.points();
  std::vector<int> remap(pts.size(), -1);
  std::vector<Vec2> nodes;
  std::vector<Triangle> out;
  for (const auto& t : dt.tris()) {
    if (!t.alive || dt.has_super_vertex(t)) continue;
    if (!inside((pts[t.v[0]] + pts[t.v[1]] + pts[t.v[2]]) / 3.0)) continue;
    Triangle tri;
    for (int i = 0; i < 3; ++i) {
      int& r = remap[t.v[i]];
      if (r < 0) {
        r = static_cast<int>(nodes.size());
        nodes.push_back(pts[t.v[i]]);
      }
      tri[i] = r;
    }
    out.push_back(tri);
  }
  Mesh mesh(std::move(nodes), std::move(out), options.min_angle_deg);
  if (mesh.boundary_edges().size() != segments.size())
    throw Error(ErrorCode::invalid_geometry, "triangulation boundary does not match the domain outline");
  return mesh;
}

void add_required(Pslg& pslg, const std::vector<Vec2>& required, double h) {
  for (const Vec2& r : required) {
    if (!point_in_polygon(pslg.outline, r) || distance_to_polygon(pslg.outline, r) < 1e-9 * h)
      throw Error(ErrorCode::invalid_geometry, "required mesh point lies outside the domain");
  }
  std::erase_if(pslg.interior_points, [&](const Vec2& p) {
    for (const Vec2& r : required)
      if ((p - r).norm() < 0.55 * h) return true;
    return false;
  });
  for (const Vec2& r : required) pslg.interior_points.push_back(r);
}

}  // namespace

Mesh triangulate_disk(double radius, double h, const MeshOptions& options) {
  if (!(radius > 0.0) || !(h > 0.0) || !(h < radius) || !std::isfinite(radius))
    throw Error(ErrorCode::invalid_argument, "triangulate_disk requires radius > 0 and 0 < h < radius");
  const int rings = static_cast<int>(std::ceil(radius / h - 1e-9));
  const double dr = radius / rings;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> jit(-options.jitter, options.jitter);

  Pslg pslg;
  const int nb = std::max(6, static_cast<int>(std::lround(2.0 * std::numbers::pi * rings)));
  for (int k = 0; k < nb; ++k) {
    const double th = 2.0 * std::numbers::pi * k / nb;
    pslg.boundary_points.emplace_back(radius * std::cos(th), radius * std::sin(th));
  }
  pslg.outline = pslg.boundary_points;

  pslg.interior_points.emplace_back(0.0, 0.0);
  for (int ring = 1; ring < rings; ++ring) {
    const double r = ring * dr;
    const int n = std::max(6, static_cast<int>(std::lround(2.0 * std::numbers::pi * ring)));
    const double offset = (ring % 2) ? 0.5 : 0.0;
    for (int k = 0; k < n; ++k) {
      const double th = 2.0 * std::numbers::pi * (k + offset) / n;
      const double rr = r + jit(rng) * dr;
      const double tt = th + jit(rng) * dr / r;
      pslg.interior_points.emplace_back(rr * std::cos(tt), rr * std::sin(tt));
    }
  }
  std::vector<Vec2> required;
  for (const Vec2& p : options.required_points)
    if (p.norm() > 1e-12 * radius) required.push_back(p);
  add_required(pslg, required, dr);
  // keep the exact origin node even if a required point displaced it
  if (std::none_of(pslg.interior_points.begin(), pslg.interior_points.end(),
                   [](const Vec2& p) { return p.norm() == 0.0; }))
    pslg.interior_points.emplace_back(0.0, 0.0);
  return build(pslg, h, options);
}

Mesh triangulate_polygon(std::span<const Vec2> vertices, double h, const MeshOptions& options) {
  if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorCode::invalid_argument, "triangulate_polygon requires h > 0");
  std::vector<Vec2> poly(vertices.begin(), vertices.end());
  if (poly.size() >= 2 && (poly.front() - poly.back()).norm() == 0.0) poly.pop_back();
  if (poly.size() < 3) throw Error(ErrorCode::invalid_geometry, "polygon needs at least three vertices");
  for (const Vec2& p : poly)
    if (!p.allFinite()) throw Error(ErrorCode::invalid_geometry, "polygon vertex is not finite");
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    if ((poly[i] - poly[(i + 1) % n]).norm() == 0.0)
      throw Error(ErrorCode::invalid_geometry, "polygon has a repeated vertex");
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
        throw Error(ErrorCode::invalid_geometry, "polygon is self-intersecting");
    }
  }
  double signed_area = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    signed_area += a.x() * b.y() - a.y() * b.x();
  }
  if (signed_area == 0.0) throw Error(ErrorCode::invalid_geometry, "polygon has zero area");
  if (signed_area < 0.0) std::reverse(poly.begin(), poly.end());
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& prev = poly[(i + n - 1) % n];
    const Vec2& cur = poly[i];
    const Vec2& nxt = poly[(i + 1) % n];
    const Vec2 u = nxt - cur, v = prev - cur;
    double ang = std::atan2(u.x() * v.y() - u.y() * v.x(), u.dot(v));
    if (ang < 0) ang += 2.0 * std::numbers::pi;
    if (ang * 180.0 / std::numbers::pi < options.min_angle_deg)
      throw Error(ErrorCode::invalid_geometry, "polygon corner is sharper than the mesh quality floor");
  }

  Pslg pslg;
  pslg.outline = poly;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    const int pieces = std::max(1, static_cast<int>(std::ceil((b - a).norm() / h - 1e-9)));
    for (int k = 0; k < pieces; ++k) pslg.boundary_points.push_back(a + (b - a) * (double(k) / pieces));
  }
  Vec2 lo = poly.front(), hi = lo;
  for (const Vec2& p : poly) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> jit(-options.jitter, options.jitter);
  const double dy = h * std::sqrt(3.0) / 2.0;
  const int rows = static_cast<int>(std::ceil((hi.y() - lo.y()) / dy)) + 1;
  const int cols = static_cast<int>(std::ceil((hi.x() - lo.x()) / h)) + 2;
  for (int j = 0; j < rows; ++j) {
    for (int i = 0; i < cols; ++i) {
      const double x = lo.x() + (i + ((j % 2) ? 0.5 : 0.0)) * h + jit(rng) * h;
      const double y = lo.y() + j * dy + jit(rng) * h;
      const Vec2 p(x, y);
      if (point_in_polygon(poly, p) && distance_to_polygon(poly, p) >= 0.55 * h) pslg.interior_points.push_back(p);
    }
  }
  add_required(pslg, options.required_points, h);
  return build(pslg, h, options);
}

}  // namespace bifem
