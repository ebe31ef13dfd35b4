#include "delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bifem::detail {

double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  return alift * (bdx * cdy - bdy * cdx) + blift * (cdx * ady - cdy * adx) +
         clift * (adx * bdy - ady * bdx);
}

Vec2 circumcenter(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Vec2 ab = b - a;
  const Vec2 ac = c - a;
  const double d = 2.0 * (ab.x() * ac.y() - ab.y() * ac.x());
  const double ab2 = ab.squaredNorm();
  const double ac2 = ac.squaredNorm();
  const double ux = (ac.y() * ab2 - ab.y() * ac2) / d;
  const double uy = (ab.x() * ac2 - ac.x() * ab2) / d;
  return a + Vec2(ux, uy);
}

Delaunay::Delaunay(const Vec2& lo, const Vec2& hi) {
  const Vec2 c = 0.5 * (lo + hi);
  const double extent = std::max({hi.x() - lo.x(), hi.y() - lo.y(), 1e-300});
  merge_tol_ = 1e-10 * extent;
  const double big = 50.0 * extent;
  points_.push_back(c + Vec2(-big, -big));
  points_.push_back(c + Vec2(big, -big));
  points_.push_back(c + Vec2(0.0, big));
  Tri t;
  t.v = {0, 1, 2};
  tris_.push_back(t);
}

int Delaunay::new_tri() {
  if (!free_.empty()) {
    const int t = free_.back();
    free_.pop_back();
    tris_[t] = Tri{};
    return t;
  }
  tris_.emplace_back();
  return static_cast<int>(tris_.size()) - 1;
}

int Delaunay::locate(const Vec2& p, int start) const {
  int t = start;
  if (t < 0 || t >= static_cast<int>(tris_.size()) || !tris_[t].alive) {
    t = 0;
    while (!tris_[t].alive) ++t;
  }
  const std::size_t max_steps = 4 * tris_.size() + 16;
  int rot = 0;
  for (std::size_t step = 0; step < max_steps; ++step) {
    const Tri& tri = tris_[t];
    bool moved = false;
    for (int k = 0; k < 3; ++k) {
      const int i = (k + rot) % 3;
      const Vec2& a = points_[tri.v[(i + 1) % 3]];
      const Vec2& b = points_[tri.v[(i + 2) % 3]];
      if (orient2d(a, b, p) < 0.0 && tri.nbr[i] >= 0) {
        t = tri.nbr[i];
        moved = true;
        break;
      }
    }
    if (!moved) return t;
    rot = (rot + 1) % 3;
  }
  // Walk failed to settle (round-off cycling); scan.
  for (int s = 0; s < static_cast<int>(tris_.size()); ++s) {
    const Tri& tri = tris_[s];
    if (!tri.alive) continue;
    const Vec2& a = points_[tri.v[0]];
    const Vec2& b = points_[tri.v[1]];
    const Vec2& c = points_[tri.v[2]];
    if (orient2d(a, b, p) >= 0 && orient2d(b, c, p) >= 0 && orient2d(c, a, p) >= 0) return s;
  }
  return t;
}

int Delaunay::insert(const Vec2& p) {
  const int t0 = locate(p, last_);
  for (int k = 0; k < 3; ++k) {
    const int v = tris_[t0].v[k];
    if ((points_[v] - p).norm() <= merge_tol_) return v;
  }

  const int pid = static_cast<int>(points_.size());
  points_.push_back(p);

  in_cavity_.resize(tris_.size(), 0);
  cavity_.clear();
  cavity_.push_back(t0);
  in_cavity_[t0] = 1;
  for (std::size_t k = 0; k < cavity_.size(); ++k) {
    const Tri& tri = tris_[cavity_[k]];
    for (int i = 0; i < 3; ++i) {
      const int n = tri.nbr[i];
      if (n < 0 || in_cavity_[n]) continue;
      const Tri& nt = tris_[n];
      if (incircle(points_[nt.v[0]], points_[nt.v[1]], points_[nt.v[2]], p) > 0.0) {
        in_cavity_[n] = 1;
        cavity_.push_back(n);
      }
    }
  }

  struct BoundaryEdge {
    int a, b, outer;
  };
  std::vector<BoundaryEdge> boundary;
  // Grow the cavity until every boundary edge sees p strictly on its inner
  // side, so the new fan is star-shaped even under round-off.
  for (;;) {
    boundary.clear();
    bool grown = false;
    for (std::size_t k = 0; k < cavity_.size() && !grown; ++k) {
      const Tri& tri = tris_[cavity_[k]];
      for (int i = 0; i < 3; ++i) {
        const int n = tri.nbr[i];
        if (n >= 0 && in_cavity_[n]) continue;
        const int a = tri.v[(i + 1) % 3];
        const int b = tri.v[(i + 2) % 3];
        if (orient2d(points_[a], points_[b], p) <= 0.0 && n >= 0) {
          in_cavity_[n] = 1;
          cavity_.push_back(n);
          grown = true;
          break;
        }
        boundary.push_back({a, b, n});
      }
    }
    if (!grown) break;
  }

  for (int c : cavity_) {
    in_cavity_[c] = 0;
    tris_[c].alive = false;
    free_.push_back(c);
  }

  std::vector<std::pair<int, int>> by_start;
  std::vector<std::pair<int, int>> by_end;
  by_start.reserve(boundary.size());
  by_end.reserve(boundary.size());
  std::vector<int> created;
  created.reserve(boundary.size());
  for (const auto& e : boundary) {
    const int t = new_tri();
    if (static_cast<std::size_t>(t) >= in_cavity_.size()) in_cavity_.resize(t + 1, 0);
    Tri& nt = tris_[t];
    nt.v = {e.a, e.b, pid};
    nt.nbr[2] = e.outer;
    if (e.outer >= 0) {
      Tri& ot = tris_[e.outer];
      for (int j = 0; j < 3; ++j) {
        const int oa = ot.v[(j + 1) % 3];
        const int ob = ot.v[(j + 2) % 3];
        if (oa == e.b && ob == e.a) ot.nbr[j] = t;
      }
    }
    by_start.emplace_back(e.a, t);
    by_end.emplace_back(e.b, t);
    created.push_back(t);
  }
  for (int t : created) {
    Tri& nt = tris_[t];
    const int a = nt.v[0];
    const int b = nt.v[1];
    for (const auto& [v, s] : by_start)
      if (v == b) nt.nbr[0] = s;
    for (const auto& [v, s] : by_end)
      if (v == a) nt.nbr[1] = s;
  }
  last_ = created.empty() ? 0 : created.front();
  return pid;
}

}  // namespace bifem::detail
