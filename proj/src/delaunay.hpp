#pragma once

#include <array>
#include <vector>

#include "bifem/mesh.hpp"

namespace bifem::detail {

double orient2d(const Vec2& a, const Vec2& b, const Vec2& c);
double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d);
Vec2 circumcenter(const Vec2& a, const Vec2& b, const Vec2& c);

// Incremental Bowyer-Watson triangulation inside a large enclosing triangle.
// Vertices 0..2 are the enclosing triangle and never appear in extracted
// triangles.
class Delaunay {
 public:
  struct Tri {
    std::array<int, 3> v{};
    std::array<int, 3> nbr{-1, -1, -1};  // neighbor opposite v[i]
    bool alive = true;
  };

  Delaunay(const Vec2& lo, const Vec2& hi);

  /// Returns the vertex index, or the index of an existing vertex closer than
  /// the merge tolerance.
  int insert(const Vec2& p);

  const std::vector<Vec2>& points() const { return points_; }
  const std::vector<Tri>& tris() const { return tris_; }
  bool has_super_vertex(const Tri& t) const { return t.v[0] < 3 || t.v[1] < 3 || t.v[2] < 3; }

 private:
  int locate(const Vec2& p, int start) const;
  int new_tri();

  std::vector<Vec2> points_;
  std::vector<Tri> tris_;
  std::vector<int> free_;
  int last_ = 0;
  double merge_tol_ = 0.0;
  // scratch
  std::vector<int> cavity_;
  std::vector<char> in_cavity_;
};

}  // namespace bifem::detail
