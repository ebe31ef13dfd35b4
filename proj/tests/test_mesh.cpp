#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "bifem/error.hpp"
#include "bifem/mesh.hpp"
#include "support.hpp"

using namespace bifem;
using support::unit_disk;
using support::unit_square;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(0);
}

double min_angle(const Mesh& m) {
  double best = 180.0;
  for (std::size_t t = 0; t < m.triangle_count(); ++t) {
    const auto& tri = m.triangle(t);
    for (int k = 0; k < 3; ++k) {
      const Vec2 a = m.node(tri[(k + 1) % 3]) - m.node(tri[k]);
      const Vec2 b = m.node(tri[(k + 2) % 3]) - m.node(tri[k]);
      best = std::min(best, std::acos(a.dot(b) / (a.norm() * b.norm())) * 180.0 / support::kPi);
    }
  }
  return best;
}

void check_invariants(const Mesh& m, double floor_deg) {
  for (std::size_t t = 0; t < m.triangle_count(); ++t) CHECK(m.area(t) > 0.0);
  std::set<int> from_edges;
  for (auto [a, b] : m.boundary_edges()) {
    from_edges.insert(a);
    from_edges.insert(b);
  }
  std::set<int> nodes(m.boundary_nodes().begin(), m.boundary_nodes().end());
  CHECK(nodes == from_edges);
  for (const auto& et : m.edge_triangles()) CHECK(et[0] >= 0);
  CHECK(min_angle(m) >= floor_deg - 1e-9);
}

}  // namespace

TEST_CASE("disk mesh contains the origin and stays inside the disk") {
  const Mesh m = triangulate_disk(1.0, 0.5);
  bool origin = false;
  for (const Vec2& p : m.nodes()) {
    CHECK(p.norm() <= 1.0 + 1e-12);
    origin = origin || p.norm() == 0.0;
  }
  CHECK(origin);
  check_invariants(m, 20.0);
}

TEST_CASE("disk mesh size bracket and edge bound") {
  const Mesh m = triangulate_disk(1.0, 0.05);
  CHECK(m.triangle_count() >= 1000);
  CHECK(m.triangle_count() <= 8000);
  CHECK(m.h_max() <= 1.5 * 0.05);
  check_invariants(m, 20.0);
}

TEST_CASE("mesher rejects bad input") {
  CHECK(code_of([] { triangulate_disk(1.0, -0.1); }) == ErrorCode::invalid_argument);
  CHECK(code_of([] { triangulate_disk(0.0, 0.1); }) == ErrorCode::invalid_argument);
  const std::array<Vec2, 4> bowtie{Vec2(0, 0), Vec2(1, 1), Vec2(1, 0), Vec2(0, 1)};
  CHECK(code_of([&] { triangulate_polygon(bowtie, 0.2); }) == ErrorCode::invalid_geometry);
}

TEST_CASE("square mesh keeps corners and splits boundary edges") {
  const auto coarse = unit_square(1.0);
  int corners = 0;
  for (const Vec2& p : coarse->nodes())
    for (const Vec2& c : {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)})
      if ((p - c).norm() < 1e-14) ++corners;
  CHECK(corners == 4);

  const auto m = unit_square(0.25);
  for (auto [a, b] : m->boundary_edges()) CHECK((m->node(a) - m->node(b)).norm() <= 0.375 + 1e-12);
  check_invariants(*m, 20.0);
}

TEST_CASE("atoms become mesh nodes") {
  const Vec2 atom(0.3141, -0.2718);
  const auto m = unit_disk(0.1, {atom});
  bool found = false;
  for (const Vec2& p : m->nodes()) found = found || (p - atom).norm() == 0.0;
  CHECK(found);
}

TEST_CASE("p1 gradient reproduces affine fields") {
  const auto m = unit_disk(0.1);
  const auto c = p1_gradient(*m, support::sample(*m, [](const Vec2&) { return 3.0; }));
  for (std::size_t t = 0; t < c.size(); ++t) CHECK(c[t].norm() == doctest::Approx(0.0));
  const auto g = p1_gradient(*m, support::sample(*m, [](const Vec2& x) { return 0.3 * x.x() + 0.4 * x.y(); }));
  for (std::size_t t = 0; t < g.size(); ++t) CHECK((g[t] - Vec2(0.3, 0.4)).norm() <= 1e-14);
  CHECK(code_of([&] { p1_gradient(*m, NodalField(3)); }) == ErrorCode::invalid_argument);
}

TEST_CASE("p1 gradient of x^2 is first order") {
  auto deviation = [](double h) {
    const auto m = unit_square(h);
    const auto g = p1_gradient(*m, support::sample(*m, [](const Vec2& x) { return x.x() * x.x(); }));
    double worst = 0.0;
    for (std::size_t t = 0; t < g.size(); ++t)
      worst = std::max(worst, (g[t] - Vec2(2.0 * m->centroid(t).x(), 0.0)).norm());
    return worst;
  };
  const double coarse = deviation(0.1), fine = deviation(0.05);
  CHECK(fine < 0.65 * coarse);
}

TEST_CASE("stiffness matrix: symmetric, constants in kernel, affine harmonic") {
  const auto m = unit_square(0.1);
  const std::vector<Mat2> w(m->triangle_count(), Mat2::Identity());
  const SparseMatrix K = assemble_weighted_stiffness(*m, w);
  const SparseMatrix asym = K - SparseMatrix(K.transpose());
  double amax = 0.0;
  for (int k = 0; k < asym.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(asym, k); it; ++it) amax = std::max(amax, std::abs(it.value()));
  CHECK(amax <= 1e-14);

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m->node_count());
  CHECK((K * ones).cwiseAbs().maxCoeff() <= 1e-12);

  Eigen::VectorXd u(m->node_count());
  for (std::size_t i = 0; i < m->node_count(); ++i) u[i] = 0.5 * m->node(i).x();
  const Eigen::VectorXd r = K * u;
  for (std::size_t i = 0; i < m->node_count(); ++i)
    if (!m->is_boundary(i)) CHECK(std::abs(r[i]) <= 1e-12);

  std::vector<Mat2> bad = w;
  bad[0] << 1, 0, 0, -1;
  CHECK(code_of([&] { assemble_weighted_stiffness(*m, bad); }) == ErrorCode::invalid_argument);
}

TEST_CASE("graph distance bounds, scaling and symmetry") {
  const auto m = unit_square(0.05);
  int a = -1, b = -1;
  for (std::size_t i = 0; i < m->node_count(); ++i) {
    if (m->node(i).norm() < 1e-14) a = static_cast<int>(i);
    if ((m->node(i) - Vec2(1, 1)).norm() < 1e-14) b = static_cast<int>(i);
  }
  REQUIRE(a >= 0);
  REQUIRE(b >= 0);
  const MetricField flat = MetricField::flat(m->triangle_count());
  const NodalField d = graph_distance(*m, flat, a);
  CHECK(d[a] == 0.0);
  CHECK(d[b] >= std::sqrt(2.0));
  CHECK(d[b] <= std::sqrt(2.0) * 1.09);
  for (std::size_t i = 0; i < m->node_count(); ++i) CHECK(d[i] >= (m->node(i) - m->node(a)).norm() - 1e-12);

  const NodalField back = graph_distance(*m, flat, b);
  CHECK(std::abs(back[a] - d[b]) <= 1e-12);

  const NodalField d2 = graph_distance(*m, MetricField::uniform(m->triangle_count(), 2.0, Mat2::Identity()), a);
  for (std::size_t i = 0; i < m->node_count(); ++i) CHECK(std::abs(d2[i] - 2.0 * d[i]) <= 1e-12 * (1 + d[i]));
}

TEST_CASE("metric validation") {
  const auto m = unit_square(0.5);
  MetricField g = MetricField::flat(m->triangle_count());
  CHECK_NOTHROW(g.validate(*m));
  g.alpha[0] = 0.0;
  CHECK(code_of([&] { g.validate(*m); }) == ErrorCode::invalid_argument);
  g = MetricField::flat(m->triangle_count());
  g.sigma[0] << 1, 2, 2, 1;
  CHECK(code_of([&] { g.validate(*m); }) == ErrorCode::invalid_argument);
  const MetricField c = MetricField::uniform(m->triangle_count(), 3.0, Mat2::Identity()).conformal();
  CHECK(c.alpha[0] == 1.0);
  CHECK(c.sigma[0](0, 0) == doctest::Approx(9.0));
}

TEST_CASE("mesh files round trip") {
  const auto m = unit_disk(0.2);
  const auto dir = std::filesystem::temp_directory_path() / "bifem_mesh_io";
  std::filesystem::create_directories(dir);
  write_mesh_files(*m, (dir / "n.txt").string(), (dir / "t.txt").string());
  const Mesh r = read_mesh_files((dir / "n.txt").string(), (dir / "t.txt").string());
  REQUIRE(r.node_count() == m->node_count());
  for (std::size_t i = 0; i < r.node_count(); ++i) CHECK(r.node(i) == m->node(i));
  CHECK(r.triangles() == m->triangles());
  CHECK(code_of([&] { read_mesh_files((dir / "missing").string(), (dir / "t.txt").string()); }) ==
        ErrorCode::io_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-conforming and degenerate meshes are rejected") {
  std::vector<Vec2> line{{0, 0}, {1, 0}, {2, 0}};
  CHECK(code_of([&] { Mesh(line, {{0, 1, 2}}); }) == ErrorCode::invalid_geometry);
  std::vector<Vec2> fan{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {-1, 1}};
  CHECK(code_of([&] { Mesh(fan, {{0, 1, 2}, {0, 1, 3}, {0, 1, 4}}); }) == ErrorCode::invalid_geometry);
}
