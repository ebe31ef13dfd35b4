#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "bifem/solver.hpp"

namespace support {

using namespace bifem;

inline constexpr double kPi = std::numbers::pi;

inline std::shared_ptr<const Mesh> unit_disk(double h, std::vector<Vec2> atoms = {{0.0, 0.0}}) {
  MeshOptions o;
  o.required_points = std::move(atoms);
  return std::make_shared<const Mesh>(triangulate_disk(1.0, h, o));
}

inline std::shared_ptr<const Mesh> unit_square(double h) {
  const std::array<Vec2, 4> v{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
  return std::make_shared<const Mesh>(triangulate_polygon(v, h));
}

template <class F>
NodalField sample(const Mesh& mesh, F&& f) {
  NodalField u(mesh.node_count());
  for (std::size_t i = 0; i < mesh.node_count(); ++i) u[i] = f(mesh.node(i));
  return u;
}

inline Problem flat_problem(std::shared_ptr<const Mesh> mesh, ChargeMeasure rho, NodalField phi) {
  Problem p;
  p.metric = MetricField::flat(mesh->triangle_count());
  p.mesh = std::move(mesh);
  p.rho = std::move(rho);
  p.phi = std::move(phi);
  return p;
}

/// Single charge 2 pi at the center of the unit disk, exact solution asinh(r).
inline Problem born_problem(double h) {
  auto mesh = unit_disk(h);
  const double phi = std::asinh(1.0);
  return flat_problem(mesh, ChargeMeasure::point({0, 0}, 2 * kPi), NodalField(mesh->node_count(), phi));
}

inline Problem dipole_problem(double h, double a = 2 * kPi) {
  auto mesh = unit_disk(h, {{0.25, 0.0}, {-0.25, 0.0}});
  return flat_problem(mesh, ChargeMeasure({Atom{{0.25, 0}, a}, Atom{{-0.25, 0}, -a}}), NodalField(mesh->node_count()));
}

inline double max_abs_diff(const NodalField& a, const NodalField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Random smooth field with |Du| bounded by roughly `slope` times the unit.
inline NodalField random_smooth(const Mesh& mesh, std::mt19937_64& rng, double slope) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const double a = U(rng), b = U(rng), c = U(rng), k1 = 1 + 2 * std::abs(U(rng)), k2 = 1 + 2 * std::abs(U(rng));
  return sample(mesh, [&](const Vec2& x) {
    return slope / 3.0 * (a * std::sin(k1 * x.x()) / k1 + b * std::cos(k2 * x.y()) / k2 + c * (x.x() - x.y()) / 2.0);
  });
}

/// Largest triangle gradient norm (flat metric).
inline double max_slope(const Mesh& mesh, const NodalField& u) {
  const auto g = p1_gradient(mesh, u);
  double m = 0.0;
  for (std::size_t t = 0; t < g.size(); ++t) m = std::max(m, g[t].norm());
  return m;
}

}  // namespace support
