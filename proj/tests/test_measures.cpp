#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "bifem/measures.hpp"
#include "support.hpp"

using namespace bifem;
using support::kPi;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(0);
}

int node_at(const Mesh& m, const Vec2& x) {
  for (std::size_t i = 0; i < m.node_count(); ++i)
    if ((m.node(i) - x).norm() < 1e-14) return static_cast<int>(i);
  return -1;
}

}  // namespace

TEST_CASE("total variation") {
  const auto disk = support::unit_disk(0.2);
  const MetricField g = MetricField::flat(disk->triangle_count());
  CHECK(total_variation(ChargeMeasure::point({0, 0}, 2 * kPi), *disk, g) == doctest::Approx(2 * kPi));
  CHECK(total_variation(ChargeMeasure({Atom{{0, 0}, 1}, Atom{{0.3, 0}, -1}}), *disk, g) == doctest::Approx(2.0));

  const auto sq = support::unit_square(0.1);
  const MetricField gs = MetricField::flat(sq->triangle_count());
  const ChargeMeasure f({}, TriangleField(sq->triangle_count(), 1.0));
  CHECK(std::abs(total_variation(f, *sq, gs) - 1.0) <= 1e-12);
  CHECK(code_of([&] { total_variation(ChargeMeasure({}, TriangleField(3, 1.0)), *sq, gs); }) ==
        ErrorCode::invalid_argument);
}

TEST_CASE("atoms sharing a location are merged") {
  const ChargeMeasure mu({Atom{{0.1, 0.1}, 1.0}, Atom{{0.1, 0.1}, 2.0}});
  REQUIRE(mu.atoms().size() == 1);
  CHECK(mu.atoms()[0].charge == 3.0);
}

TEST_CASE("atoms outside the domain are rejected") {
  const auto disk = support::unit_disk(0.2);
  CHECK(code_of([&] { ChargeMeasure::point({1.5, 0}, 1).validate(*disk); }) == ErrorCode::invalid_geometry);
}

TEST_CASE("mollifier kernel has unit mass and compact support") {
  // 2 pi int_0^1 exp(-1/(1-r^2)) r dr, evaluated to 30 digits
  CHECK(std::abs(MollifierKernel::profile(0.0) - std::exp(-1.0) / 0.466512393178330068879556) <= 1e-13);
  const double mass = 2 * kPi * boost::math::quadrature::tanh_sinh<double>().integrate(
                                    [](double r) { return MollifierKernel::profile(r) * r; }, 0.0, 1.0);
  CHECK(std::abs(mass - 1.0) <= 1e-10);
  CHECK(MollifierKernel::profile(1.0) == 0.0);
  CHECK(MollifierKernel::profile(1.5) == 0.0);
  const MollifierKernel k(0.1);
  CHECK(k(Vec2(0.0, 0.0)) == doctest::Approx(MollifierKernel::profile(0.0) / 0.01));
  CHECK(k(Vec2(0.11, 0.0)) == 0.0);
  CHECK(code_of([] { MollifierKernel(0.0); }) == ErrorCode::invalid_argument);
}

TEST_CASE("mollified atom keeps its mass and drops the atom") {
  const auto disk = support::unit_disk(0.02);
  const MetricField g = MetricField::flat(disk->triangle_count());
  const ChargeMeasure m = mollify(ChargeMeasure::point({0, 0}, 1.0), MollifierKernel(0.1), *disk, g);
  CHECK(m.atoms().empty());
  REQUIRE(m.density());
  const double tv = total_variation(m, *disk, g);
  CHECK(tv >= 0.98);
  CHECK(tv <= 1.02);
  // support stays inside the epsilon disc (plus one triangle)
  for (std::size_t t = 0; t < disk->triangle_count(); ++t)
    if (disk->centroid(t).norm() > 0.1 + disk->h_max()) CHECK((*m.density())[t] == 0.0);
}

TEST_CASE("mollification near the boundary is refused") {
  const auto disk = support::unit_disk(0.05, {{0.95, 0.0}});
  const MetricField g = MetricField::flat(disk->triangle_count());
  CHECK(code_of([&] { mollify(ChargeMeasure::point({0.95, 0}, 1.0), MollifierKernel(0.1), *disk, g); }) ==
        ErrorCode::mollification_radius);
}

TEST_CASE("mollifying a smooth density converges to it") {
  const auto sq = support::unit_square(0.02);
  const MetricField g = MetricField::flat(sq->triangle_count());
  TriangleField f(sq->triangle_count());
  for (std::size_t t = 0; t < f.size(); ++t) {
    const Vec2 c = sq->centroid(t) - Vec2(0.5, 0.5);
    f[t] = std::exp(-c.squaredNorm() / 0.02);
  }
  const ChargeMeasure mu({}, f);
  double prev = 1e300;
  for (double eps : {0.16, 0.08, 0.04}) {
    const ChargeMeasure m = mollify(mu, MollifierKernel(eps), *sq, g);
    double worst = 0.0;
    for (std::size_t t = 0; t < f.size(); ++t)
      if (sq->distance_to_boundary(sq->centroid(t)) > 0.2) worst = std::max(worst, std::abs((*m.density())[t] - f[t]));
    CHECK(worst < prev);
    prev = worst;
  }
  CHECK(prev < 0.05);
}

TEST_CASE("load vector: node atoms, centroid atoms, partition of unity") {
  const auto disk = support::unit_disk(0.2, {{0.0, 0.0}, {0.3, 0.2}});
  const MetricField g = MetricField::flat(disk->triangle_count());
  const int j = node_at(*disk, {0.3, 0.2});
  REQUIRE(j >= 0);
  const NodalField L = load_vector(ChargeMeasure::point({0.3, 0.2}, 1.0), *disk, g);
  for (std::size_t i = 0; i < L.size(); ++i) CHECK(L[i] == doctest::Approx(i == static_cast<std::size_t>(j) ? 1.0 : 0.0));

  const std::size_t t = 7;
  const NodalField Lc = load_vector(ChargeMeasure::point(disk->centroid(t), 1.0), *disk, g);
  for (int k = 0; k < 3; ++k) CHECK(Lc[disk->triangle(t)[k]] == doctest::Approx(1.0 / 3.0));

  const auto sq = support::unit_square(0.1);
  const MetricField gs = MetricField::flat(sq->triangle_count());
  const NodalField Lf = load_vector(ChargeMeasure({}, TriangleField(sq->triangle_count(), 1.0)), *sq, gs);
  double s = 0.0;
  for (double v : Lf.values) s += v;
  CHECK(std::abs(s - 1.0) <= 1e-12);

  CHECK(code_of([&] { load_vector(ChargeMeasure::point({3, 3}, 1.0), *disk, g); }) != static_cast<ErrorCode>(0));
}

TEST_CASE("pairing: zero field, constants, linearity, consistency") {
  const auto disk = support::unit_disk(0.1, {{0.0, 0.0}, {0.4, -0.1}});
  const MetricField g = MetricField::flat(disk->triangle_count());
  const ChargeMeasure d0 = ChargeMeasure::point({0, 0}, 1.0);
  CHECK(pair(d0, NodalField(disk->node_count()), *disk, g) == 0.0);
  CHECK(pair(d0, NodalField(disk->node_count(), 1.0), *disk, g) == doctest::Approx(1.0));
  const ChargeMeasure dip({Atom{{0, 0}, 1.0}, Atom{{0.4, -0.1}, -1.0}});
  CHECK(std::abs(pair(dip, NodalField(disk->node_count(), 3.7), *disk, g)) <= 1e-14);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1, 1);
  NodalField psi(disk->node_count());
  for (double& v : psi.values) v = U(rng);
  TriangleField f(disk->triangle_count());
  for (double& v : f.values) v = U(rng);
  const ChargeMeasure m1({Atom{{0.2, 0.3}, 0.7}}, f);
  const ChargeMeasure m2({Atom{{-0.5, 0.1}, -1.3}});
  const double a = 0.3, b = -2.1;
  const double lhs = pair(m1.combined(a, m2, b), psi, *disk, g);
  const double rhs = a * pair(m1, psi, *disk, g) + b * pair(m2, psi, *disk, g);
  CHECK(std::abs(lhs - rhs) <= 1e-12);

  const NodalField L = load_vector(m1, *disk, g);
  for (std::size_t i : {0ul, 5ul, 17ul}) {
    NodalField eta(disk->node_count());
    eta[i] = 1.0;
    CHECK(pair(m1, eta, *disk, g) == L[i]);
  }
}

TEST_CASE("density weighting uses sigma-area") {
  const auto sq = support::unit_square(0.25);
  Mat2 s;
  s << 4, 0, 0, 1;
  const MetricField g = MetricField::uniform(sq->triangle_count(), 1.0, s);
  const ChargeMeasure f({}, TriangleField(sq->triangle_count(), 1.0));
  CHECK(total_charge(f, *sq, g) == doctest::Approx(2.0));
}
