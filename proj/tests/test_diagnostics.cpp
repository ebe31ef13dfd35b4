#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "bifem/diagnostics.hpp"
#include "bifem/oracle.hpp"
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

struct Solved {
  Problem problem;
  NodalField u;
  FeasibleField field() const { return FeasibleField::make(*problem.mesh, problem.metric, u); }
};

const Solved& born(double h) {
  static std::map<double, Solved> cache;
  auto it = cache.find(h);
  if (it == cache.end()) {
    Problem p = support::born_problem(h);
    NodalField u = solve_admm(p, SolverConfig{}).u;
    it = cache.emplace(h, Solved{std::move(p), std::move(u)}).first;
  }
  return it->second;
}

double rel_change(double a, double b) { return std::abs(a - b) / std::abs(b); }

const std::vector<Vec2> kOrigin{{0.0, 0.0}};

}  // namespace

TEST_CASE("tilt integrals of the zero field") {
  const auto sq = support::unit_square(0.1);
  const MetricField g = MetricField::flat(sq->triangle_count());
  const auto u = FeasibleField::make(*sq, g, NodalField(sq->node_count()));
  const TiltIntegrals t = tilt_integrals(u, g, *sq, 0.0, {});
  CHECK(std::abs(t.tilt_l1 - 1.0) <= 1e-12);
  CHECK(std::abs(t.tilt_loglinear - std::log(2.0)) <= 1e-12);
  CHECK(t.saturated_count == 0);
}

TEST_CASE("single atom: tilt mass against the closed form") {
  const Solved& s = born(0.02);
  const TiltIntegrals t = tilt_integrals(s.field(), s.problem.metric, *s.problem.mesh, 0.1, kOrigin);
  const double oracle = kPi * (std::sqrt(2.0) + std::asinh(1.0));
  CHECK(rel_change(t.tilt_l1, oracle) <= 0.05);
}

TEST_CASE("single atom: refinement studies") {
  const Solved& c = born(0.02);
  const Solved& f = born(0.01);
  const TiltIntegrals tc = tilt_integrals(c.field(), c.problem.metric, *c.problem.mesh, 0.1, kOrigin);
  const TiltIntegrals tf = tilt_integrals(f.field(), f.problem.metric, *f.problem.mesh, 0.1, kOrigin);
  CHECK(rel_change(tc.tilt_loglinear, tf.tilt_loglinear) < 0.10);

  const HessianIntegrals hc = hessian_integrals(c.field(), c.problem.metric, *c.problem.mesh, 0.1, kOrigin);
  const HessianIntegrals hf = hessian_integrals(f.field(), f.problem.metric, *f.problem.mesh, 0.1, kOrigin);
  CHECK(rel_change(hc.j1, hf.j1) < 0.15);
  CHECK(rel_change(hc.j2, hf.j2) < 0.15);
  CHECK(rel_change(hc.j3, hf.j3) < 0.15);

  const double ec = field_energy(c.field(), c.problem.rho, c.problem.metric, *c.problem.mesh);
  const double ef = field_energy(f.field(), f.problem.rho, f.problem.metric, *f.problem.mesh);
  CHECK(std::isfinite(ef));
  CHECK(rel_change(ec, ef) < 0.10);
}

TEST_CASE("exclusion monotonicity") {
  const Solved& s = born(0.04);
  double prev = 1e300;
  for (double r : {0.0, 0.05, 0.1, 0.2, 0.4}) {
    const double v = tilt_integrals(s.field(), s.problem.metric, *s.problem.mesh, r, kOrigin).tilt_loglinear;
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("light segment scan") {
  const auto disk = support::unit_disk(0.1);
  const MetricField g = MetricField::flat(disk->triangle_count());
  const auto sample = default_scan_sample(*disk);
  REQUIRE(!sample.empty());
  for (int i : sample) CHECK(disk->is_boundary(i));

  const LightSegmentScan flat = light_segment_scan(NodalField(disk->node_count(), 4.0), g, *disk, sample);
  CHECK(flat.max_ratio == 0.0);
  CHECK(flat.rows.size() == sample.size());
  CHECK(code_of([&] { light_segment_scan(NodalField(disk->node_count()), g, *disk, {}); }) ==
        ErrorCode::invalid_argument);

  // the graph distance itself saturates the ratio
  const int x0 = sample[3];
  const NodalField d = graph_distance(*disk, g, x0);
  const LightSegmentScan self = light_segment_scan(d, g, *disk, {x0, sample[7]});
  CHECK(self.max_ratio >= 0.999);
  CHECK(self.max_ratio > DiagnosticsConfig{}.light_ratio_max);
  REQUIRE(self.rows.size() == 2);
  CHECK(self.rows[0].source == x0);
  CHECK(self.rows[0].ratio >= 0.999);

  // feasible fields stay below 1 + mesh factor
  std::mt19937_64 rng(13);
  std::vector<int> all(disk->node_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  for (int k = 0; k < 5; ++k) {
    const NodalField u = support::random_smooth(*disk, rng, 0.95);
    REQUIRE(support::max_slope(*disk, u) <= 1.0);
    CHECK(light_segment_scan(u, g, *disk, all).max_ratio <= 1.1);
  }
}

TEST_CASE("light segment scan: exclusion skips targets near atoms") {
  const Solved& s = born(0.04);
  const auto& mesh = *s.problem.mesh;
  const auto sample = default_scan_sample(mesh);
  const LightSegmentScan with = light_segment_scan(s.u, s.problem.metric, mesh, sample, kOrigin, 0.2);
  const LightSegmentScan without = light_segment_scan(s.u, s.problem.metric, mesh, sample);
  CHECK(with.max_ratio <= without.max_ratio);
  REQUIRE(with.pair);
  CHECK(mesh.node(with.pair->second).norm() >= 0.2);
}

TEST_CASE("single atom scan stays below the light cone") {
  const Solved& s = born(0.02);
  const LightSegmentScan scan =
      light_segment_scan(s.u, s.problem.metric, *s.problem.mesh, default_scan_sample(*s.problem.mesh), kOrigin, 0.1);
  CHECK(scan.max_ratio <= 0.99);
  CHECK(scan.max_ratio > 0.0);
}

TEST_CASE("singular set") {
  const auto sq = support::unit_square(0.1);
  const MetricField g = MetricField::flat(sq->triangle_count());
  const auto affine = FeasibleField::make(*sq, g, support::sample(*sq, [](const Vec2& x) { return 0.3 * x.x() + 0.4 * x.y(); }));
  const SingularSet none = singular_set(affine, g, *sq, 0.1);
  CHECK(none.triangles.empty());
  CHECK(none.fraction == 0.0);
  CHECK(code_of([&] { singular_set(affine, g, *sq, 0.0); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { singular_set(affine, g, *sq, 1.0); }) == ErrorCode::invalid_argument);

  const Solved& s = born(0.02);
  const double rstar = radial_saturation_radius(2 * kPi, 2, 0.95);
  const SingularSet set = singular_set(s.field(), s.problem.metric, *s.problem.mesh, 0.05);
  CHECK(set.fraction <= 2 * rstar * rstar);
  double prev = set.fraction;
  for (double d : {0.025, 0.0125, 0.00625}) {
    const SingularSet smaller = singular_set(s.field(), s.problem.metric, *s.problem.mesh, d);
    CHECK(smaller.fraction <= prev);
    CHECK(smaller.triangles.size() <= set.triangles.size());
    prev = smaller.fraction;
  }
}

TEST_CASE("ball growth of the zero field") {
  const double h = 0.05;
  const auto disk = support::unit_disk(h);
  const MetricField g = MetricField::flat(disk->triangle_count());
  const auto u = FeasibleField::make(*disk, g, NodalField(disk->node_count()));
  const std::vector<double> radii{0.2, 0.3, 0.4, 0.5, 0.6};
  const BallGrowth b = ball_growth(u, g, *disk, {0.1, 0.0}, radii);
  REQUIRE(b.rows.size() == radii.size());
  CHECK_FALSE(b.clipped);
  for (std::size_t k = 0; k < radii.size(); ++k) {
    const double s = radii[k];
    CHECK(std::abs(b.rows[k].mass - kPi * s * s) / (kPi * s * s) <= 2 * h / s);
    if (k) CHECK(b.rows[k].ratio > b.rows[k - 1].ratio);
  }
  const BallGrowth clipped = ball_growth(u, g, *disk, {0.5, 0.0}, {0.2, 0.4, 0.7});
  CHECK(clipped.clipped);
  CHECK(clipped.rows.size() == 2);
}

TEST_CASE("ball growth around a point charge") {
  const Solved& s = born(0.02);
  const double h = 0.02;
  std::vector<double> radii;
  for (double r = 4 * h; r <= 0.5 + 1e-12; r *= 1.25) radii.push_back(r);
  const BallGrowth b = ball_growth(s.field(), s.problem.metric, *s.problem.mesh, {0, 0}, radii);
  CHECK(b.spread <= 3.0);
  for (const auto& row : b.rows) {
    CHECK(row.ratio <= 3.0 * b.median_ratio);
    if (row.s >= 0.1) {
      const double oracle = radial_tilt_mass(2 * kPi, 2, row.s) / row.s;
      CHECK(rel_change(row.ratio, oracle) <= 0.2);
    }
  }
}

TEST_CASE("hessian integrals") {
  const auto sq = support::unit_square(0.02);
  const MetricField g = MetricField::flat(sq->triangle_count());
  const auto affine = FeasibleField::make(*sq, g, support::sample(*sq, [](const Vec2& x) { return 0.2 - 0.4 * x.x() + 0.1 * x.y(); }));
  const HessianIntegrals a = hessian_integrals(affine, g, *sq, 0.0, {});
  CHECK(a.j1 <= 1e-10);
  CHECK(a.j2 <= 1e-10);
  CHECK(a.j3 <= 1e-10);

  // D2u = diag(1/2, 0), w = 1/sqrt(1 - x^2/4): J1 = int_0^1 (1/4) w dx, by midpoint rule
  const auto quad = FeasibleField::make(*sq, g, support::sample(*sq, [](const Vec2& x) { return 0.25 * x.x() * x.x(); }));
  const int n = 100000;
  double j1 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = (k + 0.5) / n;
    j1 += 0.25 / std::sqrt(1 - 0.25 * x * x) / n;
  }
  CHECK(std::abs(j1 - kPi / 12) <= 1e-9);
  const HessianIntegrals h = hessian_integrals(quad, g, *sq, 0.0, {});
  CHECK(rel_change(h.j1, j1) <= 0.10);
}

TEST_CASE("recovered gradient is exact for affine fields") {
  const auto disk = support::unit_disk(0.1);
  const auto g = recover_gradient(support::sample(*disk, [](const Vec2& x) { return 2 * x.x() - x.y(); }), *disk);
  for (const Vec2& v : g) CHECK((v - Vec2(2, -1)).norm() <= 1e-13);
}

TEST_CASE("field energy") {
  const auto sq = support::unit_square(0.1);
  const MetricField g = MetricField::flat(sq->triangle_count());
  CHECK(field_energy(FeasibleField::make(*sq, g, NodalField(sq->node_count())), ChargeMeasure(), g, *sq) == 0.0);
  const auto t = FeasibleField::make(*sq, g, support::sample(*sq, [](const Vec2& x) { return 0.6 * x.x(); }));
  CHECK(std::abs(field_energy(t, ChargeMeasure(), g, *sq) - 0.25) <= 1e-12);
}

TEST_CASE("flux balance") {
  const auto sq = support::unit_square(0.1);
  const MetricField g = MetricField::flat(sq->triangle_count());
  const auto affine = FeasibleField::make(*sq, g, support::sample(*sq, [](const Vec2& x) { return 0.5 * x.x(); }));
  CHECK(flux_balance(affine, ChargeMeasure(), g, *sq).mismatch <= 1e-12);

  const Solved& s = born(0.04);
  const FluxBalance fb = flux_balance(s.field(), s.problem.rho, s.problem.metric, *s.problem.mesh);
  CHECK(fb.total_charge == doctest::Approx(2 * kPi));
  CHECK(fb.mismatch <= 1e-8);

  const Problem dip = support::dipole_problem(0.05, 1.0);
  const NodalField u = solve_admm(dip, SolverConfig{}).u;
  const FluxBalance fd = flux_balance(FeasibleField::make(*dip.mesh, dip.metric, u), dip.rho, dip.metric, *dip.mesh);
  CHECK(std::abs(fd.boundary_flux) <= 1e-8);
}

TEST_CASE("full report is deterministic and passes on a point charge") {
  const Solved& s = born(0.04);
  const DiagnosticsReport a = run_diagnostics(s.problem, s.u, DiagnosticsConfig{});
  const DiagnosticsReport b = run_diagnostics(s.problem, s.u, DiagnosticsConfig{});
  CHECK(a.tilt_l1 == b.tilt_l1);
  CHECK(a.tilt_loglinear == b.tilt_loglinear);
  CHECK(a.light_segment_max_ratio == b.light_segment_max_ratio);
  CHECK(a.singular_fraction == b.singular_fraction);
  CHECK(a.hessian_integrals.j1 == b.hessian_integrals.j1);
  CHECK(a.hessian_integrals.j3 == b.hessian_integrals.j3);
  CHECK(a.field_energy == b.field_energy);
  CHECK(a.flux.boundary_flux == b.flux.boundary_flux);
  REQUIRE(a.ball_growth_table.size() == b.ball_growth_table.size());
  for (std::size_t k = 0; k < a.ball_growth_table.size(); ++k)
    for (std::size_t j = 0; j < a.ball_growth_table[k].rows.size(); ++j)
      CHECK(a.ball_growth_table[k].rows[j].mass == b.ball_growth_table[k].rows[j].mass);

  CHECK(a.exclusion_radius == doctest::Approx(5 * characteristic_h(*s.problem.mesh)));
  CHECK(a.pass_flags.finite);
  CHECK(a.pass_flags.light_segments);
  CHECK(a.pass_flags.ball_growth);
  CHECK(a.pass_flags.flux_balance);
}
