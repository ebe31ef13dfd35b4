#include <doctest.h>

#include <cmath>
#include <random>

#include "bifem/energy.hpp"
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

double sigma_norm(const Vec2& p, const Mat2& sigma) { return std::sqrt(p.dot(sigma.inverse() * p)); }

// Root of t/sqrt(1-t^2) + beta (t - s) = 0 on [0, min(s,1)) by plain bisection.
double bisect_radius(double s, double beta) {
  double lo = 0.0, hi = std::min(s, 1.0);
  for (int k = 0; k < 200; ++k) {
    const double t = 0.5 * (lo + hi);
    const double f = t / std::sqrt(1 - t * t) + beta * (t - s);
    (f > 0 ? hi : lo) = t;
  }
  return 0.5 * (lo + hi);
}

Mat2 random_spd(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1, 1);
  Mat2 a;
  a << U(rng), U(rng), U(rng), U(rng);
  return a * a.transpose() + 0.3 * Mat2::Identity();
}

}  // namespace

TEST_CASE("integrand values") {
  const Mat2 id = Mat2::Identity();
  CHECK(bi_integrand(Vec2::Zero(), 1.0, id) == 0.0);
  CHECK(bi_integrand(Vec2(1.0, 0.0), 1.0, id) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(bi_integrand(Vec2(0.36, 0.48), 1.0, id) - 0.2) <= 1e-15);
  CHECK(bi_integrand(Vec2(0.0, 3.0), 3.0, id) == doctest::Approx(3.0));
  Mat2 s;
  s << 4, 0, 0, 1;
  CHECK(std::abs(bi_integrand(Vec2(1.2, 0.0), 1.0, s) - 0.2) <= 1e-15);
  CHECK(code_of([&] { bi_integrand(Vec2(1.1, 0.0), 1.0, id); }) == ErrorCode::domain_error);
  CHECK(code_of([&] { bi_integrand(Vec2(0.1, 0.0), 0.0, id); }) == ErrorCode::invalid_argument);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-0.7, 0.7);
  for (int k = 0; k < 200; ++k) {
    const Vec2 p(U(rng), U(rng));
    const double v = bi_integrand(p, 1.0, id);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == doctest::Approx(1.0 - std::sqrt(1.0 - p.squaredNorm())).epsilon(1e-13));
  }
}

TEST_CASE("energy of simple fields") {
  const auto sq = support::unit_square(0.1);
  const MetricField g = MetricField::flat(sq->triangle_count());
  const auto zero = FeasibleField::make(*sq, g, NodalField(sq->node_count()));
  CHECK(energy(zero, ChargeMeasure::point({0.5, 0.5}, 3.0), g, *sq) == 0.0);

  const auto tilted = FeasibleField::make(*sq, g, support::sample(*sq, [](const Vec2& x) { return 0.36 * x.x() + 0.48 * x.y(); }));
  CHECK(std::abs(energy(tilted, ChargeMeasure(), g, *sq) - 0.2) <= 1e-12);

  CHECK(code_of([&] {
          FeasibleField::make(*sq, g, support::sample(*sq, [](const Vec2& x) { return 1.2 * x.x(); }));
        }) == ErrorCode::domain_error);
}

TEST_CASE("energy is midpoint convex") {
  const auto disk = support::unit_disk(0.2, {{0.0, 0.0}, {0.3, 0.2}});
  const MetricField g = MetricField::flat(disk->triangle_count());
  TriangleField f(disk->triangle_count());
  for (std::size_t t = 0; t < f.size(); ++t) f[t] = std::sin(3 * disk->centroid(t).x());
  const ChargeMeasure rho({Atom{{0, 0}, 1.0}, Atom{{0.3, 0.2}, -0.5}}, f);
  std::mt19937_64 rng(11);
  int checked = 0;
  for (int k = 0; k < 1000; ++k) {
    const NodalField a = support::random_smooth(*disk, rng, 0.8);
    const NodalField b = support::random_smooth(*disk, rng, 0.8);
    NodalField m(disk->node_count());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (a[i] + b[i]);
    const double ia = energy(FeasibleField::make(*disk, g, a), rho, g, *disk);
    const double ib = energy(FeasibleField::make(*disk, g, b), rho, g, *disk);
    const double im = energy(FeasibleField::make(*disk, g, m), rho, g, *disk);
    CHECK(im <= 0.5 * (ia + ib) + 1e-12);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("tilt values and clamp") {
  const auto sq = support::unit_square(0.2);
  const MetricField g = MetricField::flat(sq->triangle_count());
  const TiltField one = tilt(FeasibleField::make(*sq, g, NodalField(sq->node_count(), 2.0)), g, *sq);
  for (double w : one.w.values) CHECK(w == 1.0);
  CHECK(one.saturated_count == 0);

  const TiltField t = tilt(FeasibleField::make(*sq, g, support::sample(*sq, [](const Vec2& x) { return 0.6 * x.y(); })), g, *sq);
  for (double w : t.w.values) CHECK(w == doctest::Approx(1.25).epsilon(1e-14));

  const TiltField sat = tilt(FeasibleField::make(*sq, g, support::sample(*sq, [](const Vec2& x) { return x.x(); })), g, *sq);
  for (std::size_t k = 0; k < sat.w.size(); ++k) {
    CHECK(sat.w[k] == doctest::Approx(1e7).epsilon(1e-6));
    CHECK(sat.saturated[k]);
  }
  CHECK(sat.saturated_count == sq->triangle_count());

  std::mt19937_64 rng(5);
  const auto disk = support::unit_disk(0.15);
  const MetricField gd = MetricField::flat(disk->triangle_count());
  const TiltField r = tilt(FeasibleField::make(*disk, gd, support::random_smooth(*disk, rng, 0.9)), gd, *disk);
  for (double w : r.w.values) CHECK(w >= 1.0);
}

TEST_CASE("energy gradient: affine fields are discrete solutions") {
  const auto disk = support::unit_disk(0.1);
  const MetricField g = MetricField::flat(disk->triangle_count());
  const auto u = FeasibleField::make(*disk, g, support::sample(*disk, [](const Vec2& x) { return 0.5 * x.x() - 0.3 * x.y(); }));
  const NodalField G = energy_gradient(u, ChargeMeasure(), g, *disk);
  for (std::size_t i = 0; i < disk->node_count(); ++i)
    if (!disk->is_boundary(i)) CHECK(std::abs(G[i]) <= 1e-12);
}

TEST_CASE("energy gradient matches central differences") {
  const auto disk = support::unit_disk(0.1, {{0.0, 0.0}, {-0.2, 0.4}});
  Mat2 s;
  s << 1.5, 0.2, 0.2, 0.8;
  MetricField g = MetricField::uniform(disk->triangle_count(), 1.0, s);
  for (std::size_t t = 0; t < g.alpha.size(); ++t) g.alpha[t] = 1.0 + 0.3 * disk->centroid(t).squaredNorm();
  TriangleField f(disk->triangle_count());
  for (std::size_t t = 0; t < f.size(); ++t) f[t] = disk->centroid(t).y();
  const ChargeMeasure rho({Atom{{0, 0}, 0.7}, Atom{{-0.2, 0.4}, -0.2}}, f);

  std::mt19937_64 rng(17);
  const NodalField u0 = support::random_smooth(*disk, rng, 0.6);
  const auto u = FeasibleField::make(*disk, g, u0);
  for (double sl : u.slack().values) REQUIRE(sl >= 0.19);
  const NodalField G = energy_gradient(u, rho, g, *disk);
  double scale = 0.0, worst = 0.0;
  const double step = 1e-6;
  for (std::size_t i = 0; i < disk->node_count(); ++i) {
    NodalField p = u0, m = u0;
    p[i] += step;
    m[i] -= step;
    const double fd = (energy(FeasibleField::make(*disk, g, p), rho, g, *disk) -
                       energy(FeasibleField::make(*disk, g, m), rho, g, *disk)) /
                      (2 * step);
    worst = std::max(worst, std::abs(fd - G[i]));
    scale = std::max(scale, std::abs(G[i]));
  }
  CHECK(worst <= 1e-6 * scale);
}

TEST_CASE("energy gradient refuses saturated triangles") {
  const auto sq = support::unit_square(0.25);
  const MetricField g = MetricField::flat(sq->triangle_count());
  const auto u = FeasibleField::make(*sq, g, support::sample(*sq, [](const Vec2& x) { return x.x(); }));
  CHECK(code_of([&] { energy_gradient(u, ChargeMeasure(), g, *sq); }) == ErrorCode::gradient_undefined);
}

TEST_CASE("energy gradient is odd for zero charge") {
  const auto disk = support::unit_disk(0.15);
  const MetricField g = MetricField::flat(disk->triangle_count());
  std::mt19937_64 rng(23);
  const NodalField u = support::random_smooth(*disk, rng, 0.9);
  NodalField v = u;
  for (double& x : v.values) x = -x;
  const NodalField a = energy_gradient(FeasibleField::make(*disk, g, u), ChargeMeasure(), g, *disk);
  const NodalField b = energy_gradient(FeasibleField::make(*disk, g, v), ChargeMeasure(), g, *disk);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] + b[i]) <= 1e-14);
}

TEST_CASE("prox: fixed point, large penalty, bisection oracle") {
  const Mat2 id = Mat2::Identity();
  CHECK(prox_bi(Vec2::Zero(), 1.0, 1.0, id) == Vec2::Zero());
  const Vec2 q(0.3, 0.4);
  CHECK((prox_bi(q, 1e8, 1.0, id) - q).norm() <= 1e-7);

  const Vec2 p = prox_bi(Vec2(2.0, 0.0), 1.0, 1.0, id);
  CHECK(p.norm() < 1.0);
  CHECK(std::abs(p.y()) == 0.0);
  CHECK(std::abs(p.x() - bisect_radius(2.0, 1.0)) <= 1e-12);

  for (double s : {0.01, 0.5, 0.99, 1.0, 5.0, 1e3})
    for (double beta : {1e-3, 0.1, 1.0, 10.0, 1e4}) {
      const double t = prox_radius(s, beta, 1.0);
      CHECK(std::abs(t - bisect_radius(s, beta)) <= 1e-11);
      CHECK(t < 1.0);
    }

  CHECK(code_of([] { prox_bi(Vec2(1, 0), 0.0, 1.0, Mat2::Identity()); }) == ErrorCode::invalid_argument);
}

TEST_CASE("prox minimizes the penalized integrand") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> U(-2, 2);
  for (int k = 0; k < 100; ++k) {
    const Mat2 s = random_spd(rng);
    const Vec2 q(U(rng), U(rng));
    const double beta = 0.5 + std::abs(U(rng)), alpha = 0.5 + std::abs(U(rng));
    const Vec2 p = prox_bi(q, beta, alpha, s);
    REQUIRE(sigma_norm(p, s) < alpha);
    auto obj = [&](const Vec2& x) {
      const double d = sigma_norm(x - q, s);
      return bi_integrand(x, alpha, s) + 0.5 * beta * d * d;
    };
    const double best = obj(p);
    for (int j = 0; j < 20; ++j) {
      const Vec2 x = p + 1e-3 * Vec2(U(rng), U(rng));
      if (sigma_norm(x, s) < alpha) CHECK(obj(x) >= best - 1e-14);
    }
  }
}

TEST_CASE("prox is nonexpansive and odd") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> U(-3, 3);
  for (int k = 0; k < 500; ++k) {
    const Mat2 s = random_spd(rng);
    const double beta = 0.1 + std::abs(U(rng)), alpha = 0.5 + std::abs(U(rng));
    const Vec2 a(U(rng), U(rng)), b(U(rng), U(rng));
    const Vec2 pa = prox_bi(a, beta, alpha, s), pb = prox_bi(b, beta, alpha, s);
    CHECK(sigma_norm(pa - pb, s) <= sigma_norm(a - b, s) + 1e-10);
    CHECK((prox_bi(-a, beta, alpha, s) + pa).norm() <= 1e-14);
  }
}
