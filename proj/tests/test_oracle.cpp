#include <doctest.h>

#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "bifem/error.hpp"
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

double flux(double a, int m, double r) {
  // w = 1/sqrt(1 - u'^2) taken from the stable tilt formula
  return std::pow(r, m - 1) * sphere_area_constant(m) * radial_slope(a, m, r) * radial_tilt(a, m, r);
}

}  // namespace

TEST_CASE("sphere constants") {
  CHECK(sphere_area_constant(2) == doctest::Approx(2 * kPi).epsilon(1e-15));
  CHECK(sphere_area_constant(3) == doctest::Approx(4 * kPi).epsilon(1e-15));
  CHECK(sphere_area_constant(4) == doctest::Approx(2 * kPi * kPi / std::tgamma(2.0)).epsilon(1e-15));
  CHECK(sphere_area_constant(5) == doctest::Approx(8 * kPi * kPi / 3).epsilon(1e-14));
  CHECK(code_of([] { sphere_area_constant(1); }) == ErrorCode::invalid_argument);
}

TEST_CASE("slope values and limits") {
  CHECK(std::abs(radial_slope(2 * kPi, 2, 1.0) - 1 / std::sqrt(2.0)) <= 1e-15);
  CHECK(radial_slope(2 * kPi, 2, 1e-9) > 1 - 1e-15);
  CHECK(radial_slope(2 * kPi, 2, 1e9) < 1e-8);
  CHECK(radial_slope(1.0, 3, 1e6) < 1e-10);
  CHECK(radial_slope(0.0, 2, 0.5) == 0.0);
  CHECK(code_of([] { radial_slope(1.0, 2, 0.0); }) == ErrorCode::invalid_argument);
  CHECK(code_of([] { radial_slope(1.0, 2, -1.0); }) == ErrorCode::invalid_argument);
  for (double r : {0.01, 0.3, 2.0}) {
    CHECK(radial_slope(-3.0, 2, r) == -radial_slope(3.0, 2, r));
    CHECK(radial_tilt(-3.0, 2, r) == radial_tilt(3.0, 2, r));
  }
}

TEST_CASE("flux identity") {
  for (int m : {2, 3, 4, 5})
    for (double a : {0.5, 2 * kPi, 40.0})
      for (double r : {1e-3, 0.1, 1.0, 7.0}) CHECK(std::abs(flux(a, m, r) - a) <= 1e-12 * a);
}

TEST_CASE("radial equation holds under central differences") {
  for (int m : {2, 3, 4})
    for (double a : {1.0, 2 * kPi}) {
      for (double lr = -3; lr <= 1; lr += 0.25) {
        const double r = std::pow(10.0, lr), h = 1e-4 * r;
        auto g = [&](double s) {
          return std::pow(s, m - 1) * radial_slope(a, m, s) * radial_tilt(a, m, s);
        };
        const double div = (g(r + h) - g(r - h)) / (2 * h) / std::pow(r, m - 1);
        const double scale = g(r) / std::pow(r, m - 1) / r;
        CHECK(std::abs(div) <= 1e-6 * scale);
      }
    }
}

TEST_CASE("monotone profiles") {
  const RadialSolution s = radial_table(2 * kPi, 2, 0.01, 2.0, 200);
  REQUIRE(s.r.size() == 200);
  for (std::size_t k = 1; k < s.r.size(); ++k) {
    CHECK(s.u_prime[k] < s.u_prime[k - 1]);
    CHECK(s.u[k] > s.u[k - 1]);
    CHECK(s.tilt_mass[k] > s.tilt_mass[k - 1]);
  }
  for (std::size_t k = 0; k < s.r.size(); ++k) {
    CHECK(s.u_prime[k] >= 0.0);
    CHECK(s.u_prime[k] < 1.0);
    CHECK(s.w[k] == doctest::Approx(1 / std::sqrt(1 - s.u_prime[k] * s.u_prime[k])).epsilon(1e-12));
    CHECK(std::abs(s.u[k] - std::asinh(s.r[k])) <= 1e-12);
  }
  CHECK(code_of([] { radial_table(1.0, 2, 0.0, 1.0, 10); }) == ErrorCode::invalid_argument);
  CHECK(code_of([] { radial_table(1.0, 2, 0.5, 1.0, 1); }) == ErrorCode::invalid_argument);
}

TEST_CASE("potential: closed form against quadrature") {
  CHECK(radial_potential(2 * kPi, 2, 1.0, 1.0) == 0.0);
  CHECK(std::abs(radial_potential(2 * kPi, 2, 0.0, 1.0) - 0.88137358701954302) <= 1e-14);
  boost::math::quadrature::tanh_sinh<double> ts;
  for (double a : {0.3, 2 * kPi, 17.0}) {
    const double q = ts.integrate([&](double r) { return radial_slope(a, 2, r); }, 0.0, 1.0);
    CHECK(std::abs(radial_potential(a, 2, 0.0, 1.0) - q) <= 1e-8);
  }
  for (int m : {3, 4}) {
    const double q =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate([&](double r) { return radial_slope(2.0, m, r); }, 0.2, 1.5, 10, 1e-14);
    CHECK(std::abs(radial_potential(2.0, m, 0.2, 1.5) - q) <= 1e-8);
  }
  CHECK(radial_potential(2.0, 3, 1.0, 0.5) == doctest::Approx(-radial_potential(2.0, 3, 0.5, 1.0)));
  CHECK(code_of([] { radial_potential(1.0, 2, -0.1, 1.0); }) == ErrorCode::invalid_argument);
}

TEST_CASE("potential in three dimensions against composite trapezoid with Richardson") {
  // trapezoid on [0.5, 2] with n and 2n panels, then one Richardson step
  auto trap = [](int n) {
    const double a = 0.5, b = 2.0, h = (b - a) / n;
    double s = 0.5 * (radial_slope(3.0, 3, a) + radial_slope(3.0, 3, b));
    for (int k = 1; k < n; ++k) s += radial_slope(3.0, 3, a + k * h);
    return s * h;
  };
  const double rich = (4 * trap(4000) - trap(2000)) / 3;
  CHECK(std::abs(radial_potential(3.0, 3, 0.5, 2.0) - rich) <= 1e-10);
}

TEST_CASE("tilt mass") {
  CHECK(std::abs(radial_tilt_mass(2 * kPi, 2, 1.0) - kPi * (std::sqrt(2.0) + std::asinh(1.0))) <= 1e-12);
  CHECK(radial_tilt_mass(2 * kPi, 2, 1.0) == doctest::Approx(7.2118).epsilon(1e-4));
  boost::math::quadrature::tanh_sinh<double> ts;
  const double q = ts.integrate([&](double r) { return 2 * kPi * r * radial_tilt(2 * kPi, 2, r); }, 0.0, 1.0);
  CHECK(std::abs(radial_tilt_mass(2 * kPi, 2, 1.0) - q) <= 1e-8);
  CHECK(radial_tilt_mass(0.0, 2, 0.7) == doctest::Approx(kPi * 0.49).epsilon(1e-14));
  for (double R = 1e-3; R <= 1.0; R *= 2) {
    const double ratio = radial_tilt_mass(2 * kPi, 2, R) / R;
    CHECK(std::isfinite(ratio));
    CHECK(ratio <= 4 * kPi);
    CHECK(ratio >= 2 * kPi - 1e-9);
  }
}

TEST_CASE("saturation radius") {
  const double r = radial_saturation_radius(2 * kPi, 2, 0.95);
  CHECK(radial_slope(2 * kPi, 2, r) == doctest::Approx(0.95).epsilon(1e-12));
  CHECK(r == doctest::Approx(std::sqrt(1 - 0.95 * 0.95) / 0.95).epsilon(1e-12));
  CHECK(code_of([] { radial_saturation_radius(1.0, 2, 1.0); }) == ErrorCode::invalid_argument);
}
