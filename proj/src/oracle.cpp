#include "bifem/oracle.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "bifem/error.hpp"

namespace bifem {

namespace {

void check_dimension(int m) {
  if (m < 2) throw Error(ErrorCode::invalid_argument, "space dimension must be at least 2, got " + std::to_string(m));
}

void check_radius(double r, const char* what) {
  if (!(r > 0.0) || !std::isfinite(r)) throw Error(ErrorCode::invalid_argument, std::string(what) + " must be positive");
}

void check_nonnegative(double r, const char* what) {
  if (!(r >= 0.0) || !std::isfinite(r))
    throw Error(ErrorCode::invalid_argument, std::string(what) + " must be non-negative");
}

double flux_area(int m, double r) { return sphere_area_constant(m) * std::pow(r, m - 1); }

// Integral of u' over [0, r]; u' is bounded and smooth on (0, r].
double potential_from_origin(double a, int m, double r) {
  if (a == 0.0 || r == 0.0) return 0.0;
  if (m == 2) {
    const double c = std::abs(a) / (2.0 * std::numbers::pi);
    return std::copysign(c * std::asinh(r / c), a);
  }
  auto f = [&](double s) { return s > 0.0 ? radial_slope(a, m, s) : std::copysign(1.0, a); };
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, r, 20, 1e-13, &err);
}

}  // namespace

double sphere_area_constant(int m) {
  check_dimension(m);
  if (m == 2) return 2.0 * std::numbers::pi;
  if (m == 3) return 4.0 * std::numbers::pi;
  return 2.0 * std::pow(std::numbers::pi, 0.5 * m) / std::tgamma(0.5 * m);
}

double radial_slope(double a, int m, double r) {
  check_dimension(m);
  check_radius(r, "radius");
  if (a == 0.0) return 0.0;
  return a / std::hypot(a, flux_area(m, r));
}

double radial_tilt(double a, int m, double r) {
  check_dimension(m);
  check_radius(r, "radius");
  return std::hypot(1.0, a / flux_area(m, r));
}

double radial_potential(double a, int m, double r0, double r) {
  check_dimension(m);
  check_nonnegative(r0, "anchor radius");
  check_nonnegative(r, "radius");
  if (a == 0.0 || r == r0) return 0.0;
  if (m == 2) {
    const double c = std::abs(a) / (2.0 * std::numbers::pi);
    return std::copysign(c * (std::asinh(r / c) - std::asinh(r0 / c)), a);
  }
  auto f = [&](double s) { return radial_slope(a, m, s); };
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, r0, r, 20, 1e-13, &err);
}

double radial_tilt_mass(double a, int m, double R) {
  check_dimension(m);
  check_radius(R, "radius");
  if (m == 2) {
    if (a == 0.0) return std::numbers::pi * R * R;
    const double c = std::abs(a) / (2.0 * std::numbers::pi);
    return std::numbers::pi * (R * std::hypot(R, c) + c * c * std::asinh(R / c));
  }
  // w r^(m-1) omega = sqrt((omega r^(m-1))^2 + a^2)
  auto f = [&](double s) { return std::hypot(flux_area(m, s), a); };
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, R, 20, 1e-13, &err);
}

double radial_saturation_radius(double a, int m, double slope) {
  check_dimension(m);
  if (!(slope > 0.0 && slope < 1.0)) throw Error(ErrorCode::invalid_argument, "slope must lie in (0, 1)");
  if (a == 0.0) return 0.0;
  const double area = std::abs(a) * std::sqrt(1.0 - slope * slope) / slope;
  return std::pow(area / sphere_area_constant(m), 1.0 / (m - 1));
}

RadialSolution radial_table(double a, int m, double r_min, double r_max, int n) {
  check_dimension(m);
  check_radius(r_min, "minimum radius");
  if (!(r_max > r_min) || !std::isfinite(r_max))
    throw Error(ErrorCode::invalid_argument, "radial range must satisfy 0 < r_min < r_max");
  if (n < 2) throw Error(ErrorCode::invalid_argument, "radial table needs at least 2 rows");
  RadialSolution out;
  out.a = a;
  out.m = m;
  for (int i = 0; i < n; ++i) {
    const double r = (i == n - 1) ? r_max : r_min + (r_max - r_min) * i / (n - 1);
    out.r.push_back(r);
    out.u_prime.push_back(radial_slope(a, m, r));
    out.u.push_back(potential_from_origin(a, m, r));
    out.w.push_back(radial_tilt(a, m, r));
    out.tilt_mass.push_back(radial_tilt_mass(a, m, r));
  }
  return out;
}

}  // namespace bifem
