#pragma once

#include <vector>

namespace bifem {

/// Area of the unit (m-1)-sphere: 2 pi^(m/2) / Gamma(m/2).
double sphere_area_constant(int m);

/// u'(r) = a / sqrt(a^2 + (omega r^(m-1))^2) for the Born solution with a
/// point charge a at the origin of R^m (flat metric, unit lapse).
double radial_slope(double a, int m, double r);

/// w(r) = sqrt(1 + (a / (omega r^(m-1)))^2).
double radial_tilt(double a, int m, double r);

/// u(r) - u(r0) for r, r0 >= 0. Closed form for m = 2, adaptive quadrature otherwise.
double radial_potential(double a, int m, double r0, double r);

/// I(R) = integral of w over the ball of radius R.
double radial_tilt_mass(double a, int m, double R);

/// Radius at which |u'| equals `slope` in (0, 1); u' saturates inside it.
double radial_saturation_radius(double a, int m, double slope);

struct RadialSolution {
  double a = 0.0;
  int m = 2;
  std::vector<double> r;
  std::vector<double> u_prime;
  /// Anchored so that u(0) = 0.
  std::vector<double> u;
  std::vector<double> w;
  std::vector<double> tilt_mass;
};

/// n equally spaced radii in [r_min, r_max] (r_min > 0, n >= 2).
RadialSolution radial_table(double a, int m, double r_min, double r_max, int n);

}  // namespace bifem
