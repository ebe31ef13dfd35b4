#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bifem/energy.hpp"
#include "bifem/measures.hpp"
#include "bifem/mesh.hpp"
#include "bifem/solver.hpp"

namespace bifem {

struct TiltIntegrals {
  double tilt_l1 = 0.0;
  double tilt_loglinear = 0.0;
  /// Triangles whose slack fell below the floor (w clamped).
  std::size_t saturated_count = 0;
};

/// tilt_l1 over every triangle; tilt_loglinear over triangles whose centroid
/// is at least exclusion_radius from every atom.
TiltIntegrals tilt_integrals(const FeasibleField& u, const MetricField& metric, const Mesh& mesh,
                             double exclusion_radius, const std::vector<Vec2>& atoms,
                             double slack_floor = kDefaultSlackFloor);

/// Sum of area_sigma * f(w) over triangles whose centroid satisfies `region`.
double tilt_integral(const FeasibleField& u, const MetricField& metric, const Mesh& mesh,
                     const std::function<double(double)>& f, const std::function<bool(const Vec2&)>& region,
                     double slack_floor = kDefaultSlackFloor);

struct ScanRow {
  int source = -1;
  int target = -1;  // -1 when every candidate was excluded
  double ratio = 0.0;
};

struct LightSegmentScan {
  double max_ratio = 0.0;
  /// Node pair attaining max_ratio; empty when no pair was compared.
  std::optional<std::pair<int, int>> pair;
  std::size_t sources = 0;
  /// Best target per source, in sample order.
  std::vector<ScanRow> rows;
};

/// Max of |u(y) - u(x)| / d(x, y) with d the graph distance of alpha^2 sigma,
/// over x in `sample` and every other node y. Nodes within exclusion_radius
/// of an atom are skipped as targets (the solution approaches the light
/// cone at every charge).
LightSegmentScan light_segment_scan(const NodalField& u, const MetricField& metric, const Mesh& mesh,
                                    const std::vector<int>& sample, const std::vector<Vec2>& atoms = {},
                                    double exclusion_radius = 0.0);

/// Boundary nodes. Sources close to an atom see ratios tending to 1 along the cone.
std::vector<int> default_scan_sample(const Mesh& mesh);

struct SingularSet {
  std::vector<int> triangles;
  double fraction = 0.0;
};

/// Triangles with |Du|_sigma / alpha > 1 - delta_sing and their sigma-area fraction.
SingularSet singular_set(const FeasibleField& u, const MetricField& metric, const Mesh& mesh, double delta_sing);

struct BallGrowthRow {
  double s = 0.0;
  double mass = 0.0;  // I(s)
  double ratio = 0.0;  // I(s)/s
};

struct BallGrowth {
  Vec2 center = Vec2::Zero();
  std::vector<BallGrowthRow> rows;
  /// Radii beyond the distance to the boundary were dropped.
  bool clipped = false;
  double median_ratio = 0.0;
  /// max over rows of max(ratio/median, median/ratio).
  double spread = 0.0;
};

BallGrowth ball_growth(const FeasibleField& u, const MetricField& metric, const Mesh& mesh, const Vec2& center,
                       const std::vector<double>& radii, double slack_floor = kDefaultSlackFloor);

struct HessianIntegrals {
  double j1 = 0.0;  // w |D2u|^2
  double j2 = 0.0;  // w^3 |D2u(Du, .)|^2
  double j3 = 0.0;  // w^5 D2u(Du, Du)^2
  std::string method = "nodal-average-recovery";
};

HessianIntegrals hessian_integrals(const FeasibleField& u, const MetricField& metric, const Mesh& mesh,
                                   double exclusion_radius, const std::vector<Vec2>& atoms,
                                   double slack_floor = kDefaultSlackFloor);

/// Area-weighted nodal average of the triangle gradients (Euclidean components).
std::vector<Vec2> recover_gradient(const NodalField& u, const Mesh& mesh);

/// integral of (w - 1) dV_sigma - <rho, u>.
double field_energy(const FeasibleField& u, const ChargeMeasure& rho, const MetricField& metric, const Mesh& mesh,
                    double slack_floor = kDefaultSlackFloor);

struct FluxBalance {
  double boundary_flux = 0.0;
  double total_charge = 0.0;
  /// |boundary_flux - total_charge| / (1 + |total_charge|)
  double mismatch = 0.0;
};

FluxBalance flux_balance(const FeasibleField& u, const ChargeMeasure& rho, const MetricField& metric,
                         const Mesh& mesh, double slack_floor = kDefaultSlackFloor);

struct DiagnosticsConfig {
  /// Radius of the discs removed around atoms; defaults to 5h.
  std::optional<double> exclusion_radius;
  double delta_sing = 0.05;
  /// Empty: default_scan_sample.
  std::vector<int> scan_sample;
  bool light_scan = true;
  /// Empty: every atom, or the domain centroid when there are none.
  std::vector<Vec2> ball_centers;
  /// Empty: 12 radii geometric from 4h to min(0.5, distance to boundary).
  std::vector<double> ball_radii;

  // pass/fail thresholds
  double light_ratio_max = 0.99;
  double ball_growth_factor = 3.0;
  double flux_tolerance = 1e-8;

  double slack_floor = kDefaultSlackFloor;
};

struct DiagnosticsReport {
  double tilt_l1 = 0.0;
  double tilt_loglinear = 0.0;
  std::size_t saturated_count = 0;
  double exclusion_radius = 0.0;
  double light_segment_max_ratio = 0.0;
  std::optional<std::pair<int, int>> offending_pair;
  std::vector<ScanRow> scan_rows;
  double delta_sing = 0.0;
  double singular_fraction = 0.0;
  std::size_t singular_count = 0;
  std::vector<BallGrowth> ball_growth_table;
  HessianIntegrals hessian_integrals;
  double field_energy = 0.0;
  FluxBalance flux;

  struct Flags {
    bool finite = false;
    bool light_segments = false;
    bool ball_growth = false;
    bool flux_balance = false;
  } pass_flags;
};

DiagnosticsReport run_diagnostics(const Problem& problem, const NodalField& u, const DiagnosticsConfig& config);

}  // namespace bifem
