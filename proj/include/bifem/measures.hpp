#pragma once

#include <optional>
#include <vector>

#include "bifem/mesh.hpp"

namespace bifem {

struct Atom {
  Vec2 location;
  double charge = 0.0;
};

/// Signed Radon measure on the mesh domain: finitely many point charges plus
/// a density that is constant on each triangle (charge per unit sigma-area).
class ChargeMeasure {
 public:
  ChargeMeasure() = default;
  /// Atoms sharing a location are merged by adding their charges.
  explicit ChargeMeasure(std::vector<Atom> atoms, std::optional<TriangleField> density = std::nullopt);

  static ChargeMeasure zero() { return ChargeMeasure{}; }
  static ChargeMeasure point(const Vec2& x, double a) { return ChargeMeasure({Atom{x, a}}); }

  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  const std::optional<TriangleField>& density() const noexcept { return density_; }
  bool has_atoms() const noexcept { return !atoms_.empty(); }

  /// Throws invalid_argument for a density of the wrong size or non-finite
  /// entries, invalid_geometry for atoms outside the open domain.
  void validate(const Mesh& mesh) const;

  /// a*this + b*other; densities must live on the same mesh.
  ChargeMeasure combined(double a, const ChargeMeasure& other, double b) const;

 private:
  std::vector<Atom> atoms_;
  std::optional<TriangleField> density_;
};

/// Normalized smooth bump C exp(-1/(1-|x|^2)) on the unit disc, scaled to
/// radius epsilon: Phi_eps(x) = eps^-2 Phi(x/eps).
class MollifierKernel {
 public:
  explicit MollifierKernel(double epsilon);

  double epsilon() const noexcept { return epsilon_; }
  double operator()(const Vec2& x) const;

  /// Unscaled profile on the unit disc (unit mass).
  static double profile(double r);
  static double normalization();

 private:
  double epsilon_;
};

/// area(T) * sqrt(det sigma_T).
double sigma_area(const Mesh& mesh, const MetricField& metric, std::size_t t);

double total_variation(const ChargeMeasure& mu, const Mesh& mesh, const MetricField& metric);
/// mu(Omega): signed total charge.
double total_charge(const ChargeMeasure& mu, const Mesh& mesh, const MetricField& metric);

/// Density-only measure: each atom becomes a bump of radius epsilon and the
/// density is convolved with the kernel. The kernel sampled on the mesh is
/// renormalized per source so every source keeps its charge.
ChargeMeasure mollify(const ChargeMeasure& mu, const MollifierKernel& kernel, const Mesh& mesh,
                      const MetricField& metric);

/// L_i = <mu, eta_i> for every hat function eta_i.
NodalField load_vector(const ChargeMeasure& mu, const Mesh& mesh, const MetricField& metric);

double pair(const ChargeMeasure& mu, const NodalField& psi, const Mesh& mesh, const MetricField& metric);

}  // namespace bifem
