#include "bifem/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "bifem/error.hpp"

namespace bifem {

namespace {

// Degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1).
struct QuadPoint {
  double l0, l1, l2, w;
};
constexpr double kA1 = 0.059715871789770, kB1 = 0.470142064105115, kW1 = 0.132394152788506;
constexpr double kA2 = 0.797426985353087, kB2 = 0.101286507323456, kW2 = 0.125939180544827;
constexpr QuadPoint kRule7[7] = {
    {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.225},
    {kA1, kB1, kB1, kW1}, {kB1, kA1, kB1, kW1}, {kB1, kB1, kA1, kW1},
    {kA2, kB2, kB2, kW2}, {kB2, kA2, kB2, kW2}, {kB2, kB2, kA2, kW2},
};

template <class F>
double integrate_triangle(const Vec2& a, const Vec2& b, const Vec2& c, const F& f, int level) {
  if (level > 0) {
    const Vec2 ab = 0.5 * (a + b), bc = 0.5 * (b + c), ca = 0.5 * (c + a);
    return integrate_triangle(a, ab, ca, f, level - 1) + integrate_triangle(ab, b, bc, f, level - 1) +
           integrate_triangle(ca, bc, c, f, level - 1) + integrate_triangle(ab, bc, ca, f, level - 1);
  }
  const double area = 0.5 * std::abs((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
  double s = 0.0;
  for (const auto& q : kRule7) s += q.w * f(q.l0 * a + q.l1 * b + q.l2 * c);
  return area * s;
}

}  // namespace

// ---------------------------------------------------------------------------
// ChargeMeasure

ChargeMeasure::ChargeMeasure(std::vector<Atom> atoms, std::optional<TriangleField> density)
    : density_(std::move(density)) {
  for (const Atom& a : atoms) {
    if (!a.location.allFinite() || !std::isfinite(a.charge))
      throw Error(ErrorCode::invalid_argument, "atom with non-finite location or charge");
    auto it = std::find_if(atoms_.begin(), atoms_.end(),
                           [&](const Atom& b) { return b.location == a.location; });
    if (it != atoms_.end())
      it->charge += a.charge;
    else
      atoms_.push_back(a);
  }
}

void ChargeMeasure::validate(const Mesh& mesh) const {
  if (density_) {
    if (density_->size() != mesh.triangle_count())
      throw Error(ErrorCode::invalid_argument, "charge density size does not match triangle count");
    for (double v : density_->values)
      if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "charge density has non-finite entries");
  }
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    const Vec2& x = atoms_[i].location;
    if (mesh.locate(x).triangle < 0 || mesh.distance_to_boundary(x) <= 1e-12 * mesh.h_max()) {
      std::ostringstream os;
      os << "atom " << i << " at (" << x.x() << ", " << x.y() << ") is not strictly inside the domain";
      throw Error(ErrorCode::invalid_geometry, os.str());
    }
  }
}

ChargeMeasure ChargeMeasure::combined(double a, const ChargeMeasure& other, double b) const {
  std::vector<Atom> atoms;
  for (const Atom& at : atoms_) atoms.push_back({at.location, a * at.charge});
  for (const Atom& at : other.atoms_) atoms.push_back({at.location, b * at.charge});
  std::optional<TriangleField> dens;
  if (density_ || other.density_) {
    const std::size_t n = density_ ? density_->size() : other.density_->size();
    if (density_ && other.density_ && density_->size() != other.density_->size())
      throw Error(ErrorCode::invalid_argument, "densities live on different meshes");
    TriangleField f(n, 0.0);
    for (std::size_t t = 0; t < n; ++t)
      f[t] = (density_ ? a * (*density_)[t] : 0.0) + (other.density_ ? b * (*other.density_)[t] : 0.0);
    dens = std::move(f);
  }
  return ChargeMeasure(std::move(atoms), std::move(dens));
}

// ---------------------------------------------------------------------------
// Kernel

double MollifierKernel::profile(double r) {
  if (r >= 1.0) return 0.0;
  return normalization() * std::exp(-1.0 / (1.0 - r * r));
}

double MollifierKernel::normalization() {
  static const double c = [] {
    auto f = [](double r) { return r < 1.0 ? std::exp(-1.0 / (1.0 - r * r)) * r : 0.0; };
    const double mass = 2.0 * std::numbers::pi *
                        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-15);
    return 1.0 / mass;
  }();
  return c;
}

MollifierKernel::MollifierKernel(double epsilon) : epsilon_(epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw Error(ErrorCode::invalid_argument, "mollifier radius must be positive");
}

double MollifierKernel::operator()(const Vec2& x) const {
  return profile(x.norm() / epsilon_) / (epsilon_ * epsilon_);
}

// ---------------------------------------------------------------------------
// Measure operations

double sigma_area(const Mesh& mesh, const MetricField& metric, std::size_t t) {
  return mesh.area(t) * std::sqrt(metric.sigma[t].determinant());
}

double total_variation(const ChargeMeasure& mu, const Mesh& mesh, const MetricField& metric) {
  mu.validate(mesh);
  metric.validate(mesh);
  double tv = 0.0;
  for (const Atom& a : mu.atoms()) tv += std::abs(a.charge);
  if (mu.density())
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t)
      tv += sigma_area(mesh, metric, t) * std::abs((*mu.density())[t]);
  return tv;
}

double total_charge(const ChargeMeasure& mu, const Mesh& mesh, const MetricField& metric) {
  double q = 0.0;
  for (const Atom& a : mu.atoms()) q += a.charge;
  if (mu.density())
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) q += sigma_area(mesh, metric, t) * (*mu.density())[t];
  return q;
}

ChargeMeasure mollify(const ChargeMeasure& mu, const MollifierKernel& kernel, const Mesh& mesh,
                      const MetricField& metric) {
  mu.validate(mesh);
  metric.validate(mesh);
  const double eps = kernel.epsilon();
  for (std::size_t i = 0; i < mu.atoms().size(); ++i) {
    const Vec2& x = mu.atoms()[i].location;
    if (mesh.distance_to_boundary(x) <= eps) {
      std::ostringstream os;
      os << "atom " << i << " at (" << x.x() << ", " << x.y() << ") lies within the mollification radius " << eps
         << " of the boundary";
      throw Error(ErrorCode::mollification_radius, os.str());
    }
  }

  struct Source {
    Vec2 y;
    double mass;
    int level;
  };
  std::vector<Source> sources;
  for (const Atom& a : mu.atoms()) sources.push_back({a.location, a.charge, 2});
  if (mu.density()) {
    constexpr double kBig = 2.0 / 3.0, kSmall = 1.0 / 6.0;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
      const double f = (*mu.density())[t];
      if (f == 0.0) continue;
      const auto& tri = mesh.triangle(t);
      const Vec2& a = mesh.node(tri[0]);
      const Vec2& b = mesh.node(tri[1]);
      const Vec2& c = mesh.node(tri[2]);
      const double m = f * sigma_area(mesh, metric, t) / 3.0;
      sources.push_back({kBig * a + kSmall * b + kSmall * c, m, 0});
      sources.push_back({kSmall * a + kBig * b + kSmall * c, m, 0});
      sources.push_back({kSmall * a + kSmall * b + kBig * c, m, 0});
    }
  }

  TriangleField out(mesh.triangle_count(), 0.0);
  std::vector<double> weights;
  for (const Source& s : sources) {
    const auto near = mesh.triangles_near(s.y, eps);
    weights.assign(near.size(), 0.0);
    double sum = 0.0;
    auto phi = [&](const Vec2& x) { return kernel(x - s.y); };
    for (std::size_t k = 0; k < near.size(); ++k) {
      const auto& tri = mesh.triangle(near[k]);
      weights[k] = integrate_triangle(mesh.node(tri[0]), mesh.node(tri[1]), mesh.node(tri[2]), phi, s.level);
      sum += weights[k];
    }
    if (sum > 0.0) {
      for (std::size_t k = 0; k < near.size(); ++k)
        out[near[k]] += s.mass * (weights[k] / sum) / sigma_area(mesh, metric, near[k]);
    } else {
      const auto loc = mesh.locate(s.y);
      if (loc.triangle < 0) throw Error(ErrorCode::point_location, "mollification source outside the mesh");
      out[loc.triangle] += s.mass / sigma_area(mesh, metric, loc.triangle);
    }
  }
  return ChargeMeasure({}, std::move(out));
}

NodalField load_vector(const ChargeMeasure& mu, const Mesh& mesh, const MetricField& metric) {
  NodalField load(mesh.node_count(), 0.0);
  for (std::size_t i = 0; i < mu.atoms().size(); ++i) {
    const Atom& a = mu.atoms()[i];
    const auto loc = mesh.locate(a.location);
    if (loc.triangle < 0)
      throw Error(ErrorCode::point_location, "atom " + std::to_string(i) + " is outside every triangle");
    const auto& tri = mesh.triangle(loc.triangle);
    for (int k = 0; k < 3; ++k) load[tri[k]] += a.charge * loc.barycentric[k];
  }
  if (mu.density()) {
    if (mu.density()->size() != mesh.triangle_count())
      throw Error(ErrorCode::invalid_argument, "charge density size does not match triangle count");
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
      const double q = sigma_area(mesh, metric, t) * (*mu.density())[t] / 3.0;
      for (int v : mesh.triangle(t)) load[v] += q;
    }
  }
  return load;
}

double pair(const ChargeMeasure& mu, const NodalField& psi, const Mesh& mesh, const MetricField& metric) {
  if (psi.size() != mesh.node_count())
    throw Error(ErrorCode::invalid_argument, "nodal field size does not match node count");
  const NodalField load = load_vector(mu, mesh, metric);
  double s = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) s += load[i] * psi[i];
  return s;
}

}  // namespace bifem
