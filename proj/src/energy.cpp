#include "bifem/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>

#include "bifem/error.hpp"

namespace bifem {

FrameGeometry::FrameGeometry(const Mesh& mesh, const MetricField& metric) : mesh_(&mesh) {
  metric.validate(mesh);
  const std::size_t nt = mesh.triangle_count();
  weight_.resize(nt);
  alpha_.resize(nt);
  frame_.resize(nt);
  grads_.resize(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const Mat2& s = metric.sigma[t];
    const Eigen::LLT<Mat2> llt(s);
    const Mat2 l = llt.matrixL();
    frame_[t] = l.inverse();
    weight_[t] = mesh.area(t) * std::sqrt(s.determinant());
    alpha_[t] = metric.alpha[t];
    for (int k = 0; k < 3; ++k) grads_[t][k] = frame_[t] * mesh.shape_gradients(t)[k];
  }
}

FeasibleField FeasibleField::make(const Mesh& mesh, const MetricField& metric, NodalField u, double tolerance) {
  if (u.size() != mesh.node_count())
    throw Error(ErrorCode::invalid_argument, "nodal field size does not match node count");
  for (double v : u.values)
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "nodal field has non-finite entries");
  const FrameGeometry geo(mesh, metric);
  TriangleField slack(mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const double a = geo.alpha(t);
    const double s = 1.0 - geo.frame_gradient(t, u).squaredNorm() / (a * a);
    if (s < -tolerance) {
      std::ostringstream os;
      os << "field is not spacelike on triangle " << t << " (slack " << s << ")";
      throw Error(ErrorCode::domain_error, os.str());
    }
    slack[t] = std::max(s, 0.0);
  }
  return FeasibleField(std::move(u), std::move(slack));
}

double bi_integrand(const Vec2& p, double alpha, const Mat2& sigma) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::invalid_argument, "lapse must be positive");
  const double s2 = p.dot(sigma.llt().solve(p));
  if (s2 > alpha * alpha * (1.0 + 1e-15))
    throw Error(ErrorCode::domain_error, "gradient outside the spacelike cone");
  return detail::integrand_frame(std::min(s2, alpha * alpha), alpha);
}

double energy(const FeasibleField& u, const ChargeMeasure& rho, const MetricField& metric, const Mesh& mesh) {
  const FrameGeometry geo(mesh, metric);
  detail::CompensatedSum sum;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const double a = geo.alpha(t);
    const double s2 = std::min(geo.frame_gradient(t, u.u()).squaredNorm(), a * a);
    sum.add(geo.weight(t) * detail::integrand_frame(s2, a));
  }
  const NodalField load = load_vector(rho, mesh, metric);
  for (std::size_t i = 0; i < mesh.node_count(); ++i) sum.add(load[i] * u.u()[i]);
  return sum.value();
}

TiltField tilt(const FeasibleField& u, const MetricField& metric, const Mesh& mesh, double slack_floor) {
  if (u.slack().size() != mesh.triangle_count())
    throw Error(ErrorCode::invalid_argument, "field does not belong to this mesh");
  (void)metric;
  TiltField out;
  out.w = TriangleField(mesh.triangle_count());
  out.saturated.assign(mesh.triangle_count(), 0);
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const double s = u.slack()[t];
    if (s < slack_floor) {
      out.saturated[t] = 1;
      ++out.saturated_count;
    }
    out.w[t] = 1.0 / std::sqrt(std::max(s, slack_floor));
  }
  return out;
}

NodalField energy_gradient(const FeasibleField& u, const ChargeMeasure& rho, const MetricField& metric,
                           const Mesh& mesh, double interior_margin) {
  const FrameGeometry geo(mesh, metric);
  std::vector<int> bad;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t)
    if (u.slack()[t] < interior_margin) bad.push_back(static_cast<int>(t));
  if (!bad.empty()) {
    std::ostringstream os;
    os << "energy gradient undefined: " << bad.size() << " saturated triangle(s):";
    for (std::size_t k = 0; k < std::min<std::size_t>(bad.size(), 20); ++k) os << ' ' << bad[k];
    if (bad.size() > 20) os << " ...";
    throw Error(ErrorCode::gradient_undefined, os.str());
  }
  NodalField g = load_vector(rho, mesh, metric);
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const double a = geo.alpha(t);
    const Vec2 q = geo.frame_gradient(t, u.u());
    const double w = 1.0 / std::sqrt(u.slack()[t]);
    const Vec2 flux = geo.weight(t) * (w / a) * q;
    const auto& tri = mesh.triangle(t);
    for (int k = 0; k < 3; ++k) g[tri[k]] += geo.grads(t)[k].dot(flux);
  }
  return g;
}

double prox_radius(double s, double beta, double alpha, double hint) {
  if (!(beta > 0.0)) throw Error(ErrorCode::invalid_argument, "prox penalty must be positive");
  if (!(alpha > 0.0)) throw Error(ErrorCode::invalid_argument, "lapse must be positive");
  if (s <= 0.0) return 0.0;
  auto residual = [&](double t) {
    const double x = t / alpha;
    return x / std::sqrt((1.0 - x) * (1.0 + x)) + beta * (t - s);
  };
  double lo = 0.0;
  double hi = std::min(s, alpha);
  // the root is strictly below alpha; pull hi inside the open interval
  if (hi >= alpha) hi = std::nextafter(alpha, 0.0);
  if (residual(hi) <= 0.0) return hi;
  double t = (hint > lo && hint < hi) ? hint : 0.5 * (lo + hi);
  const double tol = 1e-12 * std::max(1.0, beta * s);
  for (int it = 0; it < 200; ++it) {
    const double r = residual(t);
    if (std::abs(r) <= tol) break;
    if (r > 0.0)
      hi = t;
    else
      lo = t;
    const double x = t / alpha;
    const double w = 1.0 / std::sqrt((1.0 - x) * (1.0 + x));
    const double dr = w * w * w / alpha + beta;
    double next = t - r / dr;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == t) break;
    t = next;
  }
  return std::min(t, std::nextafter(alpha, 0.0));
}

Vec2 prox_bi(const Vec2& q, double beta, double alpha, const Mat2& sigma) {
  const Eigen::LLT<Mat2> llt(sigma);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::invalid_argument, "metric is not SPD");
  const Mat2 l = llt.matrixL();
  const Vec2 qf = l.triangularView<Eigen::Lower>().solve(q);
  const double s = qf.norm();
  if (s == 0.0) return Vec2::Zero();
  const double t = prox_radius(s, beta, alpha);
  return l * (qf * (t / s));
}

}  // namespace bifem
