#include "bifem/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "bifem/parallel.hpp"

namespace bifem {

namespace {

bool near_any(const Vec2& x, const std::vector<Vec2>& atoms, double radius) {
  return std::any_of(atoms.begin(), atoms.end(), [&](const Vec2& a) { return (x - a).norm() < radius; });
}

double tilt_of(const FeasibleField& u, std::size_t t, double slack_floor) {
  return 1.0 / std::sqrt(std::max(u.slack()[t], slack_floor));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double tilt_integral(const FeasibleField& u, const MetricField& metric, const Mesh& mesh,
                     const std::function<double(double)>& f, const std::function<bool(const Vec2&)>& region,
                     double slack_floor) {
  detail::CompensatedSum s;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    if (region && !region(mesh.centroid(t))) continue;
    s.add(sigma_area(mesh, metric, t) * f(tilt_of(u, t, slack_floor)));
  }
  return s.value();
}

TiltIntegrals tilt_integrals(const FeasibleField& u, const MetricField& metric, const Mesh& mesh,
                             double exclusion_radius, const std::vector<Vec2>& atoms, double slack_floor) {
  TiltIntegrals out;
  out.tilt_l1 = tilt_integral(u, metric, mesh, [](double w) { return w; }, {}, slack_floor);
  out.tilt_loglinear = tilt_integral(
      u, metric, mesh, [](double w) { return w * std::log1p(w); },
      [&](const Vec2& c) { return !near_any(c, atoms, exclusion_radius); }, slack_floor);
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t)
    if (u.slack()[t] < slack_floor) ++out.saturated_count;
  return out;
}

std::vector<int> default_scan_sample(const Mesh& mesh) { return mesh.boundary_nodes(); }

LightSegmentScan light_segment_scan(const NodalField& u, const MetricField& metric, const Mesh& mesh,
                                    const std::vector<int>& sample, const std::vector<Vec2>& atoms,
                                    double exclusion_radius) {
  if (sample.empty()) throw Error(ErrorCode::invalid_argument, "light-segment scan needs a non-empty sample");
  if (u.size() != mesh.node_count())
    throw Error(ErrorCode::invalid_argument, "nodal field size does not match node count");
  for (int s : sample)
    if (s < 0 || static_cast<std::size_t>(s) >= mesh.node_count())
      throw Error(ErrorCode::invalid_argument, "scan sample references node " + std::to_string(s));
  const MetricField hat = metric.conformal();
  std::vector<char> target(mesh.node_count(), 1);
  if (exclusion_radius > 0.0)
    for (std::size_t i = 0; i < mesh.node_count(); ++i)
      if (near_any(mesh.node(i), atoms, exclusion_radius)) target[i] = 0;

  struct Best {
    double ratio = -1.0;
    int other = -1;
  };
  std::vector<Best> best(sample.size());
  parallel_for(sample.size(), [&](std::size_t k) {
    const int x = sample[k];
    const NodalField d = graph_distance(mesh, hat, x);
    Best b;
    for (std::size_t y = 0; y < mesh.node_count(); ++y) {
      if (static_cast<int>(y) == x || !target[y] || !(d[y] > 0.0)) continue;
      const double r = std::abs(u[y] - u[x]) / d[y];
      if (r > b.ratio) b = {r, static_cast<int>(y)};
    }
    best[k] = b;
  });

  LightSegmentScan out;
  out.sources = sample.size();
  for (std::size_t k = 0; k < sample.size(); ++k) {
    out.rows.push_back({sample[k], best[k].other, std::max(best[k].ratio, 0.0)});
    if (best[k].other >= 0 && best[k].ratio > out.max_ratio) {
      out.max_ratio = best[k].ratio;
      out.pair = std::make_pair(sample[k], best[k].other);
    } else if (best[k].other >= 0 && !out.pair) {
      out.pair = std::make_pair(sample[k], best[k].other);
    }
  }
  return out;
}

SingularSet singular_set(const FeasibleField& u, const MetricField& metric, const Mesh& mesh, double delta_sing) {
  if (!(delta_sing > 0.0 && delta_sing < 1.0))
    throw Error(ErrorCode::invalid_argument, "singular-set threshold must lie in (0, 1)");
  SingularSet out;
  const double cut = (1.0 - delta_sing) * (1.0 - delta_sing);
  detail::CompensatedSum area, total;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const double a = sigma_area(mesh, metric, t);
    total.add(a);
    // |Du|^2 / alpha^2 = 1 - slack
    if (1.0 - u.slack()[t] > cut) {
      out.triangles.push_back(static_cast<int>(t));
      area.add(a);
    }
  }
  out.fraction = total.value() > 0.0 ? area.value() / total.value() : 0.0;
  return out;
}

BallGrowth ball_growth(const FeasibleField& u, const MetricField& metric, const Mesh& mesh, const Vec2& center,
                       const std::vector<double>& radii, double slack_floor) {
  BallGrowth out;
  out.center = center;
  if (mesh.locate(center).triangle < 0)
    throw Error(ErrorCode::point_location, "ball-growth center lies outside the mesh");
  const double reach = mesh.distance_to_boundary(center);
  std::vector<double> rs;
  for (double s : radii) {
    if (!(s > 0.0)) throw Error(ErrorCode::invalid_argument, "ball-growth radii must be positive");
    if (s > reach) {
      out.clipped = true;
      continue;
    }
    rs.push_back(s);
  }
  if (out.clipped)
    spdlog::warn("ball growth at ({}, {}): radii beyond the boundary distance {:.4g} were dropped", center.x(),
                 center.y(), reach);
  std::sort(rs.begin(), rs.end());

  std::vector<std::pair<double, double>> tri;  // (sigma distance of centroid, w * area)
  tri.reserve(mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const Vec2 d = mesh.centroid(t) - center;
    tri.emplace_back(std::sqrt(d.dot(metric.sigma[t] * d)), sigma_area(mesh, metric, t) * tilt_of(u, t, slack_floor));
  }
  std::sort(tri.begin(), tri.end());
  detail::CompensatedSum mass;
  std::size_t k = 0;
  std::vector<double> ratios;
  for (double s : rs) {
    while (k < tri.size() && tri[k].first <= s) mass.add(tri[k++].second);
    out.rows.push_back({s, mass.value(), mass.value() / s});
    ratios.push_back(mass.value() / s);
  }
  out.median_ratio = median_of(ratios);
  for (double r : ratios)
    if (r > 0.0 && out.median_ratio > 0.0)
      out.spread = std::max(out.spread, std::max(r / out.median_ratio, out.median_ratio / r));
    else
      out.spread = std::numeric_limits<double>::infinity();
  return out;
}

std::vector<Vec2> recover_gradient(const NodalField& u, const Mesh& mesh) {
  if (u.size() != mesh.node_count())
    throw Error(ErrorCode::invalid_argument, "nodal field size does not match node count");
  std::vector<Vec2> g(mesh.node_count(), Vec2::Zero());
  std::vector<double> weight(mesh.node_count(), 0.0);
  const TriangleVectorField grads = p1_gradient(mesh, u);
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangle(t);
    const Vec2 grad = grads[t];
    for (int k = 0; k < 3; ++k) {
      g[tri[k]] += mesh.area(t) * grad;
      weight[tri[k]] += mesh.area(t);
    }
  }
  for (std::size_t i = 0; i < g.size(); ++i) g[i] /= weight[i];
  return g;
}

HessianIntegrals hessian_integrals(const FeasibleField& u, const MetricField& metric, const Mesh& mesh,
                                   double exclusion_radius, const std::vector<Vec2>& atoms, double slack_floor) {
  const FrameGeometry geo(mesh, metric);
  const std::vector<Vec2> g = recover_gradient(u.u(), mesh);

  // D2u(Du, .) is half the gradient of |Du|^2. Recovering |Du|^2 and
  // differentiating it avoids the large tangential curvature that the full
  // recovered Hessian carries near a charge, which w^3 and w^5 amplify.
  NodalField s2(mesh.node_count(), 0.0);
  {
    std::vector<double> weight(mesh.node_count(), 0.0);
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
      const double v = geo.frame_gradient(t, u.u()).squaredNorm();
      for (int k : mesh.triangle(t)) {
        s2[k] += mesh.area(t) * v;
        weight[k] += mesh.area(t);
      }
    }
    for (std::size_t i = 0; i < s2.size(); ++i) s2[i] /= weight[i];
  }

  detail::CompensatedSum j1, j2, j3;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    if (near_any(mesh.centroid(t), atoms, exclusion_radius)) continue;
    const auto& tri = mesh.triangle(t);
    const auto& eta = mesh.shape_gradients(t);
    Mat2 h = Mat2::Zero();
    Vec2 ds2 = Vec2::Zero();
    for (int k = 0; k < 3; ++k) {
      h += g[tri[k]] * eta[k].transpose();
      ds2 += s2[tri[k]] * eta[k];
    }
    h = 0.5 * (h + h.transpose()).eval();
    const Mat2 hf = geo.frame(t) * h * geo.frame(t).transpose();
    const Vec2 q = geo.frame_gradient(t, u.u());
    const Vec2 hq = 0.5 * geo.frame(t) * ds2;
    const double w = tilt_of(u, t, slack_floor);
    const double a = geo.weight(t);
    const double qhq = q.dot(hq);
    j1.add(a * w * hf.squaredNorm());
    j2.add(a * w * w * w * hq.squaredNorm());
    j3.add(a * std::pow(w, 5) * qhq * qhq);
  }
  HessianIntegrals out;
  out.j1 = j1.value();
  out.j2 = j2.value();
  out.j3 = j3.value();
  return out;
}

double field_energy(const FeasibleField& u, const ChargeMeasure& rho, const MetricField& metric, const Mesh& mesh,
                    double slack_floor) {
  const double bulk = tilt_integral(u, metric, mesh, [](double w) { return w - 1.0; }, {}, slack_floor);
  return bulk - pair(rho, u.u(), mesh, metric);
}

FluxBalance flux_balance(const FeasibleField& u, const ChargeMeasure& rho, const MetricField& metric,
                         const Mesh& mesh, double slack_floor) {
  const NodalField r = weak_residual(u, rho, metric, mesh, true, slack_floor);
  detail::CompensatedSum s;
  for (int b : mesh.boundary_nodes()) s.add(r[b]);
  FluxBalance out;
  out.boundary_flux = s.value();
  out.total_charge = total_charge(rho, mesh, metric);
  out.mismatch = std::abs(out.boundary_flux - out.total_charge) / (1.0 + std::abs(out.total_charge));
  return out;
}

DiagnosticsReport run_diagnostics(const Problem& problem, const NodalField& u_nodal, const DiagnosticsConfig& cfg) {
  problem.validate();
  const Mesh& mesh = *problem.mesh;
  const MetricField& metric = problem.metric;
  const FeasibleField u = FeasibleField::make(mesh, metric, u_nodal);
  const double h = characteristic_h(mesh);
  std::vector<Vec2> atoms;
  for (const Atom& a : problem.rho.atoms()) atoms.push_back(a.location);

  DiagnosticsReport rep;
  rep.exclusion_radius = cfg.exclusion_radius.value_or(5.0 * h);
  if (!(rep.exclusion_radius >= 0.0)) throw Error(ErrorCode::invalid_argument, "exclusion radius must be >= 0");

  const TiltIntegrals ti = tilt_integrals(u, metric, mesh, rep.exclusion_radius, atoms, cfg.slack_floor);
  rep.tilt_l1 = ti.tilt_l1;
  rep.tilt_loglinear = ti.tilt_loglinear;
  rep.saturated_count = ti.saturated_count;

  if (cfg.light_scan) {
    const std::vector<int> sample =
        cfg.scan_sample.empty() ? default_scan_sample(mesh) : cfg.scan_sample;
    const LightSegmentScan scan = light_segment_scan(u.u(), metric, mesh, sample, atoms, rep.exclusion_radius);
    rep.light_segment_max_ratio = scan.max_ratio;
    rep.offending_pair = scan.pair;
    rep.scan_rows = scan.rows;
  }

  rep.delta_sing = cfg.delta_sing;
  const SingularSet sing = singular_set(u, metric, mesh, cfg.delta_sing);
  rep.singular_fraction = sing.fraction;
  rep.singular_count = sing.triangles.size();

  std::vector<Vec2> centers = cfg.ball_centers;
  if (centers.empty()) centers = atoms;
  if (centers.empty()) {
    Vec2 c = Vec2::Zero();
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) c += mesh.area(t) * mesh.centroid(t);
    centers.push_back(c / mesh.total_area());
  }
  for (const Vec2& c : centers) {
    std::vector<double> radii = cfg.ball_radii;
    if (radii.empty()) {
      const double lo = 4.0 * h;
      const double hi = std::min(0.5, 0.95 * mesh.distance_to_boundary(c));
      if (hi > lo)
        for (int k = 0; k < 12; ++k) radii.push_back(lo * std::pow(hi / lo, k / 11.0));
    }
    rep.ball_growth_table.push_back(ball_growth(u, metric, mesh, c, radii, cfg.slack_floor));
  }

  rep.hessian_integrals = hessian_integrals(u, metric, mesh, rep.exclusion_radius, atoms, cfg.slack_floor);
  rep.field_energy = field_energy(u, problem.rho, metric, mesh, cfg.slack_floor);
  rep.flux = flux_balance(u, problem.rho, metric, mesh, cfg.slack_floor);

  auto finite = [](double v) { return std::isfinite(v); };
  bool all_finite = finite(rep.tilt_l1) && finite(rep.tilt_loglinear) && finite(rep.light_segment_max_ratio) &&
                    finite(rep.singular_fraction) && finite(rep.hessian_integrals.j1) &&
                    finite(rep.hessian_integrals.j2) && finite(rep.hessian_integrals.j3) &&
                    finite(rep.field_energy) && finite(rep.flux.mismatch);
  bool growth_ok = true;
  for (const BallGrowth& b : rep.ball_growth_table) {
    for (const auto& row : b.rows) all_finite = all_finite && finite(row.ratio);
    growth_ok = growth_ok && b.spread <= cfg.ball_growth_factor;
  }
  rep.pass_flags.finite = all_finite;
  rep.pass_flags.light_segments = rep.light_segment_max_ratio <= cfg.light_ratio_max;
  rep.pass_flags.ball_growth = growth_ok;
  rep.pass_flags.flux_balance = rep.flux.mismatch <= cfg.flux_tolerance;
  return rep;
}

}  // namespace bifem
