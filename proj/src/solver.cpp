#include "bifem/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <spdlog/spdlog.h>

namespace bifem {

namespace {

using Clock = std::chrono::steady_clock;
using Eigen::VectorXd;

struct DirichletMap {
  std::vector<int> index;     // node -> interior or boundary slot
  std::vector<int> interior;  // interior slot -> node
  std::vector<int> boundary;  // boundary slot -> node
};

DirichletMap make_map(const Mesh& mesh) {
  DirichletMap m;
  m.index.resize(mesh.node_count());
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    if (mesh.is_boundary(i)) {
      m.index[i] = static_cast<int>(m.boundary.size());
      m.boundary.push_back(static_cast<int>(i));
    } else {
      m.index[i] = static_cast<int>(m.interior.size());
      m.interior.push_back(static_cast<int>(i));
    }
  }
  return m;
}

void split_blocks(const Mesh& mesh, const DirichletMap& map, const SparseMatrix& full, SparseMatrix& kii,
                  SparseMatrix& kib) {
  std::vector<Eigen::Triplet<double>> ii, ib;
  ii.reserve(full.nonZeros());
  for (int col = 0; col < full.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(full, col); it; ++it) {
      const auto row = static_cast<std::size_t>(it.row());
      if (mesh.is_boundary(row)) continue;
      if (mesh.is_boundary(col))
        ib.emplace_back(map.index[row], map.index[col], it.value());
      else
        ii.emplace_back(map.index[row], map.index[col], it.value());
    }
  }
  kii.resize(static_cast<Eigen::Index>(map.interior.size()), static_cast<Eigen::Index>(map.interior.size()));
  kib.resize(static_cast<Eigen::Index>(map.interior.size()), static_cast<Eigen::Index>(map.boundary.size()));
  kii.setFromTriplets(ii.begin(), ii.end());
  kib.setFromTriplets(ib.begin(), ib.end());
}

// SPD solves on the interior block. The sparsity pattern is fixed by the
// mesh, so the symbolic analysis is done once.
class SpdSolver {
 public:
  SpdSolver(LinearSolverKind kind, double tol) : kind_(kind) { cg_.setTolerance(tol); }

  void compute(const SparseMatrix& a) {
    if (kind_ == LinearSolverKind::cholesky) {
      if (!analyzed_) {
        ldlt_.analyzePattern(a);
        analyzed_ = true;
      }
      ldlt_.factorize(a);
      if (ldlt_.info() != Eigen::Success)
        throw Error(ErrorCode::convergence_failure, "sparse factorization failed (matrix not SPD)");
    } else {
      cg_.compute(a);
      if (cg_.info() != Eigen::Success)
        throw Error(ErrorCode::convergence_failure, "preconditioner setup failed");
    }
  }

  VectorXd solve(const VectorXd& b, const VectorXd& guess) {
    if (kind_ == LinearSolverKind::cholesky) return ldlt_.solve(b);
    VectorXd x = cg_.solveWithGuess(b, guess);
    if (cg_.info() != Eigen::Success)
      throw Error(ErrorCode::convergence_failure, "conjugate gradient did not reach the linear tolerance");
    return x;
  }

 private:
  LinearSolverKind kind_;
  bool analyzed_ = false;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>> cg_;
};

// Holds the pieces shared by every algorithm on one problem.
struct Discretization {
  const Problem& problem;
  const Mesh& mesh;
  FrameGeometry geo;
  DirichletMap map;
  NodalField load;
  VectorXd phi_b;

  explicit Discretization(const Problem& p)
      : problem(p), mesh(*p.mesh), geo(*p.mesh, p.metric), map(make_map(*p.mesh)),
        load(load_vector(p.rho, *p.mesh, p.metric)) {
    phi_b.resize(static_cast<Eigen::Index>(map.boundary.size()));
    for (std::size_t k = 0; k < map.boundary.size(); ++k) phi_b[static_cast<Eigen::Index>(k)] = p.phi[map.boundary[k]];
  }

  // Euclidean stiffness weight for a frame-space tensor m: sqrt(det sigma) F^T m F.
  std::vector<Mat2> euclidean_weights(const std::vector<Mat2>& frame_tensors) const {
    std::vector<Mat2> out(frame_tensors.size());
    for (std::size_t t = 0; t < out.size(); ++t) {
      const Mat2& f = geo.frame(t);
      const double jac = geo.weight(t) / mesh.area(t);
      Mat2 w = jac * f.transpose() * frame_tensors[t] * f;
      w(0, 1) = w(1, 0) = 0.5 * (w(0, 1) + w(1, 0));
      out[t] = w;
    }
    return out;
  }

  void system(const std::vector<Mat2>& frame_tensors, SparseMatrix& kii, SparseMatrix& kib) const {
    const auto w = euclidean_weights(frame_tensors);
    split_blocks(mesh, map, assemble_weighted_stiffness(mesh, w), kii, kib);
  }

  NodalField assemble_nodal(const VectorXd& interior) const {
    NodalField u(mesh.node_count());
    for (std::size_t k = 0; k < map.interior.size(); ++k) u[map.interior[k]] = interior[static_cast<Eigen::Index>(k)];
    for (std::size_t k = 0; k < map.boundary.size(); ++k) u[map.boundary[k]] = phi_b[static_cast<Eigen::Index>(k)];
    return u;
  }

  VectorXd interior_of(const NodalField& u) const {
    VectorXd x(static_cast<Eigen::Index>(map.interior.size()));
    for (std::size_t k = 0; k < map.interior.size(); ++k) x[static_cast<Eigen::Index>(k)] = u[map.interior[k]];
    return x;
  }

  // Energy with the integrand saturated at alpha on infeasible triangles.
  double energy_of(const NodalField& u) const {
    detail::CompensatedSum s;
    for (std::size_t t = 0; t < geo.triangle_count(); ++t) {
      const double a = geo.alpha(t);
      s.add(geo.weight(t) * detail::integrand_frame(std::min(geo.frame_gradient(t, u).squaredNorm(), a * a), a));
    }
    for (std::size_t i = 0; i < mesh.node_count(); ++i) s.add(load[i] * u[i]);
    return s.value();
  }

  double min_slack(const NodalField& u) const {
    double m = 1.0;
    for (std::size_t t = 0; t < geo.triangle_count(); ++t) {
      const double a = geo.alpha(t);
      m = std::min(m, 1.0 - geo.frame_gradient(t, u).squaredNorm() / (a * a));
    }
    return m;
  }

  // Largest step s with |q + s dq| <= limit * alpha on every triangle.
  double max_feasible_step(const NodalField& u, const NodalField& d, double limit) const {
    double smax = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < geo.triangle_count(); ++t) {
      const Vec2 q = geo.frame_gradient(t, u);
      const Vec2 dq = geo.frame_gradient(t, d);
      const double a = dq.squaredNorm();
      if (a == 0.0) continue;
      const double r2 = limit * limit * geo.alpha(t) * geo.alpha(t);
      const double b = 2.0 * q.dot(dq);
      const double c = q.squaredNorm() - r2;
      if (c >= 0.0) return 0.0;
      const double disc = std::sqrt(b * b - 4.0 * a * c);
      const double s = (b > 0.0) ? (-2.0 * c) / (b + disc) : (-b + disc) / (2.0 * a);
      smax = std::min(smax, s);
    }
    return smax;
  }

  NodalField harmonic_lift(const SolverConfig& cfg) const {
    SparseMatrix kii, kib;
    system(std::vector<Mat2>(geo.triangle_count(), Mat2::Identity()), kii, kib);
    SpdSolver lift(cfg.linear_solver, cfg.linear_tol);
    lift.compute(kii);
    return assemble_nodal(lift.solve(-kib * phi_b, VectorXd::Zero(static_cast<Eigen::Index>(map.interior.size()))));
  }
};

NodalField initial_guess(const Discretization& d, const SolverConfig& cfg) {
  const Mesh& mesh = d.mesh;
  NodalField u = cfg.initial ? *cfg.initial : d.problem.phi;
  if (u.size() != mesh.node_count())
    throw Error(ErrorCode::invalid_argument, "initial guess size does not match node count");
  if (!cfg.initial) {
    if (cfg.init == InitialGuess::zero) {
      for (int i : d.map.interior) u[i] = 0.0;
    } else if (cfg.init == InitialGuess::random) {
      // random perturbation of the boundary data, halved until spacelike
      std::mt19937_64 rng(cfg.seed);
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      NodalField pert(mesh.node_count(), 0.0);
      for (int i : d.map.interior) pert[i] = dist(rng);
      double amp = 0.5;
      for (int k = 0; k < 60; ++k, amp *= 0.5) {
        NodalField trial = u;
        for (int i : d.map.interior) trial[i] += amp * pert[i];
        if (d.min_slack(trial) > 1e-3) {
          u = std::move(trial);
          break;
        }
      }
    }
  }
  for (int i : d.map.boundary) u[i] = d.problem.phi[i];
  return u;
}

struct PolishOutcome {
  bool converged = false;
  NodalField u;
  int iterations = 0;
};

// Newton on the mixed system in (u, E), E the per-triangle flux in frame
// coordinates:  sum_T A_T grads^T E_T + load = 0  and  Du_T = h(E_T) with
// h(E) = alpha E / sqrt(1 + |E|^2). h is smooth and bounded, so iterates
// need not be spacelike; at convergence Du = h(E) is strictly inside the cone.
// Flux residual computed from Du itself, interior rows only.
VectorXd primal_residual_of(const Discretization& d, const NodalField& u) {
  NodalField r(d.mesh.node_count(), 0.0);
  for (std::size_t t = 0; t < d.geo.triangle_count(); ++t) {
    const double a = d.geo.alpha(t);
    const Vec2 q = d.geo.frame_gradient(t, u);
    const Vec2 e = q / (a * std::sqrt(1.0 - q.squaredNorm() / (a * a)));
    const auto& tri = d.mesh.triangle(t);
    for (int k = 0; k < 3; ++k) r[tri[k]] += d.geo.weight(t) * d.geo.grads(t)[k].dot(e);
  }
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += d.load[i];
  return d.interior_of(r);
}

// Near saturation the flux is very sensitive to Du, so a tiny gap left by the
// mixed iteration still shows in the residual of u. A few Newton steps on u
// alone remove it. Returns the number of accepted steps.
int primal_refine(const Discretization& d, NodalField& u, double gtol, SpdSolver& solver) {
  const std::size_t nt = d.geo.triangle_count();
  std::vector<Mat2> tensor(nt);
  SparseMatrix kii, kib;
  VectorXd r = primal_residual_of(d, u);
  int steps = 0;
  for (int it = 0; it < 8 && r.size() && r.cwiseAbs().maxCoeff() > gtol; ++it) {
    for (std::size_t t = 0; t < nt; ++t) {
      const double a = d.geo.alpha(t);
      const Vec2 q = d.geo.frame_gradient(t, u);
      const double w = 1.0 / std::sqrt(1.0 - q.squaredNorm() / (a * a));
      tensor[t] = (w / a) * Mat2::Identity() + (w * w * w / (a * a * a)) * q * q.transpose();
    }
    d.system(tensor, kii, kib);
    try {
      solver.compute(kii);
    } catch (const Error&) {
      break;
    }
    const VectorXd du = solver.solve(-r, VectorXd::Zero(r.size()));
    bool accepted = false;
    for (double s = 1.0; s > 1e-4; s *= 0.5) {
      NodalField ut = u;
      for (std::size_t k = 0; k < d.map.interior.size(); ++k) ut[d.map.interior[k]] += s * du[static_cast<Eigen::Index>(k)];
      if (!(d.min_slack(ut) > 0.0)) continue;
      VectorXd rt = primal_residual_of(d, ut);
      if (rt.norm() < r.norm()) {
        u = std::move(ut);
        r = std::move(rt);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    ++steps;
  }
  return steps;
}

PolishOutcome newton_polish(const Discretization& d, NodalField u, std::vector<Vec2> flux, double gtol,
                            SpdSolver& solver) {
  PolishOutcome out;
  const std::size_t nt = d.geo.triangle_count();
  const std::size_t nn = d.mesh.node_count();
  std::vector<Mat2> tensor(nt);
  std::vector<Vec2> gap(nt);
  SparseMatrix kii, kib;

  auto h_of = [&](std::size_t t, const Vec2& e) { return Vec2(d.geo.alpha(t) * e / std::sqrt(1.0 + e.squaredNorm())); };
  auto scatter = [&](const std::vector<Vec2>& v) {
    NodalField r(nn, 0.0);
    for (std::size_t t = 0; t < nt; ++t) {
      const auto& tri = d.mesh.triangle(t);
      for (int k = 0; k < 3; ++k) r[tri[k]] += d.geo.weight(t) * d.geo.grads(t)[k].dot(v[t]);
    }
    return r;
  };
  auto residuals = [&](const NodalField& uu, const std::vector<Vec2>& e, VectorXd& r1, double& merit, double& r1max,
                       double& r2max) {
    NodalField r = scatter(e);
    for (std::size_t i = 0; i < nn; ++i) r[i] += d.load[i];
    r1 = d.interior_of(r);
    merit = r1.squaredNorm();
    r1max = r1.size() ? r1.cwiseAbs().maxCoeff() : 0.0;
    r2max = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
      const Vec2 g = d.geo.frame_gradient(t, uu) - h_of(t, e[t]);
      merit += d.geo.weight(t) * g.squaredNorm();
      r2max = std::max(r2max, g.norm() / d.geo.alpha(t));
    }
  };

  VectorXd r1;
  double merit = 0.0, r1max = 0.0, r2max = 0.0;
  residuals(u, flux, r1, merit, r1max, r2max);
  for (int it = 0; it < 40; ++it) {
    spdlog::trace("polish: step {} flux residual {:.3e} gradient gap {:.3e}", it, r1max, r2max);
    if (r1max <= gtol && r2max <= 1e-14) break;
    for (std::size_t t = 0; t < nt; ++t) {
      const Vec2& e = flux[t];
      const double c = std::sqrt(1.0 + e.squaredNorm());
      tensor[t] = (c / d.geo.alpha(t)) * (Mat2::Identity() + e * e.transpose());
      gap[t] = tensor[t] * (d.geo.frame_gradient(t, u) - h_of(t, e));
    }
    d.system(tensor, kii, kib);
    try {
      solver.compute(kii);
    } catch (const Error&) {
      spdlog::debug("polish: factorization failed at step {}", it);
      return out;
    }
    NodalField rhs = scatter(gap);
    const VectorXd b = -r1 - d.interior_of(rhs);
    const VectorXd du = solver.solve(b, VectorXd::Zero(b.size()));
    NodalField dun(nn, 0.0);
    for (std::size_t k = 0; k < d.map.interior.size(); ++k) dun[d.map.interior[k]] = du[static_cast<Eigen::Index>(k)];
    std::vector<Vec2> de(nt);
    for (std::size_t t = 0; t < nt; ++t) de[t] = gap[t] + tensor[t] * d.geo.frame_gradient(t, dun);

    bool accepted = false;
    for (double s = 1.0; s > 1e-6; s *= 0.5) {
      NodalField ut = u;
      for (int i : d.map.interior) ut[i] += s * dun[i];
      std::vector<Vec2> et(nt);
      for (std::size_t t = 0; t < nt; ++t) et[t] = flux[t] + s * de[t];
      VectorXd r1t;
      double mt, a, b2;
      residuals(ut, et, r1t, mt, a, b2);
      if (mt < (1.0 - 1e-4 * s) * merit || (s == 1.0 && mt <= merit * (1.0 + 1e-12) && a <= 10.0 * gtol)) {
        u = std::move(ut);
        flux = std::move(et);
        r1 = std::move(r1t);
        merit = mt;
        r1max = a;
        r2max = b2;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // merit at round-off level
    out.iterations = it + 1;
  }
  // Du = h(E) holds up to the gap, so u is spacelike whenever it converged
  if (r1max <= gtol && r2max <= 1e-10 && d.min_slack(u) > 0.0) {
    out.converged = true;
    out.iterations += primal_refine(d, u, gtol, solver);
    out.u = std::move(u);
  } else {
    spdlog::debug("polish: stopped with flux residual {:.3e}, gradient gap {:.3e}", r1max, r2max);
  }
  return out;
}

std::string describe(const IterationRecord& r) {
  std::ostringstream os;
  os << "iteration " << r.iteration << ": primal " << r.primal_residual << ", dual " << r.dual_residual;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------

void Problem::validate() const {
  if (!mesh) throw Error(ErrorCode::invalid_problem, "problem has no mesh");
  try {
    metric.validate(*mesh);
    rho.validate(*mesh);
  } catch (const Error& e) {
    throw Error(ErrorCode::invalid_problem, e.what());
  }
  if (phi.size() != mesh->node_count())
    throw Error(ErrorCode::invalid_problem, "boundary data size does not match node count");
  for (double v : phi.values)
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_problem, "boundary data has non-finite entries");
  const FrameGeometry geo(*mesh, metric);
  for (std::size_t t = 0; t < mesh->triangle_count(); ++t) {
    const auto& tri = mesh->triangle(t);
    if (!mesh->is_boundary(tri[0]) && !mesh->is_boundary(tri[1]) && !mesh->is_boundary(tri[2])) continue;
    const double slope = geo.frame_gradient(t, phi).norm() / geo.alpha(t);
    if (slope > 1.0 - spacelike_margin) {
      std::ostringstream os;
      os << "boundary data is not spacelike: |Dphi|/alpha = " << slope << " on triangle " << t
         << " exceeds 1 - margin = " << 1.0 - spacelike_margin;
      throw Error(ErrorCode::spacelike_violation, os.str());
    }
  }
}

double characteristic_h(const Mesh& mesh) { return std::sqrt(4.0 * mesh.mean_area() / std::sqrt(3.0)); }

std::vector<double> epsilon_schedule(const Mesh& mesh, const SolverConfig& config) {
  if (!config.epsilon_schedule.empty()) return config.epsilon_schedule;
  const double h = characteristic_h(mesh);
  if (!(config.eps_ratio > 0.0 && config.eps_ratio < 1.0))
    throw Error(ErrorCode::invalid_argument, "continuation ratio must lie in (0, 1)");
  const double eps_min = std::max(config.eps_min_factor, 1.0) * h;
  std::vector<double> out;
  for (double e = config.eps0_factor * h; e >= eps_min * (1.0 - 1e-12); e *= config.eps_ratio) out.push_back(e);
  return out;
}

NodalField weak_residual(const FeasibleField& u, const ChargeMeasure& rho, const MetricField& metric,
                         const Mesh& mesh, bool keep_boundary, double slack_floor) {
  const FrameGeometry geo(mesh, metric);
  NodalField r = load_vector(rho, mesh, metric);
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const double a = geo.alpha(t);
    const Vec2 q = geo.frame_gradient(t, u.u());
    const double w = 1.0 / std::sqrt(std::max(u.slack()[t], slack_floor));
    const Vec2 flux = geo.weight(t) * (w / a) * q;
    const auto& tri = mesh.triangle(t);
    for (int k = 0; k < 3; ++k) r[tri[k]] += geo.grads(t)[k].dot(flux);
  }
  if (!keep_boundary)
    for (int b : mesh.boundary_nodes()) r[b] = 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Splitting solver

SolveResult solve_admm(const Problem& problem, const SolverConfig& cfg) {
  const auto start = Clock::now();
  problem.validate();
  if (!(cfg.beta > 0.0) || !(cfg.tol_primal > 0.0) || !(cfg.tol_dual > 0.0) || cfg.max_iters <= 0)
    throw Error(ErrorCode::invalid_argument, "solver tolerances, penalty and iteration cap must be positive");
  const Discretization d(problem);
  const std::size_t nt = d.geo.triangle_count();
  const double tv = total_variation(problem.rho, d.mesh, problem.metric);
  const double newton_tol = 1e-12 * (1.0 + tv);

  NodalField u = initial_guess(d, cfg);
  double beta = cfg.beta;

  // p-variable and scaled dual in frame coordinates
  std::vector<Vec2> q(nt), y(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const double a = d.geo.alpha(t);
    Vec2 g = d.geo.frame_gradient(t, u);
    const double n = g.norm();
    if (n > 0.999 * a) g *= 0.999 * a / n;
    q[t] = g;
    const double w = 1.0 / std::sqrt(1.0 - g.squaredNorm() / (a * a));
    y[t] = (w / a) * g / beta;
  }

  SpdSolver solver(cfg.linear_solver, cfg.linear_tol);
  SpdSolver newton_solver(cfg.linear_solver, cfg.linear_tol);
  SparseMatrix kii, kib;
  VectorXd boundary_rhs;
  auto refactor = [&] {
    d.system(std::vector<Mat2>(nt, beta * Mat2::Identity()), kii, kib);
    solver.compute(kii);
    boundary_rhs = kib * d.phi_b;
  };
  refactor();

  std::vector<IterationRecord> trace;
  VectorXd x = d.interior_of(u);
  int beta_changes = 0;
  int last_beta_change = 0;
  double polish_level = cfg.polish_threshold;
  int polish_iters = 0;

  SolveResult result;
  result.method = "admm";
  for (int it = 1; it <= cfg.max_iters; ++it) {
    // u-step
    NodalField rhs(d.mesh.node_count(), 0.0);
    for (std::size_t t = 0; t < nt; ++t) {
      const Vec2 v = beta * d.geo.weight(t) * (q[t] - y[t]);
      const auto& tri = d.mesh.triangle(t);
      for (int k = 0; k < 3; ++k) rhs[tri[k]] += d.geo.grads(t)[k].dot(v);
    }
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] -= d.load[i];
    const VectorXd b = d.interior_of(rhs) - boundary_rhs;
    x = solver.solve(b, x);
    u = d.assemble_nodal(x);

    // p-step and dual ascent
    double primal = 0.0, dual = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
      const Vec2 g = d.geo.frame_gradient(t, u);
      const Vec2 z = g + y[t];
      const double s = z.norm();
      const Vec2 qn = (s > 0.0) ? Vec2(z * (prox_radius(s, beta, d.geo.alpha(t), q[t].norm()) / s)) : Vec2::Zero();
      dual = std::max(dual, beta * (qn - q[t]).norm());
      q[t] = qn;
      const Vec2 r = g - qn;
      primal = std::max(primal, r.norm());
      y[t] += r;
    }
    IterationRecord rec{it, primal, dual, d.energy_of(u)};
    trace.push_back(rec);
    if (cfg.on_iteration) cfg.on_iteration(rec);
    spdlog::trace("admm {}", describe(rec));

    if (primal <= cfg.tol_primal && dual <= cfg.tol_dual) {
      result.iterations = it;
      result.primal_residual = primal;
      result.dual_residual = dual;
      break;
    }
    if (it == cfg.max_iters) {
      std::ostringstream os;
      os << "splitting solver did not converge in " << cfg.max_iters << " iterations (last " << describe(rec) << ")";
      throw ConvergenceError(os.str(), std::move(trace));
    }

    if (cfg.polish && std::max(primal, dual) <= polish_level) {
      spdlog::debug("admm: polish attempt at iteration {} (residual {:.3e})", it, std::max(primal, dual));
      std::vector<Vec2> flux(nt);
      for (std::size_t t = 0; t < nt; ++t) {
        const double a = d.geo.alpha(t);
        flux[t] = q[t] / (a * std::sqrt(1.0 - q[t].squaredNorm() / (a * a)));
      }
      auto polished = newton_polish(d, u, std::move(flux), newton_tol, newton_solver);
      polish_iters += polished.iterations;
      if (polished.converged) {
        spdlog::debug("admm: newton polish converged after {} steps at iteration {}", polished.iterations, it);
        // The polished field solves the discrete equations to round-off; a
        // further splitting step would only perturb it.
        u = std::move(polished.u);
        result.iterations = it;
        result.primal_residual = 0.0;
        const VectorXd r = primal_residual_of(d, u);
        result.dual_residual = r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
        break;
      } else {
        polish_level *= 0.5;
      }
    }

    if (cfg.adaptive_beta && beta_changes < cfg.max_beta_changes && it - last_beta_change >= 20) {
      double factor = 1.0;
      if (primal > 10.0 * dual) factor = 2.0;
      else if (dual > 10.0 * primal) factor = 0.5;
      if (factor != 1.0) {
        beta *= factor;
        for (auto& v : y) v /= factor;
        ++beta_changes;
        last_beta_change = it;
        spdlog::debug("admm: penalty now {} at iteration {}", beta, it);
        last_beta_change = it;
        spdlog::debug("admm: penalty now {} at iteration {}", beta, it);
        refactor();
      }
    }
  }

  result.u = std::move(u);
  result.polish_iterations = polish_iters;
  result.energy_value = d.energy_of(result.u);
  result.beta = beta;
  result.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
  spdlog::debug("admm: {} iterations, primal {:.3e}, dual {:.3e}, energy {:.12g}", result.iterations,
                result.primal_residual, result.dual_residual, result.energy_value);
  return result;
}

// ---------------------------------------------------------------------------
// Frozen-coefficient iteration

SolveResult solve_picard(const Problem& problem, const SolverConfig& cfg) {
  const auto start = Clock::now();
  problem.validate();
  if (problem.rho.has_atoms())
    throw Error(ErrorCode::invalid_problem, "frozen-coefficient iteration needs a density-only source; mollify first");
  if (!(cfg.picard_theta > 0.0 && cfg.picard_theta <= 1.0))
    throw Error(ErrorCode::invalid_argument, "damping must lie in (0, 1]");
  if (!(cfg.picard_margin > 0.0 && cfg.picard_margin < 1.0))
    throw Error(ErrorCode::invalid_argument, "frozen-coefficient margin must lie in (0, 1)");
  const Discretization d(problem);
  const std::size_t nt = d.geo.triangle_count();
  SpdSolver solver(cfg.linear_solver, cfg.linear_tol);
  SparseMatrix kii, kib;
  auto frozen_solve = [&](const NodalField& v) {
    std::vector<Mat2> tensors(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      const double a = d.geo.alpha(t);
      const double x = d.geo.frame_gradient(t, v).squaredNorm() / (a * a);
      tensors[t] = (1.0 / (a * std::sqrt(1.0 - x))) * Mat2::Identity();
    }
    d.system(tensors, kii, kib);
    solver.compute(kii);
    const VectorXd b = -d.interior_of(d.load) - kib * d.phi_b;
    return d.assemble_nodal(solver.solve(b, d.interior_of(v)));
  };

  NodalField v;
  if (cfg.initial) {
    v = *cfg.initial;
    for (int i : d.map.boundary) v[i] = problem.phi[i];
  } else {
    v = d.harmonic_lift(cfg);
  }
  if (d.min_slack(v) <= 0.0)
    throw Error(ErrorCode::invalid_problem, "starting field for the frozen-coefficient iteration is not spacelike");

  double energy = d.energy_of(v);
  double theta = cfg.picard_theta;
  int increases = 0;
  SolveResult result;
  result.method = "picard";
  std::vector<IterationRecord> trace;
  NodalField u = frozen_solve(v);
  for (int it = 1;; ++it) {
    double diff = 0.0;
    for (int i : d.map.interior) diff = std::max(diff, std::abs(u[i] - v[i]));
    IterationRecord rec{it, diff, 0.0, energy};
    trace.push_back(rec);
    if (cfg.on_iteration) cfg.on_iteration(rec);
    if (diff <= cfg.tol_primal) {
      v = std::move(u);
      result.iterations = it;
      result.primal_residual = diff;
      break;
    }
    if (it >= cfg.max_iters) {
      throw ConvergenceError("frozen-coefficient iteration did not converge in " + std::to_string(cfg.max_iters) +
                                 " iterations",
                             std::move(trace));
    }
    // u - v is a descent direction; the damped step is shortened so the
    // iterate stays a fixed fraction away from the light cone
    NodalField dir(d.mesh.node_count(), 0.0);
    for (int i : d.map.interior) dir[i] = u[i] - v[i];
    const double step = std::min(theta, (1.0 - cfg.picard_margin) * d.max_feasible_step(v, dir, 1.0));
    NodalField next = v;
    for (int i : d.map.interior) next[i] += step * dir[i];
    const double e = d.energy_of(next);
    spdlog::trace("picard: iteration {} damping {:.3e} step {:.3e} energy change {:.3e}", it, theta, step, e - energy);
    if (e > energy + 1e-13 * (1.0 + std::abs(energy))) {
      if (++increases >= 3)
        throw Error(ErrorCode::picard_stall,
                    "frozen-coefficient iteration stalled (energy rose on 3 consecutive damped steps); use the "
                    "splitting solver");
      theta = 0.5 * step;
      continue;  // retry from the same iterate with a shorter step
    }
    increases = 0;
    v = std::move(next);
    energy = e;
    u = frozen_solve(v);
  }
  if (d.min_slack(v) <= 0.0)
    throw Error(ErrorCode::convergence_failure, "frozen-coefficient iteration converged to a field that is not spacelike");
  result.u = std::move(v);
  result.energy_value = d.energy_of(result.u);
  result.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Mollify-and-continue

SolveResult solve_continuation(const Problem& problem, const SolverConfig& cfg) {
  const auto start = Clock::now();
  problem.validate();
  const auto schedule = epsilon_schedule(*problem.mesh, cfg);
  std::vector<ContinuationStage> trace;
  SolverConfig stage_cfg = cfg;
  int total = 0;
  int polish = 0;
  for (double eps : schedule) {
    Problem stage = problem;
    try {
      stage.rho = mollify(problem.rho, MollifierKernel(eps), *problem.mesh, problem.metric);
      const SolveResult r = solve_admm(stage, stage_cfg);
      trace.push_back({eps, r.iterations, r.energy_value});
      total += r.iterations;
      polish += r.polish_iterations;
      stage_cfg.initial = r.u;
      spdlog::debug("continuation: eps {:.4g}: {} iterations, energy {:.12g}", eps, r.iterations, r.energy_value);
    } catch (const ConvergenceError& e) {
      std::ostringstream os;
      os << "continuation stage eps=" << eps << ": " << e.what();
      throw ConvergenceError(os.str(), e.trace());
    } catch (const Error& e) {
      std::ostringstream os;
      os << "continuation stage eps=" << eps << ": " << e.what();
      throw Error(e.code(), os.str());
    }
  }
  SolveResult final_result;
  try {
    final_result = solve_admm(problem, stage_cfg);
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(std::string("continuation final stage: ") + e.what(), e.trace());
  }
  trace.push_back({0.0, final_result.iterations, final_result.energy_value});
  final_result.iterations += total;
  final_result.polish_iterations += polish;
  final_result.continuation_trace = std::move(trace);
  final_result.method = "continuation";
  final_result.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
  return final_result;
}

}  // namespace bifem
