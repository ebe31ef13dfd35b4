#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bifem/energy.hpp"
#include "bifem/error.hpp"
#include "bifem/measures.hpp"
#include "bifem/mesh.hpp"

namespace bifem {

/// Dirichlet data (Omega, rho, phi) for the Born-Infeld electrostatic problem.
struct Problem {
  std::shared_ptr<const Mesh> mesh;
  MetricField metric;
  ChargeMeasure rho;
  /// Nodal field whose boundary entries are the Dirichlet data.
  NodalField phi;
  /// Boundary data must satisfy |Dphi|_sigma <= (1 - margin) alpha on
  /// triangles touching the boundary.
  double spacelike_margin = 0.01;

  /// Throws invalid_problem for inconsistent sizes, spacelike_violation for
  /// boundary data that leaves the margin.
  void validate() const;
};

enum class InitialGuess { boundary_data, zero, random };
enum class LinearSolverKind { cholesky, pcg };

struct IterationRecord {
  int iteration = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double energy = 0.0;
};

struct ContinuationStage {
  double epsilon = 0.0;  // 0 marks the final solve with the raw measure
  int iterations = 0;
  double energy = 0.0;
};

struct SolverConfig {
  /// Splitting penalty; the augmented term is area-weighted, so beta = 1
  /// corresponds to a unit penalty per unit area.
  double beta = 1.0;
  double tol_primal = 1e-8;
  double tol_dual = 1e-8;
  int max_iters = 50000;

  /// Explicit mollification radii; when empty the schedule runs
  /// eps0_factor*h, eps0_factor*h*ratio, ... down to eps_min_factor*h.
  std::vector<double> epsilon_schedule;
  double eps0_factor = 8.0;
  double eps_min_factor = 2.0;
  double eps_ratio = 0.5;

  double linear_tol = 1e-10;
  LinearSolverKind linear_solver = LinearSolverKind::cholesky;

  unsigned seed = 0;
  InitialGuess init = InitialGuess::boundary_data;
  /// Warm start; overrides `init`. Boundary entries are replaced by phi.
  std::optional<NodalField> initial;

  bool adaptive_beta = false;
  int max_beta_changes = 10;

  /// Finish with damped Newton on the discrete optimality system once the
  /// splitting residuals fall below `polish_threshold`.
  bool polish = true;
  double polish_threshold = 0.1;

  double picard_theta = 0.5;
  double picard_margin = 0.1;

  double slack_floor = kDefaultSlackFloor;

  /// Called once per iteration (log sink).
  std::function<void(const IterationRecord&)> on_iteration;
};

struct SolveResult {
  NodalField u;
  int iterations = 0;
  int polish_iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double energy_value = 0.0;
  double beta = 0.0;
  std::vector<ContinuationStage> continuation_trace;
  double wall_time = 0.0;
  std::string method;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& message, std::vector<IterationRecord> trace)
      : Error(ErrorCode::convergence_failure, message), trace_(std::move(trace)) {}
  const std::vector<IterationRecord>& trace() const noexcept { return trace_; }

 private:
  std::vector<IterationRecord> trace_;
};

/// Edge length of an equilateral triangle with the mesh's mean area.
double characteristic_h(const Mesh& mesh);

std::vector<double> epsilon_schedule(const Mesh& mesh, const SolverConfig& config);

SolveResult solve_admm(const Problem& problem, const SolverConfig& config);
SolveResult solve_picard(const Problem& problem, const SolverConfig& config);
SolveResult solve_continuation(const Problem& problem, const SolverConfig& config);

/// R_i = sum_T area_sigma (alpha^-1 w Du)_sigma . Deta_i + <rho, eta_i>.
/// Boundary rows are zeroed unless `keep_boundary` is set.
NodalField weak_residual(const FeasibleField& u, const ChargeMeasure& rho, const MetricField& metric,
                         const Mesh& mesh, bool keep_boundary = false, double slack_floor = kDefaultSlackFloor);

}  // namespace bifem
