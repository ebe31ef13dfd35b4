#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bifem/diagnostics.hpp"
#include "bifem/solver.hpp"

// Run configuration, result bundles and the command layer behind the CLI.
namespace bifem::app {

using Json = nlohmann::ordered_json;

struct DomainSpec {
  std::string type = "disk";  // disk | polygon
  double radius = 1.0;
  Vec2 center = Vec2::Zero();
  std::vector<Vec2> vertices;
};

struct MeshSpec {
  double h = 0.05;
  double min_angle_deg = 20.0;
  double jitter = 0.0;
  unsigned seed = 1234;
};

struct MetricSpec {
  std::string type = "flat";  // flat | uniform | preset | files
  double alpha = 1.0;
  Mat2 sigma = Mat2::Identity();
  std::string preset;  // lapse | conformal | anisotropic
  double strength = 0.0;
  std::string alpha_file;
  std::string sigma_file;
};

struct DensitySpec {
  std::string type = "none";  // none | uniform | gaussian | file
  double value = 0.0;
  Vec2 center = Vec2::Zero();
  double width = 0.1;
  double mass = 0.0;
  std::string path;
};

struct BoundarySpec {
  std::string type = "constant";  // constant | affine | file
  double value = 0.0;
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  std::string path;
};

struct RunConfig {
  DomainSpec domain;
  MeshSpec mesh;
  MetricSpec metric;
  std::vector<Atom> atoms;
  DensitySpec density;
  BoundarySpec boundary;
  double spacelike_margin = 0.01;

  std::string method = "continuation";  // continuation | admm | picard
  SolverConfig solver;
  bool diagnostics_enabled = true;
  DiagnosticsConfig diagnostics;

  std::string output_dir;
  bool vtk = false;
};

/// Parses and validates a configuration document. File paths inside it are
/// resolved against `base_dir`. Errors carry config_error and a JSON-pointer
/// path to the offending field.
RunConfig parse_config(const Json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {});

/// Normalized document with every field spelled out; parse_config of the
/// result gives back an equivalent configuration.
Json to_json(const RunConfig& config);

DiagnosticsConfig parse_diagnostics(const Json& section, const std::string& path = "/diagnostics");
Json to_json(const DiagnosticsConfig& config);

Mesh build_mesh(const RunConfig& config);
MetricField build_metric(const MetricSpec& spec, const Mesh& mesh);
ChargeMeasure build_charges(const RunConfig& config, const Mesh& mesh, const MetricField& metric);
NodalField build_boundary(const BoundarySpec& spec, const Mesh& mesh);
Problem build_problem(const RunConfig& config);

Json to_json(const DiagnosticsReport& report);
Json to_json(const SolveResult& result);

struct SolveOutcome {
  Problem problem;
  SolveResult result;
  std::optional<DiagnosticsReport> report;
};

/// Solves per the configuration and writes the bundle into `out_dir`:
/// config.json, nodes.txt, triangles.txt, metric.csv, density.csv (when the
/// charge has a density), u.csv, w.csv, solver.log, report.json,
/// ball_growth.csv and light_scan.csv (with diagnostics), solution.vtk (opt).
/// A failed solve leaves error.json and the partial solver.log behind.
SolveOutcome cmd_solve(const RunConfig& config, const std::filesystem::path& out_dir);

struct Bundle {
  RunConfig config;
  Problem problem;
  NodalField u;
};

/// Throws io_error for missing or inconsistent files.
Bundle load_bundle(const std::filesystem::path& dir);

/// Recomputes diagnostics from the persisted potential. `diagnostics` replaces
/// the bundle's own section when given. Writes the report to `report_path`
/// (default <bundle>/diagnostics.json) and the CSV tables beside it; w.csv
/// is regenerated if it is missing.
DiagnosticsReport cmd_diagnose(const std::filesystem::path& bundle_dir,
                               const std::optional<DiagnosticsConfig>& diagnostics,
                               const std::filesystem::path& report_path = {});

/// CSV with columns r,u_prime,u,w,I. Raises usage_error for m < 2 or a bad range.
void cmd_oracle(double a, int m, double r_min, double r_max, int n, std::ostream& out);

struct ConvergenceRow {
  double h = 0.0;
  std::size_t nodes = 0;
  double max_error = 0.0;
  std::optional<double> order;
  int iterations = 0;
};

/// Error against the exact solution for each h. Only two configurations have
/// one: a single atom at the center of a disk with flat metric and constant
/// boundary data (error on r >= 0.1), and rho = 0 with affine boundary data
/// under a constant metric (every node). Anything else is a usage_error.
/// Writes convergence.csv into `out_dir` when it is non-empty.
std::vector<ConvergenceRow> cmd_convergence(const RunConfig& config, const std::vector<double>& hs,
                                            const std::filesystem::path& out_dir = {});

/// Mollified charge density per triangle as CSV (triangle,cx,cy,density).
ChargeMeasure cmd_mollify(const RunConfig& config, double epsilon, std::ostream& out);

/// Shortest round-trip decimal text (17 significant digits).
std::string format_double(double v);

}  // namespace bifem::app
