// Command-line front end. Talks to the library only through bifem.h.
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bifem/bifem.h"

namespace {

int report(bifem_status s) {
  if (s == BIFEM_OK) return 0;
  nlohmann::ordered_json j;
  j["status"] = bifem_status_name(s);
  j["code"] = static_cast<int>(s);
  j["message"] = bifem_last_error();
  std::cerr << j.dump() << std::endl;
  return static_cast<int>(s);
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Born-Infeld electrostatics solver and diagnostics"};
  app.require_subcommand(1);
  app.fallthrough();

  int threads = -1;
  std::string log_level = "warn";
  app.add_option("--threads", threads, "Worker threads (0 = default; BIFEM_THREADS also works)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

  std::string config, out;
  std::optional<unsigned long long> seed;
  auto* solve = app.add_subcommand("solve", "Solve a configured problem and write a result bundle");
  solve->add_option("--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  solve->add_option("--out", out, "Bundle directory (default: output.dir of the config)");
  solve->add_option("--seed", seed, "Seed for randomized initial guesses");

  std::string bundle;
  auto* diagnose = app.add_subcommand("diagnose", "Recompute diagnostics from a result bundle");
  diagnose->add_option("bundle", bundle, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  diagnose->add_option("--config", config, "Diagnostics configuration (bare section or full run config)")
      ->check(CLI::ExistingFile);
  diagnose->add_option("--out", out, "Report path (default: <bundle>/diagnostics.json)");

  double charge = 2.0 * 3.14159265358979323846;
  int dim = 2;
  double r_min = 0.01, r_max = 1.0;
  int rows = 100;
  auto* oracle = app.add_subcommand("oracle", "Tabulate the radial point-charge solution");
  oracle->add_option("-a,--charge", charge, "Point charge")->capture_default_str();
  oracle->add_option("-m,--dim", dim, "Space dimension (>= 2)")->capture_default_str();
  oracle->add_option("--r-min", r_min, "Smallest radius")->capture_default_str();
  oracle->add_option("--r-max", r_max, "Largest radius")->capture_default_str();
  oracle->add_option("-n,--rows", rows, "Number of rows")->capture_default_str();
  oracle->add_option("--out", out, "CSV path (default: stdout)");

  std::vector<double> hs{0.08, 0.04, 0.02};
  auto* convergence = app.add_subcommand("convergence", "Mesh refinement study against the exact solution");
  convergence->add_option("--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  convergence->add_option("--hs", hs, "Mesh sizes, comma separated")->delimiter(',')->capture_default_str();
  convergence->add_option("--out", out, "Directory for convergence.csv");

  double epsilon = 0.1;
  auto* moll = app.add_subcommand("mollify", "Mollify the configured charge and print the density");
  moll->add_option("--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  moll->add_option("--epsilon", epsilon, "Mollifier radius")->required();
  moll->add_option("--out", out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (bifem_status s = bifem_set_log_level(log_level.c_str()); s != BIFEM_OK) return report(s);
  if (threads >= 0)
    if (bifem_status s = bifem_set_threads(threads); s != BIFEM_OK) return report(s);

  if (*solve) return report(bifem_cmd_solve(config.c_str(), opt(out), seed.has_value(), seed.value_or(0)));
  if (*diagnose) return report(bifem_cmd_diagnose(bundle.c_str(), opt(config), opt(out)));
  if (*oracle) return report(bifem_cmd_oracle(charge, dim, r_min, r_max, rows, opt(out)));
  if (*convergence) return report(bifem_cmd_convergence(config.c_str(), hs.data(), hs.size(), opt(out)));
  return report(bifem_cmd_mollify(config.c_str(), epsilon, opt(out)));
}
