#include "bifem/bifem.h"

#include <cstring>
#include <fstream>
#include <iostream>
#include <new>
#include <sstream>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "bifem/app.hpp"
#include "bifem/parallel.hpp"

struct bifem_config {
  bifem::app::RunConfig config;
  std::string json;
};

struct bifem_result {
  bifem::app::SolveOutcome outcome;
  std::string report;
};

namespace {

thread_local std::string last_error;

bifem_status fail(bifem_status s, const std::string& message) {
  last_error = message;
  return s;
}

// Runs fn and converts every exception into a status code.
template <class F>
bifem_status guarded(F&& fn) {
  try {
    fn();
    last_error.clear();
    return BIFEM_OK;
  } catch (const bifem::Error& e) {
    return fail(static_cast<bifem_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(BIFEM_INTERNAL_ERROR, "out of memory");
  } catch (const std::exception& e) {
    return fail(BIFEM_INTERNAL_ERROR, e.what());
  } catch (...) {
    return fail(BIFEM_INTERNAL_ERROR, "unknown failure");
  }
}

void ensure_logger() {
  static const bool once = [] {
    auto logger = spdlog::stderr_color_mt("bifem");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    return true;
  }();
  (void)once;
}

// Writes to the named file, or stdout for NULL / "-".
template <class F>
void with_output(const char* path, F&& fn) {
  if (path == nullptr || std::strcmp(path, "-") == 0) {
    std::ostringstream s;
    fn(s);
    std::cout << s.str() << std::flush;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw bifem::Error(bifem::ErrorCode::io_error, std::string("cannot write ") + path);
  fn(out);
  if (!out) throw bifem::Error(bifem::ErrorCode::io_error, std::string("failed writing ") + path);
}

bool is_null(const void* p, const char* what, bifem_status* s) {
  if (p) return false;
  *s = fail(BIFEM_INVALID_ARGUMENT, std::string(what) + " is NULL");
  return true;
}

}  // namespace

extern "C" {

const char* bifem_status_name(int status) {
  if (status == BIFEM_OK) return "ok";
  if (status == BIFEM_INTERNAL_ERROR) return "internal_error";
  if (status >= 1 && status <= 13) return bifem::to_string(static_cast<bifem::ErrorCode>(status));
  return "unknown";
}

const char* bifem_last_error(void) { return last_error.c_str(); }

const char* bifem_version(void) { return "1.0.0"; }

bifem_status bifem_set_threads(int n) {
  if (n < 0) return fail(BIFEM_INVALID_ARGUMENT, "thread count must be >= 0");
  return guarded([&] { bifem::set_thread_count(n); });
}

bifem_status bifem_set_log_level(const char* level) {
  bifem_status s;
  if (is_null(level, "level", &s)) return s;
  ensure_logger();
  const auto lv = spdlog::level::from_str(level);
  if (lv == spdlog::level::off && std::strcmp(level, "off") != 0)
    return fail(BIFEM_INVALID_ARGUMENT, std::string("unknown log level '") + level + "'");
  spdlog::set_level(lv);
  last_error.clear();
  return BIFEM_OK;
}

bifem_status bifem_config_load(const char* path, bifem_config** out) {
  bifem_status s;
  if (is_null(path, "path", &s) || is_null(out, "out", &s)) return s;
  *out = nullptr;
  ensure_logger();
  return guarded([&] { *out = new bifem_config{bifem::app::load_config(path), {}}; });
}

bifem_status bifem_config_parse(const char* json_text, bifem_config** out) {
  bifem_status s;
  if (is_null(json_text, "json_text", &s) || is_null(out, "out", &s)) return s;
  *out = nullptr;
  ensure_logger();
  return guarded([&] { *out = new bifem_config{bifem::app::parse_config_text(json_text), {}}; });
}

void bifem_config_free(bifem_config* config) { delete config; }

bifem_status bifem_config_set_seed(bifem_config* config, unsigned long long seed) {
  bifem_status s;
  if (is_null(config, "config", &s)) return s;
  if (seed > 0xffffffffULL) return fail(BIFEM_INVALID_ARGUMENT, "seed must fit in 32 bits");
  config->config.solver.seed = static_cast<unsigned>(seed);
  last_error.clear();
  return BIFEM_OK;
}

bifem_status bifem_config_set_h(bifem_config* config, double h) {
  bifem_status s;
  if (is_null(config, "config", &s)) return s;
  if (!(h > 0.0)) return fail(BIFEM_INVALID_ARGUMENT, "h must be positive");
  config->config.mesh.h = h;
  last_error.clear();
  return BIFEM_OK;
}

const char* bifem_config_json(bifem_config* config) {
  if (!config) return "";
  config->json = bifem::app::to_json(config->config).dump(2);
  return config->json.c_str();
}

bifem_status bifem_solve(const bifem_config* config, const char* out_dir, bifem_result** out) {
  bifem_status s;
  if (is_null(config, "config", &s) || is_null(out, "out", &s)) return s;
  *out = nullptr;
  ensure_logger();
  return guarded([&] {
    const std::string dir = out_dir ? out_dir : config->config.output_dir;
    auto r = std::make_unique<bifem_result>();
    r->outcome = bifem::app::cmd_solve(config->config, dir);
    bifem::app::Json report;
    report["solver"] = bifem::app::to_json(r->outcome.result);
    if (r->outcome.report) report["diagnostics"] = bifem::app::to_json(*r->outcome.report);
    r->report = report.dump(2);
    *out = r.release();
  });
}

void bifem_result_free(bifem_result* result) { delete result; }

size_t bifem_result_node_count(const bifem_result* result) {
  return result ? result->outcome.problem.mesh->node_count() : 0;
}

size_t bifem_result_nodes(const bifem_result* result, double* xy, size_t capacity) {
  if (!result || !xy) return 0;
  const auto& mesh = *result->outcome.problem.mesh;
  const size_t n = std::min(capacity, mesh.node_count());
  for (size_t i = 0; i < n; ++i) {
    xy[2 * i] = mesh.node(i).x();
    xy[2 * i + 1] = mesh.node(i).y();
  }
  return n;
}

size_t bifem_result_values(const bifem_result* result, double* u, size_t capacity) {
  if (!result || !u) return 0;
  const auto& v = result->outcome.result.u.values;
  const size_t n = std::min(capacity, v.size());
  std::copy_n(v.begin(), n, u);
  return n;
}

double bifem_result_energy(const bifem_result* result) { return result ? result->outcome.result.energy_value : 0.0; }

int bifem_result_iterations(const bifem_result* result) { return result ? result->outcome.result.iterations : 0; }

const char* bifem_result_report(const bifem_result* result) { return result ? result->report.c_str() : ""; }

bifem_status bifem_cmd_solve(const char* config_path, const char* out_dir, int has_seed, unsigned long long seed) {
  bifem_status s;
  if (is_null(config_path, "config_path", &s)) return s;
  if (has_seed && seed > 0xffffffffULL) return fail(BIFEM_USAGE_ERROR, "seed must fit in 32 bits");
  ensure_logger();
  return guarded([&] {
    bifem::app::RunConfig c = bifem::app::load_config(config_path);
    if (has_seed) c.solver.seed = static_cast<unsigned>(seed);
    const std::string dir = out_dir ? out_dir : c.output_dir;
    if (dir.empty())
      throw bifem::Error(bifem::ErrorCode::usage_error, "no output directory: pass --out or set output.dir");
    bifem::app::cmd_solve(c, dir);
  });
}

bifem_status bifem_cmd_diagnose(const char* bundle_dir, const char* diagnostics_config_path, const char* report_path) {
  bifem_status s;
  if (is_null(bundle_dir, "bundle_dir", &s)) return s;
  ensure_logger();
  return guarded([&] {
    std::optional<bifem::DiagnosticsConfig> cfg;
    if (diagnostics_config_path) {
      std::ifstream in(diagnostics_config_path);
      if (!in) throw bifem::Error(bifem::ErrorCode::io_error, std::string("cannot open ") + diagnostics_config_path);
      bifem::app::Json doc;
      try {
        doc = bifem::app::Json::parse(in);
      } catch (const std::exception& e) {
        throw bifem::Error(bifem::ErrorCode::config_error, std::string(diagnostics_config_path) + ": " + e.what());
      }
      // Accept either a bare diagnostics section or a full run configuration.
      if (doc.is_object() && doc.contains("diagnostics"))
        cfg = bifem::app::parse_diagnostics(doc["diagnostics"], "/diagnostics");
      else
        cfg = bifem::app::parse_diagnostics(doc, "");
    }
    bifem::app::cmd_diagnose(bundle_dir, cfg, report_path ? report_path : "");
  });
}

bifem_status bifem_cmd_oracle(double a, int m, double r_min, double r_max, int n, const char* out_path) {
  ensure_logger();
  return guarded([&] { with_output(out_path, [&](std::ostream& os) { bifem::app::cmd_oracle(a, m, r_min, r_max, n, os); }); });
}

bifem_status bifem_cmd_convergence(const char* config_path, const double* hs, size_t count, const char* out_dir) {
  bifem_status s;
  if (is_null(config_path, "config_path", &s)) return s;
  if (count > 0 && is_null(hs, "hs", &s)) return s;
  ensure_logger();
  return guarded([&] {
    const bifem::app::RunConfig c = bifem::app::load_config(config_path);
    const auto rows = bifem::app::cmd_convergence(c, std::vector<double>(hs, hs + count), out_dir ? out_dir : "");
    std::ostringstream os;
    os << "h,nodes,max_error,order,iterations\n";
    for (const auto& r : rows)
      os << bifem::app::format_double(r.h) << ',' << r.nodes << ',' << bifem::app::format_double(r.max_error) << ','
         << (r.order ? bifem::app::format_double(*r.order) : "") << ',' << r.iterations << '\n';
    std::cout << os.str() << std::flush;
  });
}

bifem_status bifem_cmd_mollify(const char* config_path, double epsilon, const char* out_path) {
  bifem_status s;
  if (is_null(config_path, "config_path", &s)) return s;
  ensure_logger();
  return guarded([&] {
    const bifem::app::RunConfig c = bifem::app::load_config(config_path);
    with_output(out_path, [&](std::ostream& os) { bifem::app::cmd_mollify(c, epsilon, os); });
  });
}

}  // extern "C"
