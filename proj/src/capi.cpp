#include "irgnm.h"

#include "irgnm/field_io.hpp"
#include "irgnm/harness.hpp"
#include "irgnm/rng.hpp"

#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <map>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

struct irgnm_config {
  std::map<std::string, std::string> entries;
};

struct irgnm_result {
  std::vector<irgnm::LevelReport> table;
};

namespace {

thread_local std::string g_last_error;

int fail(int code, std::string message) {
  g_last_error = std::move(message);
  return code;
}

// Maps C++ exceptions onto the error codes; the thread-local detail message
// keeps the original text.
int fail_from_exception() {
  try {
    throw;
  } catch (const std::invalid_argument& e) {
    return fail(IRGNM_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    if (msg.rfind("config:", 0) == 0) return fail(IRGNM_ERR_PARSE, msg);
    if (msg.find("cannot open") != std::string::npos) return fail(IRGNM_ERR_IO, msg);
    if (msg.find("converge") != std::string::npos)
      return fail(IRGNM_ERR_NO_CONVERGENCE, msg);
    return fail(IRGNM_ERR_INTERNAL, msg);
  } catch (const std::exception& e) {
    return fail(IRGNM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(IRGNM_ERR_INTERNAL, "unknown error");
  }
}

double parse_double_value(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("config: invalid number for '" + key + "': " + value);
  }
  if (pos != value.size())
    throw std::runtime_error("config: trailing characters in '" + key + "': " + value);
  return out;
}

// Materializes the flat store into the experiment description. The "delta"
// key is not part of the experiment structure; it is pulled out for the
// single-solve entry point.
irgnm::ExperimentConfig materialize(const irgnm_config& config, bool* has_delta,
                                    double* delta) {
  auto entries = config.entries;
  if (has_delta) *has_delta = false;
  if (auto it = entries.find("delta"); it != entries.end()) {
    if (has_delta) {
      *has_delta = true;
      *delta = parse_double_value("delta", it->second);
    }
    entries.erase(it);
  }
  return irgnm::parse_config(entries);
}

irgnm_result* make_result(std::vector<irgnm::LevelReport> table) {
  auto* res = new (std::nothrow) irgnm_result;
  if (res) res->table = std::move(table);
  return res;
}

} // namespace

extern "C" {

const char* irgnm_version(void) { return "0.1.0"; }

const char* irgnm_strerror(int code) {
  switch (code) {
    case IRGNM_OK: return "ok";
    case IRGNM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case IRGNM_ERR_PARSE: return "configuration parse error";
    case IRGNM_ERR_IO: return "input/output error";
    case IRGNM_ERR_NO_CONVERGENCE: return "iteration did not converge";
    case IRGNM_ERR_INTERNAL: return "internal error";
  }
  return "unknown error code";
}

const char* irgnm_last_error(void) { return g_last_error.c_str(); }

int irgnm_config_create(irgnm_config** out) {
  if (!out) return fail(IRGNM_ERR_INVALID_ARGUMENT, "out handle is NULL");
  *out = new (std::nothrow) irgnm_config;
  if (!*out) return fail(IRGNM_ERR_INTERNAL, "allocation failed");
  return IRGNM_OK;
}

void irgnm_config_destroy(irgnm_config* config) { delete config; }

int irgnm_config_set(irgnm_config* config, const char* key, const char* value) {
  if (!config || !key || !value)
    return fail(IRGNM_ERR_INVALID_ARGUMENT, "config, key and value must be non-NULL");
  try {
    config->entries[key] = value;
  } catch (...) {
    return fail_from_exception();
  }
  return IRGNM_OK;
}

int irgnm_config_load_file(irgnm_config* config, const char* path) {
  if (!config || !path)
    return fail(IRGNM_ERR_INVALID_ARGUMENT, "config and path must be non-NULL");
  if (!std::ifstream(path))
    return fail(IRGNM_ERR_IO, std::string("cannot open config file '") + path + "'");
  try {
    for (auto& [key, value] : irgnm::read_config_file(path))
      config->entries[key] = value;
  } catch (...) {
    return fail_from_exception();
  }
  return IRGNM_OK;
}

int irgnm_config_get(const irgnm_config* config, const char* key, char* buf,
                     size_t bufsize) {
  if (!config || !key || !buf || bufsize == 0)
    return fail(IRGNM_ERR_INVALID_ARGUMENT, "config, key and buffer must be usable");
  const auto it = config->entries.find(key);
  if (it == config->entries.end())
    return fail(IRGNM_ERR_INVALID_ARGUMENT, std::string("key not set: '") + key + "'");
  if (it->second.size() + 1 > bufsize)
    return fail(IRGNM_ERR_INVALID_ARGUMENT, "buffer too small");
  std::memcpy(buf, it->second.c_str(), it->second.size() + 1);
  return IRGNM_OK;
}

void irgnm_result_destroy(irgnm_result* result) { delete result; }

int irgnm_result_levels(const irgnm_result* result, int* count) {
  if (!result || !count)
    return fail(IRGNM_ERR_INVALID_ARGUMENT, "result and count must be non-NULL");
  *count = static_cast<int>(result->table.size());
  return IRGNM_OK;
}

int irgnm_result_table_row(const irgnm_result* result, int level, double* delta,
                           double* err_spot1, double* err_spot2, double* err_spot3,
                           double* err_l1, double* k_star_mean) {
  if (!result) return fail(IRGNM_ERR_INVALID_ARGUMENT, "result is NULL");
  if (level < 0 || level >= static_cast<int>(result->table.size()))
    return fail(IRGNM_ERR_INVALID_ARGUMENT, "level index out of range");
  const irgnm::LevelReport& row = result->table[level];
  if (delta) *delta = row.delta;
  if (err_spot1) *err_spot1 = row.err_spot1;
  if (err_spot2) *err_spot2 = row.err_spot2;
  if (err_spot3) *err_spot3 = row.err_spot3;
  if (err_l1) *err_l1 = row.err_l1;
  if (k_star_mean) *k_star_mean = row.k_star_mean;
  return IRGNM_OK;
}

int irgnm_solve(const irgnm_config* config, const char* out_dir, irgnm_result** out) {
  if (!config || !out)
    return fail(IRGNM_ERR_INVALID_ARGUMENT, "config and out must be non-NULL");
  *out = nullptr;
  try {
    bool has_delta = false;
    double delta = 0.0;
    const irgnm::ExperimentConfig ec = materialize(*config, &has_delta, &delta);
    if (!has_delta)
      return fail(IRGNM_ERR_INVALID_ARGUMENT, "solve requires the 'delta' key");
    const irgnm::RunOutcome oc = irgnm::run_solve(ec, delta, out_dir ? out_dir : "");
    irgnm::LevelReport row;
    row.delta = delta;
    row.err_spot1 = oc.err_spot1;
    row.err_spot2 = oc.err_spot2;
    row.err_spot3 = oc.err_spot3;
    row.err_l1 = oc.err_l1;
    row.k_star_mean = oc.k_star;
    irgnm_result* res = make_result({row});
    if (!res) return fail(IRGNM_ERR_INTERNAL, "allocation failed");
    *out = res;
  } catch (...) {
    return fail_from_exception();
  }
  return IRGNM_OK;
}

int irgnm_sweep(const irgnm_config* config, const char* out_dir, irgnm_result** out) {
  if (!config || !out)
    return fail(IRGNM_ERR_INVALID_ARGUMENT, "config and out must be non-NULL");
  *out = nullptr;
  try {
    const irgnm::ExperimentConfig ec = materialize(*config, nullptr, nullptr);
    irgnm::SweepResult sweep = irgnm::run_experiment(ec, out_dir ? out_dir : "");
    irgnm_result* res = make_result(std::move(sweep.table));
    if (!res) return fail(IRGNM_ERR_INTERNAL, "allocation failed");
    *out = res;
  } catch (...) {
    return fail_from_exception();
  }
  return IRGNM_OK;
}

int irgnm_diagnose_tc(const irgnm_config* config, double radius, int samples,
                      double* max_ratio, int* skipped) {
  if (!config || !max_ratio)
    return fail(IRGNM_ERR_INVALID_ARGUMENT, "config and max_ratio must be non-NULL");
  if (radius <= 0.0 || samples < 1)
    return fail(IRGNM_ERR_INVALID_ARGUMENT, "radius must be > 0 and samples >= 1");
  try {
    const irgnm::ExperimentConfig ec = materialize(*config, nullptr, nullptr);
    auto mesh = irgnm::build_mesh(ec.n);
    const irgnm::PdeProblem problem = irgnm::make_problem(mesh, ec.kappa);
    const irgnm::Field center = irgnm::exact_source(*mesh);
    const irgnm::TangentialConeEstimate est =
        irgnm::estimate_tangential_cone(problem, center, radius, samples, ec.seed);
    *max_ratio = est.max_ratio;
    if (skipped) *skipped = est.skipped;
  } catch (...) {
    return fail_from_exception();
  }
  return IRGNM_OK;
}

int irgnm_theory(const irgnm_config* config, double delta, double d0, double r_dagger,
                 irgnm_theory_report* out) {
  if (!config || !out)
    return fail(IRGNM_ERR_INVALID_ARGUMENT, "config and out must be non-NULL");
  try {
    const irgnm::ExperimentConfig ec = materialize(*config, nullptr, nullptr);
    const irgnm::IrgnmConfig sc = ec.solver_config(delta);
    out->c_gamma = irgnm::power_inequality_constant(sc.p, sc.gamma);
    const double q = (sc.variant == irgnm::Variant::ivanov)
                         ? 2.0 * sc.c_tc / (1.0 - sc.c_tc)
                         : irgnm::contraction_factor(sc.p, sc.gamma, sc.c_tc);
    out->q = q;
    out->schedule_admissible = (sc.variant == irgnm::Variant::ivanov)
                                   ? (q < 1.0 ? 1 : 0)
                                   : (irgnm::schedule_admissible(q, sc.theta) ? 1 : 0);

    double d0_used = d0;
    if (d0_used < 0.0) {
      auto mesh = irgnm::build_mesh(ec.n);
      const irgnm::PdeProblem problem = irgnm::make_problem(mesh, ec.kappa);
      const irgnm::SynthesizedData data = irgnm::synthesize_data(
          problem, std::max(delta, 0.0), ec.noise, irgnm::mix_seed(ec.seed, 0), ec.newton);
      const irgnm::Field u0 =
          irgnm::solve_forward(problem, irgnm::zero_field(mesh), nullptr, ec.newton);
      const double r0 = irgnm::residual_norm(problem, u0, data.y_delta);
      d0_used = irgnm::initial_decay(sc, r0);
    }
    out->d0 = d0_used;

    double rd = r_dagger;
    if (rd < 0.0) {
      const irgnm::Field s_exact = irgnm::exact_source(*irgnm::build_mesh(ec.n));
      rd = (sc.variant == irgnm::Variant::tikhonov) ? irgnm::l1_norm(s_exact)
                                                    : irgnm::linf_norm(s_exact);
    }

    const irgnm::StopBound bound = irgnm::theoretical_stop_bound(sc, delta, d0_used, rd);
    out->k_bar_vacuous = bound.vacuous ? 1 : 0;
    out->k_bar = bound.vacuous ? std::nan("") : bound.value;
  } catch (...) {
    return fail_from_exception();
  }
  return IRGNM_OK;
}

} // extern "C"
