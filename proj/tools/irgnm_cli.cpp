// Command-line front end for the reconstruction library; talks to the shared
// library exclusively through its C interface.
#include "irgnm.h"

#include "CLI11.hpp"

#include <cstdio>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace {

struct ConfigDeleter {
  void operator()(irgnm_config* c) const { irgnm_config_destroy(c); }
};
struct ResultDeleter {
  void operator()(irgnm_result* r) const { irgnm_result_destroy(r); }
};
using ConfigPtr = std::unique_ptr<irgnm_config, ConfigDeleter>;
using ResultPtr = std::unique_ptr<irgnm_result, ResultDeleter>;

int report_error(const char* what, int code) {
  std::fprintf(stderr, "error: %s: %s (%s)\n", what, irgnm_strerror(code),
               irgnm_last_error());
  return 1;
}

// One string-valued option per configuration key; values given on the command
// line are applied after the config file, so flags win.
struct KeyedOptions {
  std::vector<std::pair<CLI::Option*, std::pair<std::string, std::string>*>> bound;
  std::vector<std::unique_ptr<std::pair<std::string, std::string>>> storage;
  std::string config_path;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key,
           const std::string& help) {
    storage.push_back(std::make_unique<std::pair<std::string, std::string>>(key, ""));
    auto* slot = storage.back().get();
    CLI::Option* opt = cmd->add_option(flag, slot->second, help);
    bound.emplace_back(opt, slot);
  }

  void add_common(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Configuration file (key=value lines)")
        ->check(CLI::ExistingFile);
    add(cmd, "--variant", "variant", "Regularization variant: tikhonov or ivanov");
    add(cmd, "--N", "N", "Cells per side of the computational mesh");
    add(cmd, "--kappa", "kappa", "Cubic coefficient of the state equation");
    add(cmd, "--rho", "rho", "Source bound of the ivanov variant");
    add(cmd, "--alpha0", "alpha0", "Initial regularization weight (tikhonov)");
    add(cmd, "--theta", "theta", "Geometric decay of the regularization weight");
    add(cmd, "--tau", "tau", "Discrepancy-principle factor");
    add(cmd, "--p", "p", "Residual norm exponent");
    add(cmd, "--seed", "seed", "Base seed of the noise streams");
    add(cmd, "--noise-levels", "noise_levels", "Comma-separated noise levels");
    add(cmd, "--runs-per-level", "runs_per_level", "Repetitions per noise level");
    add(cmd, "--noise-model", "noise_model", "Noise model: gaussian or uniform");
    add(cmd, "--max-outer", "max_outer", "Outer iteration cap");
    add(cmd, "--kkt-tol", "kkt_tol", "Inner stationarity tolerance");
    add(cmd, "--max-inner", "max_inner", "Inner iteration cap");
    add(cmd, "--newton-reduction", "newton_reduction", "Forward solver residual reduction");
    add(cmd, "--max-newton", "max_newton", "Forward solver iteration cap");
    add(cmd, "--c-tc", "c_tc", "Assumed tangential cone constant");
    add(cmd, "--gamma", "gamma", "Power inequality parameter");
    add(cmd, "--estimators", "compute_estimators",
        "Attach error estimators to the trace (true/false)");
    add(cmd, "--threads", "threads", "Concurrent runs in a sweep (0 = hardware)");
  }

  // Builds the configuration: file first, then explicit flags.
  int materialize(ConfigPtr& out) const {
    irgnm_config* raw = nullptr;
    if (int rc = irgnm_config_create(&raw); rc != IRGNM_OK) return rc;
    out.reset(raw);
    if (!config_path.empty())
      if (int rc = irgnm_config_load_file(raw, config_path.c_str()); rc != IRGNM_OK)
        return rc;
    for (const auto& [opt, slot] : bound) {
      if (opt->count() == 0) continue;
      if (int rc = irgnm_config_set(raw, slot->first.c_str(), slot->second.c_str());
          rc != IRGNM_OK)
        return rc;
    }
    return IRGNM_OK;
  }
};

void print_table(const irgnm_result* result) {
  int levels = 0;
  irgnm_result_levels(result, &levels);
  std::printf("%10s %12s %12s %12s %12s %10s\n", "delta", "err_spot1", "err_spot2",
              "err_spot3", "err_L1", "k*_mean");
  for (int i = 0; i < levels; ++i) {
    double delta = 0, e1 = 0, e2 = 0, e3 = 0, el1 = 0, ks = 0;
    irgnm_result_table_row(result, i, &delta, &e1, &e2, &e3, &el1, &ks);
    std::printf("%10.4g %12.4f %12.4f %12.4f %12.4f %10.2f\n", delta, e1, e2, e3, el1, ks);
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse source reconstruction for a semilinear elliptic problem"};
  app.require_subcommand(1);
  app.set_version_flag("--version", irgnm_version());

  // solve
  auto* solve = app.add_subcommand("solve", "One reconstruction at a fixed noise level");
  KeyedOptions solve_opts;
  solve_opts.add_common(solve);
  solve_opts.add(solve, "--delta", "delta", "Noise level of the synthesized data");
  std::string solve_out;
  solve->add_option("--out", solve_out, "Directory for trace and field dumps");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Noise sweep with repeated runs per level");
  KeyedOptions sweep_opts;
  sweep_opts.add_common(sweep);
  std::string sweep_out;
  sweep->add_option("--out", sweep_out, "Directory for table.csv, runs.csv and traces");

  // diagnose-tc
  auto* diag = app.add_subcommand(
      "diagnose-tc", "Sampled linearization-quality ratio around the exact source");
  KeyedOptions diag_opts;
  diag_opts.add_common(diag);
  double radius = 0.5;
  int samples = 20;
  diag->add_option("--radius", radius, "Max-norm radius of the sampled perturbations");
  diag->add_option("--samples", samples, "Number of sampled perturbations");

  // theory
  auto* theory = app.add_subcommand(
      "theory", "Contraction constants and the stopping-index bound");
  KeyedOptions theory_opts;
  theory_opts.add_common(theory);
  double theory_delta = 0.01, d0 = -1.0, r_dagger = -1.0;
  theory->add_option("--delta", theory_delta, "Noise level entering the bound");
  theory->add_option("--d0", d0, "Initial decay quantity (< 0: derive from data)");
  theory->add_option("--r-dagger", r_dagger,
                     "Regularizer value at the exact source (< 0: compute)");

  CLI11_PARSE(app, argc, argv);

  if (solve->parsed()) {
    ConfigPtr config;
    if (int rc = solve_opts.materialize(config); rc != IRGNM_OK)
      return report_error("configuration", rc);
    irgnm_result* raw = nullptr;
    if (int rc = irgnm_solve(config.get(), solve_out.empty() ? nullptr : solve_out.c_str(),
                             &raw);
        rc != IRGNM_OK)
      return report_error("solve", rc);
    ResultPtr result(raw);
    print_table(result.get());
    if (!solve_out.empty()) std::printf("outputs written to %s\n", solve_out.c_str());
    return 0;
  }

  if (sweep->parsed()) {
    ConfigPtr config;
    if (int rc = sweep_opts.materialize(config); rc != IRGNM_OK)
      return report_error("configuration", rc);
    irgnm_result* raw = nullptr;
    if (int rc = irgnm_sweep(config.get(), sweep_out.empty() ? nullptr : sweep_out.c_str(),
                             &raw);
        rc != IRGNM_OK)
      return report_error("sweep", rc);
    ResultPtr result(raw);
    print_table(result.get());
    if (!sweep_out.empty()) std::printf("outputs written to %s\n", sweep_out.c_str());
    return 0;
  }

  if (diag->parsed()) {
    ConfigPtr config;
    if (int rc = diag_opts.materialize(config); rc != IRGNM_OK)
      return report_error("configuration", rc);
    double max_ratio = 0.0;
    int skipped = 0;
    if (int rc = irgnm_diagnose_tc(config.get(), radius, samples, &max_ratio, &skipped);
        rc != IRGNM_OK)
      return report_error("diagnose-tc", rc);
    std::printf("samples          %d\n", samples);
    std::printf("skipped          %d\n", skipped);
    std::printf("max ratio        %.6g\n", max_ratio);
    std::printf("ratio bounds the linearization error against the step size;\n"
                "values well below 1 support the local contraction argument.\n");
    return 0;
  }

  if (theory->parsed()) {
    ConfigPtr config;
    if (int rc = theory_opts.materialize(config); rc != IRGNM_OK)
      return report_error("configuration", rc);
    irgnm_theory_report report{};
    if (int rc = irgnm_theory(config.get(), theory_delta, d0, r_dagger, &report);
        rc != IRGNM_OK)
      return report_error("theory", rc);
    std::printf("power inequality constant  %.6g\n", report.c_gamma);
    std::printf("contraction factor q       %.6g\n", report.q);
    std::printf("schedule admissible        %s\n", report.schedule_admissible ? "yes" : "no");
    std::printf("initial decay d0           %.6g\n", report.d0);
    if (report.k_bar_vacuous)
      std::printf("stopping bound             vacuous for these parameters\n");
    else
      std::printf("stopping bound k_bar       %.4f\n", report.k_bar);
    return 0;
  }

  return 0;
}
