#pragma once

#include "irgnm/dwr.hpp"
#include "irgnm/irgnm.hpp"
#include "irgnm/pde.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace irgnm {

enum class NoiseModel { gaussian, uniform };

// Full description of a reconstruction experiment: discretization, model
// parameters, solver variant and the noise sweep.
struct ExperimentConfig {
  int n = 32;
  double kappa = 1.0;
  Variant variant = Variant::ivanov;
  double p = 2.0;
  double alpha0 = 1.0;
  double theta = 0.5;
  double rho = 10.0;
  double tau = 1.1;
  std::vector<double> noise_levels = {0.1, 0.0667, 0.0333, 0.01};
  int runs_per_level = 5;
  std::uint64_t seed = 1;
  NoiseModel noise = NoiseModel::gaussian;
  int max_outer = 50;
  InnerOptions inner;
  NewtonOptions newton;
  double c_tc = 0.1;
  double gamma = 0.1;
  bool compute_estimators = false; // per-step error estimators in the traces
  DwrBudget budget;
  int threads = 0; // concurrent runs in a sweep; 0 picks the hardware count

  IrgnmConfig solver_config(double delta) const;
};

// Flat key=value configuration exchange. parse_config applies entries on top
// of the given base; unknown keys or malformed values raise std::runtime_error.
ExperimentConfig parse_config(const std::map<std::string, std::string>& entries,
                              const ExperimentConfig& base = {});
std::map<std::string, std::string> read_config_file(const std::string& path);

// Piecewise-constant exact source: -10 outside, +10 inside the disc of radius
// 0.2 centered at (-0.4,-0.3) (boundary ties resolve to the inside value),
// sampled at the mesh nodes.
Field exact_source(const Mesh& mesh);

// Observation spots probed by the error report.
const std::array<Eigen::Vector2d, 3>& spot_locations();

// Mean absolute patch error |mean over the (1/n x 1/n) square at the spot of
// (s - s_exact)|, the patch mean taken of the P1 interpolant. The patch must
// lie inside the domain.
double spot_error(const Field& s, const Field& s_exact, const Eigen::Vector2d& spot);

struct SynthesizedData {
  Field y_exact; // forward solve on the once-refined mesh, restricted back
  Field y_delta; // y_exact + scaled noise, || y_delta - y_exact || = delta
  double delta = 0.0;
};

// Data synthesis without the inverse crime: the exact source is sampled on
// the refined mesh, solved there, restricted to the computational mesh, and
// perturbed by noise scaled to the requested level in the observation norm.
SynthesizedData synthesize_data(const PdeProblem& problem, double delta,
                                NoiseModel noise, std::uint64_t stream_seed,
                                const NewtonOptions& newton = {},
                                const Field* y_exact_cached = nullptr);

struct RunOutcome {
  double delta = 0.0;
  int run_index = 0;
  double err_spot1 = 0.0, err_spot2 = 0.0, err_spot3 = 0.0;
  double err_l1 = 0.0; // L1 error normalized by the exact source's L1 norm
  int k_star = 0;
  RunStatus status = RunStatus::converged;
  RunResult run;
  SynthesizedData data;
};

struct LevelReport {
  double delta = 0.0;
  double err_spot1 = 0.0, err_spot2 = 0.0, err_spot3 = 0.0;
  double err_l1 = 0.0;
  double k_star_mean = 0.0;
};

struct SweepResult {
  std::vector<LevelReport> table;
  std::vector<RunOutcome> runs;
};

// Single reconstruction at the given noise level/run index (seeded stream).
RunOutcome run_single(const ExperimentConfig& config, double delta, int run_index,
                      const Field* y_exact_cached = nullptr);

// Noise sweep over config.noise_levels with runs_per_level repetitions per
// level; per-level means in the table. When out_dir is nonempty, writes
// table.csv, runs.csv and per-run traces and field dumps beneath it.
SweepResult run_experiment(const ExperimentConfig& config, const std::string& out_dir = "");

// Single labelled run with outputs (trace, reconstruction and data dumps).
RunOutcome run_solve(const ExperimentConfig& config, double delta,
                     const std::string& out_dir = "");

} // namespace irgnm
