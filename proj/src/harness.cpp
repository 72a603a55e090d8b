#include "irgnm/harness.hpp"

#include "irgnm/field_io.hpp"
#include "irgnm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace irgnm {

IrgnmConfig ExperimentConfig::solver_config(double delta) const {
  IrgnmConfig c;
  c.variant = variant;
  c.p = p;
  c.alpha0 = alpha0;
  c.theta = theta;
  c.rho = rho;
  c.tau = tau;
  c.delta = delta;
  c.max_outer = max_outer;
  c.inner = inner;
  c.newton = newton;
  c.c_tc = c_tc;
  c.gamma = gamma;
  return c;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
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

long long parse_integer(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(value, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("config: invalid integer for '" + key + "': " + value);
  }
  if (pos != value.size())
    throw std::runtime_error("config: trailing characters in '" + key + "': " + value);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw std::runtime_error("config: invalid boolean for '" + key + "': " + value);
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty())
      throw std::runtime_error("config: empty entry in list '" + key + "'");
    out.push_back(parse_double(key, item));
  }
  if (out.empty()) throw std::runtime_error("config: empty list for '" + key + "'");
  return out;
}

} // namespace

ExperimentConfig parse_config(const std::map<std::string, std::string>& entries,
                              const ExperimentConfig& base) {
  ExperimentConfig c = base;
  for (const auto& [key, raw] : entries) {
    const std::string value = trim(raw);
    if (key == "N") {
      c.n = static_cast<int>(parse_integer(key, value));
    } else if (key == "kappa") {
      c.kappa = parse_double(key, value);
    } else if (key == "variant") {
      if (value == "tikhonov")
        c.variant = Variant::tikhonov;
      else if (value == "ivanov")
        c.variant = Variant::ivanov;
      else
        throw std::runtime_error("config: unknown variant '" + value + "'");
    } else if (key == "p") {
      c.p = parse_double(key, value);
    } else if (key == "alpha0") {
      c.alpha0 = parse_double(key, value);
    } else if (key == "theta") {
      c.theta = parse_double(key, value);
    } else if (key == "rho") {
      c.rho = parse_double(key, value);
    } else if (key == "tau") {
      c.tau = parse_double(key, value);
    } else if (key == "noise_levels") {
      c.noise_levels = parse_list(key, value);
    } else if (key == "runs_per_level") {
      c.runs_per_level = static_cast<int>(parse_integer(key, value));
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(parse_integer(key, value));
    } else if (key == "noise_model") {
      if (value == "gaussian")
        c.noise = NoiseModel::gaussian;
      else if (value == "uniform")
        c.noise = NoiseModel::uniform;
      else
        throw std::runtime_error("config: unknown noise model '" + value + "'");
    } else if (key == "max_outer") {
      c.max_outer = static_cast<int>(parse_integer(key, value));
    } else if (key == "kkt_tol") {
      c.inner.tol = parse_double(key, value);
    } else if (key == "max_inner") {
      c.inner.max_iterations = static_cast<int>(parse_integer(key, value));
    } else if (key == "newton_reduction") {
      c.newton.reduction = parse_double(key, value);
    } else if (key == "max_newton") {
      c.newton.max_iterations = static_cast<int>(parse_integer(key, value));
    } else if (key == "c_tc") {
      c.c_tc = parse_double(key, value);
    } else if (key == "gamma") {
      c.gamma = parse_double(key, value);
    } else if (key == "compute_estimators") {
      c.compute_estimators = parse_bool(key, value);
    } else if (key == "c_eta") {
      c.budget.c_eta = parse_double(key, value);
    } else if (key == "tau_bar") {
      c.budget.tau_bar = parse_double(key, value);
    } else if (key == "tau_hat") {
      c.budget.tau_hat = parse_double(key, value);
    } else if (key == "zeta_bar") {
      c.budget.zeta_bar = parse_double(key, value);
    } else if (key == "threads") {
      c.threads = static_cast<int>(parse_integer(key, value));
    } else {
      throw std::runtime_error("config: unknown key '" + key + "'");
    }
  }
  if (c.n < 2) throw std::runtime_error("config: n must be at least 2");
  if (c.runs_per_level < 1) throw std::runtime_error("config: runs_per_level must be >= 1");
  for (double d : c.noise_levels)
    if (d < 0.0) throw std::runtime_error("config: noise levels must be >= 0");
  return c;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open file '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: missing '=' at " + path + ":" +
                               std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw std::runtime_error("config: empty key at " + path + ":" + std::to_string(lineno));
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

Field exact_source(const Mesh& mesh) {
  // Disc boundary ties count as inside; the tolerance absorbs roundoff in the
  // squared distance so that nodes exactly on the circle classify stably.
  constexpr double cx = -0.4, cy = -0.3, r2 = 0.04, tie = 1e-12;
  Eigen::VectorXd values(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const Eigen::Vector2d p = mesh.node(i);
    const double d2 = (p.x() - cx) * (p.x() - cx) + (p.y() - cy) * (p.y() - cy);
    values[i] = (d2 <= r2 + tie) ? 10.0 : -10.0;
  }
  return Field{std::make_shared<const Mesh>(mesh), std::move(values)};
}

const std::array<Eigen::Vector2d, 3>& spot_locations() {
  static const std::array<Eigen::Vector2d, 3> spots = {
      Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(-0.4, -0.3), Eigen::Vector2d(-0.4, -0.5)};
  return spots;
}

double spot_error(const Field& s, const Field& s_exact, const Eigen::Vector2d& spot) {
  if (!same_mesh(s, s_exact))
    throw std::invalid_argument("spot_error: fields live on different meshes");
  const Mesh& mesh = *s.mesh;
  const double side = 1.0 / mesh.n;
  const double x0 = spot.x() - 0.5 * side;
  const double y0 = spot.y() - 0.5 * side;
  if (x0 < -1.0 || y0 < -1.0 || x0 + side > 1.0 || y0 + side > 1.0)
    throw std::invalid_argument("spot_error: patch leaves the domain");
  constexpr int sub = 8;
  const Field diff{s.mesh, s.values - s_exact.values};
  double acc = 0.0;
  for (int j = 0; j < sub; ++j) {
    for (int i = 0; i < sub; ++i) {
      const Eigen::Vector2d p(x0 + (i + 0.5) * side / sub, y0 + (j + 0.5) * side / sub);
      acc += eval_p1(diff, p);
    }
  }
  return std::abs(acc / (sub * sub));
}

SynthesizedData synthesize_data(const PdeProblem& problem, double delta, NoiseModel noise,
                                std::uint64_t stream_seed, const NewtonOptions& newton,
                                const Field* y_exact_cached) {
  SynthesizedData out;
  if (y_exact_cached) {
    if (!y_exact_cached->mesh || y_exact_cached->mesh->n != problem.mesh->n)
      throw std::invalid_argument("synthesize_data: cached data on the wrong mesh");
    out.y_exact = *y_exact_cached;
  } else {
    // Solve on the once-refined mesh and restrict, so the data do not come
    // from the same discrete forward map that the reconstruction inverts.
    NewtonOptions tight = newton;
    tight.reduction = std::min(tight.reduction, 1e-10);
    auto fine = refine(*problem.mesh);
    PdeProblem fine_problem = make_problem(fine, problem.kappa);
    const Field s_fine = exact_source(*fine);
    const Field u_fine = solve_forward(fine_problem, s_fine, nullptr, tight);
    Field restricted = restrict_project(u_fine, problem.mesh);
    out.y_exact = make_field(problem.mesh, std::move(restricted.values));
  }

  out.delta = delta;
  if (delta == 0.0) {
    out.y_delta = out.y_exact;
    return out;
  }

  Rng rng(stream_seed);
  Eigen::VectorXd nu(problem.mesh->num_nodes());
  for (int i = 0; i < nu.size(); ++i)
    nu[i] = (noise == NoiseModel::gaussian) ? rng.normal() : rng.uniform(-1.0, 1.0);
  const Eigen::VectorXd masked = problem.observation_mask.cwiseProduct(nu);
  const double nrm = std::sqrt(masked.dot(problem.fem.mass * masked));
  if (nrm == 0.0) throw std::runtime_error("synthesize_data: degenerate noise draw");
  out.y_delta = make_field(problem.mesh, out.y_exact.values + (delta / nrm) * nu);
  return out;
}

namespace {

std::uint64_t run_stream_seed(std::uint64_t seed, double delta, int run_index) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &delta, sizeof(bits));
  return mix_seed(mix_seed(seed, bits), static_cast<std::uint64_t>(run_index) + 1);
}

} // namespace

RunOutcome run_single(const ExperimentConfig& config, double delta, int run_index,
                      const Field* y_exact_cached) {
  auto mesh = build_mesh(config.n);
  PdeProblem problem = make_problem(mesh, config.kappa);

  RunOutcome out;
  out.delta = delta;
  out.run_index = run_index;
  out.data = synthesize_data(problem, delta, config.noise,
                             run_stream_seed(config.seed, delta, run_index), config.newton,
                             y_exact_cached);

  StepObserver observer;
  if (config.compute_estimators) {
    observer = [&problem, &config](const StepContext& ctx, IterationRecord& rec) {
      try {
        const StationaryPoint sp = make_stationary_point(
            problem, ctx.config.variant, ctx.alpha_or_rho, ctx.step, ctx.result);
        const EstimatorSet est =
            compute_estimators(problem, sp, config.newton, config.inner);
        rec.eta = est.eta;
        rec.xi = est.xi;
        rec.zeta = est.zeta;
      } catch (const std::exception&) {
        // Leave the estimator columns unset when the point fails the
        // stationarity gate; the trace keeps NaN there.
      }
    };
  }

  const IrgnmConfig sc = config.solver_config(delta);
  out.run = run_irgnm(problem, sc, out.data.y_delta, zero_field(mesh), observer);
  out.k_star = out.run.stop_index;
  out.status = out.run.status;

  const Field s_exact = exact_source(*mesh);
  const Field diff{mesh, out.run.s_final.values - s_exact.values};
  const auto& spots = spot_locations();
  out.err_spot1 = spot_error(out.run.s_final, s_exact, spots[0]);
  out.err_spot2 = spot_error(out.run.s_final, s_exact, spots[1]);
  out.err_spot3 = spot_error(out.run.s_final, s_exact, spots[2]);
  out.err_l1 = l1_norm(diff) / l1_norm(s_exact);
  return out;
}

namespace {

void write_run_outputs(const std::string& out_dir, const std::string& tag,
                       const RunOutcome& outcome) {
  namespace fs = std::filesystem;
  const fs::path base(out_dir);
  write_trace_csv((base / ("trace_" + tag + ".csv")).string(), outcome.run.records);
  write_field_csv((base / ("reconstruction_" + tag + ".csv")).string(),
                  outcome.run.s_final);
  write_field_csv((base / ("state_" + tag + ".csv")).string(), outcome.run.u_final);
  write_field_csv((base / ("data_" + tag + ".csv")).string(), outcome.data.y_delta);
}

} // namespace

SweepResult run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
  auto mesh = build_mesh(config.n);
  PdeProblem probe = make_problem(mesh, config.kappa);
  // The exact data are noise-free and shared by every run on this mesh.
  const SynthesizedData exact =
      synthesize_data(probe, 0.0, config.noise, config.seed, config.newton);
  const Field& y_exact = exact.y_exact;

  const int levels = static_cast<int>(config.noise_levels.size());
  const int runs = config.runs_per_level;
  std::vector<RunOutcome> outcomes(static_cast<std::size_t>(levels) * runs);

  int workers = config.threads > 0 ? config.threads
                                   : static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;

  // Fixed work list processed in waves; results land in slot order, so the
  // output is independent of scheduling.
  const int total = levels * runs;
  for (int start = 0; start < total; start += workers) {
    const int end = std::min(start + workers, total);
    std::vector<std::future<RunOutcome>> batch;
    batch.reserve(end - start);
    for (int idx = start; idx < end; ++idx) {
      const int li = idx / runs, ri = idx % runs;
      batch.push_back(std::async(std::launch::async, [&, li, ri] {
        return run_single(config, config.noise_levels[li], ri, &y_exact);
      }));
    }
    for (int idx = start; idx < end; ++idx)
      outcomes[idx] = batch[idx - start].get();
  }

  SweepResult result;
  result.runs = std::move(outcomes);
  for (int li = 0; li < levels; ++li) {
    LevelReport rep;
    rep.delta = config.noise_levels[li];
    for (int ri = 0; ri < runs; ++ri) {
      const RunOutcome& oc = result.runs[static_cast<std::size_t>(li) * runs + ri];
      rep.err_spot1 += oc.err_spot1;
      rep.err_spot2 += oc.err_spot2;
      rep.err_spot3 += oc.err_spot3;
      rep.err_l1 += oc.err_l1;
      rep.k_star_mean += oc.k_star;
    }
    rep.err_spot1 /= runs;
    rep.err_spot2 /= runs;
    rep.err_spot3 /= runs;
    rep.err_l1 /= runs;
    rep.k_star_mean /= runs;
    result.table.push_back(rep);
  }

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    write_table_csv((fs::path(out_dir) / "table.csv").string(), result.table);
    write_runs_csv((fs::path(out_dir) / "runs.csv").string(), result.runs);
    for (int li = 0; li < levels; ++li)
      for (int ri = 0; ri < runs; ++ri)
        write_run_outputs(out_dir, "l" + std::to_string(li) + "_r" + std::to_string(ri),
                          result.runs[static_cast<std::size_t>(li) * runs + ri]);
  }
  return result;
}

RunOutcome run_solve(const ExperimentConfig& config, double delta,
                     const std::string& out_dir) {
  RunOutcome outcome = run_single(config, delta, 0);
  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    write_run_outputs(out_dir, "solve", outcome);
    const Field s_exact = exact_source(*outcome.run.s_final.mesh);
    write_field_csv((fs::path(out_dir) / "exact_source.csv").string(), s_exact);
    write_field_csv((fs::path(out_dir) / "data_exact.csv").string(), outcome.data.y_exact);
  }
  return outcome;
}

} // namespace irgnm
