#include "irgnm/irgnm.hpp"

#include <cmath>
#include <stdexcept>

namespace irgnm {

std::string variant_name(Variant v) {
  return v == Variant::tikhonov ? "tikhonov" : "ivanov";
}

namespace {

void validate(const IrgnmConfig& c) {
  if (c.p != 2.0)
    throw std::invalid_argument("run_irgnm: only the quadratic penalty p = 2 is supported");
  if (c.theta <= 0.0 || c.theta >= 1.0)
    throw std::invalid_argument("run_irgnm: theta must lie in (0, 1)");
  if (c.alpha0 <= 0.0) throw std::invalid_argument("run_irgnm: alpha0 must be positive");
  if (c.rho <= 0.0) throw std::invalid_argument("run_irgnm: rho must be positive");
  if (c.tau <= 0.0) throw std::invalid_argument("run_irgnm: tau must be positive");
  if (c.delta < 0.0) throw std::invalid_argument("run_irgnm: delta must be >= 0");
  if (c.max_outer < 0) throw std::invalid_argument("run_irgnm: max_outer must be >= 0");
}

double regularizer_of(const IrgnmConfig& config, const Field& s) {
  if (config.variant == Variant::ivanov) return linf_norm(s);
  return l1_norm(s);
}

} // namespace

RunResult run_irgnm(const PdeProblem& problem, const IrgnmConfig& config,
                    const Field& y_delta, const Field& s0, const StepObserver& observer) {
  validate(config);
  RunResult out;
  out.status = RunStatus::max_outer_reached;
  out.stop_index = -1;

  Field s = (s0.mesh) ? s0 : zero_field(problem.mesh);
  s.values = problem.control_mask.cwiseProduct(s.values);
  Field u = solve_forward(problem, s, nullptr, config.newton);

  for (int k = 0;; ++k) {
    IterationRecord rec;
    rec.k = k;
    rec.residual = residual_norm(problem, u, y_delta);
    rec.regularizer_value = regularizer_of(config, s);
    rec.alpha_or_rho = (config.variant == Variant::tikhonov)
                           ? config.alpha0 * std::pow(config.theta, k)
                           : config.rho;
    out.records.push_back(rec);

    if (rec.residual <= config.tau * config.delta) {
      out.stop_index = k;
      out.status = RunStatus::converged;
      break;
    }
    if (k >= config.max_outer) {
      out.stop_index = k;
      out.status = RunStatus::max_outer_reached;
      break;
    }

    QuadraticStep step;
    step.u_lin = u;
    step.s_cur = s;
    step.data = y_delta;
    step.p = config.p;

    StepResult sr = (config.variant == Variant::tikhonov)
                        ? solve_tikhonov_step(problem, step, out.records.back().alpha_or_rho,
                                              config.inner)
                        : solve_ivanov_step(problem, step, config.rho, config.inner);

    IterationRecord& filled = out.records.back();
    filled.objective = sr.objective;
    filled.kkt_residual = sr.kkt_residual;
    filled.inner_iterations = sr.iterations;
    filled.active_set_size = sr.active_set_size;

    if (!sr.converged) {
      out.stop_index = k;
      out.status = RunStatus::inner_failed;
      break;
    }

    if (observer) {
      StepContext ctx{problem, config, k, y_delta, step, sr, filled.alpha_or_rho};
      observer(ctx, filled);
    }

    Field predicted = make_field(problem.mesh, u.values + sr.v.values);
    Field u_next;
    try {
      u_next = solve_forward(problem, sr.s_next, &predicted, config.newton);
    } catch (const std::runtime_error&) {
      out.stop_index = k;
      out.status = RunStatus::forward_failed;
      break;
    }
    s = sr.s_next;
    u = std::move(u_next);
  }

  out.s_final = std::move(s);
  out.u_final = std::move(u);
  return out;
}

// --- convergence-theory toolkit --------------------------------------------

double power_inequality_constant(double p, double gamma) {
  if (p < 1.0) throw std::invalid_argument("power_inequality_constant: p must be >= 1");
  if (gamma <= 0.0) throw std::invalid_argument("power_inequality_constant: gamma must be > 0");
  return std::pow((1.0 + gamma) / gamma, p - 1.0);
}

double contraction_factor(double p, double gamma, double c_tc) {
  if (c_tc < 0.0 || c_tc >= 1.0)
    throw std::invalid_argument("contraction_factor: c_tc must lie in [0, 1)");
  if (gamma <= 0.0) throw std::invalid_argument("contraction_factor: gamma must be > 0");
  const double front = (std::pow(1.0 + gamma, p - 1.0) + 1.0) / 2.0;
  return front * std::pow(2.0 * c_tc / (1.0 - c_tc), p);
}

bool schedule_admissible(double q, double theta) {
  return q < theta && theta < 1.0 && q < 1.0;
}

double initial_decay(const IrgnmConfig& config, double initial_residual) {
  const double c = config.c_tc;
  if (config.variant == Variant::ivanov) return (1.0 - c) * initial_residual;
  return std::pow(2.0, 1.0 - config.p) * std::pow(1.0 - c, config.p) *
         std::pow(initial_residual, config.p);
}

StopBound theoretical_stop_bound(const IrgnmConfig& config, double delta, double d0,
                                 double r_dagger) {
  StopBound out{true, 0.0};
  if (delta <= 0.0 || d0 <= 0.0) return out;
  const double c = config.c_tc;
  if (c >= 1.0) return out;

  if (config.variant == Variant::ivanov) {
    const double q = 2.0 * c / (1.0 - c);
    const double cc = 1.0 + c;
    const double tau_tilde = (1.0 - c) * config.tau;
    if (q >= 1.0) return out;
    const double margin = tau_tilde - cc / (1.0 - q);
    if (margin <= 0.0) return out;
    out.vacuous = false;
    out.value = (std::log(1.0 / delta) + std::log(d0) - std::log(margin)) / std::log(1.0 / q);
    return out;
  }

  const double p = config.p;
  const double q = contraction_factor(p, config.gamma, c);
  const double cc = power_inequality_constant(p, config.gamma) * std::pow(1.0 + c, p);
  const double tau_tilde =
      std::pow(2.0, 1.0 - p) * std::pow(1.0 - c, p) * std::pow(config.tau, p);
  if (q >= 1.0 || !schedule_admissible(q, config.theta)) return out;
  const double margin = tau_tilde - cc / (1.0 - q);
  if (margin <= 0.0) return out;
  const double growth = d0 + config.alpha0 / (config.theta - q) * r_dagger;
  if (growth <= 0.0) return out;
  out.vacuous = false;
  out.value = (p * std::log(1.0 / delta) + std::log(growth) - std::log(margin)) /
              std::log(1.0 / config.theta);
  return out;
}

} // namespace irgnm
