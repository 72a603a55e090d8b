#pragma once

#include "irgnm/irgnm.hpp"
#include "irgnm/pde.hpp"
#include "irgnm/subproblem.hpp"

#include <vector>

namespace irgnm {

// Quantities of interest for the error estimators: the nonlinear residual
// norm I1 = ||u~ - y_delta|| at the linearization point, and the regularizer
// value I3 = R(s) (Tikhonov only).
enum class Quantity { misfit, regularizer };

// Stationary point of one linearized step's optimality system:
//   state      : -Lap(u~) + kappa u~^3 = s_prev
//   linearized : -Lap(v) + 3 kappa u~^2 v = s - s_prev
//   adjoint    : -Lap(lambda) + 3 kappa u~^2 lambda = -2 (v + u~ - data)
//   auxiliary  : -Lap(mu~) + 3 kappa u~^2 mu~ = -6 kappa u~ v lambda - 2 (v + u~ - data)
// plus the variant's subdifferential condition in s.
struct StationaryPoint {
  Variant variant = Variant::tikhonov;
  double alpha_or_rho = 0.0;
  Field s;
  Field v;
  Field u_tilde;
  Field lambda;
  Field mu_tilde;
  Field s_prev;
  Field data;
};

// Assembles the stationary point of a solved step (computes mu~).
StationaryPoint make_stationary_point(const PdeProblem& problem, Variant variant,
                                      double alpha_or_rho, const QuadraticStep& step,
                                      const StepResult& result);

struct StationarityReport {
  double state_residual = 0.0;      // dual norm of the nonlinear state equation
  double linearized_residual = 0.0; // dual norm of the linearized equation
  double adjoint_residual = 0.0;
  double auxiliary_residual = 0.0;
  double certificate_residual = 0.0; // variant's first-order condition
  bool pass = false;
};

// Verifies the five stationarity relations against the solver tolerances.
StationarityReport verify_stationary(const PdeProblem& problem,
                                     const StationaryPoint& point,
                                     const NewtonOptions& newton = {},
                                     const InnerOptions& inner = {});

// Dual weights of the quantity's auxiliary Lagrangian: one coupled sparse
// solve for (s_bar, v_bar, u_bar, lambda_bar, mu_bar) with the nonsmooth
// subdifferential handled by freezing the primal active set (nodes at zero
// for Tikhonov, nodes at the bound for Ivanov).
struct DualPoint {
  Quantity which = Quantity::misfit;
  Field s_bar;
  Field v_bar;
  Field u_bar;
  Field lambda_bar;
  Field mu_bar;
  std::vector<std::uint8_t> frozen; // per-node: excluded from the s variation
};

DualPoint solve_dual_weights(const PdeProblem& problem, const StationaryPoint& point,
                             Quantity which);

// Dual-weighted-residual estimate: one half of the derivative of the
// auxiliary functional at the discrete pair, evaluated against the
// patchwise-quadratic recovery gap of every field. Requires even mesh n.
double estimate_error(const PdeProblem& problem, const StationaryPoint& point,
                      const DualPoint& dual, Quantity which);

struct EstimatorSet {
  double eps1 = 0.0; // signed estimate of the I1 discretization error
  double eps3 = 0.0; // signed estimate of the regularizer error (Tikhonov)
  double eta = 0.0;  // proxy for the step error: the next xi stands in for eta
  double xi = 0.0;   // |eps1|
  double zeta = 0.0; // |eps3|
  bool remainder_neglected = true; // higher-order remainder terms are dropped
};

// Verifies stationarity, solves the dual weights and evaluates the
// estimators. Throws std::runtime_error for a non-stationary point.
EstimatorSet compute_estimators(const PdeProblem& problem, const StationaryPoint& point,
                                const NewtonOptions& newton = {},
                                const InnerOptions& inner = {});

struct DwrBudget {
  double c_eta = 0.1;   // eta <= c_eta * residual + tau_bar * delta
  double tau_bar = 0.1;
  double tau_hat = 0.55; // xi <= tau_hat * delta, tau_hat in (0, tau)
  double zeta_bar = 1.0; // zeta <= zeta_bar (Tikhonov)
};

enum class RefineDecision { accept, refine };

// Budget test: refine (uniformly, one level) when any estimator exceeds its
// budget line; accept otherwise.
RefineDecision refinement_controller(const DwrBudget& budget, const EstimatorSet& est,
                                     double residual, double delta, Variant variant);

// One linearized step under estimator control: solve on the current mesh,
// estimate, and re-solve on the uniformly refined mesh (data and iterate
// prolonged) until the budgets hold or max_level is reached. Requires
// full-domain control and observation.
struct AdaptiveLevel {
  int level = 0;
  int n = 0;
  EstimatorSet estimators;
  double residual = 0.0; // || F(s_next) - y_delta || on this level
  RefineDecision decision = RefineDecision::refine;
};

struct AdaptiveStepResult {
  std::vector<AdaptiveLevel> levels;
  PdeProblem problem; // problem on the accepted mesh
  QuadraticStep step; // inputs prolonged to the accepted mesh
  StepResult result;
  bool budget_met = false;
};

AdaptiveStepResult run_adaptive_step(const PdeProblem& problem, const IrgnmConfig& config,
                                     const DwrBudget& budget, const QuadraticStep& step,
                                     int max_level);

} // namespace irgnm
