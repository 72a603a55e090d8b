#pragma once

#include "irgnm/pde.hpp"

#include <vector>

namespace irgnm {

// One linearized step: data for the reduced convex quadratic in s,
//   misfit(s) = || u_lin + F'(s_cur)(s - s_cur) - data ||^2.
// Only the quadratic case p = 2 is solvable here.
struct QuadraticStep {
  Field u_lin; // forward state at s_cur
  Field s_cur;
  Field data; // noisy observations
  double p = 2.0;
};

struct InnerOptions {
  double tol = 1e-8;         // stationarity tolerance in the max norm
  int max_iterations = 10000; // hard cap; exceeding it is a failure
};

struct StepResult {
  Field s_next;
  Field v;      // linearized state F'(s_cur)(s_next - s_cur)
  Field lambda; // adjoint state of the step's optimality system
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  int active_set_size = 0; // nodes at the box bound (Ivanov) / at zero (Tikhonov)
  bool converged = false;
  std::vector<double> objective_history;
};

// Ivanov step: minimize 1/2 misfit(s) subject to |s| <= rho on the control
// region. Gradient projection with Barzilai-Borwein steps and an exact line
// search along the projected direction, accelerated by conjugate-gradient
// sweeps on the settled free set. The returned iterate is feasible exactly
// (projection is the last operation applied).
StepResult solve_ivanov_step(const PdeProblem& problem, const QuadraticStep& step,
                             double rho, const InnerOptions& options = {});

// Tikhonov step: minimize misfit(s) + alpha * sum_i w_i |s_i| (lumped L1
// weights). Proximal gradient with BB steps plus conjugate-gradient sweeps on
// the settled support. The certificate reported as kkt_residual is
//   max( max_{s_i = 0} (|g_i| - alpha w_i)_+ , max_{s_i != 0} |g_i + alpha w_i sign(s_i)| )
// for the adjoint gradient g of the misfit.
StepResult solve_tikhonov_step(const PdeProblem& problem, const QuadraticStep& step,
                               double alpha, const InnerOptions& options = {});

// Misfit and composite objectives evaluated exactly (one linearized solve);
// used by diagnostics and tests.
double evaluate_misfit(const PdeProblem& problem, const QuadraticStep& step, const Field& s);
double ivanov_objective(const PdeProblem& problem, const QuadraticStep& step, const Field& s);
double tikhonov_objective(const PdeProblem& problem, const QuadraticStep& step,
                          const Field& s, double alpha);

} // namespace irgnm
