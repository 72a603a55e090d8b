#pragma once

#include "irgnm/pde.hpp"
#include "irgnm/subproblem.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace irgnm {

enum class Variant { tikhonov, ivanov };

std::string variant_name(Variant v);

struct IrgnmConfig {
  Variant variant = Variant::ivanov;
  double p = 2.0;      // residual power in the theoretical decay quantities
  double alpha0 = 1.0; // Tikhonov schedule alpha_k = alpha0 * theta^k
  double theta = 0.5;
  double rho = 10.0; // Ivanov bound, kept fixed over the iteration
  double tau = 1.1;  // discrepancy factor (> 1)
  double delta = 0.01;
  int max_outer = 50;
  InnerOptions inner;
  NewtonOptions newton;
  // Theory parameters (tangential cone constant and the free constant of the
  // power inequality); not used by the iteration itself.
  double c_tc = 0.1;
  double gamma = 0.1;
};

struct IterationRecord {
  int k = 0;
  double residual = 0.0;          // || F(s_k) - y_delta ||
  double regularizer_value = 0.0; // L1 norm (Tikhonov) / max norm (Ivanov) of s_k
  double alpha_or_rho = 0.0;      // value the step from s_k uses
  double objective = std::numeric_limits<double>::quiet_NaN();
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  int inner_iterations = 0;
  int active_set_size = 0;
  // Error estimators, when a step observer computes them.
  double eta = std::numeric_limits<double>::quiet_NaN();
  double xi = std::numeric_limits<double>::quiet_NaN();
  double zeta = std::numeric_limits<double>::quiet_NaN();
};

enum class RunStatus { converged, max_outer_reached, forward_failed, inner_failed };

struct RunResult {
  Field s_final;
  Field u_final; // forward state at s_final
  std::vector<IterationRecord> records;
  int stop_index = 0;
  RunStatus status = RunStatus::converged;
};

// Context handed to a step observer after each solved subproblem; the
// observer may deposit error estimators into the pending record.
struct StepContext {
  const PdeProblem& problem;
  const IrgnmConfig& config;
  int k;
  const Field& y_delta;
  const QuadraticStep& step;
  const StepResult& result;
  double alpha_or_rho;
};
using StepObserver = std::function<void(const StepContext&, IterationRecord&)>;

// Iteratively regularized Gauss-Newton method with the discrepancy principle:
// stop at the first k with ||F(s_k) - y_delta|| <= tau * delta. Each step
// linearizes at s_k and solves the variant's convex subproblem; the Tikhonov
// weight follows alpha_k = alpha0 * theta^k, the Ivanov bound stays at rho.
RunResult run_irgnm(const PdeProblem& problem, const IrgnmConfig& config,
                    const Field& y_delta, const Field& s0,
                    const StepObserver& observer = {});

// ---- theory toolkit --------------------------------------------------------

// C_gamma = ((1+gamma)/gamma)^(p-1), the constant of
// (a+b)^p <= (1+gamma)^(p-1) a^p + C_gamma b^p for a, b >= 0.
double power_inequality_constant(double p, double gamma);

// Contraction factor of the residual decay recursion,
// q = ((1+gamma)^(p-1) + 1)/2 * (2 c_tc / (1 - c_tc))^p.
double contraction_factor(double p, double gamma, double c_tc);

// The geometric schedule requires q < theta < 1.
bool schedule_admissible(double q, double theta);

// d_0 from the residual decay quantity d_k at the initial iterate:
// Tikhonov: 2^(1-p) (1-c_tc)^p r^p; Ivanov: (1-c_tc) r.
double initial_decay(const IrgnmConfig& config, double initial_residual);

struct StopBound {
  bool vacuous = true; // admissibility preconditions failed
  double value = std::numeric_limits<double>::quiet_NaN();
};

// A-priori bound on the discrepancy stopping index. Tikhonov:
//   kbar = (log 1/theta)^-1 [ p log(1/delta) + log(d0 + alpha0/(theta-q) R)
//                             - log(tau~ - C/(1-q)) ],
// with tau~ = 2^(1-p) (1-c_tc)^p tau^p and C = C_gamma (1+c_tc)^p. The Ivanov
// variant uses the base-q recursion with tau~ = (1-c_tc) tau, C = 1+c_tc and
// no regularizer term. Violated preconditions yield a vacuous bound.
StopBound theoretical_stop_bound(const IrgnmConfig& config, double delta, double d0,
                                 double r_dagger);

} // namespace irgnm
