#pragma once

#include "irgnm/fem.hpp"
#include "irgnm/mesh.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace irgnm {

// Semilinear model problem on (-1,1)^2 with homogeneous Dirichlet data:
//   -Lap(u) + kappa u^3 = chi_{control} s,   observation u|_{observation}.
// The cubic term and its derivative use nodal quadrature, the source coupling
// and the misfit use the consistent mass matrix.
struct PdeProblem {
  std::shared_ptr<const Mesh> mesh;
  double kappa = 1.0;
  Eigen::VectorXd control_mask;     // 0/1 per node
  Eigen::VectorXd observation_mask; // 0/1 per node
  FemOperators fem;
};

PdeProblem make_problem(std::shared_ptr<const Mesh> mesh, double kappa);

struct NewtonOptions {
  double reduction = 1e-4; // stop once the residual drops by this factor
  int max_iterations = 50;
  int max_damping = 40;
};

struct NewtonReport {
  int iterations = 0;
  double initial_residual = 0.0;
  double final_residual = 0.0;
  int damping_steps = 0;
  bool converged = false;
  std::vector<double> residual_history;
};

// Damped Newton solve of the forward problem. The initial guess warm-starts
// the iteration (zero field when absent). Throws std::runtime_error when the
// iteration budget is exhausted; report (optional) receives diagnostics.
Field solve_forward(const PdeProblem& problem, const Field& s,
                    const Field* initial = nullptr,
                    const NewtonOptions& options = {},
                    NewtonReport* report = nullptr);

// Observation-masked parameter-to-observation map F(s).
Field apply_forward_map(const PdeProblem& problem, const Field& s,
                        const NewtonOptions& options = {});

// Linearization (-Lap + 3 kappa u_lin^2 id) around a state, with a cached
// factorization. solve() maps a P1 right-hand side f to v with A v = M f;
// solve_weak() takes an already-assembled dual vector.
class LinearizedOperator {
public:
  LinearizedOperator(const PdeProblem& problem, const Field& u_lin);
  Field solve(const Field& rhs) const;
  Eigen::VectorXd solve_weak(const Eigen::VectorXd& weak_rhs) const;
  const Eigen::SparseMatrix<double>& matrix() const { return matrix_; }
  const Field& linearization_state() const { return u_lin_; }

private:
  const PdeProblem* problem_;
  Field u_lin_;
  Eigen::SparseMatrix<double> matrix_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

// Directional derivative F'(s_lin) ds realized by one linearized solve with
// right-hand side ds (control-masked), then observation masking.
Field solve_linearized(const PdeProblem& problem, const Field& u_lin, const Field& rhs);

// Auxiliary dual state: (-Lap + 3 kappa u^2) mu = -6 kappa u v lambda - 2 (v + u - y).
Field solve_mu_tilde(const PdeProblem& problem, const Field& u_lin, const Field& v,
                     const Field& lambda, const Field& y_delta);

// Observation-masked L2 inner product / residual norm ||u - y||.
double obs_inner(const PdeProblem& problem, const Eigen::VectorXd& a,
                 const Eigen::VectorXd& b);
double residual_norm(const PdeProblem& problem, const Field& u, const Field& y);

// Max over sampled perturbations around center of
//   ||F(s~) - F(s) - F'(s)(s~ - s)|| / ||F(s~) - F(s)||,
// with ||s~ - s||_inf <= radius. Samples with vanishing denominator are
// skipped and counted.
struct TangentialConeEstimate {
  double max_ratio = 0.0;
  int samples = 0;
  int skipped = 0;
};
TangentialConeEstimate estimate_tangential_cone(const PdeProblem& problem,
                                                const Field& center, double radius,
                                                int num_samples, std::uint64_t seed);

} // namespace irgnm
