#include "irgnm/pde.hpp"

#include "irgnm/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace irgnm {

PdeProblem make_problem(std::shared_ptr<const Mesh> mesh, double kappa) {
  PdeProblem p;
  p.fem = make_operators(mesh);
  p.mesh = std::move(mesh);
  p.kappa = kappa;
  p.control_mask = Eigen::VectorXd::Ones(p.mesh->num_nodes());
  p.observation_mask = Eigen::VectorXd::Ones(p.mesh->num_nodes());
  return p;
}

namespace {

// Assembled residual of the state equation: K u + kappa W u^3 - M s, zeroed
// on the Dirichlet dofs (u itself is kept zero there).
Eigen::VectorXd state_residual_vec(const PdeProblem& p, const Eigen::VectorXd& u,
                                   const Eigen::VectorXd& weak_source) {
  const FemOperators& fem = p.fem;
  Eigen::VectorXd r = fem.stiffness * u;
  r += p.kappa * fem.lumped.cwiseProduct(u.array().cube().matrix());
  r -= weak_source;
  return r.cwiseProduct(fem.interior);
}

} // namespace

Field solve_forward(const PdeProblem& problem, const Field& s, const Field* initial,
                    const NewtonOptions& options, NewtonReport* report) {
  const FemOperators& fem = problem.fem;
  const Mesh& mesh = *problem.mesh;
  if (!s.mesh || s.mesh->n != mesh.n || s.mesh->level != mesh.level)
    throw std::invalid_argument("solve_forward: source lives on a different mesh");

  const Eigen::VectorXd weak_source =
      (fem.mass * problem.control_mask.cwiseProduct(s.values)).cwiseProduct(fem.interior);

  Eigen::VectorXd u = initial ? initial->values : Eigen::VectorXd::Zero(mesh.num_nodes());
  for (int i : fem.boundary) u[i] = 0.0;

  NewtonReport rep;
  Eigen::VectorXd r = state_residual_vec(problem, u, weak_source);
  double res = dual_norm(mesh, r, fem.boundary);
  rep.initial_residual = res;
  rep.residual_history.push_back(res);

  // Absolute floor guards against an exactly-consistent initial guess and
  // against demanding reduction below round-off of the assembled terms.
  const double floor_abs =
      1e-14 * (dual_norm(mesh, weak_source, fem.boundary) + res + 1.0);
  const double target = options.reduction * rep.initial_residual;

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  while (res > target && res > floor_abs && rep.iterations < options.max_iterations) {
    const Eigen::VectorXd diag =
        3.0 * problem.kappa * fem.lumped.cwiseProduct(u.cwiseProduct(u));
    const Eigen::SparseMatrix<double> jac = constrained_operator(fem, &diag);
    solver.compute(jac);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("solve_forward: factorization failed");
    const Eigen::VectorXd step = solver.solve(-r);

    // Damped update: halve until the residual decreases.
    double t = 1.0;
    Eigen::VectorXd u_new;
    Eigen::VectorXd r_new;
    double res_new = res;
    int backtracks = 0;
    while (true) {
      u_new = u + t * step;
      r_new = state_residual_vec(problem, u_new, weak_source);
      res_new = dual_norm(mesh, r_new, fem.boundary);
      if (res_new < res || backtracks >= options.max_damping) break;
      t *= 0.5;
      ++backtracks;
      ++rep.damping_steps;
    }
    if (res_new >= res) break; // no progress even fully damped
    u = std::move(u_new);
    r = std::move(r_new);
    res = res_new;
    ++rep.iterations;
    rep.residual_history.push_back(res);
  }

  rep.final_residual = res;
  rep.converged = (res <= target || res <= floor_abs);
  if (report) *report = rep;
  if (!rep.converged)
    throw std::runtime_error("solve_forward: Newton iteration did not converge");
  return make_field(problem.mesh, std::move(u));
}

Field apply_forward_map(const PdeProblem& problem, const Field& s,
                        const NewtonOptions& options) {
  Field u = solve_forward(problem, s, nullptr, options, nullptr);
  u.values = u.values.cwiseProduct(problem.observation_mask);
  return u;
}

LinearizedOperator::LinearizedOperator(const PdeProblem& problem, const Field& u_lin)
    : problem_(&problem), u_lin_(u_lin) {
  const Eigen::VectorXd diag = 3.0 * problem.kappa *
                               problem.fem.lumped.cwiseProduct(u_lin.values.cwiseProduct(u_lin.values));
  matrix_ = constrained_operator(problem.fem, &diag);
  solver_.compute(matrix_);
  if (solver_.info() != Eigen::Success)
    throw std::runtime_error("LinearizedOperator: factorization failed");
}

Eigen::VectorXd LinearizedOperator::solve_weak(const Eigen::VectorXd& weak_rhs) const {
  const Eigen::VectorXd rhs = weak_rhs.cwiseProduct(problem_->fem.interior);
  Eigen::VectorXd v = solver_.solve(rhs);
  return v;
}

Field LinearizedOperator::solve(const Field& rhs) const {
  const Eigen::VectorXd weak = problem_->fem.mass * rhs.values;
  return make_field(problem_->mesh, solve_weak(weak));
}

Field solve_linearized(const PdeProblem& problem, const Field& u_lin, const Field& rhs) {
  LinearizedOperator op(problem, u_lin);
  Field masked = make_field(problem.mesh, problem.control_mask.cwiseProduct(rhs.values));
  return op.solve(masked);
}

Field solve_mu_tilde(const PdeProblem& problem, const Field& u_lin, const Field& v,
                     const Field& lambda, const Field& y_delta) {
  const FemOperators& fem = problem.fem;
  LinearizedOperator op(problem, u_lin);
  const Eigen::VectorXd misfit = problem.observation_mask.cwiseProduct(
      v.values + u_lin.values - y_delta.values);
  Eigen::VectorXd weak = -6.0 * problem.kappa *
                         fem.lumped.cwiseProduct(u_lin.values.cwiseProduct(
                             v.values.cwiseProduct(lambda.values)));
  weak -= 2.0 * problem.observation_mask.cwiseProduct(fem.mass * misfit);
  return make_field(problem.mesh, op.solve_weak(weak));
}

double obs_inner(const PdeProblem& problem, const Eigen::VectorXd& a,
                 const Eigen::VectorXd& b) {
  const Eigen::VectorXd am = problem.observation_mask.cwiseProduct(a);
  const Eigen::VectorXd bm = problem.observation_mask.cwiseProduct(b);
  return am.dot(problem.fem.mass * bm);
}

double residual_norm(const PdeProblem& problem, const Field& u, const Field& y) {
  const Eigen::VectorXd d = u.values - y.values;
  return std::sqrt(std::max(0.0, obs_inner(problem, d, d)));
}

TangentialConeEstimate estimate_tangential_cone(const PdeProblem& problem,
                                                const Field& center, double radius,
                                                int num_samples, std::uint64_t seed) {
  TangentialConeEstimate est;
  est.samples = num_samples;
  NewtonOptions tight;
  tight.reduction = 1e-12;

  const Field u_c = solve_forward(problem, center, nullptr, tight, nullptr);
  LinearizedOperator op(problem, u_c);
  Rng rng(seed);
  const int n = problem.mesh->num_nodes();

  for (int sample = 0; sample < num_samples; ++sample) {
    Eigen::VectorXd ds(n);
    for (int i = 0; i < n; ++i) ds[i] = rng.uniform(-radius, radius);
    ds = ds.cwiseProduct(problem.control_mask);
    Field s_t = make_field(problem.mesh, center.values + ds);

    const Field u_t = solve_forward(problem, s_t, &u_c, tight, nullptr);
    Eigen::VectorXd dF = problem.observation_mask.cwiseProduct(u_t.values - u_c.values);
    const double denom = std::sqrt(std::max(0.0, obs_inner(problem, dF, dF)));
    if (denom == 0.0) {
      ++est.skipped;
      continue;
    }
    const Field lin = op.solve(make_field(problem.mesh, ds));
    Eigen::VectorXd taylor = dF - problem.observation_mask.cwiseProduct(lin.values);
    const double numer = std::sqrt(std::max(0.0, obs_inner(problem, taylor, taylor)));
    est.max_ratio = std::max(est.max_ratio, numer / denom);
  }
  return est;
}

} // namespace irgnm
