#include "irgnm/dwr.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace irgnm {

namespace {

double sign_of(double x) { return (x > 0.0) ? 1.0 : ((x < 0.0) ? -1.0 : 0.0); }

Eigen::VectorXd cubic_weight(const PdeProblem& problem, const Eigen::VectorXd& u) {
  return 3.0 * problem.kappa *
         problem.fem.lumped.cwiseProduct(u.cwiseProduct(u));
}

} // namespace

StationaryPoint make_stationary_point(const PdeProblem& problem, Variant variant,
                                      double alpha_or_rho, const QuadraticStep& step,
                                      const StepResult& result) {
  StationaryPoint p;
  p.variant = variant;
  p.alpha_or_rho = alpha_or_rho;
  p.s = result.s_next;
  p.v = result.v;
  p.u_tilde = step.u_lin;
  p.lambda = result.lambda;
  p.mu_tilde = solve_mu_tilde(problem, step.u_lin, result.v, result.lambda, step.data);
  p.s_prev = step.s_cur;
  p.data = step.data;
  return p;
}

StationarityReport verify_stationary(const PdeProblem& problem, const StationaryPoint& point,
                                     const NewtonOptions& newton, const InnerOptions& inner) {
  const FemOperators& fem = problem.fem;
  const Mesh& mesh = *problem.mesh;
  const Eigen::VectorXd& interior = fem.interior;
  const Eigen::VectorXd& u = point.u_tilde.values;
  const Eigen::VectorXd& v = point.v.values;
  const Eigen::VectorXd& lm = point.lambda.values;
  const Eigen::VectorXd& mu = point.mu_tilde.values;
  const Eigen::VectorXd& s = point.s.values;
  const Eigen::VectorXd& sp = point.s_prev.values;
  const Eigen::VectorXd& y = point.data.values;
  const Eigen::VectorXd& cc = problem.control_mask;
  const Eigen::VectorXd& co = problem.observation_mask;
  const double kappa = problem.kappa;

  StationarityReport rep;

  const Eigen::VectorXd cubic =
      kappa * fem.lumped.cwiseProduct(u.cwiseProduct(u).cwiseProduct(u));
  const Eigen::VectorXd r_state =
      interior.cwiseProduct(fem.stiffness * u + cubic - fem.mass * cc.cwiseProduct(sp));
  rep.state_residual = dual_norm(mesh, r_state, fem.boundary);

  const Eigen::VectorXd extra = cubic_weight(problem, u);
  const Eigen::SparseMatrix<double> kw = constrained_operator(fem, &extra);

  const Eigen::VectorXd r_lin =
      interior.cwiseProduct(kw * v - fem.mass * cc.cwiseProduct(s - sp));
  rep.linearized_residual = dual_norm(mesh, r_lin, fem.boundary);

  const Eigen::VectorXd robs = co.cwiseProduct(u + v - y);
  const Eigen::VectorXd wobs = 2.0 * co.cwiseProduct(fem.mass * robs);
  rep.adjoint_residual = dual_norm(mesh, interior.cwiseProduct(kw * lm + wobs), fem.boundary);

  const Eigen::VectorXd coupling =
      6.0 * kappa * fem.lumped.cwiseProduct(u.cwiseProduct(v).cwiseProduct(lm));
  rep.auxiliary_residual =
      dual_norm(mesh, interior.cwiseProduct(kw * mu + coupling + wobs), fem.boundary);

  // First-order condition in the source variable, reduced gradient -M lambda.
  const Eigen::VectorXd g = -cc.cwiseProduct(fem.mass * lm);
  double cert = 0.0;
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    if (cc[i] == 0.0) continue;
    if (point.variant == Variant::tikhonov) {
      const double th = point.alpha_or_rho * fem.lumped[i];
      if (s[i] == 0.0)
        cert = std::max(cert, std::abs(g[i]) - th);
      else
        cert = std::max(cert, std::abs(g[i] + th * sign_of(s[i])));
    } else {
      const double rho = point.alpha_or_rho;
      const double proj = std::clamp(s[i] - 0.5 * g[i], -rho, rho);
      cert = std::max(cert, std::abs(s[i] - proj));
    }
  }
  rep.certificate_residual = std::max(cert, 0.0);

  const double scale =
      1.0 + std::max({u.cwiseAbs().maxCoeff(), v.cwiseAbs().maxCoeff(),
                      lm.cwiseAbs().maxCoeff(), mu.cwiseAbs().maxCoeff(),
                      s.cwiseAbs().maxCoeff(), y.cwiseAbs().maxCoeff()});
  const double eq_tol = 1e-6 * scale;
  const double state_tol = 50.0 * std::max(newton.reduction, 1e-11) * scale;
  const double cert_tol = 50.0 * std::max(inner.tol, 1e-12) * scale;
  rep.pass = rep.state_residual <= state_tol && rep.linearized_residual <= eq_tol &&
             rep.adjoint_residual <= eq_tol && rep.auxiliary_residual <= eq_tol &&
             rep.certificate_residual <= cert_tol;
  return rep;
}

DualPoint solve_dual_weights(const PdeProblem& problem, const StationaryPoint& point,
                             Quantity which) {
  const FemOperators& fem = problem.fem;
  const Mesh& mesh = *problem.mesh;
  const int n = mesh.num_nodes();
  const Eigen::VectorXd& u = point.u_tilde.values;
  const Eigen::VectorXd& v = point.v.values;
  const Eigen::VectorXd& lm = point.lambda.values;
  const Eigen::VectorXd& mu = point.mu_tilde.values;
  const Eigen::VectorXd& s = point.s.values;
  const Eigen::VectorXd& cc = problem.control_mask;
  const Eigen::VectorXd& co = problem.observation_mask;
  const double kappa = problem.kappa;

  // Global ordering: block b in (s, v, u, lambda, mu) at b * n + node.
  const auto gid = [n](int block, int node) { return block * n + node; };

  DualPoint out;
  out.which = which;
  out.frozen.assign(5 * n, 0);
  for (int i = 0; i < n; ++i) {
    bool freeze_s = cc[i] == 0.0;
    if (!freeze_s) {
      if (point.variant == Variant::tikhonov)
        freeze_s = s[i] == 0.0;
      else
        freeze_s = std::abs(s[i]) >= point.alpha_or_rho - 1e-12;
    }
    if (freeze_s) out.frozen[gid(0, i)] = 1;
    if (mesh.on_boundary(i))
      for (int b = 1; b < 5; ++b) out.frozen[gid(b, i)] = 1;
  }

  // Diagonal couplings of the second-derivative blocks.
  const Eigen::VectorXd wj = 6.0 * kappa * fem.lumped.cwiseProduct(u.cwiseProduct(lm));
  const Eigen::VectorXd wd =
      6.0 * kappa * fem.lumped.cwiseProduct(v.cwiseProduct(lm) + u.cwiseProduct(mu));
  const Eigen::VectorXd wj2 = 6.0 * kappa * fem.lumped.cwiseProduct(u.cwiseProduct(v));
  const Eigen::VectorXd kw_diag = cubic_weight(problem, u);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(fem.mass.nonZeros()) * 8 +
                static_cast<std::size_t>(fem.stiffness.nonZeros()) * 4 + 10 * n);
  const auto add = [&](int r, int c, double val) {
    if (val == 0.0) return;
    if (out.frozen[r] || out.frozen[c]) return;
    trips.emplace_back(r, c, val);
  };
  const auto add_sym = [&](int r, int c, double val) {
    add(r, c, val);
    if (r != c) add(c, r, val);
  };

  for (int col = 0; col < fem.mass.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(fem.mass, col); it; ++it) {
      const int i = static_cast<int>(it.row());
      const int j = static_cast<int>(it.col());
      const double mij = it.value();
      // (lambda_i, s_j): -M chi_c from the source coupling of the linearized
      // equation; mirrored into (s_j, lambda_i) by symmetry of the Hessian.
      if (cc[j] != 0.0) {
        add(gid(3, i), gid(0, j), -mij * cc[j]);
        add(gid(0, j), gid(3, i), -mij * cc[j]);
      }
      // Misfit curvature 2 chi_o M chi_o on the (v, u) 2x2 block.
      const double mo = 2.0 * co[i] * mij * co[j];
      if (mo != 0.0) {
        add(gid(1, i), gid(1, j), mo);
        add(gid(1, i), gid(2, j), mo);
        add(gid(2, i), gid(1, j), mo);
        add(gid(2, i), gid(2, j), mo);
      }
    }
  }
  for (int col = 0; col < fem.stiffness.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(fem.stiffness, col); it; ++it) {
      const int i = static_cast<int>(it.row());
      const int j = static_cast<int>(it.col());
      // Linearized operator K_w on (v, lambda) and (u, mu).
      add(gid(1, i), gid(3, j), it.value());
      add(gid(3, j), gid(1, i), it.value());
      add(gid(2, i), gid(4, j), it.value());
      add(gid(4, j), gid(2, i), it.value());
    }
  }
  for (int i = 0; i < n; ++i) {
    add_sym(gid(1, i), gid(3, i), kw_diag[i]);
    add_sym(gid(2, i), gid(4, i), kw_diag[i]);
    add_sym(gid(1, i), gid(2, i), wj[i]);  // d2/(dv du) of the cubic coupling
    add(gid(2, i), gid(2, i), wd[i]);      // d2/du2
    add_sym(gid(2, i), gid(3, i), wj2[i]); // d2/(du dlambda)
  }
  for (int r = 0; r < 5 * n; ++r)
    if (out.frozen[r]) trips.emplace_back(r, r, 1.0);

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(5 * n);
  if (which == Quantity::misfit) {
    const Eigen::VectorXd e = co.cwiseProduct(u - point.data.values);
    const double i1 = std::sqrt(e.dot(fem.mass * e));
    if (i1 == 0.0) {
      out.s_bar = zero_field(problem.mesh);
      out.v_bar = zero_field(problem.mesh);
      out.u_bar = zero_field(problem.mesh);
      out.lambda_bar = zero_field(problem.mesh);
      out.mu_bar = zero_field(problem.mesh);
      return out;
    }
    const Eigen::VectorXd b_u = -co.cwiseProduct(fem.mass * e) / i1;
    for (int i = 0; i < n; ++i)
      if (!out.frozen[gid(2, i)]) rhs[gid(2, i)] = b_u[i];
  } else if (point.variant == Variant::tikhonov) {
    for (int i = 0; i < n; ++i)
      if (!out.frozen[gid(0, i)]) rhs[gid(0, i)] = -fem.lumped[i] * sign_of(s[i]);
  } else {
    int imax = -1;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      if (cc[i] == 0.0) continue;
      if (std::abs(s[i]) > best) {
        best = std::abs(s[i]);
        imax = i;
      }
    }
    if (imax >= 0 && !out.frozen[gid(0, imax)] && s[imax] != 0.0)
      rhs[gid(0, imax)] = -sign_of(s[imax]);
  }

  Eigen::SparseMatrix<double> system(5 * n, 5 * n);
  system.setFromTriplets(trips.begin(), trips.end());
  system.makeCompressed();

  Eigen::SparseLU<Eigen::SparseMatrix<double>> solver;
  solver.analyzePattern(system);
  solver.factorize(system);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("solve_dual_weights: coupled system factorization failed");
  const Eigen::VectorXd z = solver.solve(rhs);

  out.s_bar = make_field(problem.mesh, z.segment(0 * n, n));
  out.v_bar = make_field(problem.mesh, z.segment(1 * n, n));
  out.u_bar = make_field(problem.mesh, z.segment(2 * n, n));
  out.lambda_bar = make_field(problem.mesh, z.segment(3 * n, n));
  out.mu_bar = make_field(problem.mesh, z.segment(4 * n, n));
  return out;
}

namespace {

// Per-triangle evaluation cache: node ids, constant basis gradients, and the
// physical quadrature points.
struct TriGeometry {
  std::array<int, 3> nodes;
  std::array<Eigen::Vector2d, 3> corners;
  std::array<Eigen::Vector2d, 3> grad;
  double area = 0.0;
};

TriGeometry tri_geometry(const Mesh& mesh, int t) {
  TriGeometry g;
  g.nodes = mesh.triangle(t);
  for (int k = 0; k < 3; ++k) g.corners[k] = mesh.node(g.nodes[k]);
  const auto& c = g.corners;
  const double det = (c[1].x() - c[0].x()) * (c[2].y() - c[0].y()) -
                     (c[2].x() - c[0].x()) * (c[1].y() - c[0].y());
  g.area = 0.5 * det;
  for (int k = 0; k < 3; ++k) {
    const auto& pj = c[(k + 1) % 3];
    const auto& pk = c[(k + 2) % 3];
    g.grad[k] = Eigen::Vector2d(pj.y() - pk.y(), pk.x() - pj.x()) / det;
  }
  return g;
}

struct P1Sample {
  double value = 0.0;
  Eigen::Vector2d grad = Eigen::Vector2d::Zero();
};

P1Sample sample_p1(const TriGeometry& g, const Eigen::VectorXd& f,
                   const std::array<double, 3>& bary) {
  P1Sample s;
  for (int k = 0; k < 3; ++k) {
    s.value += bary[k] * f[g.nodes[k]];
    s.grad += f[g.nodes[k]] * g.grad[k];
  }
  return s;
}

// Recovery gap of one field at a point: patchwise-quadratic reconstruction
// minus the P1 interpolant.
struct GapSample {
  double value = 0.0;
  Eigen::Vector2d grad = Eigen::Vector2d::Zero();
};

GapSample sample_gap(const RecoveredField& rec, const P1Sample& p1, const Eigen::Vector2d& p) {
  GapSample g;
  g.value = rec.value(p) - p1.value;
  g.grad = rec.gradient(p) - p1.grad;
  return g;
}

} // namespace

double estimate_error(const PdeProblem& problem, const StationaryPoint& point,
                      const DualPoint& dual, Quantity which) {
  const Mesh& mesh = *problem.mesh;
  const double kappa = problem.kappa;
  const double alpha = point.alpha_or_rho;
  const TriangleRule& rule = degree5_rule();

  const Eigen::VectorXd& u = point.u_tilde.values;
  const Eigen::VectorXd& v = point.v.values;
  const Eigen::VectorXd& lm = point.lambda.values;
  const Eigen::VectorXd& mu = point.mu_tilde.values;
  const Eigen::VectorXd& s = point.s.values;
  const Eigen::VectorXd& sp = point.s_prev.values;
  const Eigen::VectorXd& y = point.data.values;
  const Eigen::VectorXd& cc = problem.control_mask;
  const Eigen::VectorXd& co = problem.observation_mask;

  double i1 = 0.0;
  if (which == Quantity::misfit) {
    const Eigen::VectorXd e = co.cwiseProduct(u - y);
    i1 = std::sqrt(e.dot(problem.fem.mass * e));
    if (i1 == 0.0) return 0.0;
  }

  const RecoveredField rec_u = quadratic_recovery(point.u_tilde);
  const RecoveredField rec_v = quadratic_recovery(point.v);
  const RecoveredField rec_lm = quadratic_recovery(point.lambda);
  const RecoveredField rec_mu = quadratic_recovery(point.mu_tilde);
  const RecoveredField rec_s = quadratic_recovery(point.s);
  const RecoveredField rec_sb = quadratic_recovery(dual.s_bar);
  const RecoveredField rec_vb = quadratic_recovery(dual.v_bar);
  const RecoveredField rec_ub = quadratic_recovery(dual.u_bar);
  const RecoveredField rec_lb = quadratic_recovery(dual.lambda_bar);
  const RecoveredField rec_mb = quadratic_recovery(dual.mu_bar);

  double acc = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const TriGeometry geo = tri_geometry(mesh, t);
    double local = 0.0;
    for (std::size_t qp = 0; qp < rule.barycentric.size(); ++qp) {
      const auto& bc = rule.barycentric[qp];
      const Eigen::Vector2d p =
          bc[0] * geo.corners[0] + bc[1] * geo.corners[1] + bc[2] * geo.corners[2];

      const P1Sample pu = sample_p1(geo, u, bc);
      const P1Sample pv = sample_p1(geo, v, bc);
      const P1Sample pl = sample_p1(geo, lm, bc);
      const P1Sample pm = sample_p1(geo, mu, bc);
      const P1Sample ps = sample_p1(geo, s, bc);
      const P1Sample psp = sample_p1(geo, sp, bc);
      const P1Sample py = sample_p1(geo, y, bc);
      const P1Sample pcc = sample_p1(geo, cc, bc);
      const P1Sample pco = sample_p1(geo, co, bc);

      const P1Sample dsb = sample_p1(geo, dual.s_bar.values, bc);
      const P1Sample dvb = sample_p1(geo, dual.v_bar.values, bc);
      const P1Sample dub = sample_p1(geo, dual.u_bar.values, bc);
      const P1Sample dlb = sample_p1(geo, dual.lambda_bar.values, bc);
      const P1Sample dmb = sample_p1(geo, dual.mu_bar.values, bc);

      const GapSample gu = sample_gap(rec_u, pu, p);
      const GapSample gv = sample_gap(rec_v, pv, p);
      const GapSample gl = sample_gap(rec_lm, pl, p);
      const GapSample gm = sample_gap(rec_mu, pm, p);
      const GapSample gs = sample_gap(rec_s, ps, p);
      const GapSample hs = sample_gap(rec_sb, dsb, p);
      const GapSample hv = sample_gap(rec_vb, dvb, p);
      const GapSample hu = sample_gap(rec_ub, dub, p);
      const GapSample hl = sample_gap(rec_lb, dlb, p);
      const GapSample hm = sample_gap(rec_mb, dmb, p);

      const double u2 = pu.value * pu.value;

      // Derivative of the quantity against the primal gaps plus the
      // second-derivative form against (primal gaps, dual weights).
      double rho_star = 0.0;
      if (which == Quantity::misfit)
        rho_star += pco.value * (pu.value - py.value) * gu.value / i1;
      rho_star += 2.0 * pco.value * (gv.value + gu.value) * (dvb.value + dub.value);
      rho_star += 6.0 * kappa * pu.value * pl.value *
                  (gv.value * dub.value + gu.value * dvb.value);
      rho_star += 6.0 * kappa * (pv.value * pl.value + pu.value * pm.value) * gu.value *
                  dub.value;
      rho_star +=
          6.0 * kappa * pu.value * pv.value * (gu.value * dlb.value + gl.value * dub.value);
      rho_star += gv.grad.dot(dlb.grad) + 3.0 * kappa * u2 * gv.value * dlb.value;
      rho_star += gl.grad.dot(dvb.grad) + 3.0 * kappa * u2 * gl.value * dvb.value;
      rho_star += gu.grad.dot(dmb.grad) + 3.0 * kappa * u2 * gu.value * dmb.value;
      rho_star += gm.grad.dot(dub.grad) + 3.0 * kappa * u2 * gm.value * dub.value;
      rho_star -= pcc.value * (gs.value * dlb.value + gl.value * dsb.value);

      // First-derivative (residual) form of the coupled optimality system
      // against the dual gaps.
      const double res_obs = pu.value + pv.value - py.value;
      double rho_primal = 0.0;
      rho_primal += pv.grad.dot(hl.grad) + 3.0 * kappa * u2 * pv.value * hl.value -
                    pcc.value * (ps.value - psp.value) * hl.value;
      rho_primal += pu.grad.dot(hm.grad) + kappa * u2 * pu.value * hm.value -
                    pcc.value * psp.value * hm.value;
      rho_primal += 2.0 * pco.value * res_obs * hv.value + pl.grad.dot(hv.grad) +
                    3.0 * kappa * u2 * pl.value * hv.value;
      rho_primal += 2.0 * pco.value * res_obs * hu.value +
                    6.0 * kappa * pu.value * pv.value * pl.value * hu.value +
                    pm.grad.dot(hu.grad) + 3.0 * kappa * u2 * pm.value * hu.value;
      double s_residual = -pcc.value * pl.value;
      if (point.variant == Variant::tikhonov)
        s_residual += alpha * sign_of(ps.value) * pcc.value;
      rho_primal += s_residual * hs.value;

      local += rule.weights[qp] * (rho_star + rho_primal);
    }
    acc += geo.area * local;
  }
  return 0.5 * acc;
}

EstimatorSet compute_estimators(const PdeProblem& problem, const StationaryPoint& point,
                                const NewtonOptions& newton, const InnerOptions& inner) {
  const StationarityReport rep = verify_stationary(problem, point, newton, inner);
  if (!rep.pass)
    throw std::runtime_error("compute_estimators: the point does not satisfy the "
                             "stationarity system to tolerance");
  EstimatorSet est;
  const DualPoint d1 = solve_dual_weights(problem, point, Quantity::misfit);
  est.eps1 = estimate_error(problem, point, d1, Quantity::misfit);
  const DualPoint d3 = solve_dual_weights(problem, point, Quantity::regularizer);
  est.eps3 = estimate_error(problem, point, d3, Quantity::regularizer);
  est.xi = std::abs(est.eps1);
  est.eta = est.xi;
  est.zeta = std::abs(est.eps3);
  est.remainder_neglected = true;
  return est;
}

RefineDecision refinement_controller(const DwrBudget& budget, const EstimatorSet& est,
                                     double residual, double delta, Variant variant) {
  bool ok = est.eta <= budget.c_eta * residual + budget.tau_bar * delta;
  ok = ok && est.xi <= budget.tau_hat * delta;
  if (variant == Variant::tikhonov) ok = ok && est.zeta <= budget.zeta_bar;
  return ok ? RefineDecision::accept : RefineDecision::refine;
}

AdaptiveStepResult run_adaptive_step(const PdeProblem& problem, const IrgnmConfig& config,
                                     const DwrBudget& budget, const QuadraticStep& step,
                                     int max_level) {
  // The estimators are only meaningful at tightly converged points.
  NewtonOptions newton = config.newton;
  newton.reduction = std::min(newton.reduction, 1e-11);
  const InnerOptions& inner = config.inner;

  AdaptiveStepResult out;
  PdeProblem current = problem;
  Field s_prev = step.s_cur;
  Field y = step.data;
  Field u_warm = step.u_lin;

  for (int lvl = 0;; ++lvl) {
    const Field u_lin = solve_forward(current, s_prev, &u_warm, newton);
    QuadraticStep st{u_lin, s_prev, y, config.p};
    const double weight = (config.variant == Variant::tikhonov) ? config.alpha0 : config.rho;
    const StepResult sr = (config.variant == Variant::tikhonov)
                              ? solve_tikhonov_step(current, st, weight, inner)
                              : solve_ivanov_step(current, st, config.rho, inner);
    const StationaryPoint sp = make_stationary_point(current, config.variant, weight, st, sr);
    const EstimatorSet est = compute_estimators(current, sp, newton, inner);

    Field predicted = make_field(current.mesh, u_lin.values + sr.v.values);
    const Field u_next = solve_forward(current, sr.s_next, &predicted, newton);
    const double res = residual_norm(current, u_next, y);
    const RefineDecision dec =
        refinement_controller(budget, est, res, config.delta, config.variant);

    AdaptiveLevel level;
    level.level = lvl;
    level.n = current.mesh->n;
    level.estimators = est;
    level.residual = res;
    level.decision = dec;
    out.levels.push_back(level);

    if (dec == RefineDecision::accept || lvl >= max_level) {
      out.problem = current;
      out.step = st;
      out.result = sr;
      out.budget_met = dec == RefineDecision::accept;
      return out;
    }

    auto fine = refine(*current.mesh);
    s_prev = prolong(s_prev, fine);
    y = prolong(y, fine);
    u_warm = prolong(u_lin, fine);
    current = make_problem(fine, current.kappa);
  }
}

} // namespace irgnm
