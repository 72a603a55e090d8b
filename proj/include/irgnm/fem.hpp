#pragma once

#include "irgnm/mesh.hpp"

#include <Eigen/Sparse>

#include <array>
#include <functional>
#include <vector>

namespace irgnm {

// Assembled symmetric operator plus the list of Dirichlet-constrained dofs.
// apply_constraints() replaces constrained rows and columns by identity rows
// (homogeneous boundary conditions; right-hand sides must be zeroed there).
struct SparseSystem {
  Eigen::SparseMatrix<double> matrix;
  std::vector<int> constrained_dofs;
  bool constraints_applied = false;

  void apply_constraints();
};

// P1 stiffness of the Laplacian, unconstrained entries; the boundary dofs are
// recorded as constrained_dofs but not yet eliminated.
SparseSystem assemble_stiffness(const Mesh& mesh);

// Consistent P1 mass matrix (exact for products of P1 functions).
Eigen::SparseMatrix<double> assemble_mass(const Mesh& mesh);

// Vertex-quadrature (lumped) weights w_i = |supp(phi_i)| / 3.
Eigen::VectorXd lumped_weights(const Mesh& mesh);

// Weighted mass with nodal quadrature: diag(w_i * weight_i). Nodal quadrature
// keeps pointwise nonlinearities diagonal in the assembled operators.
SparseSystem assemble_weighted_mass(const Mesh& mesh, const Eigen::VectorXd& weight);

// L2(Omega) inner product of two P1 fields via the consistent mass matrix;
// the induced norm is the one used for residuals and the discrepancy test.
double l2_inner(const Field& a, const Field& b);
double l2_norm(const Field& a);

// Nodal-quadrature L1 norm: sum_i w_i |v_i|.
double l1_norm(const Field& a);
double linf_norm(const Field& a);

// Dual norm sqrt(sum r_i^2 / w_i) of an assembled residual vector over the
// unconstrained dofs; used to measure nonlinear solver residuals.
double dual_norm(const Mesh& mesh, const Eigen::VectorXd& residual,
                 const std::vector<int>& constrained);

// Degree-5 quadrature on a triangle given by barycentric points and weights
// summing to one (multiply by the triangle area).
struct TriangleRule {
  std::vector<std::array<double, 3>> barycentric;
  std::vector<double> weights;
};
const TriangleRule& degree5_rule();

// Quadrature of an arbitrary integrand over the whole mesh with the degree-5
// rule; f receives physical coordinates.
double integrate(const Mesh& mesh, const std::function<double(const Eigen::Vector2d&)>& f);

// Per-mesh assembled operators shared by the solvers.
struct FemOperators {
  std::shared_ptr<const Mesh> mesh;
  Eigen::SparseMatrix<double> stiffness; // unconstrained
  Eigen::SparseMatrix<double> mass;      // consistent, unconstrained
  Eigen::VectorXd lumped;
  std::vector<int> boundary;
  Eigen::VectorXd interior; // 1.0 on interior nodes, 0.0 on boundary nodes
};

FemOperators make_operators(std::shared_ptr<const Mesh> mesh);

// Copy of a symmetric operator with Dirichlet rows/columns replaced by
// identity, plus an optional extra diagonal added on interior dofs.
Eigen::SparseMatrix<double> constrained_operator(const FemOperators& fem,
                                                const Eigen::VectorXd* extra_diagonal);

} // namespace irgnm
