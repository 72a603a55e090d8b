#include "irgnm/fem.hpp"

#include <cmath>
#include <stdexcept>

namespace irgnm {

void SparseSystem::apply_constraints() {
  if (constraints_applied) return;
  std::vector<char> fixed(matrix.rows(), 0);
  for (int i : constrained_dofs) fixed[i] = 1;
  for (int k = 0; k < matrix.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(matrix, k); it; ++it) {
      if (fixed[it.row()] || fixed[it.col()])
        it.valueRef() = (it.row() == it.col()) ? 1.0 : 0.0;
    }
  }
  for (int i : constrained_dofs) matrix.coeffRef(i, i) = 1.0;
  matrix.prune(0.0);
  matrix.makeCompressed();
  constraints_applied = true;
}

namespace {

// Element geometry shared by the assemblers: vertex coordinates and the
// gradient factors b_i = y_j - y_k, c_i = x_k - x_j (cyclic).
struct ElementGeometry {
  std::array<int, 3> nodes;
  double b[3], c[3];
  double area;
};

ElementGeometry element_geometry(const Mesh& mesh, int t) {
  ElementGeometry g;
  g.nodes = mesh.triangle(t);
  Eigen::Vector2d p[3];
  for (int i = 0; i < 3; ++i) p[i] = mesh.node(g.nodes[i]);
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    g.b[i] = p[j].y() - p[k].y();
    g.c[i] = p[k].x() - p[j].x();
  }
  g.area = 0.5 * std::abs(g.b[0] * g.c[1] - g.b[1] * g.c[0]);
  return g;
}

} // namespace

SparseSystem assemble_stiffness(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(9 * mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const ElementGeometry g = element_geometry(mesh, t);
    const double f = 1.0 / (4.0 * g.area);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        trips.emplace_back(g.nodes[i], g.nodes[j], f * (g.b[i] * g.b[j] + g.c[i] * g.c[j]));
  }
  SparseSystem sys;
  sys.matrix.resize(mesh.num_nodes(), mesh.num_nodes());
  sys.matrix.setFromTriplets(trips.begin(), trips.end());
  sys.matrix.makeCompressed();
  sys.constrained_dofs = mesh.boundary_nodes();
  return sys;
}

Eigen::SparseMatrix<double> assemble_mass(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(9 * mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const ElementGeometry g = element_geometry(mesh, t);
    const double f = g.area / 12.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        trips.emplace_back(g.nodes[i], g.nodes[j], f * (i == j ? 2.0 : 1.0));
  }
  Eigen::SparseMatrix<double> m(mesh.num_nodes(), mesh.num_nodes());
  m.setFromTriplets(trips.begin(), trips.end());
  m.makeCompressed();
  return m;
}

Eigen::VectorXd lumped_weights(const Mesh& mesh) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(mesh.num_nodes());
  const double a3 = mesh.triangle_area() / 3.0;
  for (int t = 0; t < mesh.num_triangles(); ++t)
    for (int i : mesh.triangle(t)) w[i] += a3;
  return w;
}

SparseSystem assemble_weighted_mass(const Mesh& mesh, const Eigen::VectorXd& weight) {
  if (weight.size() != mesh.num_nodes())
    throw std::invalid_argument("assemble_weighted_mass: weight size mismatch");
  const Eigen::VectorXd w = lumped_weights(mesh);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i)
    trips.emplace_back(i, i, w[i] * weight[i]);
  SparseSystem sys;
  sys.matrix.resize(mesh.num_nodes(), mesh.num_nodes());
  sys.matrix.setFromTriplets(trips.begin(), trips.end());
  sys.matrix.makeCompressed();
  return sys;
}

double l2_inner(const Field& a, const Field& b) {
  if (!same_mesh(a, b)) throw std::invalid_argument("l2_inner: mesh mismatch");
  const Eigen::SparseMatrix<double> m = assemble_mass(*a.mesh);
  return a.values.dot(m * b.values);
}

double l2_norm(const Field& a) { return std::sqrt(std::max(0.0, l2_inner(a, a))); }

double l1_norm(const Field& a) {
  const Eigen::VectorXd w = lumped_weights(*a.mesh);
  return w.dot(a.values.cwiseAbs());
}

double linf_norm(const Field& a) {
  return a.values.size() ? a.values.cwiseAbs().maxCoeff() : 0.0;
}

double dual_norm(const Mesh& mesh, const Eigen::VectorXd& residual,
                 const std::vector<int>& constrained) {
  const Eigen::VectorXd w = lumped_weights(mesh);
  std::vector<char> fixed(mesh.num_nodes(), 0);
  for (int i : constrained) fixed[i] = 1;
  double acc = 0.0;
  for (int i = 0; i < residual.size(); ++i)
    if (!fixed[i]) acc += residual[i] * residual[i] / w[i];
  return std::sqrt(acc);
}

const TriangleRule& degree5_rule() {
  static const TriangleRule rule = [] {
    TriangleRule r;
    const double a1 = 0.059715871789770, b1 = 0.470142064105115;
    const double a2 = 0.797426985353087, b2 = 0.101286507323456;
    r.barycentric = {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0},
                     {a1, b1, b1},
                     {b1, a1, b1},
                     {b1, b1, a1},
                     {a2, b2, b2},
                     {b2, a2, b2},
                     {b2, b2, a2}};
    const double w1 = 0.132394152788506, w2 = 0.125939180544827;
    r.weights = {0.225, w1, w1, w1, w2, w2, w2};
    return r;
  }();
  return rule;
}

double integrate(const Mesh& mesh, const std::function<double(const Eigen::Vector2d&)>& f) {
  const TriangleRule& rule = degree5_rule();
  double acc = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto nodes = mesh.triangle(t);
    Eigen::Vector2d p[3];
    for (int i = 0; i < 3; ++i) p[i] = mesh.node(nodes[i]);
    const double area = mesh.triangle_area();
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto& bc = rule.barycentric[q];
      const Eigen::Vector2d x = bc[0] * p[0] + bc[1] * p[1] + bc[2] * p[2];
      acc += area * rule.weights[q] * f(x);
    }
  }
  return acc;
}

FemOperators make_operators(std::shared_ptr<const Mesh> mesh) {
  FemOperators fem;
  fem.mesh = mesh;
  SparseSystem stiff = assemble_stiffness(*mesh);
  fem.stiffness = std::move(stiff.matrix);
  fem.boundary = std::move(stiff.constrained_dofs);
  fem.mass = assemble_mass(*mesh);
  fem.lumped = lumped_weights(*mesh);
  fem.interior = Eigen::VectorXd::Ones(mesh->num_nodes());
  for (int i : fem.boundary) fem.interior[i] = 0.0;
  return fem;
}

Eigen::SparseMatrix<double> constrained_operator(const FemOperators& fem,
                                                const Eigen::VectorXd* extra_diagonal) {
  SparseSystem sys;
  sys.matrix = fem.stiffness;
  if (extra_diagonal) {
    Eigen::SparseMatrix<double> diag(fem.mesh->num_nodes(), fem.mesh->num_nodes());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(fem.mesh->num_nodes());
    for (int i = 0; i < fem.mesh->num_nodes(); ++i)
      if (fem.interior[i] > 0.0) trips.emplace_back(i, i, (*extra_diagonal)[i]);
    diag.setFromTriplets(trips.begin(), trips.end());
    sys.matrix += diag;
  }
  sys.constrained_dofs = fem.boundary;
  sys.apply_constraints();
  return sys.matrix;
}

} // namespace irgnm
