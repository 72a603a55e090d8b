#pragma once

#include <Eigen/Dense>

#include <array>
#include <memory>
#include <vector>

namespace irgnm {

// Uniform triangulation of the square (-1,1)^2: n x n cells, each split into
// two triangles along the lower-left to upper-right diagonal. Node (ix, iy)
// sits at (-1 + 2 ix / n, -1 + 2 iy / n) and has index iy * (n+1) + ix.
// Meshes are immutable; refinement produces a new nested mesh with 2n cells
// per side whose even-indexed nodes coincide with the coarse nodes.
struct Mesh {
  int n = 0;     // cells per side
  int level = 0; // refinement level tag (synthesis grids carry level+1)

  int nodes_per_side() const { return n + 1; }
  int num_nodes() const { return (n + 1) * (n + 1); }
  int num_triangles() const { return 2 * n * n; }
  double h() const { return 2.0 / n; }
  double triangle_area() const { return h() * h() / 2.0; }

  int node_index(int ix, int iy) const { return iy * (n + 1) + ix; }
  Eigen::Vector2d node(int i) const {
    const int ix = i % (n + 1), iy = i / (n + 1);
    return {-1.0 + 2.0 * ix / n, -1.0 + 2.0 * iy / n};
  }
  bool on_boundary(int i) const {
    const int ix = i % (n + 1), iy = i / (n + 1);
    return ix == 0 || ix == n || iy == 0 || iy == n;
  }

  // Triangle t belongs to cell t/2; the even half is (n00, n10, n11), the odd
  // half (n00, n11, n01). Both are counter-clockwise.
  std::array<int, 3> triangle(int t) const {
    const int cell = t / 2, cx = cell % n, cy = cell / n;
    const int n00 = node_index(cx, cy), n10 = node_index(cx + 1, cy);
    const int n11 = node_index(cx + 1, cy + 1), n01 = node_index(cx, cy + 1);
    return (t % 2 == 0) ? std::array<int, 3>{n00, n10, n11}
                        : std::array<int, 3>{n00, n11, n01};
  }

  std::vector<int> boundary_nodes() const;
};

std::shared_ptr<const Mesh> build_mesh(int n, int level = 0);
std::shared_ptr<const Mesh> refine(const Mesh& coarse);

// Piecewise-linear finite element function: one value per mesh node.
struct Field {
  std::shared_ptr<const Mesh> mesh;
  Eigen::VectorXd values;
};

Field make_field(std::shared_ptr<const Mesh> mesh, Eigen::VectorXd values);
Field zero_field(std::shared_ptr<const Mesh> mesh);
bool same_mesh(const Field& a, const Field& b);

// Point evaluation of the P1 interpolant (and its piecewise-constant
// gradient). Points outside the closed square are an error.
double eval_p1(const Field& f, const Eigen::Vector2d& p);
Eigen::Vector2d grad_p1(const Field& f, const Eigen::Vector2d& p);

// Exact P1 interpolation onto the next nested mesh (fine.n == 2 * coarse.n).
Field prolong(const Field& coarse, std::shared_ptr<const Mesh> fine);
// Nodal injection onto the coarser nested mesh (fine.n == 2 * coarse.n).
Field restrict_project(const Field& fine, std::shared_ptr<const Mesh> coarse);

// Patchwise tensor-quadratic reconstruction on 2x2 cell macro-patches
// (requires even n). The reconstruction interpolates the nine nodal values of
// each patch and reproduces quadratic polynomials exactly; it is generally
// discontinuous across patch boundaries.
class RecoveredField {
public:
  RecoveredField(std::shared_ptr<const Mesh> mesh, Eigen::VectorXd values);
  double value(const Eigen::Vector2d& p) const;
  Eigen::Vector2d gradient(const Eigen::Vector2d& p) const;
  const Mesh& mesh() const { return *mesh_; }

private:
  std::shared_ptr<const Mesh> mesh_;
  Eigen::VectorXd values_;
};

RecoveredField quadratic_recovery(const Field& f);

} // namespace irgnm
