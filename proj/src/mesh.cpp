#include "irgnm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace irgnm {

std::vector<int> Mesh::boundary_nodes() const {
  std::vector<int> out;
  out.reserve(4 * n);
  for (int i = 0; i < num_nodes(); ++i)
    if (on_boundary(i)) out.push_back(i);
  return out;
}

std::shared_ptr<const Mesh> build_mesh(int n, int level) {
  if (n < 1) throw std::invalid_argument("build_mesh: n must be positive");
  auto mesh = std::make_shared<Mesh>();
  mesh->n = n;
  mesh->level = level;
  return mesh;
}

std::shared_ptr<const Mesh> refine(const Mesh& coarse) {
  return build_mesh(2 * coarse.n, coarse.level + 1);
}

Field make_field(std::shared_ptr<const Mesh> mesh, Eigen::VectorXd values) {
  if (values.size() != mesh->num_nodes())
    throw std::invalid_argument("make_field: value count does not match the mesh");
  return Field{std::move(mesh), std::move(values)};
}

Field zero_field(std::shared_ptr<const Mesh> mesh) {
  const int n = mesh->num_nodes();
  return Field{std::move(mesh), Eigen::VectorXd::Zero(n)};
}

bool same_mesh(const Field& a, const Field& b) {
  return a.mesh && b.mesh && a.mesh->n == b.mesh->n && a.mesh->level == b.mesh->level;
}

namespace {

struct CellLocation {
  int cx, cy;
  double xi, eta; // local coordinates in [0,1]^2 relative to the cell corner
};

CellLocation locate(const Mesh& mesh, const Eigen::Vector2d& p) {
  if (p.x() < -1.0 - 1e-12 || p.x() > 1.0 + 1e-12 || p.y() < -1.0 - 1e-12 ||
      p.y() > 1.0 + 1e-12)
    throw std::invalid_argument("point outside the domain");
  const double h = mesh.h();
  int cx = static_cast<int>(std::floor((p.x() + 1.0) / h));
  int cy = static_cast<int>(std::floor((p.y() + 1.0) / h));
  cx = std::clamp(cx, 0, mesh.n - 1);
  cy = std::clamp(cy, 0, mesh.n - 1);
  const double x0 = -1.0 + cx * h, y0 = -1.0 + cy * h;
  return {cx, cy, (p.x() - x0) / h, (p.y() - y0) / h};
}

} // namespace

double eval_p1(const Field& f, const Eigen::Vector2d& p) {
  const Mesh& m = *f.mesh;
  const CellLocation c = locate(m, p);
  const double v00 = f.values[m.node_index(c.cx, c.cy)];
  const double v10 = f.values[m.node_index(c.cx + 1, c.cy)];
  const double v11 = f.values[m.node_index(c.cx + 1, c.cy + 1)];
  const double v01 = f.values[m.node_index(c.cx, c.cy + 1)];
  // The cell diagonal runs from the (0,0) to the (1,1) corner.
  if (c.xi >= c.eta) return v00 + (v10 - v00) * c.xi + (v11 - v10) * c.eta;
  return v00 + (v11 - v01) * c.xi + (v01 - v00) * c.eta;
}

Eigen::Vector2d grad_p1(const Field& f, const Eigen::Vector2d& p) {
  const Mesh& m = *f.mesh;
  const CellLocation c = locate(m, p);
  const double h = m.h();
  const double v00 = f.values[m.node_index(c.cx, c.cy)];
  const double v10 = f.values[m.node_index(c.cx + 1, c.cy)];
  const double v11 = f.values[m.node_index(c.cx + 1, c.cy + 1)];
  const double v01 = f.values[m.node_index(c.cx, c.cy + 1)];
  if (c.xi >= c.eta) return {(v10 - v00) / h, (v11 - v10) / h};
  return {(v11 - v01) / h, (v01 - v00) / h};
}

Field prolong(const Field& coarse, std::shared_ptr<const Mesh> fine) {
  const Mesh& mc = *coarse.mesh;
  if (fine->n != 2 * mc.n)
    throw std::invalid_argument("prolong: fine mesh is not the nested refinement");
  Eigen::VectorXd out(fine->num_nodes());
  const auto cv = [&](int ix, int iy) { return coarse.values[mc.node_index(ix, iy)]; };
  for (int jy = 0; jy <= fine->n; ++jy) {
    for (int jx = 0; jx <= fine->n; ++jx) {
      const int ix = jx / 2, iy = jy / 2;
      double v;
      if (jx % 2 == 0 && jy % 2 == 0) {
        v = cv(ix, iy);
      } else if (jy % 2 == 0) {
        v = 0.5 * (cv(ix, iy) + cv(ix + 1, iy));
      } else if (jx % 2 == 0) {
        v = 0.5 * (cv(ix, iy) + cv(ix, iy + 1));
      } else {
        // Cell midpoint: it lies on the coarse diagonal, so P1 interpolation
        // averages the diagonal's endpoints.
        v = 0.5 * (cv(ix, iy) + cv(ix + 1, iy + 1));
      }
      out[fine->node_index(jx, jy)] = v;
    }
  }
  return Field{std::move(fine), std::move(out)};
}

Field restrict_project(const Field& fine, std::shared_ptr<const Mesh> coarse) {
  const Mesh& mf = *fine.mesh;
  if (mf.n != 2 * coarse->n)
    throw std::invalid_argument("restrict_project: meshes are not nested");
  Eigen::VectorXd out(coarse->num_nodes());
  for (int iy = 0; iy <= coarse->n; ++iy)
    for (int ix = 0; ix <= coarse->n; ++ix)
      out[coarse->node_index(ix, iy)] = fine.values[mf.node_index(2 * ix, 2 * iy)];
  return Field{std::move(coarse), std::move(out)};
}

RecoveredField::RecoveredField(std::shared_ptr<const Mesh> mesh, Eigen::VectorXd values)
    : mesh_(std::move(mesh)), values_(std::move(values)) {
  if (mesh_->n % 2 != 0)
    throw std::invalid_argument("quadratic_recovery: mesh n must be even");
}

namespace {

// 1D quadratic Lagrange basis on the nodes {0, 1, 2} of a patch edge.
inline void lagrange3(double s, double* l, double* dl) {
  l[0] = 0.5 * (s - 1.0) * (s - 2.0);
  l[1] = s * (2.0 - s);
  l[2] = 0.5 * s * (s - 1.0);
  dl[0] = s - 1.5;
  dl[1] = 2.0 - 2.0 * s;
  dl[2] = s - 0.5;
}

} // namespace

double RecoveredField::value(const Eigen::Vector2d& p) const {
  const Mesh& m = *mesh_;
  const double h = m.h();
  int cx = std::clamp(static_cast<int>(std::floor((p.x() + 1.0) / h)), 0, m.n - 1);
  int cy = std::clamp(static_cast<int>(std::floor((p.y() + 1.0) / h)), 0, m.n - 1);
  const int px = cx / 2, py = cy / 2;
  const double sx = (p.x() + 1.0) / h - 2.0 * px;
  const double sy = (p.y() + 1.0) / h - 2.0 * py;
  double lx[3], dlx[3], ly[3], dly[3];
  lagrange3(sx, lx, dlx);
  lagrange3(sy, ly, dly);
  double v = 0.0;
  for (int b = 0; b < 3; ++b)
    for (int a = 0; a < 3; ++a)
      v += values_[m.node_index(2 * px + a, 2 * py + b)] * lx[a] * ly[b];
  return v;
}

Eigen::Vector2d RecoveredField::gradient(const Eigen::Vector2d& p) const {
  const Mesh& m = *mesh_;
  const double h = m.h();
  int cx = std::clamp(static_cast<int>(std::floor((p.x() + 1.0) / h)), 0, m.n - 1);
  int cy = std::clamp(static_cast<int>(std::floor((p.y() + 1.0) / h)), 0, m.n - 1);
  const int px = cx / 2, py = cy / 2;
  const double sx = (p.x() + 1.0) / h - 2.0 * px;
  const double sy = (p.y() + 1.0) / h - 2.0 * py;
  double lx[3], dlx[3], ly[3], dly[3];
  lagrange3(sx, lx, dlx);
  lagrange3(sy, ly, dly);
  double gx = 0.0, gy = 0.0;
  for (int b = 0; b < 3; ++b) {
    for (int a = 0; a < 3; ++a) {
      const double v = values_[m.node_index(2 * px + a, 2 * py + b)];
      gx += v * dlx[a] * ly[b];
      gy += v * lx[a] * dly[b];
    }
  }
  return {gx / h, gy / h};
}

RecoveredField quadratic_recovery(const Field& f) {
  return RecoveredField(f.mesh, f.values);
}

} // namespace irgnm
