#include "irgnm/field_io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace irgnm {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary); // fixed newlines on every platform
  if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
  return out;
}

const char* status_name(RunStatus s) {
  switch (s) {
    case RunStatus::converged: return "converged";
    case RunStatus::max_outer_reached: return "max_outer_reached";
    case RunStatus::forward_failed: return "forward_failed";
    case RunStatus::inner_failed: return "inner_failed";
  }
  return "unknown";
}

} // namespace

void write_field_csv(const std::string& path, const Field& field) {
  std::ofstream out = open_out(path);
  const Mesh& mesh = *field.mesh;
  out << "# N=" << mesh.n << " level=" << mesh.level << "\n";
  out << "x,y,value\n";
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const Eigen::Vector2d p = mesh.node(i);
    out << format_double(p.x()) << ',' << format_double(p.y()) << ','
        << format_double(field.values[i]) << "\n";
  }
}

void write_trace_csv(const std::string& path, const std::vector<IterationRecord>& records) {
  std::ofstream out = open_out(path);
  out << "k,residual,regularizer,alpha_or_rho,eta,xi,zeta,inner_iters\n";
  for (const auto& r : records) {
    out << r.k << ',' << format_double(r.residual) << ','
        << format_double(r.regularizer_value) << ',' << format_double(r.alpha_or_rho) << ','
        << format_double(r.eta) << ',' << format_double(r.xi) << ','
        << format_double(r.zeta) << ',' << r.inner_iterations << "\n";
  }
}

void write_table_csv(const std::string& path, const std::vector<LevelReport>& table) {
  std::ofstream out = open_out(path);
  out << "delta,err_spot1,err_spot2,err_spot3,err_L1,k_star_mean\n";
  for (const auto& row : table) {
    out << format_double(row.delta) << ',' << format_double(row.err_spot1) << ','
        << format_double(row.err_spot2) << ',' << format_double(row.err_spot3) << ','
        << format_double(row.err_l1) << ',' << format_double(row.k_star_mean) << "\n";
  }
}

void write_runs_csv(const std::string& path, const std::vector<RunOutcome>& runs) {
  std::ofstream out = open_out(path);
  out << "delta,run,err_spot1,err_spot2,err_spot3,err_L1,k_star,status\n";
  for (const auto& r : runs) {
    out << format_double(r.delta) << ',' << r.run_index << ','
        << format_double(r.err_spot1) << ',' << format_double(r.err_spot2) << ','
        << format_double(r.err_spot3) << ',' << format_double(r.err_l1) << ','
        << r.k_star << ',' << status_name(r.status) << "\n";
  }
}

} // namespace irgnm
