#pragma once

#include "irgnm/harness.hpp"

#include <string>
#include <vector>

namespace irgnm {

// All writers emit fixed formats so identical inputs give byte-identical
// files. Numeric cells use shortest-roundtrip formatting ("%.17g").

// Node table "x,y,value" preceded by the sidecar line "# N=<n> level=<l>";
// rows follow the node index order.
void write_field_csv(const std::string& path, const Field& field);

// Iteration trace "k,residual,regularizer,alpha_or_rho,eta,xi,zeta,inner_iters".
void write_trace_csv(const std::string& path, const std::vector<IterationRecord>& records);

// Sweep summary "delta,err_spot1,err_spot2,err_spot3,err_L1,k_star_mean".
void write_table_csv(const std::string& path, const std::vector<LevelReport>& table);

// Per-run rows "delta,run,err_spot1,err_spot2,err_spot3,err_L1,k_star,status".
void write_runs_csv(const std::string& path, const std::vector<RunOutcome>& runs);

std::string format_double(double v);

} // namespace irgnm
