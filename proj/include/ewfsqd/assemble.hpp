#pragma once

// Reassembly of per-cluster density matrices into global observables and the
// conformer energy report.

#include <Eigen/Dense>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ewfsqd/cisolve.hpp"
#include "ewfsqd/hamio.hpp"
#include "ewfsqd/sqdengine.hpp"

namespace ewfsqd {

inline constexpr double kKcalPerHartree = 627.5094740631;

struct ClusterResult {
  std::string id;
  SolverKind solver = SolverKind::Fci;
  double energy = 0.0;
  Rdm1 one;
  Rdm2 two;
  Eigen::MatrixXd columns;    // local basis x cluster orbitals
  Eigen::MatrixXd projector;  // fragment projector in cluster orbitals
  std::optional<SubspaceStats> stats;
};

/// Fragment projector C^T Pi_F C for the given cluster columns.
Eigen::MatrixXd fragment_projector(const Eigen::MatrixXd& columns,
                                   const std::vector<int>& fragment);

struct ProjectedRdms {
  Eigen::MatrixXd one;  // global basis, 1/2 (P g + g P) pushed through C
  Rdm2 two;             // cluster basis, first index pair projected and symmetrized
};

ProjectedRdms project_cluster_rdms(const ClusterResult& r);

/// Gamma is kept per cluster block, never as a dense N^4 tensor.
struct GlobalRdms {
  Eigen::MatrixXd one;
  struct Block {
    std::string id;
    Eigen::MatrixXd columns;
    Rdm2 two;
  };
  std::vector<Block> two;

  double trace() const { return one.trace(); }
};

struct ClusterContribution {
  std::string id;
  SolverKind solver = SolverKind::Fci;
  int n_mo = 0;
  double cluster_energy = 0.0;
  double fragment_energy = 0.0;
  double electrons = 0.0;  // tr(P gamma)
  std::optional<SubspaceStats> stats;
};

struct Collation {
  double e_total = 0.0;
  GlobalRdms rdms;
  std::vector<ClusterContribution> clusters;
};

/// `hams[k]` is the cluster Hamiltonian of `manifest.clusters[k]`.
/// Results may come in any order; the fold follows the manifest.
Collation collate_global_energy(const RunManifest& manifest,
                                const std::vector<ClusterHamiltonian>& hams,
                                const std::vector<ClusterResult>& results);

struct ConformerEntry {
  std::string label;
  double energy = 0.0;
  std::vector<ClusterContribution> clusters;
};

struct EnergyReport {
  std::string method = "EWF-(FCI,SQD)";
  ConformerEntry a, b;
  double delta_e_kcal = 0.0;  // (E_a - E_b) in kcal/mol
  std::map<std::string, int> solver_census;
  std::string diagnostics_digest;
};

EnergyReport relative_energy_report(double e_a, double e_b, const std::string& label_a,
                                    const std::string& label_b);

/// Table layout: method, E_a, E_b, Delta E; then per-cluster rows.
void write_report_table(const EnergyReport& report, std::ostream& out);
std::string report_to_json(const EnergyReport& report);
EnergyReport report_from_json(const std::string& text);

}  // namespace ewfsqd
