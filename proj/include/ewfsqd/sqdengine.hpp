#pragma once

// Sample-based subspace diagonalization: configuration recovery over measured
// bitstrings, batch solves, ext-SQD augmentation and solver dispatch.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ewfsqd/cisolve.hpp"
#include "ewfsqd/hamio.hpp"

namespace ewfsqd {

struct RecoveryConfig {
  int samples_per_batch = 3000;
  int n_batches = 10;
  double e_tol = 1e-8;
  double occ_tol = 1e-5;
  int max_iters = 5;
  double carryover_threshold = 1e-4;
  double ext_dominance_threshold = 1e-5;
  std::uint64_t seed = 0;
  /// Carryover accumulates across iterations instead of being re-selected.
  bool accumulate_carryover = false;
  /// When false, out-of-sector shots are discarded instead of repaired.
  bool recover = true;
  std::size_t max_subspace = 2000000;
  int threads = 1;
  SolverOptions solver;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Repairs every shot into the (n_alpha, n_beta) sector. Each copy of a
/// repeated shot is repaired independently; total shot count is preserved.
SampleSet postselect_and_recover(const SampleSet& raw, const OccupationVector& n,
                                 int n_alpha, int n_beta, std::uint64_t seed);

/// In-sector shots only.
SampleSet postselect(const SampleSet& raw, int n_alpha, int n_beta);

struct BatchResult {
  int batch = 0;
  double energy = 0.0;
  CiVector state;
};

struct IterationRecord {
  int iteration = 0;
  std::vector<double> energies;
  std::vector<std::size_t> dims;
  Eigen::VectorXd occupations;
  double e_best = 0.0;
  double delta_e = 0.0;
  double delta_n = 0.0;
  std::size_t carryover = 0;
  std::uint64_t in_sector_shots = 0;
  std::uint64_t total_shots = 0;
  bool truncated = false;
};

struct RecoveryState {
  int iteration = 0;
  OccupationVector n;
  std::vector<Determinant> carryover;
  double e_best = 0.0;
  bool converged = false;
};

struct RecoveryResult {
  double e_best = 0.0;
  BatchResult best;
  RecoveryState state;
  std::vector<IterationRecord> trace;
  /// Batch solutions of the final iteration.
  std::vector<BatchResult> last_batches;
};

RecoveryResult run_configuration_recovery(const ClusterHamiltonian& ham,
                                          const SampleSet& raw,
                                          const RecoveryConfig& cfg);

/// One JSON object per iteration.
void write_diagnostics(const std::vector<IterationRecord>& trace, std::ostream& out);

struct ExtStats {
  std::size_t selected = 0;
  std::size_t dim = 0;
};

struct ExtResult {
  double energy = 0.0;
  CiVector state;
  Rdms rdms;
  ExtStats stats;
};

/// Dominant determinants of `best` plus all their single excitations.
ExtResult extend_subspace(const ClusterHamiltonian& ham, const BatchResult& best,
                          const RecoveryConfig& cfg);

SolverKind dispatch_solver(int n_mo, int threshold = 15);

struct SubspaceStats {
  std::string cluster;
  int norb = 0;
  int n_alpha = 0;
  int n_beta = 0;
  std::uint64_t full_dim = 0;
  std::uint64_t sqd_dim = 0;  // largest batch subspace
  std::uint64_t ext_dim = 0;

  double sqd_ratio() const { return full_dim ? double(sqd_dim) / double(full_dim) : 0.0; }
  double ext_ratio() const { return full_dim ? double(ext_dim) / double(full_dim) : 0.0; }
};

SubspaceStats subspace_stats(const std::string& cluster, const ClusterHamiltonian& ham,
                             const RecoveryResult& rec, const ExtResult& ext);

}  // namespace ewfsqd
