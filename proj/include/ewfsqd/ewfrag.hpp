#pragma once

// Embedded wave function fragmentation: Lowdin-orthogonalized local basis,
// atomic fragments, DMET Schmidt baths, MP2 bath natural orbitals and
// per-cluster Hamiltonians with the frozen environment folded in.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ewfsqd/hamio.hpp"

namespace ewfsqd {

struct LocalBasis {
  Eigen::MatrixXd T;  // AO -> local, T^T S T = 1
  std::vector<int> atom;
};

LocalBasis orthogonalize_localize(const MeanFieldBundle& mf);

/// Mean-field data expressed in the local basis.
struct LocalIntegrals {
  int n = 0;
  int n_elec = 0;
  double e_nuc = 0.0;
  double e_hf = 0.0;
  Eigen::MatrixXd h, D, F;
  std::vector<double> eri;  // (pq|rs), n^4

  double eri_at(int p, int q, int r, int s) const noexcept {
    const std::size_t m = static_cast<std::size_t>(n);
    return eri[((static_cast<std::size_t>(p) * m + q) * m + r) * m + s];
  }
  /// J(D) - K(D)/2 for a density over the local basis.
  Eigen::MatrixXd mean_field_potential(const Eigen::MatrixXd& dens) const;
  /// tr(D h) + 1/2 tr(D V(D)) + e_nuc.
  double mean_field_energy(const Eigen::MatrixXd& dens) const;
};

LocalIntegrals local_integrals(const MeanFieldBundle& mf, const LocalBasis& basis);

struct FragmentSpec {
  std::vector<std::vector<int>> groups;
  std::vector<std::string> labels;

  /// One fragment per atom label.
  static FragmentSpec per_atom(const LocalBasis& basis);
  static FragmentSpec whole_system(int n);
  /// Disjoint groups covering [0, n).
  void validate(int n) const;
};

struct SchmidtResult {
  Eigen::MatrixXd bath;         // n x n_bath
  Eigen::VectorXd singular_values;
  Eigen::MatrixXd frozen_occ;   // environment orbitals with occupation ~2
  Eigen::MatrixXd frozen_virt;  // ~0
};

SchmidtResult schmidt_bath(const Eigen::MatrixXd& D_local, const std::vector<int>& fragment,
                           double svd_cutoff = 1e-8);

struct EwfCluster {
  std::string id;
  std::vector<int> fragment;
  /// Cluster orbitals over the local basis, occupied first, semicanonical.
  Eigen::MatrixXd columns;
  Eigen::MatrixXd frozen_occ, frozen_virt;
  /// Fragment projector in the cluster basis.
  Eigen::MatrixXd projector;
  Eigen::VectorXd eps;
  int n_occ = 0;
  int n_bath = 0;
  int n_bno_occ = 0;
  int n_bno_vir = 0;
  /// Natural occupations of every environment orbital, descending.
  Eigen::VectorXd occ_env_occupations, vir_env_occupations;

  int n_mo() const { return static_cast<int>(columns.cols()); }
};

/// DMET cluster plus MP2 bath natural orbitals selected with threshold eta.
/// eta <= 0 keeps every environment orbital.
EwfCluster bno_expand(const LocalIntegrals& li, const std::vector<int>& fragment,
                      const SchmidtResult& schmidt, double eta);

/// Cluster Hamiltonian with the frozen-occupied density folded into h and
/// E0. `core_potential`, when given, receives J - K/2 of the frozen density in
/// the cluster basis.
ClusterHamiltonian extract_cluster_hamiltonian(const LocalIntegrals& li,
                                               const EwfCluster& cluster,
                                               Eigen::MatrixXd* core_potential = nullptr);

struct Fragmentation {
  LocalBasis basis;
  LocalIntegrals integrals;
  std::vector<EwfCluster> clusters;
};

Fragmentation fragment_system(const MeanFieldBundle& mf, const FragmentSpec& spec,
                              double eta);

/// C^T (pq|rs) C over every index.
std::vector<double> transform_eri(const std::vector<double>& eri, int n,
                                  const Eigen::MatrixXd& C);

}  // namespace ewfsqd
