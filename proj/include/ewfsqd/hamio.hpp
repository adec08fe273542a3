#pragma once

// On-disk artifacts of the pipeline: FCIDUMP cluster Hamiltonians, mean-field
// bundles, raw sample files and run manifests.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "ewfsqd/determinant.hpp"

namespace ewfsqd {

/// E0 + one-body h_pr + two-body (pr|qs) (chemists' notation) over `norb`
/// spatial orbitals. The ERI tensor is stored densely; `set_eri` populates all
/// eight permutations of an index quadruple.
struct ClusterHamiltonian {
  int norb = 0;
  int n_alpha = 0;
  int n_beta = 0;
  double e0 = 0.0;
  Eigen::MatrixXd h;
  std::vector<double> eri;
  /// Orbital energies, empty when the source carried none.
  Eigen::VectorXd eps;

  ClusterHamiltonian() = default;
  ClusterHamiltonian(int norb, int n_alpha, int n_beta);

  std::size_t eri_index(int p, int r, int q, int s) const noexcept {
    const std::size_t m = static_cast<std::size_t>(norb);
    return ((static_cast<std::size_t>(p) * m + r) * m + q) * m + s;
  }
  double eri_at(int p, int r, int q, int s) const noexcept {
    return eri[eri_index(p, r, q, s)];
  }
  void set_eri(int p, int r, int q, int s, double v);

  int n_electrons() const noexcept { return n_alpha + n_beta; }

  /// Throws ValidationError when h or eri break symmetry beyond `tol` or the
  /// electron counts do not fit.
  void check_invariants(double tol = 1e-12) const;
};

ClusterHamiltonian parse_fcidump(std::istream& in);
ClusterHamiltonian read_fcidump(const std::filesystem::path& path);
void write_fcidump(const ClusterHamiltonian& ham, std::ostream& out);
void write_fcidump(const ClusterHamiltonian& ham,
                   const std::filesystem::path& path);

/// Multiset of measured 2M-bit configurations. Entries are kept sorted and
/// unique; repeated bitstrings merge their counts.
struct SampleEntry {
  Determinant bits;
  std::uint64_t count = 0;
  friend bool operator==(const SampleEntry&, const SampleEntry&) = default;
};

class SampleSet {
 public:
  SampleSet() = default;
  explicit SampleSet(int norb) : norb_(norb) {}

  int norb() const noexcept { return norb_; }
  int n_qubits() const noexcept { return 2 * norb_; }
  const std::vector<SampleEntry>& entries() const noexcept { return entries_; }
  std::uint64_t total_shots() const noexcept { return total_; }
  bool empty() const noexcept { return entries_.empty(); }

  void add(const Determinant& bits, std::uint64_t count);
  /// Bulk construction; sorts and merges duplicates.
  static SampleSet from_entries(int norb, std::vector<SampleEntry> entries);

  friend bool operator==(const SampleSet&, const SampleSet&) = default;

 private:
  int norb_ = 0;
  std::vector<SampleEntry> entries_;
  std::uint64_t total_ = 0;
};

SampleSet parse_samples(std::istream& in);
SampleSet load_samples(const std::filesystem::path& path);
void write_samples(const SampleSet& set, std::ostream& out);
void save_samples(const SampleSet& set, const std::filesystem::path& path);

struct BundleTolerances {
  double orthonormality = 1e-8;
  double idempotency = 1e-6;
  double electron_count = 1e-8;
};

/// Full-system restricted mean-field data in the AO basis.
struct MeanFieldBundle {
  std::string label;
  int n_ao = 0;
  int n_mo = 0;
  int n_elec = 0;
  double e_nuc = 0.0;
  /// Reference SCF energy if the producer recorded it (NaN otherwise).
  double e_hf = std::numeric_limits<double>::quiet_NaN();
  std::vector<int> ao_atom;
  Eigen::MatrixXd S, C, D, h;
  Eigen::VectorXd eps;
  std::vector<double> eri;  // (pq|rs), row-major over n_ao^4

  double eri_at(int p, int q, int r, int s) const noexcept {
    const std::size_t n = static_cast<std::size_t>(n_ao);
    return eri[((static_cast<std::size_t>(p) * n + q) * n + r) * n + s];
  }

  void validate(const BundleTolerances& tol = {}) const;
};

MeanFieldBundle parse_meanfield_bundle(std::istream& in,
                                       const BundleTolerances& tol = {});
MeanFieldBundle load_meanfield_bundle(const std::filesystem::path& path,
                                      const BundleTolerances& tol = {});
void write_meanfield_bundle(const MeanFieldBundle& mf, std::ostream& out);

enum class SolverKind { Fci, Sqd };
std::string to_string(SolverKind kind);
SolverKind solver_kind_from_string(const std::string& s);

struct ClusterRecord {
  std::string id;
  std::string fcidump;  // relative to the manifest directory
  std::vector<int> fragment_orbitals;
  int n_mo = 0;
  SolverKind solver = SolverKind::Fci;
  /// Cluster orbitals as columns over the localized basis.
  Eigen::MatrixXd columns;
  /// Frozen-occupied mean-field potential (J - K/2) in the cluster basis.
  Eigen::MatrixXd core_potential;
};

struct RunManifest {
  std::string conformer;
  std::string bundle;
  int n_local = 0;
  int n_elec = 0;
  double e_nuc = 0.0;
  double e_hf = 0.0;
  std::vector<ClusterRecord> clusters;
  /// Normalized pipeline configuration (recovery block, connectivity, ...)
  /// serialized as JSON; empty when the manifest was written standalone.
  std::string config_json;

  /// Cluster ids unique and fragment orbitals partitioning [0, n_local).
  void validate() const;
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);
void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace ewfsqd
