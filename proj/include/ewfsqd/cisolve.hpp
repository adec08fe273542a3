#pragma once

// Projected Hamiltonians over determinant subspaces, the Davidson ground-state
// solver, and spin-summed reduced density matrices.

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "ewfsqd/detcore.hpp"
#include "ewfsqd/hamio.hpp"

namespace ewfsqd {

/// Sorted, duplicate-free determinants of one (n_alpha, n_beta) sector.
class SubspaceBasis {
 public:
  SubspaceBasis() = default;
  /// Sorts and deduplicates; throws DomainError on mixed sectors or masks
  /// beyond `norb` bits.
  SubspaceBasis(int norb, std::vector<Determinant> dets);

  static SubspaceBasis full_space(int norb, int n_alpha, int n_beta);
  /// Cartesian product of alpha strings and beta strings.
  static SubspaceBasis product(int norb, const std::vector<Mask>& alpha,
                               const std::vector<Mask>& beta);

  int norb() const noexcept { return norb_; }
  int n_alpha() const noexcept { return n_alpha_; }
  int n_beta() const noexcept { return n_beta_; }
  std::size_t size() const noexcept { return dets_.size(); }
  bool empty() const noexcept { return dets_.empty(); }
  const Determinant& operator[](std::size_t i) const { return dets_[i]; }
  const std::vector<Determinant>& dets() const noexcept { return dets_; }
  std::optional<std::size_t> index_of(const Determinant& d) const;
  bool contains(const Determinant& d) const { return index_of(d).has_value(); }

 private:
  int norb_ = 0;
  int n_alpha_ = 0;
  int n_beta_ = 0;
  std::vector<Determinant> dets_;
};

/// Enumerates, for each basis determinant, the basis determinants within two
/// excitations of it, using alpha/beta string neighbour lists.
class ConnectionIndex {
 public:
  explicit ConnectionIndex(const SubspaceBasis& basis);

  /// Calls f(j) for every j (including i itself) with degree(i, j) <= 2, in
  /// ascending j order.
  template <class F>
  void for_each(std::size_t i, F&& f) const {
    for (std::size_t j : connections(i)) f(j);
  }
  std::vector<std::size_t> connections(std::size_t i) const;

 private:
  const SubspaceBasis* basis_;
  std::vector<Mask> alpha_, beta_;
  std::vector<int> det_alpha_, det_beta_;
  std::vector<std::vector<int>> alpha_n1_, alpha_n2_, beta_n1_, beta_n2_;
  // For each alpha string: (beta string index, determinant index), sorted.
  std::vector<std::vector<std::pair<int, std::size_t>>> by_alpha_;
};

/// Symmetric linear operator of dimension d.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual std::size_t dim() const = 0;
  virtual Eigen::VectorXd diagonal() const = 0;
  virtual void apply(const Eigen::VectorXd& x, Eigen::VectorXd& y) const = 0;
  virtual Eigen::MatrixXd to_dense() const;
};

class DenseOperator final : public LinearOperator {
 public:
  explicit DenseOperator(Eigen::MatrixXd m) : m_(std::move(m)) {}
  std::size_t dim() const override { return m_.rows(); }
  Eigen::VectorXd diagonal() const override { return m_.diagonal(); }
  void apply(const Eigen::VectorXd& x, Eigen::VectorXd& y) const override {
    y.noalias() = m_ * x;
  }
  Eigen::MatrixXd to_dense() const override { return m_; }

 private:
  Eigen::MatrixXd m_;
};

/// H projected onto a subspace: P_S H P_S. Stored as a row-major sparse
/// matrix over all degree <= 2 pairs, or generated on the fly when
/// `matrix_free` is set.
class ProjectedHamiltonian final : public LinearOperator {
 public:
  ProjectedHamiltonian(const ClusterHamiltonian& ham, const SubspaceBasis& basis,
                       bool matrix_free = false, int threads = 1);

  std::size_t dim() const override { return diag_.size(); }
  Eigen::VectorXd diagonal() const override { return diag_; }
  void apply(const Eigen::VectorXd& x, Eigen::VectorXd& y) const override;
  Eigen::MatrixXd to_dense() const override;

  bool matrix_free() const noexcept { return !sparse_; }
  /// Explicit matrix; null when matrix-free.
  const Eigen::SparseMatrix<double, Eigen::RowMajor>* sparse() const {
    return sparse_.get();
  }
  double element(std::size_t i, std::size_t j) const;

 private:
  const ClusterHamiltonian* ham_;
  const SubspaceBasis* basis_;
  std::shared_ptr<const ConnectionIndex> index_;
  Eigen::VectorXd diag_;
  std::unique_ptr<Eigen::SparseMatrix<double, Eigen::RowMajor>> sparse_;
  int threads_;
};

ProjectedHamiltonian build_projected_hamiltonian(const ClusterHamiltonian& ham,
                                                 const SubspaceBasis& basis,
                                                 bool matrix_free = false);

struct DavidsonOptions {
  double residual_tol = 1e-9;
  int max_iterations = 200;
  /// Dimensions up to this size are diagonalized densely.
  std::size_t dense_threshold = 512;
  int max_subspace = 40;
};

struct Eigenpair {
  double value = 0.0;
  Eigen::VectorXd vector;
  int iterations = 0;
  double residual = 0.0;
};

/// Lowest eigenpair. `guess` defaults to the unit vector on the smallest
/// diagonal entry. Throws ConvergenceError after `max_iterations`.
Eigenpair davidson_ground_state(const LinearOperator& op,
                                const Eigen::VectorXd* guess = nullptr,
                                const DavidsonOptions& opts = {});

struct CiVector {
  SubspaceBasis basis;
  Eigen::VectorXd coeffs;
};

/// Spin-summed two-body density
///   Gamma_prqs = sum_{sigma,tau} <a+_{p sigma} a+_{q tau} a_{s tau} a_{r sigma}>,
/// indexed like (pr|qs).
struct Rdm2 {
  int norb = 0;
  std::vector<double> data;

  Rdm2() = default;
  explicit Rdm2(int n)
      : norb(n), data(static_cast<std::size_t>(n) * n * n * n, 0.0) {}
  std::size_t index(int p, int r, int q, int s) const noexcept {
    const std::size_t m = static_cast<std::size_t>(norb);
    return ((static_cast<std::size_t>(p) * m + r) * m + q) * m + s;
  }
  double& operator()(int p, int r, int q, int s) { return data[index(p, r, q, s)]; }
  double operator()(int p, int r, int q, int s) const {
    return data[index(p, r, q, s)];
  }
};

using Rdm1 = Eigen::MatrixXd;

struct Rdms {
  Rdm1 one;
  Rdm2 two;
};

Rdms compute_rdms(const CiVector& v);

/// <v|n_p sigma|v> for every spin-orbital.
OccupationVector occupations(const CiVector& v);

/// E0 + sum h_pr g_pr + 1/2 sum (pr|qs) G_prqs.
double energy_from_rdms(const ClusterHamiltonian& ham, const Rdm1& one,
                        const Rdm2& two);

struct SubspaceSolution {
  double energy = 0.0;
  CiVector vector;
  int iterations = 0;
};

struct SolverOptions {
  DavidsonOptions davidson;
  /// Above this many determinants the Hamiltonian is applied matrix-free.
  std::size_t explicit_matrix_limit = 200000;
  int threads = 1;
};

/// Ground state of ham projected onto `basis`. The initial guess is the
/// Hartree-Fock determinant when it is in the basis.
SubspaceSolution solve_subspace(const ClusterHamiltonian& ham,
                                const SubspaceBasis& basis,
                                const SolverOptions& opts = {});

struct FciOptions {
  SolverOptions solver;
  std::uint64_t max_determinants = 5000000;
};

struct FciResult {
  double energy = 0.0;
  CiVector vector;
  Rdms rdms;
};

FciResult fci_solve(const ClusterHamiltonian& ham, const FciOptions& opts = {});

}  // namespace ewfsqd
