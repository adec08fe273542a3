#pragma once

// LUCJ parameters from double-factorized t2 amplitudes, exact statevector
// preparation in a particle-number sector, and simulated measurement.

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "ewfsqd/cisolve.hpp"
#include "ewfsqd/hamio.hpp"

namespace ewfsqd {

/// t1 (n_occ x n_virt) and t2 stored as t2[((i*no + j)*nv + a)*nv + b] = t_ij^ab.
/// Virtual indices a, b are 0-based within the virtual block.
struct AmplitudeSet {
  int n_occ = 0;
  int n_virt = 0;
  Eigen::MatrixXd t1;
  std::vector<double> t2;
  Eigen::VectorXd eps;
  double e_mp2 = 0.0;

  std::size_t index(int i, int j, int a, int b) const noexcept {
    return ((static_cast<std::size_t>(i) * n_occ + j) * n_virt + a) * n_virt + b;
  }
  double& operator()(int i, int j, int a, int b) { return t2[index(i, j, a, b)]; }
  double operator()(int i, int j, int a, int b) const { return t2[index(i, j, a, b)]; }

  /// Throws DomainError when t_ij^ab != t_ji^ba beyond tol.
  void check_symmetry(double tol = 1e-12) const;
};

/// Closed-shell MP2 amplitudes t_ij^ab = (ia|jb) / (e_i + e_j - e_a - e_b) over the
/// aufbau occupation of `ham`. Uses ham.eps, or the Fock diagonal when the
/// Hamiltonian carries no orbital energies.
AmplitudeSet mp2_amplitudes(const ClusterHamiltonian& ham);

/// Plain-text amplitude file: header, dimensions, dense t1 and t2 blocks.
AmplitudeSet parse_amplitudes(std::istream& in);
AmplitudeSet load_amplitudes(const std::filesystem::path& path);
void write_amplitudes(const AmplitudeSet& amps, std::ostream& out);

struct FactorizationTerm {
  Eigen::MatrixXd U;  // M x M orthogonal, det +1
  Eigen::MatrixXd J;  // M x M symmetric
  double eigenvalue = 0.0;
};

/// t_ij^ab ~ sum_mu sum_pq J_pq U_ap U_ip U_bq U_jq over orbitals ordered
/// occupied first. Real form; see the README.
struct DoubleFactorization {
  int n_occ = 0;
  int n_virt = 0;
  std::vector<FactorizationTerm> terms;

  int norb() const noexcept { return n_occ + n_virt; }
};

/// Exact eigendecomposition of the (ia)x(jb) amplitude matrix. Terms are
/// ordered by descending |eigenvalue|; `max_terms` < 0 keeps every nonzero one.
DoubleFactorization double_factorize_t2(const AmplitudeSet& amps,
                                        int max_terms = -1);

/// t-bar from the factorization, in AmplitudeSet layout.
std::vector<double> reconstruct_t2(const DoubleFactorization& df);

/// chi = 1/2 sum |tbar - t|^2.
double factorization_chi(const DoubleFactorization& df, const AmplitudeSet& amps);

/// Undirected adjacency over 2M spin-orbitals (alpha block first). J entries on
/// pairs that are not adjacent are dropped; self-pairs count only if listed.
class Connectivity {
 public:
  Connectivity() = default;
  explicit Connectivity(int norb);

  static Connectivity all_to_all(int norb);
  /// Same-spin nearest neighbours along the orbital index, plus self-pairs.
  static Connectivity line(int norb);
  /// `line` plus the alpha-beta pair on each orbital.
  static Connectivity ladder(int norb);
  /// Adjacency lists, one per spin-orbital; must be symmetric.
  static Connectivity from_lists(int norb, const std::vector<std::vector<int>>& adj);

  int norb() const noexcept { return norb_; }
  void connect(int a, int b);
  bool adjacent(int a, int b) const { return mask_(a, b) != 0; }
  std::vector<std::vector<int>> lists() const;

 private:
  int norb_ = 0;
  Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic> mask_;
};

struct LucjLayer {
  Eigen::MatrixXd K;  // M x M antisymmetric
  Eigen::MatrixXd J;  // 2M x 2M symmetric
};

struct LucjParams {
  int norb = 0;
  std::vector<LucjLayer> layers;
};

/// Layer mu takes term mu: K = log U (principal branch), J_{p s, r t} = J_pr,
/// then the locality mask. `layers` must not exceed the term count unless the
/// factorization is empty, in which case one identity layer results.
LucjParams lucj_from_factorization(const DoubleFactorization& df,
                                   const Connectivity& connectivity,
                                   int layers = 1);

/// Real logarithm of an orthogonal matrix with det +1. Throws BranchError when
/// an eigenvalue sits at -1.
Eigen::MatrixXd orthogonal_log(const Eigen::MatrixXd& U);

struct Statevector {
  int norb = 0;
  int n_alpha = 0;
  int n_beta = 0;
  /// amplitudes(ia, ib) over ascending alpha and beta strings; the flattened
  /// row-major order matches enumerate_space.
  Eigen::MatrixXcd amplitudes;

  std::vector<Determinant> basis() const;
  double norm() const { return amplitudes.norm(); }
  std::complex<double> amplitude(const Determinant& d) const;
};

struct LucjOptions {
  std::uint64_t max_dimension = 20000000;
};

/// prod_mu e^{K_mu} e^{i J_mu} e^{-K_mu} |x_RHF> in the (n_alpha, n_beta) sector.
Statevector prepare_lucj_state(int norb, int n_alpha, int n_beta,
                               const LucjParams& params,
                               const LucjOptions& opts = {});

/// e^{K} applied to a sector vector (K real antisymmetric, spin-restricted).
void apply_orbital_rotation(const Eigen::MatrixXd& K, Statevector& psi);

/// Multinomial draw of `shots` configurations from |amplitude|^2.
SampleSet sample_counts(const Statevector& psi, std::uint64_t shots,
                        std::uint64_t seed);

struct NoiseModel {
  double flip_0to1 = 0.0;
  double flip_1to0 = 0.0;
  static NoiseModel symmetric(double eps) { return {eps, eps}; }
};

/// Independent bit flips on every shot.
SampleSet inject_readout_noise(const SampleSet& s, double eps, std::uint64_t seed);
SampleSet inject_readout_noise(const SampleSet& s, const NoiseModel& noise,
                               std::uint64_t seed);

/// Portable uniform in [0, 1) from a 64-bit engine.
double uniform01(std::uint64_t bits);
/// splitmix64 finalizer, used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace ewfsqd
