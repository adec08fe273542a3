#pragma once

// Bit-packed determinants, excitation bookkeeping and Slater-Condon rules.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "ewfsqd/determinant.hpp"
#include "ewfsqd/hamio.hpp"

namespace ewfsqd {

inline constexpr int kMaxOrbitals = 64;

inline Mask low_bits(int n) {
  return n >= 64 ? ~Mask{0} : (Mask{1} << n) - 1;
}

std::uint64_t binomial(int n, int k);

/// C(M, n_alpha) * C(M, n_beta).
std::uint64_t sector_dimension(int norb, int n_alpha, int n_beta);

/// All `nelec`-bit masks over `norb` bits, ascending.
std::vector<Mask> enumerate_strings(int norb, int nelec);

/// The full sector, ordered lexicographically by (alpha, beta).
std::vector<Determinant> enumerate_space(int norb, int n_alpha, int n_beta);

/// Lowest-orbital closed-shell (aufbau) determinant.
inline Determinant hf_determinant(int n_alpha, int n_beta) {
  return {low_bits(n_alpha), low_bits(n_beta)};
}

/// (-1)^(occupied orbitals of `m` strictly between i and j).
inline int single_parity(Mask m, int i, int j) {
  const int lo = i < j ? i : j;
  const int hi = i < j ? j : i;
  const Mask between = low_bits(hi) & ~low_bits(lo + 1);
  return (std::popcount(m & between) & 1) ? -1 : 1;
}

struct Excitation {
  int degree = 0;
  int sign = 1;
};

/// Degree and fermionic sign of the excitation taking `ket` to `bra`. Holes and
/// particles of each spin are paired in ascending order; the sign is +1 for
/// degree > 2.
Excitation excitation_degree_and_parity(const Determinant& bra,
                                        const Determinant& ket);

/// <bra|H|ket> for the spin-free Hamiltonian stored in `ham`.
double slater_condon_element(const ClusterHamiltonian& ham,
                             const Determinant& bra, const Determinant& ket);

/// Every spin-conserving single excitation of `d`: alpha before beta, then by
/// hole and particle index.
std::vector<Determinant> connected_singles(const Determinant& d, int norb);

/// Per-spin-orbital occupation numbers: entries [0, M) alpha, [M, 2M) beta.
struct OccupationVector {
  Eigen::VectorXd n;

  int norb() const noexcept { return static_cast<int>(n.size() / 2); }
  double alpha(int p) const { return n(p); }
  double beta(int p) const { return n(norb() + p); }

  static OccupationVector of(const Determinant& d, int norb);
};

namespace detail {

/// Pieces of the Slater-Condon rules, usable when the excitation is already
/// classified. `occ_*` are the ket's occupied orbitals.
double diagonal_element(const ClusterHamiltonian& ham, const Determinant& d);
double single_element(const ClusterHamiltonian& ham, const Determinant& ket,
                      bool alpha_spin, int hole, int particle);
double double_same_spin(const ClusterHamiltonian& ham, Mask ket, int h1,
                        int h2, int p1, int p2);
double double_opposite_spin(const ClusterHamiltonian& ham,
                            const Determinant& ket, int ha, int pa, int hb,
                            int pb);

/// Element for a pair whose per-spin differences are known.
double connected_element(const ClusterHamiltonian& ham, const Determinant& bra,
                         const Determinant& ket);

}  // namespace detail

}  // namespace ewfsqd
