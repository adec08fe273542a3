#include <bit>

#include "ewfsqd/cisolve.hpp"
#include "ewfsqd/errors.hpp"

namespace ewfsqd {

namespace {

// Spin-orbital state in Jordan-Wigner order: alpha block [0, M), beta [M, 2M).
struct Fock {
  Mask alpha, beta;
  int norb;

  bool occupied(int k) const {
    return k < norb ? (alpha >> k) & 1U : (beta >> (k - norb)) & 1U;
  }
  int below(int k) const {
    return k < norb ? std::popcount(alpha & low_bits(k))
                    : std::popcount(alpha) +
                          std::popcount(beta & low_bits(k - norb));
  }
  void flip(int k) {
    if (k < norb)
      alpha ^= Mask{1} << k;
    else
      beta ^= Mask{1} << (k - norb);
  }
  // Returns 0 when the operator annihilates the state.
  int annihilate(int k) {
    if (!occupied(k)) return 0;
    const int s = below(k) & 1 ? -1 : 1;
    flip(k);
    return s;
  }
  int create(int k) {
    if (occupied(k)) return 0;
    const int s = below(k) & 1 ? -1 : 1;
    flip(k);
    return s;
  }
};

// Sign of a+_P a+_Q a_S a_R |ket>, or 0 if it vanishes.
int string_sign(const Fock& ket, int P, int Q, int R, int S) {
  Fock f = ket;
  int s = f.annihilate(R);
  if (!s) return 0;
  s *= f.annihilate(S);
  if (!s) return 0;
  s *= f.create(Q);
  if (!s) return 0;
  return s * f.create(P);
}

std::vector<int> bits_of(Mask alpha, Mask beta, int norb) {
  std::vector<int> out;
  for (Mask m = alpha; m; m &= m - 1) out.push_back(std::countr_zero(m));
  for (Mask m = beta; m; m &= m - 1) out.push_back(norb + std::countr_zero(m));
  return out;
}

struct Accumulator {
  int norb;
  Rdm1& one;
  Rdm2& two;

  int spatial(int k) const { return k < norb ? k : k - norb; }
  bool same_spin(int a, int b) const { return (a < norb) == (b < norb); }

  void add2(const Fock& ket, int P, int Q, int R, int S, double w) {
    if (!same_spin(P, R) || !same_spin(Q, S)) return;
    const int s = string_sign(ket, P, Q, R, S);
    if (s) two(spatial(P), spatial(R), spatial(Q), spatial(S)) += s * w;
  }
};

}  // namespace

Rdms compute_rdms(const CiVector& v) {
  const SubspaceBasis& basis = v.basis;
  const int M = basis.norb();
  if (static_cast<std::size_t>(v.coeffs.size()) != basis.size())
    throw DomainError("coefficient vector length differs from the basis size");
  Rdms out{Rdm1::Zero(M, M), Rdm2(M)};
  if (basis.empty()) return out;
  Accumulator acc{M, out.one, out.two};
  ConnectionIndex index(basis);

  for (std::size_t i = 0; i < basis.size(); ++i) {
    const double ci = v.coeffs(i);
    if (ci == 0.0) continue;
    const Determinant& bra = basis[i];
    for (std::size_t j : index.connections(i)) {
      const double w = ci * v.coeffs(j);
      if (w == 0.0) continue;
      const Determinant& kd = basis[j];
      const Fock ket{kd.alpha, kd.beta, M};
      const Mask da = bra.alpha ^ kd.alpha;
      const Mask db = bra.beta ^ kd.beta;
      const auto holes = bits_of(kd.alpha & da, kd.beta & db, M);
      const auto parts = bits_of(bra.alpha & da, bra.beta & db, M);
      const auto common =
          bits_of(bra.alpha & kd.alpha, bra.beta & kd.beta, M);

      if (holes.empty()) {
        for (int k : common) {
          out.one(acc.spatial(k), acc.spatial(k)) += w;
          for (int l : common) {
            if (l == k) continue;
            acc.add2(ket, k, l, k, l, w);
            acc.add2(ket, k, l, l, k, w);
          }
        }
      } else if (holes.size() == 1) {
        const int h = holes[0], p = parts[0];
        if (acc.same_spin(h, p)) {
          Fock f = ket;
          const int s = f.annihilate(h) * f.create(p);
          out.one(acc.spatial(p), acc.spatial(h)) += s * w;
        }
        for (int k : common) {
          acc.add2(ket, p, k, h, k, w);
          acc.add2(ket, p, k, k, h, w);
          acc.add2(ket, k, p, h, k, w);
          acc.add2(ket, k, p, k, h, w);
        }
      } else {
        const int h1 = holes[0], h2 = holes[1];
        const int p1 = parts[0], p2 = parts[1];
        acc.add2(ket, p1, p2, h1, h2, w);
        acc.add2(ket, p1, p2, h2, h1, w);
        acc.add2(ket, p2, p1, h1, h2, w);
        acc.add2(ket, p2, p1, h2, h1, w);
      }
    }
  }
  return out;
}

OccupationVector occupations(const CiVector& v) {
  const int M = v.basis.norb();
  OccupationVector occ{Eigen::VectorXd::Zero(2 * M)};
  for (std::size_t i = 0; i < v.basis.size(); ++i) {
    const double w = v.coeffs(i) * v.coeffs(i);
    const Determinant& d = v.basis[i];
    for (Mask m = d.alpha; m; m &= m - 1) occ.n(std::countr_zero(m)) += w;
    for (Mask m = d.beta; m; m &= m - 1) occ.n(M + std::countr_zero(m)) += w;
  }
  return occ;
}

double energy_from_rdms(const ClusterHamiltonian& ham, const Rdm1& one,
                        const Rdm2& two) {
  const int M = ham.norb;
  if (one.rows() != M || two.norb != M)
    throw DomainError("density dimensions differ from the Hamiltonian's");
  double e = ham.e0 + (ham.h.array() * one.array()).sum();
  double e2 = 0.0;
  for (std::size_t k = 0; k < two.data.size(); ++k) e2 += ham.eri[k] * two.data[k];
  return e + 0.5 * e2;
}

SubspaceSolution solve_subspace(const ClusterHamiltonian& ham,
                                const SubspaceBasis& basis,
                                const SolverOptions& opts) {
  const bool matrix_free = basis.size() > opts.explicit_matrix_limit;
  ProjectedHamiltonian op(ham, basis, matrix_free, opts.threads);
  Eigen::VectorXd guess;
  const Eigen::VectorXd* gp = nullptr;
  if (auto idx = basis.index_of(hf_determinant(ham.n_alpha, ham.n_beta))) {
    guess = Eigen::VectorXd::Zero(basis.size());
    guess(*idx) = 1.0;
    gp = &guess;
  }
  Eigenpair ep = davidson_ground_state(op, gp, opts.davidson);
  // Fix the global phase: largest-magnitude coefficient positive.
  Eigen::Index imax;
  ep.vector.cwiseAbs().maxCoeff(&imax);
  if (ep.vector(imax) < 0) ep.vector = -ep.vector;
  SubspaceSolution sol;
  sol.energy = ep.value;
  sol.vector = CiVector{basis, std::move(ep.vector)};
  sol.iterations = ep.iterations;
  return sol;
}

FciResult fci_solve(const ClusterHamiltonian& ham, const FciOptions& opts) {
  const std::uint64_t dim = sector_dimension(ham.norb, ham.n_alpha, ham.n_beta);
  if (dim > opts.max_determinants)
    throw CapacityError("FCI space of " + std::to_string(dim) +
                        " determinants exceeds the limit of " +
                        std::to_string(opts.max_determinants));
  SubspaceBasis basis =
      SubspaceBasis::full_space(ham.norb, ham.n_alpha, ham.n_beta);
  SubspaceSolution sol = solve_subspace(ham, basis, opts.solver);
  FciResult out;
  out.energy = sol.energy;
  out.rdms = compute_rdms(sol.vector);
  out.vector = std::move(sol.vector);
  return out;
}

}  // namespace ewfsqd
