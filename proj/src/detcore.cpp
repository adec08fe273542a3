#include "ewfsqd/detcore.hpp"

#include <bit>

#include "ewfsqd/errors.hpp"

namespace ewfsqd {

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / i;
  return r;
}

std::uint64_t sector_dimension(int norb, int n_alpha, int n_beta) {
  return binomial(norb, n_alpha) * binomial(norb, n_beta);
}

std::vector<Mask> enumerate_strings(int norb, int nelec) {
  if (norb > kMaxOrbitals)
    throw CapacityError("at most 64 orbitals fit a single-word mask");
  if (nelec < 0 || nelec > norb)
    throw DomainError("electron count outside [0, norb]");
  std::vector<Mask> out;
  out.reserve(binomial(norb, nelec));
  if (nelec == 0) {
    out.push_back(0);
    return out;
  }
  const Mask last = low_bits(nelec) << (norb - nelec);
  Mask m = low_bits(nelec);
  while (true) {
    out.push_back(m);
    if (m == last) break;
    // Gosper's hack: next integer with the same popcount.
    const Mask c = m & (~m + 1);
    const Mask r = m + c;
    m = (((r ^ m) >> 2) / c) | r;
  }
  return out;
}

std::vector<Determinant> enumerate_space(int norb, int n_alpha, int n_beta) {
  const auto as = enumerate_strings(norb, n_alpha);
  const auto bs = enumerate_strings(norb, n_beta);
  std::vector<Determinant> dets;
  dets.reserve(as.size() * bs.size());
  for (Mask a : as)
    for (Mask b : bs) dets.push_back({a, b});
  return dets;
}

namespace {

int lowest(Mask m) { return std::countr_zero(m); }

int pair_sign(Mask ket, Mask holes, Mask parts) {
  const int h1 = lowest(holes);
  const int p1 = lowest(parts);
  int sign = single_parity(ket, h1, p1);
  holes &= holes - 1;
  parts &= parts - 1;
  if (holes) {
    const Mask mid = ket ^ (Mask{1} << h1) ^ (Mask{1} << p1);
    sign *= single_parity(mid, lowest(holes), lowest(parts));
  }
  return sign;
}

}  // namespace

Excitation excitation_degree_and_parity(const Determinant& bra,
                                        const Determinant& ket) {
  const Mask da = bra.alpha ^ ket.alpha;
  const Mask db = bra.beta ^ ket.beta;
  const int na = std::popcount(da);
  const int nb = std::popcount(db);
  Excitation ex;
  ex.degree = (na + nb) / 2;
  if (ex.degree == 0 || ex.degree > 2) return ex;
  // Unequal particle numbers have no well-defined pairing.
  if (std::popcount(ket.alpha & da) != std::popcount(bra.alpha & da) ||
      std::popcount(ket.beta & db) != std::popcount(bra.beta & db))
    return ex;
  if (da) ex.sign *= pair_sign(ket.alpha, ket.alpha & da, bra.alpha & da);
  if (db) ex.sign *= pair_sign(ket.beta, ket.beta & db, bra.beta & db);
  return ex;
}

namespace detail {

double diagonal_element(const ClusterHamiltonian& ham, const Determinant& d) {
  double e = ham.e0;
  for (Mask a = d.alpha; a; a &= a - 1) {
    const int p = lowest(a);
    e += ham.h(p, p);
    for (Mask a2 = a & (a - 1); a2; a2 &= a2 - 1) {
      const int q = lowest(a2);
      e += ham.eri_at(p, p, q, q) - ham.eri_at(p, q, q, p);
    }
    for (Mask b = d.beta; b; b &= b - 1) {
      const int q = lowest(b);
      e += ham.eri_at(p, p, q, q);
    }
  }
  for (Mask b = d.beta; b; b &= b - 1) {
    const int p = lowest(b);
    e += ham.h(p, p);
    for (Mask b2 = b & (b - 1); b2; b2 &= b2 - 1) {
      const int q = lowest(b2);
      e += ham.eri_at(p, p, q, q) - ham.eri_at(p, q, q, p);
    }
  }
  return e;
}

double single_element(const ClusterHamiltonian& ham, const Determinant& ket,
                      bool alpha_spin, int hole, int particle) {
  const Mask same = alpha_spin ? ket.alpha : ket.beta;
  const Mask other = alpha_spin ? ket.beta : ket.alpha;
  double v = ham.h(particle, hole);
  for (Mask m = same & ~(Mask{1} << hole); m; m &= m - 1) {
    const int k = lowest(m);
    v += ham.eri_at(particle, hole, k, k) - ham.eri_at(particle, k, k, hole);
  }
  for (Mask m = other; m; m &= m - 1) {
    const int k = lowest(m);
    v += ham.eri_at(particle, hole, k, k);
  }
  return single_parity(same, hole, particle) * v;
}

double double_same_spin(const ClusterHamiltonian& ham, Mask ket, int h1,
                        int h2, int p1, int p2) {
  int sign = single_parity(ket, h1, p1);
  const Mask mid = ket ^ (Mask{1} << h1) ^ (Mask{1} << p1);
  sign *= single_parity(mid, h2, p2);
  return sign * (ham.eri_at(p1, h1, p2, h2) - ham.eri_at(p1, h2, p2, h1));
}

double double_opposite_spin(const ClusterHamiltonian& ham,
                            const Determinant& ket, int ha, int pa, int hb,
                            int pb) {
  const int sign =
      single_parity(ket.alpha, ha, pa) * single_parity(ket.beta, hb, pb);
  return sign * ham.eri_at(pa, ha, pb, hb);
}

double connected_element(const ClusterHamiltonian& ham, const Determinant& bra,
                         const Determinant& ket) {
  const Mask da = bra.alpha ^ ket.alpha;
  const Mask db = bra.beta ^ ket.beta;
  const int na = std::popcount(da);
  const int nb = std::popcount(db);
  if (na + nb > 4) return 0.0;
  if (na == 0 && nb == 0) return diagonal_element(ham, ket);
  if (na == 2 && nb == 0)
    return single_element(ham, ket, true, lowest(ket.alpha & da),
                          lowest(bra.alpha & da));
  if (na == 0 && nb == 2)
    return single_element(ham, ket, false, lowest(ket.beta & db),
                          lowest(bra.beta & db));
  if (na == 2 && nb == 2)
    return double_opposite_spin(ham, ket, lowest(ket.alpha & da),
                                lowest(bra.alpha & da), lowest(ket.beta & db),
                                lowest(bra.beta & db));
  const bool alpha_spin = na == 4;
  const Mask k = alpha_spin ? ket.alpha : ket.beta;
  const Mask b = alpha_spin ? bra.alpha : bra.beta;
  const Mask diff = alpha_spin ? da : db;
  Mask holes = k & diff;
  Mask parts = b & diff;
  const int h1 = lowest(holes);
  holes &= holes - 1;
  const int p1 = lowest(parts);
  parts &= parts - 1;
  return double_same_spin(ham, k, h1, lowest(holes), p1, lowest(parts));
}

}  // namespace detail

double slater_condon_element(const ClusterHamiltonian& ham,
                             const Determinant& bra, const Determinant& ket) {
  for (const auto* d : {&bra, &ket})
    if (d->n_alpha() != ham.n_alpha || d->n_beta() != ham.n_beta ||
        ((d->alpha | d->beta) & ~low_bits(ham.norb)))
      throw DomainError("determinant outside the Hamiltonian's sector");
  return detail::connected_element(ham, bra, ket);
}

std::vector<Determinant> connected_singles(const Determinant& d, int norb) {
  std::vector<Determinant> out;
  out.reserve(static_cast<std::size_t>(d.n_alpha()) * (norb - d.n_alpha()) +
              static_cast<std::size_t>(d.n_beta()) * (norb - d.n_beta()));
  const Mask full = low_bits(norb);
  for (Mask occ = d.alpha; occ; occ &= occ - 1) {
    const int i = lowest(occ);
    for (Mask vir = full & ~d.alpha; vir; vir &= vir - 1) {
      const int a = lowest(vir);
      out.push_back({d.alpha ^ (Mask{1} << i) ^ (Mask{1} << a), d.beta});
    }
  }
  for (Mask occ = d.beta; occ; occ &= occ - 1) {
    const int i = lowest(occ);
    for (Mask vir = full & ~d.beta; vir; vir &= vir - 1) {
      const int a = lowest(vir);
      out.push_back({d.alpha, d.beta ^ (Mask{1} << i) ^ (Mask{1} << a)});
    }
  }
  return out;
}

OccupationVector OccupationVector::of(const Determinant& d, int norb) {
  OccupationVector occ{Eigen::VectorXd::Zero(2 * norb)};
  for (int p = 0; p < norb; ++p) {
    occ.n(p) = static_cast<double>((d.alpha >> p) & 1U);
    occ.n(norb + p) = static_cast<double>((d.beta >> p) & 1U);
  }
  return occ;
}

}  // namespace ewfsqd
