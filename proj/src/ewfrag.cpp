#include "ewfsqd/ewfrag.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "ewfsqd/errors.hpp"

namespace ewfsqd {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd hstack(std::initializer_list<const MatrixXd*> blocks, int rows) {
  int cols = 0;
  for (const auto* b : blocks) cols += static_cast<int>(b->cols());
  MatrixXd out(rows, cols);
  int c = 0;
  for (const auto* b : blocks) {
    if (b->cols()) out.middleCols(c, b->cols()) = *b;
    c += static_cast<int>(b->cols());
  }
  return out;
}

// Rotates the columns of X to diagonalize X^T F X; eigenvalues ascending.
void canonicalize(const MatrixXd& F, MatrixXd& X, VectorXd& eps) {
  if (X.cols() == 0) {
    eps.resize(0);
    return;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(X.transpose() * F * X);
  X = X * es.eigenvectors();
  eps = es.eigenvalues();
}

// (ia|jb) over occupied columns O and virtual columns V, index ((i*nv+a)*no+j)*nv+b.
std::vector<double> ovov(const LocalIntegrals& li, const MatrixXd& O, const MatrixXd& V) {
  const int n = li.n;
  const int no = static_cast<int>(O.cols()), nv = static_cast<int>(V.cols());
  // Half transform: (ia|rs) then contract r, s.
  std::vector<double> half(static_cast<std::size_t>(no) * nv * n * n, 0.0);
  for (int r = 0; r < n; ++r)
    for (int s = 0; s < n; ++s) {
      MatrixXd blk(n, n);
      for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) blk(p, q) = li.eri_at(p, q, r, s);
      const MatrixXd t = O.transpose() * blk * V;  // no x nv
      for (int i = 0; i < no; ++i)
        for (int a = 0; a < nv; ++a)
          half[((static_cast<std::size_t>(i) * nv + a) * n + r) * n + s] = t(i, a);
    }
  std::vector<double> out(static_cast<std::size_t>(no) * nv * no * nv);
  for (int i = 0; i < no; ++i)
    for (int a = 0; a < nv; ++a) {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          blk(half.data() + (static_cast<std::size_t>(i) * nv + a) * n * n, n, n);
      const MatrixXd t = O.transpose() * blk * V;
      for (int j = 0; j < no; ++j)
        for (int b = 0; b < nv; ++b)
          out[((static_cast<std::size_t>(i) * nv + a) * no + j) * nv + b] = t(j, b);
    }
  return out;
}

struct Mp2Amps {
  int no = 0, nv = 0;
  std::vector<double> t;  // t_ij^ab at ((i*no+j)*nv+a)*nv+b
  double operator()(int i, int j, int a, int b) const {
    return t[((static_cast<std::size_t>(i) * no + j) * nv + a) * nv + b];
  }
};

Mp2Amps mp2(const LocalIntegrals& li, const MatrixXd& O, const VectorXd& eo,
            const MatrixXd& V, const VectorXd& ev) {
  Mp2Amps m;
  m.no = static_cast<int>(O.cols());
  m.nv = static_cast<int>(V.cols());
  const auto g = ovov(li, O, V);
  m.t.resize(static_cast<std::size_t>(m.no) * m.no * m.nv * m.nv);
  for (int i = 0; i < m.no; ++i)
    for (int j = 0; j < m.no; ++j)
      for (int a = 0; a < m.nv; ++a)
        for (int b = 0; b < m.nv; ++b) {
          const double den = eo(i) + eo(j) - ev(a) - ev(b);
          if (std::abs(den) < 1e-8) {
            std::ostringstream msg;
            msg << "MP2 denominator " << den << " for occupied " << i << ", " << j
                << " and virtual " << a << ", " << b;
            throw DegeneracyError(msg.str());
          }
          m.t[((static_cast<std::size_t>(i) * m.no + j) * m.nv + a) * m.nv + b] =
              g[((static_cast<std::size_t>(i) * m.nv + a) * m.no + j) * m.nv + b] / den;
        }
  return m;
}

MatrixXd mp2_virtual_density(const Mp2Amps& t) {
  MatrixXd dvv = MatrixXd::Zero(t.nv, t.nv);
  for (int i = 0; i < t.no; ++i)
    for (int j = 0; j < t.no; ++j)
      for (int a = 0; a < t.nv; ++a)
        for (int b = 0; b < t.nv; ++b) {
          double v = 0.0;
          for (int c = 0; c < t.nv; ++c)
            v += 2.0 * t(i, j, c, a) * t(i, j, c, b) - t(i, j, c, a) * t(i, j, b, c);
          dvv(a, b) += v;
        }
  return dvv + dvv.transpose();
}

MatrixXd mp2_occupied_density(const Mp2Amps& t) {
  MatrixXd doo = MatrixXd::Zero(t.no, t.no);
  for (int i = 0; i < t.no; ++i)
    for (int x = 0; x < t.no; ++x)
      for (int y = 0; y < t.no; ++y) {
        double v = 0.0;
        for (int a = 0; a < t.nv; ++a)
          for (int b = 0; b < t.nv; ++b)
            v += 2.0 * t(i, x, a, b) * t(i, y, a, b) - t(i, x, a, b) * t(i, y, b, a);
        doo(x, y) += v;
      }
  return 2.0 * MatrixXd::Identity(t.no, t.no) - doo - doo.transpose();
}

struct NaturalOrbitals {
  VectorXd occupations;
  MatrixXd orbitals;  // columns over the local basis
};

// Diagonalizes the block of `dens` (expressed over columns `basis`) that lies in
// span(env); orbitals sorted by `descending` occupation.
NaturalOrbitals env_natural_orbitals(const MatrixXd& dens, const MatrixXd& basis,
                                     const MatrixXd& env, bool descending) {
  NaturalOrbitals no;
  if (env.cols() == 0) {
    no.occupations.resize(0);
    no.orbitals.resize(env.rows(), 0);
    return no;
  }
  const MatrixXd E = env.transpose() * basis;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(E * dens * E.transpose());
  const int k = static_cast<int>(env.cols());
  no.occupations.resize(k);
  no.orbitals.resize(env.rows(), k);
  for (int c = 0; c < k; ++c) {
    const int src = descending ? k - 1 - c : c;
    no.occupations(c) = es.eigenvalues()(src);
    no.orbitals.col(c) = env * es.eigenvectors().col(src);
  }
  return no;
}

MatrixXd lowdin_clean(const MatrixXd& X) {
  if (X.cols() == 0) return X;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(X.transpose() * X);
  return X * es.operatorInverseSqrt();
}

}  // namespace

std::vector<double> transform_eri(const std::vector<double>& eri, int n,
                                  const Eigen::MatrixXd& C) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const int m = static_cast<int>(C.cols());
  std::vector<double> cur = eri;
  std::size_t rest = static_cast<std::size_t>(n) * n * n;
  int lead = n;
  // Each pass contracts the leading index and moves the new one to the back.
  for (int pass = 0; pass < 4; ++pass) {
    Eigen::Map<const RowMat> A(cur.data(), lead, rest);
    RowMat B = A.transpose() * C;  // rest x m
    cur.assign(B.data(), B.data() + B.size());
    rest = rest / (pass < 3 ? n : 1) * (pass < 3 ? m : 1);
    lead = pass < 3 ? n : m;
    if (pass == 3) break;
  }
  return cur;
}

LocalBasis orthogonalize_localize(const MeanFieldBundle& mf) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(mf.S);
  const VectorXd s = es.eigenvalues();
  if (!(s.minCoeff() > 0.0))
    throw ValidationError("overlap", "S is not positive definite");
  const double cond = s.maxCoeff() / s.minCoeff();
  if (cond > 1e10) {
    std::ostringstream msg;
    msg << "condition number " << cond << " exceeds 1e10";
    throw ValidationError("overlap", msg.str());
  }
  LocalBasis b;
  b.T = es.eigenvectors() * s.cwiseSqrt().cwiseInverse().asDiagonal() *
        es.eigenvectors().transpose();
  b.atom = mf.ao_atom;
  if (b.atom.size() != static_cast<std::size_t>(mf.n_ao)) b.atom.assign(mf.n_ao, 0);
  return b;
}

Eigen::MatrixXd LocalIntegrals::mean_field_potential(const Eigen::MatrixXd& dens) const {
  MatrixXd V = MatrixXd::Zero(n, n);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q) {
      double j = 0.0, k = 0.0;
      for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s) {
          j += eri_at(p, q, r, s) * dens(r, s);
          k += eri_at(p, r, q, s) * dens(r, s);
        }
      V(p, q) = j - 0.5 * k;
    }
  return V;
}

double LocalIntegrals::mean_field_energy(const Eigen::MatrixXd& dens) const {
  const MatrixXd V = mean_field_potential(dens);
  return e_nuc + (dens.array() * (h + 0.5 * V).array()).sum();
}

LocalIntegrals local_integrals(const MeanFieldBundle& mf, const LocalBasis& basis) {
  LocalIntegrals li;
  li.n = mf.n_ao;
  li.n_elec = mf.n_elec;
  li.e_nuc = mf.e_nuc;
  const MatrixXd Tinv = basis.T.inverse();  // S^(1/2)
  li.D = Tinv * mf.D * Tinv.transpose();
  li.D = 0.5 * (li.D + li.D.transpose()).eval();
  li.h = basis.T.transpose() * mf.h * basis.T;
  li.h = 0.5 * (li.h + li.h.transpose()).eval();
  li.eri = transform_eri(mf.eri, li.n, basis.T);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(li.D);
  if (es.eigenvalues().minCoeff() < -1e-8 || es.eigenvalues().maxCoeff() > 2.0 + 1e-8)
    throw ValidationError("density", "local density eigenvalues outside [0, 2]");
  li.F = li.h + li.mean_field_potential(li.D);
  li.e_hf = li.mean_field_energy(li.D);
  return li;
}

FragmentSpec FragmentSpec::per_atom(const LocalBasis& basis) {
  std::map<int, std::vector<int>> by_atom;
  for (std::size_t p = 0; p < basis.atom.size(); ++p)
    by_atom[basis.atom[p]].push_back(static_cast<int>(p));
  FragmentSpec spec;
  for (auto& [atom, idx] : by_atom) {
    spec.groups.push_back(idx);
    spec.labels.push_back("atom" + std::to_string(atom));
  }
  return spec;
}

FragmentSpec FragmentSpec::whole_system(int n) {
  FragmentSpec spec;
  spec.groups.emplace_back();
  for (int p = 0; p < n; ++p) spec.groups.back().push_back(p);
  spec.labels.push_back("all");
  return spec;
}

void FragmentSpec::validate(int n) const {
  if (labels.size() != groups.size())
    throw ValidationError("fragments", "one label per fragment required");
  std::vector<int> seen(std::max(n, 0), 0);
  for (const auto& g : groups) {
    if (g.empty()) throw ValidationError("fragments", "empty fragment");
    for (int p : g) {
      if (p < 0 || p >= n)
        throw ValidationError("fragments", "orbital " + std::to_string(p) + " out of range");
      if (seen[p]++)
        throw ValidationError("fragments", "orbital " + std::to_string(p) + " in two fragments");
    }
  }
  for (int p = 0; p < n; ++p)
    if (!seen[p])
      throw ValidationError("fragments", "orbital " + std::to_string(p) + " not covered");
}

SchmidtResult schmidt_bath(const Eigen::MatrixXd& D, const std::vector<int>& fragment,
                           double svd_cutoff) {
  const int n = static_cast<int>(D.rows());
  std::set<int> frag(fragment.begin(), fragment.end());
  std::vector<int> env;
  for (int p = 0; p < n; ++p)
    if (!frag.count(p)) env.push_back(p);
  const std::vector<int> F(frag.begin(), frag.end());
  SchmidtResult r;
  const int ne = static_cast<int>(env.size());
  if (ne == 0) {
    r.bath.resize(n, 0);
    r.frozen_occ.resize(n, 0);
    r.frozen_virt.resize(n, 0);
    r.singular_values.resize(0);
    return r;
  }
  MatrixXd block(ne, F.size());
  for (int e = 0; e < ne; ++e)
    for (std::size_t f = 0; f < F.size(); ++f) block(e, f) = D(env[e], F[f]);
  Eigen::JacobiSVD<MatrixXd> svd(block, Eigen::ComputeFullU);
  const VectorXd sv = svd.singularValues();
  int rank = 0;
  while (rank < sv.size() && sv(rank) > svd_cutoff) ++rank;
  r.singular_values = sv.head(rank);
  MatrixXd Uenv = MatrixXd::Zero(n, ne);
  for (int e = 0; e < ne; ++e) Uenv.row(env[e]) = svd.matrixU().row(e);
  r.bath = Uenv.leftCols(rank);
  const MatrixXd W = Uenv.rightCols(ne - rank);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es;
  if (W.cols()) es.compute(W.transpose() * D * W);
  std::vector<int> occ, vir;
  for (int k = 0; k < W.cols(); ++k) {
    const double lam = es.eigenvalues()(k);
    if (std::abs(lam - 2.0) <= 1e-4)
      occ.push_back(k);
    else if (std::abs(lam) <= 1e-4)
      vir.push_back(k);
    else {
      std::ostringstream msg;
      msg << "environment orbital occupation " << lam << " is neither 0 nor 2";
      throw ValidationError("idempotency", msg.str());
    }
  }
  r.frozen_occ.resize(n, occ.size());
  r.frozen_virt.resize(n, vir.size());
  // Occupied in descending occupation, virtual ascending: eigenvalues ascend.
  for (std::size_t k = 0; k < occ.size(); ++k)
    r.frozen_occ.col(k) = W * es.eigenvectors().col(occ[occ.size() - 1 - k]);
  for (std::size_t k = 0; k < vir.size(); ++k)
    r.frozen_virt.col(k) = W * es.eigenvectors().col(vir[k]);
  return r;
}

EwfCluster bno_expand(const LocalIntegrals& li, const std::vector<int>& fragment,
                      const SchmidtResult& schmidt, double eta) {
  const int n = li.n;
  if (eta > 2.0) throw ValidationError("eta", "must not exceed 2");
  MatrixXd Cf = MatrixXd::Zero(n, fragment.size());
  for (std::size_t k = 0; k < fragment.size(); ++k) Cf(fragment[k], k) = 1.0;
  const MatrixXd dmet = hstack({&Cf, &schmidt.bath}, n);

  // Split the DMET cluster into its occupied and virtual parts.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(dmet.transpose() * li.D * dmet);
  std::vector<int> io, iv;
  for (int k = 0; k < dmet.cols(); ++k) {
    const double lam = es.eigenvalues()(k);
    if (std::abs(lam - 2.0) <= 1e-4) io.push_back(k);
    else if (std::abs(lam) <= 1e-4) iv.push_back(k);
    else
      throw ValidationError("idempotency", "DMET cluster occupation " + std::to_string(lam));
  }
  MatrixXd Co(n, io.size()), Cv(n, iv.size());
  for (std::size_t k = 0; k < io.size(); ++k) Co.col(k) = dmet * es.eigenvectors().col(io[k]);
  for (std::size_t k = 0; k < iv.size(); ++k) Cv.col(k) = dmet * es.eigenvectors().col(iv[k]);

  const MatrixXd& env_occ = schmidt.frozen_occ;
  const MatrixXd& env_vir = schmidt.frozen_virt;

  // (i) cluster occupieds -> all virtuals: virtual-environment density.
  NaturalOrbitals vno{VectorXd::Zero(env_vir.cols()), env_vir};
  if (env_vir.cols() && Co.cols()) {
    MatrixXd O = Co, V = hstack({&Cv, &env_vir}, n);
    VectorXd eo, ev;
    canonicalize(li.F, O, eo);
    canonicalize(li.F, V, ev);
    const auto t = mp2(li, O, eo, V, ev);
    vno = env_natural_orbitals(mp2_virtual_density(t), V, env_vir, true);
  }
  // (ii) all occupieds -> cluster virtuals: occupied-environment density.
  NaturalOrbitals ono{VectorXd::Constant(env_occ.cols(), 2.0), env_occ};
  if (env_occ.cols() && Cv.cols()) {
    MatrixXd O = hstack({&Co, &env_occ}, n), V = Cv;
    VectorXd eo, ev;
    canonicalize(li.F, O, eo);
    canonicalize(li.F, V, ev);
    const auto t = mp2(li, O, eo, V, ev);
    ono = env_natural_orbitals(mp2_occupied_density(t), O, env_occ, false);
  }

  int keep_v = 0, keep_o = 0;
  for (int k = 0; k < vno.occupations.size(); ++k)
    if (eta <= 0.0 || vno.occupations(k) > eta) keep_v = k + 1;
  for (int k = 0; k < ono.occupations.size(); ++k)
    if (eta <= 0.0 || ono.occupations(k) < 2.0 - eta) keep_o = k + 1;

  EwfCluster c;
  c.fragment = fragment;
  c.n_bath = static_cast<int>(schmidt.bath.cols());
  c.n_bno_occ = keep_o;
  c.n_bno_vir = keep_v;
  c.occ_env_occupations = ono.occupations;
  c.vir_env_occupations = vno.occupations;
  c.frozen_occ = ono.orbitals.rightCols(ono.orbitals.cols() - keep_o);
  c.frozen_virt = vno.orbitals.rightCols(vno.orbitals.cols() - keep_v);

  const MatrixXd bno_o = ono.orbitals.leftCols(keep_o);
  const MatrixXd bno_v = vno.orbitals.leftCols(keep_v);
  MatrixXd occ = lowdin_clean(hstack({&Co, &bno_o}, n));
  MatrixXd vir = lowdin_clean(hstack({&Cv, &bno_v}, n));
  VectorXd eo, ev;
  canonicalize(li.F, occ, eo);
  canonicalize(li.F, vir, ev);
  c.columns = hstack({&occ, &vir}, n);
  c.n_occ = static_cast<int>(occ.cols());
  c.eps.resize(eo.size() + ev.size());
  c.eps << eo, ev;
  MatrixXd Pi = MatrixXd::Zero(n, n);
  for (int p : fragment) Pi(p, p) = 1.0;
  c.projector = c.columns.transpose() * Pi * c.columns;
  return c;
}

ClusterHamiltonian extract_cluster_hamiltonian(const LocalIntegrals& li,
                                               const EwfCluster& cluster,
                                               Eigen::MatrixXd* core_potential) {
  const int m = cluster.n_mo();
  if (m == 0) throw DomainError("cluster has an empty active space");
  const int frozen_elec = 2 * static_cast<int>(cluster.frozen_occ.cols());
  if (li.n_elec - frozen_elec - 2 * cluster.n_occ != 0 || (li.n_elec - frozen_elec) % 2)
    throw ValidationError("closed shell",
                          "frozen and active electrons do not add up to a closed shell");
  const MatrixXd& C = cluster.columns;
  const MatrixXd Df = 2.0 * cluster.frozen_occ * cluster.frozen_occ.transpose();
  const MatrixXd V = li.mean_field_potential(Df);
  ClusterHamiltonian ham(m, cluster.n_occ, cluster.n_occ);
  ham.h = C.transpose() * (li.h + V) * C;
  ham.h = 0.5 * (ham.h + ham.h.transpose()).eval();
  ham.e0 = li.e_nuc + (Df.array() * (li.h + 0.5 * V).array()).sum();
  ham.eri = transform_eri(li.eri, li.n, C);
  ham.eps = cluster.eps;
  if (core_potential) {
    *core_potential = C.transpose() * V * C;
    *core_potential = 0.5 * (*core_potential + core_potential->transpose()).eval();
  }
  return ham;
}

Fragmentation fragment_system(const MeanFieldBundle& mf, const FragmentSpec& spec,
                              double eta) {
  Fragmentation out;
  out.basis = orthogonalize_localize(mf);
  out.integrals = local_integrals(mf, out.basis);
  spec.validate(out.integrals.n);
  for (std::size_t g = 0; g < spec.groups.size(); ++g) {
    const auto schmidt = schmidt_bath(out.integrals.D, spec.groups[g]);
    EwfCluster c = bno_expand(out.integrals, spec.groups[g], schmidt, eta);
    c.id = "c" + std::to_string(g) + "_" + spec.labels[g];
    out.clusters.push_back(std::move(c));
  }
  return out;
}

}  // namespace ewfsqd
