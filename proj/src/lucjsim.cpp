#include "ewfsqd/lucjsim.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>
#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unsupported/Eigen/MatrixFunctions>

#include "ewfsqd/errors.hpp"

namespace ewfsqd {

void AmplitudeSet::check_symmetry(double tol) const {
  for (int i = 0; i < n_occ; ++i)
    for (int j = 0; j < n_occ; ++j)
      for (int a = 0; a < n_virt; ++a)
        for (int b = 0; b < n_virt; ++b)
          if (std::abs((*this)(i, j, a, b) - (*this)(j, i, b, a)) > tol)
            throw DomainError("t2 not symmetric under (i<->j, a<->b)");
}

AmplitudeSet mp2_amplitudes(const ClusterHamiltonian& ham) {
  if (ham.n_alpha != ham.n_beta)
    throw DomainError("MP2 amplitudes need a closed-shell reference");
  const int no = ham.n_alpha;
  const int M = ham.norb;
  const int nv = M - no;
  Eigen::VectorXd eps = ham.eps;
  if (eps.size() != M) {
    eps.resize(M);
    for (int p = 0; p < M; ++p) {
      double f = ham.h(p, p);
      for (int k = 0; k < no; ++k)
        f += 2.0 * ham.eri_at(p, p, k, k) - ham.eri_at(p, k, k, p);
      eps(p) = f;
    }
  }
  AmplitudeSet t;
  t.n_occ = no;
  t.n_virt = nv;
  t.t1 = Eigen::MatrixXd::Zero(no, nv);
  t.t2.assign(static_cast<std::size_t>(no) * no * nv * nv, 0.0);
  t.eps = eps;
  double e = 0.0;
  for (int i = 0; i < no; ++i)
    for (int j = 0; j < no; ++j)
      for (int a = 0; a < nv; ++a)
        for (int b = 0; b < nv; ++b) {
          const double den = eps(i) + eps(j) - eps(no + a) - eps(no + b);
          if (std::abs(den) < 1e-8) {
            std::ostringstream msg;
            msg << "MP2 denominator " << den << " for orbitals (" << i << ", "
                << j << ", " << no + a << ", " << no + b << ")";
            throw DegeneracyError(msg.str());
          }
          const double iajb = ham.eri_at(i, no + a, j, no + b);
          const double ibja = ham.eri_at(i, no + b, j, no + a);
          const double v = iajb / den;
          t(i, j, a, b) = v;
          e += v * (2.0 * iajb - ibja);
        }
  t.e_mp2 = e;
  return t;
}

AmplitudeSet parse_amplitudes(std::istream& in) {
  AmplitudeSet t;
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> values;
  std::string block;
  std::size_t want = 0;
  auto next_tokens = [&](std::istringstream& ss) {
    std::string tok;
    while (ss >> tok) {
      try {
        values.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ParseError("bad number '" + tok + "'", lineno);
      }
    }
  };
  auto finish_block = [&] {
    if (block == "t1") {
      t.t1.resize(t.n_occ, t.n_virt);
      for (int i = 0; i < t.n_occ; ++i)
        for (int a = 0; a < t.n_virt; ++a) t.t1(i, a) = values[i * t.n_virt + a];
    } else if (block == "t2") {
      t.t2 = values;
    } else if (block == "eps") {
      t.eps = Eigen::Map<Eigen::VectorXd>(values.data(), values.size());
    }
    block.clear();
    values.clear();
  };
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ss(line);
    if (!block.empty()) {
      next_tokens(ss);
      if (values.size() > want) throw ParseError("too many values in " + block, lineno);
      if (values.size() == want) finish_block();
      continue;
    }
    std::string key;
    if (!(ss >> key)) continue;
    if (key == "format") {
      std::string name;
      int version = 0;
      ss >> name >> version;
      if (name != "ewfsqd-amplitudes" || version != 1)
        throw ParseError("not an amplitude file", lineno);
      header = true;
    } else if (!header) {
      throw ParseError("missing format line", lineno);
    } else if (key == "n_occ") {
      ss >> t.n_occ;
    } else if (key == "n_virt") {
      ss >> t.n_virt;
    } else if (key == "e_mp2") {
      ss >> t.e_mp2;
    } else if (key == "t1" || key == "t2" || key == "eps") {
      if (t.n_occ <= 0 || t.n_virt < 0) throw ParseError("dimensions before blocks", lineno);
      block = key;
      want = key == "t1"   ? static_cast<std::size_t>(t.n_occ) * t.n_virt
             : key == "t2" ? static_cast<std::size_t>(t.n_occ) * t.n_occ * t.n_virt * t.n_virt
                           : static_cast<std::size_t>(t.n_occ + t.n_virt);
      if (want == 0) finish_block();
    } else if (key == "end") {
      break;
    } else {
      throw ParseError("unknown keyword '" + key + "'", lineno);
    }
  }
  if (!block.empty()) throw ParseError("truncated " + block + " block", lineno);
  if (t.t2.size() != static_cast<std::size_t>(t.n_occ) * t.n_occ * t.n_virt * t.n_virt)
    throw ParseError("missing t2 block", lineno);
  if (t.t1.size() == 0) t.t1 = Eigen::MatrixXd::Zero(t.n_occ, t.n_virt);
  t.check_symmetry(1e-10);
  return t;
}

AmplitudeSet load_amplitudes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_amplitudes(in);
}

void write_amplitudes(const AmplitudeSet& t, std::ostream& out) {
  out.precision(17);
  out << "format ewfsqd-amplitudes 1\nn_occ " << t.n_occ << "\nn_virt " << t.n_virt
      << "\ne_mp2 " << t.e_mp2 << "\nt1\n";
  for (int i = 0; i < t.t1.rows(); ++i) {
    for (int a = 0; a < t.t1.cols(); ++a) out << (a ? " " : "") << t.t1(i, a);
    out << '\n';
  }
  out << "t2\n";
  const std::size_t row = std::max(1, t.n_virt);
  for (std::size_t k = 0; k < t.t2.size(); ++k)
    out << t.t2[k] << ((k + 1) % row ? ' ' : '\n');
  if (t.eps.size()) {
    out << "eps\n";
    for (int p = 0; p < t.eps.size(); ++p) out << t.eps(p) << '\n';
  }
  out << "end\n";
}

DoubleFactorization double_factorize_t2(const AmplitudeSet& amps, int max_terms) {
  amps.check_symmetry(1e-10);
  const int no = amps.n_occ, nv = amps.n_virt, M = no + nv;
  const int n = no * nv;
  Eigen::MatrixXd T(n, n);
  for (int i = 0; i < no; ++i)
    for (int a = 0; a < nv; ++a)
      for (int j = 0; j < no; ++j)
        for (int b = 0; b < nv; ++b) T(i * nv + a, j * nv + b) = amps(i, j, a, b);
  DoubleFactorization df;
  df.n_occ = no;
  df.n_virt = nv;
  if (n == 0) return df;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  std::vector<int> order(n);
  for (int k = 0; k < n; ++k) order[k] = k;
  const Eigen::VectorXd lam = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return std::abs(lam(x)) > std::abs(lam(y)); });
  const double cutoff = 1e-14 * std::max(1.0, std::abs(lam(order[0])));
  for (int k : order) {
    if (std::abs(lam(k)) <= cutoff) break;
    if (max_terms >= 0 && static_cast<int>(df.terms.size()) >= max_terms) break;
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(M, M);
    for (int i = 0; i < no; ++i)
      for (int a = 0; a < nv; ++a)
        Y(i, no + a) = Y(no + a, i) = es.eigenvectors()(i * nv + a, k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ys(Y);
    Eigen::MatrixXd U = ys.eigenvectors();
    Eigen::VectorXd y = ys.eigenvalues();
    // Gauge: pair columns with rows greedily so U is as close to the identity
    // as the freedom allows, positive diagonal, det +1.
    std::vector<int> perm(M, -1);
    std::vector<char> used(M, 0);
    for (int r = 0; r < M; ++r) {
      int best = -1;
      for (int c = 0; c < M; ++c)
        if (!used[c] && (best < 0 || std::abs(U(r, c)) > std::abs(U(r, best)))) best = c;
      perm[r] = best;
      used[best] = 1;
    }
    Eigen::MatrixXd Up(M, M);
    Eigen::VectorXd yp(M);
    for (int r = 0; r < M; ++r) {
      Up.col(r) = U.col(perm[r]);
      yp(r) = y(perm[r]);
      if (Up(r, r) < 0) Up.col(r) *= -1.0;
    }
    if (Up.determinant() < 0) {
      int weakest = 0;
      for (int r = 1; r < M; ++r)
        if (std::abs(Up(r, r)) < std::abs(Up(weakest, weakest))) weakest = r;
      Up.col(weakest) *= -1.0;
    }
    FactorizationTerm term;
    term.U = Up;
    term.J.resize(M, M);
    for (int p = 0; p < M; ++p)
      for (int q = 0; q <= p; ++q) term.J(p, q) = term.J(q, p) = lam(k) * (yp(p) * yp(q));
    term.eigenvalue = lam(k);
    df.terms.push_back(std::move(term));
  }
  return df;
}

std::vector<double> reconstruct_t2(const DoubleFactorization& df) {
  const int no = df.n_occ, nv = df.n_virt;
  std::vector<double> t(static_cast<std::size_t>(no) * no * nv * nv, 0.0);
  for (const auto& term : df.terms) {
    // sum_pq J_pq U_ap U_ip U_bq U_jq = (W J W^T) with W_(ia),p = U_ap U_ip
    Eigen::MatrixXd W(no * nv, df.norb());
    for (int i = 0; i < no; ++i)
      for (int a = 0; a < nv; ++a)
        W.row(i * nv + a) = term.U.row(no + a).cwiseProduct(term.U.row(i));
    const Eigen::MatrixXd R = W * term.J * W.transpose();
    for (int i = 0; i < no; ++i)
      for (int j = 0; j < no; ++j)
        for (int a = 0; a < nv; ++a)
          for (int b = 0; b < nv; ++b)
            t[((static_cast<std::size_t>(i) * no + j) * nv + a) * nv + b] +=
                R(i * nv + a, j * nv + b);
  }
  return t;
}

double factorization_chi(const DoubleFactorization& df, const AmplitudeSet& amps) {
  const auto tbar = reconstruct_t2(df);
  double chi = 0.0;
  for (std::size_t k = 0; k < tbar.size(); ++k) {
    const double d = tbar[k] - amps.t2[k];
    chi += d * d;
  }
  return 0.5 * chi;
}

Connectivity::Connectivity(int norb)
    : norb_(norb), mask_(decltype(mask_)::Zero(2 * norb, 2 * norb)) {}

void Connectivity::connect(int a, int b) {
  if (a < 0 || b < 0 || a >= 2 * norb_ || b >= 2 * norb_)
    throw ValidationError("connectivity", "spin-orbital index out of range");
  mask_(a, b) = mask_(b, a) = 1;
}

Connectivity Connectivity::all_to_all(int norb) {
  Connectivity c(norb);
  c.mask_.setOnes();
  return c;
}

Connectivity Connectivity::line(int norb) {
  Connectivity c(norb);
  for (int s = 0; s < 2; ++s)
    for (int p = 0; p < norb; ++p) {
      c.connect(s * norb + p, s * norb + p);
      if (p + 1 < norb) c.connect(s * norb + p, s * norb + p + 1);
    }
  return c;
}

Connectivity Connectivity::ladder(int norb) {
  Connectivity c = line(norb);
  for (int p = 0; p < norb; ++p) c.connect(p, norb + p);
  return c;
}

Connectivity Connectivity::from_lists(int norb,
                                      const std::vector<std::vector<int>>& adj) {
  if (static_cast<int>(adj.size()) != 2 * norb)
    throw ValidationError("connectivity", "need one adjacency list per spin-orbital");
  Connectivity c(norb);
  for (int a = 0; a < 2 * norb; ++a)
    for (int b : adj[a]) {
      if (b < 0 || b >= 2 * norb)
        throw ValidationError("connectivity", "spin-orbital index out of range");
      if (std::find(adj[b].begin(), adj[b].end(), a) == adj[b].end())
        throw ValidationError("connectivity", "adjacency lists are not symmetric");
      c.connect(a, b);
    }
  return c;
}

std::vector<std::vector<int>> Connectivity::lists() const {
  std::vector<std::vector<int>> out(2 * norb_);
  for (int a = 0; a < 2 * norb_; ++a)
    for (int b = 0; b < 2 * norb_; ++b)
      if (mask_(a, b)) out[a].push_back(b);
  return out;
}

Eigen::MatrixXd orthogonal_log(const Eigen::MatrixXd& U) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(U, false);
  for (int k = 0; k < es.eigenvalues().size(); ++k)
    if (std::abs(es.eigenvalues()(k) + 1.0) < 1e-6)
      throw BranchError(
          "orbital rotation has an eigenvalue at -1; the principal logarithm is "
          "ambiguous, re-gauge the rotation (flip a column sign pair)");
  Eigen::MatrixXd K = U.log();
  return 0.5 * (K - K.transpose());
}

LucjParams lucj_from_factorization(const DoubleFactorization& df,
                                   const Connectivity& connectivity, int layers) {
  const int M = df.norb();
  if (connectivity.norb() != M)
    throw ValidationError("connectivity", "declared for a different orbital count");
  if (layers < 1) throw ValidationError("lucj", "layer count must be positive");
  LucjParams params;
  params.norb = M;
  if (df.terms.empty()) {
    params.layers.push_back({Eigen::MatrixXd::Zero(M, M), Eigen::MatrixXd::Zero(2 * M, 2 * M)});
    return params;
  }
  if (layers > static_cast<int>(df.terms.size()))
    throw ValidationError("lucj", "more layers than factorization terms");
  for (int mu = 0; mu < layers; ++mu) {
    const auto& term = df.terms[mu];
    LucjLayer layer;
    layer.K = orthogonal_log(term.U);
    layer.J = Eigen::MatrixXd::Zero(2 * M, 2 * M);
    for (int a = 0; a < 2 * M; ++a)
      for (int b = 0; b < 2 * M; ++b)
        if (connectivity.adjacent(a, b)) layer.J(a, b) = term.J(a % M, b % M);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

std::vector<Determinant> Statevector::basis() const {
  return enumerate_space(norb, n_alpha, n_beta);
}

std::complex<double> Statevector::amplitude(const Determinant& d) const {
  const auto as = enumerate_strings(norb, n_alpha);
  const auto bs = enumerate_strings(norb, n_beta);
  auto ia = std::lower_bound(as.begin(), as.end(), d.alpha);
  auto ib = std::lower_bound(bs.begin(), bs.end(), d.beta);
  if (ia == as.end() || *ia != d.alpha || ib == bs.end() || *ib != d.beta) return 0.0;
  return amplitudes(ia - as.begin(), ib - bs.begin());
}

namespace {

using SpMat = Eigen::SparseMatrix<std::complex<double>>;

// One-body operator sum_pq K_pq a+_p a_q on the strings of one spin.
SpMat string_generator(const Eigen::MatrixXd& K, const std::vector<Mask>& strings) {
  std::vector<Eigen::Triplet<std::complex<double>>> trip;
  const int M = static_cast<int>(K.rows());
  for (std::size_t s = 0; s < strings.size(); ++s) {
    const Mask m = strings[s];
    for (Mask occ = m; occ; occ &= occ - 1) {
      const int q = std::countr_zero(occ);
      if (K(q, q) != 0.0) trip.emplace_back(s, s, K(q, q));
      for (int p = 0; p < M; ++p) {
        if ((m >> p) & 1U || K(p, q) == 0.0) continue;
        const Mask t = m ^ (Mask{1} << q) ^ (Mask{1} << p);
        const auto it = std::lower_bound(strings.begin(), strings.end(), t);
        trip.emplace_back(it - strings.begin(), s, single_parity(m, q, p) * K(p, q));
      }
    }
  }
  SpMat A(strings.size(), strings.size());
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

double one_norm(const SpMat& A) {
  double best = 0.0;
  for (int c = 0; c < A.outerSize(); ++c) {
    double s = 0.0;
    for (SpMat::InnerIterator it(A, c); it; ++it) s += std::abs(it.value());
    best = std::max(best, s);
  }
  return best;
}

void apply_phases(const Eigen::MatrixXd& J, Statevector& psi) {
  const int M = psi.norb;
  const auto as = enumerate_strings(M, psi.n_alpha);
  const auto bs = enumerate_strings(M, psi.n_beta);
  std::vector<int> occ;
  for (std::size_t ia = 0; ia < as.size(); ++ia)
    for (std::size_t ib = 0; ib < bs.size(); ++ib) {
      occ.clear();
      for (Mask m = as[ia]; m; m &= m - 1) occ.push_back(std::countr_zero(m));
      for (Mask m = bs[ib]; m; m &= m - 1) occ.push_back(M + std::countr_zero(m));
      double phi = 0.0;
      for (int a : occ)
        for (int b : occ) phi += J(a, b);
      psi.amplitudes(ia, ib) *= std::polar(1.0, phi);
    }
}

}  // namespace

void apply_orbital_rotation(const Eigen::MatrixXd& K, Statevector& psi) {
  const int M = psi.norb;
  const SpMat Aa = string_generator(K, enumerate_strings(M, psi.n_alpha));
  const SpMat Ab = string_generator(K, enumerate_strings(M, psi.n_beta));
  const SpMat AbT = Ab.transpose();
  const double nrm = one_norm(Aa) + one_norm(Ab);
  const int steps = std::max(1, static_cast<int>(std::ceil(nrm / 0.5)));
  Eigen::MatrixXcd& C = psi.amplitudes;
  for (int s = 0; s < steps; ++s) {
    Eigen::MatrixXcd term = C;
    Eigen::MatrixXcd acc = C;
    for (int k = 1; k < 60; ++k) {
      Eigen::MatrixXcd next = Aa * term;
      next += term * AbT;
      term = next / (static_cast<double>(steps) * k);
      acc += term;
      if (term.norm() <= 1e-18 * acc.norm()) break;
    }
    C = std::move(acc);
  }
}

Statevector prepare_lucj_state(int norb, int n_alpha, int n_beta,
                               const LucjParams& params, const LucjOptions& opts) {
  const std::uint64_t dim = sector_dimension(norb, n_alpha, n_beta);
  if (dim > opts.max_dimension)
    throw CapacityError("statevector of " + std::to_string(dim) +
                        " amplitudes exceeds the limit of " +
                        std::to_string(opts.max_dimension));
  if (params.norb != norb) throw DomainError("LUCJ parameters for a different orbital count");
  Statevector psi;
  psi.norb = norb;
  psi.n_alpha = n_alpha;
  psi.n_beta = n_beta;
  psi.amplitudes = Eigen::MatrixXcd::Zero(binomial(norb, n_alpha), binomial(norb, n_beta));
  psi.amplitudes(0, 0) = 1.0;  // aufbau string is the smallest mask
  for (auto it = params.layers.rbegin(); it != params.layers.rend(); ++it) {
    apply_orbital_rotation(-it->K, psi);
    apply_phases(it->J, psi);
    apply_orbital_rotation(it->K, psi);
  }
  return psi;
}

double uniform01(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SampleSet sample_counts(const Statevector& psi, std::uint64_t shots,
                        std::uint64_t seed) {
  if (shots == 0) throw ValidationError("shots", "need at least one shot");
  const auto as = enumerate_strings(psi.norb, psi.n_alpha);
  const auto bs = enumerate_strings(psi.norb, psi.n_beta);
  const std::size_t nb = bs.size();
  std::vector<double> cdf(as.size() * nb);
  double total = 0.0;
  for (std::size_t ia = 0; ia < as.size(); ++ia)
    for (std::size_t ib = 0; ib < nb; ++ib) {
      total += std::norm(psi.amplitudes(ia, ib));
      cdf[ia * nb + ib] = total;
    }
  std::vector<std::uint64_t> counts(cdf.size(), 0);
  std::mt19937_64 rng(seed);
  for (std::uint64_t s = 0; s < shots; ++s) {
    const double u = uniform01(rng()) * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    ++counts[it - cdf.begin()];
  }
  std::vector<SampleEntry> entries;
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k]) entries.push_back({{as[k / nb], bs[k % nb]}, counts[k]});
  return SampleSet::from_entries(psi.norb, std::move(entries));
}

SampleSet inject_readout_noise(const SampleSet& s, double eps, std::uint64_t seed) {
  if (!(eps >= 0.0 && eps <= 1.0))
    throw ValidationError("noise", "flip probability outside [0, 1]");
  return inject_readout_noise(s, NoiseModel::symmetric(eps), seed);
}

SampleSet inject_readout_noise(const SampleSet& s, const NoiseModel& noise,
                               std::uint64_t seed) {
  for (double p : {noise.flip_0to1, noise.flip_1to0})
    if (!(p >= 0.0 && p <= 1.0))
      throw ValidationError("noise", "flip probability outside [0, 1]");
  const int M = s.norb();
  std::mt19937_64 rng(seed);
  std::map<Determinant, std::uint64_t> out;
  for (const auto& e : s.entries())
    for (std::uint64_t c = 0; c < e.count; ++c) {
      Determinant d = e.bits;
      for (int k = 0; k < 2 * M; ++k) {
        Mask& m = k < M ? d.alpha : d.beta;
        const Mask bit = Mask{1} << (k % M);
        const double p = (m & bit) ? noise.flip_1to0 : noise.flip_0to1;
        if (uniform01(rng()) < p) m ^= bit;
      }
      ++out[d];
    }
  std::vector<SampleEntry> entries;
  entries.reserve(out.size());
  for (const auto& [d, c] : out) entries.push_back({d, c});
  return SampleSet::from_entries(M, std::move(entries));
}

}  // namespace ewfsqd
