#include <algorithm>
#include <bit>
#include <thread>

#include "ewfsqd/cisolve.hpp"
#include "ewfsqd/errors.hpp"

namespace ewfsqd {

SubspaceBasis::SubspaceBasis(int norb, std::vector<Determinant> dets)
    : norb_(norb), dets_(std::move(dets)) {
  std::sort(dets_.begin(), dets_.end());
  dets_.erase(std::unique(dets_.begin(), dets_.end()), dets_.end());
  if (dets_.empty()) return;
  n_alpha_ = dets_.front().n_alpha();
  n_beta_ = dets_.front().n_beta();
  const Mask outside = ~low_bits(norb);
  for (const auto& d : dets_) {
    if (d.n_alpha() != n_alpha_ || d.n_beta() != n_beta_)
      throw DomainError("subspace mixes particle-number sectors");
    if ((d.alpha | d.beta) & outside)
      throw DomainError("determinant occupies orbitals beyond norb");
  }
}

SubspaceBasis SubspaceBasis::full_space(int norb, int n_alpha, int n_beta) {
  SubspaceBasis b;
  b.norb_ = norb;
  b.n_alpha_ = n_alpha;
  b.n_beta_ = n_beta;
  b.dets_ = enumerate_space(norb, n_alpha, n_beta);
  return b;
}

SubspaceBasis SubspaceBasis::product(int norb, const std::vector<Mask>& alpha,
                                     const std::vector<Mask>& beta) {
  std::vector<Determinant> dets;
  dets.reserve(alpha.size() * beta.size());
  for (Mask a : alpha)
    for (Mask b : beta) dets.push_back({a, b});
  return SubspaceBasis(norb, std::move(dets));
}

std::optional<std::size_t> SubspaceBasis::index_of(const Determinant& d) const {
  auto it = std::lower_bound(dets_.begin(), dets_.end(), d);
  if (it == dets_.end() || *it != d) return std::nullopt;
  return static_cast<std::size_t>(it - dets_.begin());
}

namespace {

std::vector<Mask> unique_sorted(std::vector<Mask> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

void neighbour_lists(const std::vector<Mask>& strings,
                     std::vector<std::vector<int>>& n1,
                     std::vector<std::vector<int>>& n2) {
  const std::size_t n = strings.size();
  n1.assign(n, {});
  n2.assign(n, {});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const int d = std::popcount(strings[i] ^ strings[j]);
      if (d == 2) {
        n1[i].push_back(static_cast<int>(j));
        n1[j].push_back(static_cast<int>(i));
      } else if (d == 4) {
        n2[i].push_back(static_cast<int>(j));
        n2[j].push_back(static_cast<int>(i));
      }
    }
  for (auto& v : n1) std::sort(v.begin(), v.end());
  for (auto& v : n2) std::sort(v.begin(), v.end());
}

int string_index(const std::vector<Mask>& strings, Mask m) {
  return static_cast<int>(std::lower_bound(strings.begin(), strings.end(), m) -
                          strings.begin());
}

}  // namespace

ConnectionIndex::ConnectionIndex(const SubspaceBasis& basis) : basis_(&basis) {
  std::vector<Mask> a, b;
  a.reserve(basis.size());
  b.reserve(basis.size());
  for (const auto& d : basis.dets()) {
    a.push_back(d.alpha);
    b.push_back(d.beta);
  }
  alpha_ = unique_sorted(std::move(a));
  beta_ = unique_sorted(std::move(b));
  neighbour_lists(alpha_, alpha_n1_, alpha_n2_);
  neighbour_lists(beta_, beta_n1_, beta_n2_);
  det_alpha_.resize(basis.size());
  det_beta_.resize(basis.size());
  by_alpha_.assign(alpha_.size(), {});
  for (std::size_t i = 0; i < basis.size(); ++i) {
    det_alpha_[i] = string_index(alpha_, basis[i].alpha);
    det_beta_[i] = string_index(beta_, basis[i].beta);
    by_alpha_[det_alpha_[i]].emplace_back(det_beta_[i], i);
  }
  // Determinants are sorted by (alpha, beta), so each list is already sorted.
}

std::vector<std::size_t> ConnectionIndex::connections(std::size_t i) const {
  std::vector<std::size_t> out;
  const int a = det_alpha_[i];
  const int b = det_beta_[i];
  const Mask bmask = beta_[b];

  auto visit_alpha = [&](int a2, int beta_budget) {
    const auto& list = by_alpha_[a2];
    // beta_budget: allowed beta excitation degree.
    std::size_t candidates = 1;
    if (beta_budget >= 1) candidates += beta_n1_[b].size();
    if (beta_budget >= 2) candidates += beta_n2_[b].size();
    if (list.size() <= 4 * candidates) {
      for (const auto& [bj, j] : list)
        if (std::popcount(beta_[bj] ^ bmask) <= 2 * beta_budget) out.push_back(j);
      return;
    }
    auto find = [&](int bj) {
      auto it = std::lower_bound(
          list.begin(), list.end(), bj,
          [](const std::pair<int, std::size_t>& e, int v) { return e.first < v; });
      if (it != list.end() && it->first == bj) out.push_back(it->second);
    };
    find(b);
    if (beta_budget >= 1)
      for (int bj : beta_n1_[b]) find(bj);
    if (beta_budget >= 2)
      for (int bj : beta_n2_[b]) find(bj);
  };

  visit_alpha(a, 2);
  for (int a2 : alpha_n1_[a]) visit_alpha(a2, 1);
  for (int a2 : alpha_n2_[a]) visit_alpha(a2, 0);
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::MatrixXd LinearOperator::to_dense() const {
  const std::size_t n = dim();
  Eigen::MatrixXd m(n, n);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n), y(n);
  for (std::size_t j = 0; j < n; ++j) {
    e(j) = 1.0;
    apply(e, y);
    m.col(j) = y;
    e(j) = 0.0;
  }
  return m;
}

namespace {

template <class F>
void parallel_rows(std::size_t n, int threads, F&& f) {
  const int t = std::max(1, std::min<int>(threads, static_cast<int>(n / 64 + 1)));
  if (t == 1) {
    f(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + t - 1) / t;
  for (int k = 0; k < t; ++k) {
    const std::size_t lo = k * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&f, lo, hi] { f(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

ProjectedHamiltonian::ProjectedHamiltonian(const ClusterHamiltonian& ham,
                                           const SubspaceBasis& basis,
                                           bool matrix_free, int threads)
    : ham_(&ham),
      basis_(&basis),
      index_(std::make_shared<ConnectionIndex>(basis)),
      threads_(threads) {
  if (basis.empty()) throw DomainError("projected Hamiltonian on empty subspace");
  if (basis.n_alpha() != ham.n_alpha || basis.n_beta() != ham.n_beta ||
      basis.norb() != ham.norb)
    throw DomainError("subspace sector differs from the Hamiltonian's");
  const std::size_t n = basis.size();
  diag_.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    diag_(i) = detail::diagonal_element(ham, basis[i]);
  if (matrix_free) return;

  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
  parallel_rows(n, threads_, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      auto& row = rows[i];
      for (std::size_t j : index_->connections(i))
        row.emplace_back(j, i == j ? diag_(i)
                                   : detail::connected_element(ham, basis[i],
                                                               basis[j]));
    }
  });
  auto m = std::make_unique<Eigen::SparseMatrix<double, Eigen::RowMajor>>(n, n);
  Eigen::VectorXi nnz(n);
  for (std::size_t i = 0; i < n; ++i) nnz(i) = static_cast<int>(rows[i].size());
  m->reserve(nnz);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& [j, v] : rows[i]) m->insert(i, j) = v;
  m->makeCompressed();
  sparse_ = std::move(m);
}

void ProjectedHamiltonian::apply(const Eigen::VectorXd& x,
                                 Eigen::VectorXd& y) const {
  if (sparse_) {
    y.noalias() = *sparse_ * x;
    return;
  }
  const std::size_t n = dim();
  y.resize(n);
  parallel_rows(n, threads_, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      double acc = 0.0;
      for (std::size_t j : index_->connections(i))
        acc += (i == j ? diag_(i)
                       : detail::connected_element(*ham_, (*basis_)[i],
                                                   (*basis_)[j])) *
               x(j);
      y(i) = acc;
    }
  });
}

Eigen::MatrixXd ProjectedHamiltonian::to_dense() const {
  if (!sparse_) return LinearOperator::to_dense();
  return Eigen::MatrixXd(*sparse_);
}

double ProjectedHamiltonian::element(std::size_t i, std::size_t j) const {
  if (i == j) return diag_(i);
  return detail::connected_element(*ham_, (*basis_)[i], (*basis_)[j]);
}

ProjectedHamiltonian build_projected_hamiltonian(const ClusterHamiltonian& ham,
                                                 const SubspaceBasis& basis,
                                                 bool matrix_free) {
  return ProjectedHamiltonian(ham, basis, matrix_free);
}

}  // namespace ewfsqd
