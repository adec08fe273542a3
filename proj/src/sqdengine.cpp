#include "ewfsqd/sqdengine.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include "ewfsqd/errors.hpp"
#include "ewfsqd/lucjsim.hpp"
#include "json.hpp"

namespace ewfsqd {

void RecoveryConfig::validate() const {
  if (samples_per_batch < 1) throw ValidationError("samples_per_batch", "must be >= 1");
  if (n_batches < 1) throw ValidationError("n_batches", "must be >= 1");
  if (max_iters < 1) throw ValidationError("max_iters", "must be >= 1");
  if (!(e_tol > 0)) throw ValidationError("e_tol", "must be > 0");
  if (!(occ_tol > 0)) throw ValidationError("occ_tol", "must be > 0");
  if (!(carryover_threshold > 0))
    throw ValidationError("carryover_threshold", "must be > 0");
  if (!(ext_dominance_threshold >= 0))
    throw ValidationError("ext_dominance_threshold", "must be >= 0");
  if (max_subspace < 1) throw ValidationError("max_subspace", "must be >= 1");
  if (threads < 1) throw ValidationError("threads", "must be >= 1");
}

namespace {

std::uint64_t next_u64(std::mt19937_64& rng) { return rng(); }

// Picks index k with probability w[k] / sum(w); uniform when all weights vanish.
int weighted_pick(const std::vector<double>& w, std::mt19937_64& rng) {
  double total = 0.0;
  for (double x : w) total += x;
  const double u = uniform01(next_u64(rng));
  if (!(total > 0.0)) return static_cast<int>(u * w.size());
  const double target = u * total;
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    acc += w[k];
    if (target < acc) return static_cast<int>(k);
  }
  // Rounding: last positive weight.
  for (std::size_t k = w.size(); k-- > 0;)
    if (w[k] > 0) return static_cast<int>(k);
  return static_cast<int>(w.size()) - 1;
}

Mask repair_half(Mask m, int target, int norb, const double* n,
                 std::mt19937_64& rng) {
  std::vector<int> cand;
  std::vector<double> w;
  while (std::popcount(m) != target) {
    const bool surplus = std::popcount(m) > target;
    cand.clear();
    w.clear();
    for (int p = 0; p < norb; ++p) {
      const bool occ = (m >> p) & 1U;
      if (occ != surplus) continue;
      cand.push_back(p);
      const double np = std::clamp(n[p], 0.0, 1.0);
      w.push_back(surplus ? 1.0 - np : np);
    }
    m ^= Mask{1} << cand[weighted_pick(w, rng)];
  }
  return m;
}

OccupationVector hf_occupations(int norb, int na, int nb) {
  return OccupationVector::of(hf_determinant(na, nb), norb);
}

OccupationVector initial_occupations(const SampleSet& in_sector, int norb, int na,
                                     int nb) {
  if (in_sector.empty()) return hf_occupations(norb, na, nb);
  OccupationVector occ{Eigen::VectorXd::Zero(2 * norb)};
  for (const auto& e : in_sector.entries()) {
    const double w = static_cast<double>(e.count);
    for (int p = 0; p < norb; ++p) {
      occ.n(p) += w * ((e.bits.alpha >> p) & 1U);
      occ.n(norb + p) += w * ((e.bits.beta >> p) & 1U);
    }
  }
  occ.n /= static_cast<double>(in_sector.total_shots());
  return occ;
}

struct Pools {
  std::vector<Mask> alpha, beta;
  bool merged = false;
  bool truncated = false;

  std::size_t dim() const {
    return merged ? alpha.size() * alpha.size() : alpha.size() * beta.size();
  }
};

// Keeps the `keep` heaviest strings; ties broken by mask for determinism.
std::vector<Mask> heaviest(const std::map<Mask, double>& weight, std::size_t keep) {
  std::vector<std::pair<double, Mask>> v;
  for (const auto& [m, w] : weight) v.emplace_back(w, m);
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<Mask> out;
  for (std::size_t k = 0; k < std::min(keep, v.size()); ++k) out.push_back(v[k].second);
  std::sort(out.begin(), out.end());
  return out;
}

Pools build_pools(const std::vector<Determinant>& drawn,
                  const std::vector<Determinant>& carry, bool merged,
                  std::size_t cap) {
  const double pinned = std::numeric_limits<double>::infinity();
  std::map<Mask, double> wa, wb;
  auto& wbeta = merged ? wa : wb;
  for (const auto& d : drawn) {
    wa[d.alpha] += 1.0;
    wbeta[d.beta] += 1.0;
  }
  for (const auto& d : carry) {
    wa[d.alpha] = pinned;
    wbeta[d.beta] = pinned;
  }
  Pools p;
  p.merged = merged;
  if (merged) {
    std::size_t keep = wa.size();
    while (keep > 1 && keep * keep > cap) --keep;
    p.truncated = keep < wa.size();
    p.alpha = heaviest(wa, keep);
    p.beta = p.alpha;
    return p;
  }
  std::size_t ka = wa.size(), kb = wb.size();
  while (ka * kb > cap && (ka > 1 || kb > 1)) {
    if (ka >= kb) --ka;
    else --kb;
  }
  p.truncated = ka < wa.size() || kb < wb.size();
  p.alpha = heaviest(wa, ka);
  p.beta = heaviest(wb, kb);
  return p;
}

}  // namespace

SampleSet postselect(const SampleSet& raw, int n_alpha, int n_beta) {
  std::vector<SampleEntry> keep;
  for (const auto& e : raw.entries())
    if (e.bits.n_alpha() == n_alpha && e.bits.n_beta() == n_beta) keep.push_back(e);
  return SampleSet::from_entries(raw.norb(), std::move(keep));
}

SampleSet postselect_and_recover(const SampleSet& raw, const OccupationVector& n,
                                 int n_alpha, int n_beta, std::uint64_t seed) {
  const int M = raw.norb();
  if (n.norb() != M) throw DomainError("occupation vector size differs from the samples");
  if (n_alpha < 0 || n_alpha > M || n_beta < 0 || n_beta > M)
    throw DomainError("sector outside [0, norb]");
  std::mt19937_64 rng(seed);
  std::map<Determinant, std::uint64_t> out;
  for (const auto& e : raw.entries()) {
    if (e.bits.n_alpha() == n_alpha && e.bits.n_beta() == n_beta) {
      out[e.bits] += e.count;
      continue;
    }
    for (std::uint64_t c = 0; c < e.count; ++c) {
      Determinant d;
      d.alpha = repair_half(e.bits.alpha, n_alpha, M, n.n.data(), rng);
      d.beta = repair_half(e.bits.beta, n_beta, M, n.n.data() + M, rng);
      ++out[d];
    }
  }
  std::vector<SampleEntry> entries;
  entries.reserve(out.size());
  for (const auto& [d, c] : out) entries.push_back({d, c});
  return SampleSet::from_entries(M, std::move(entries));
}

RecoveryResult run_configuration_recovery(const ClusterHamiltonian& ham,
                                          const SampleSet& raw,
                                          const RecoveryConfig& cfg) {
  cfg.validate();
  if (raw.empty()) throw ValidationError("samples", "no shots to recover from");
  if (raw.norb() != ham.norb)
    throw DomainError("samples cover " + std::to_string(raw.norb()) +
                      " orbitals, Hamiltonian has " + std::to_string(ham.norb));
  const int M = ham.norb, na = ham.n_alpha, nb = ham.n_beta;
  const bool merged = na == nb;

  const SampleSet in_sector = postselect(raw, na, nb);
  if (!cfg.recover && in_sector.empty())
    throw ValidationError("samples", "no in-sector shots and recovery is disabled");

  RecoveryResult res;
  RecoveryState& st = res.state;
  st.n = initial_occupations(in_sector, M, na, nb);
  st.e_best = std::numeric_limits<double>::infinity();
  bool have_best = false;

  for (int it = 1; it <= cfg.max_iters; ++it) {
    st.iteration = it;
    const SampleSet pool =
        cfg.recover ? postselect_and_recover(raw, st.n, na, nb, mix_seed(cfg.seed, 2 * it))
                    : in_sector;
    std::vector<double> cdf;
    cdf.reserve(pool.entries().size());
    double total = 0.0;
    for (const auto& e : pool.entries()) cdf.push_back(total += double(e.count));

    IterationRecord rec;
    rec.iteration = it;
    rec.in_sector_shots = in_sector.total_shots();
    rec.total_shots = raw.total_shots();

    // Batch subspaces are built serially so the seeds and pools do not depend
    // on scheduling.
    std::vector<SubspaceBasis> bases(cfg.n_batches);
    for (int b = 0; b < cfg.n_batches; ++b) {
      std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed, 2 * it + 1), b));
      std::vector<Determinant> drawn;
      drawn.reserve(cfg.samples_per_batch);
      for (int s = 0; s < cfg.samples_per_batch; ++s) {
        const double u = uniform01(rng()) * total;
        auto k = std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
        if (k == static_cast<long>(cdf.size())) --k;
        drawn.push_back(pool.entries()[k].bits);
      }
      Pools p = build_pools(drawn, st.carryover, merged, cfg.max_subspace);
      rec.truncated |= p.truncated;
      bases[b] = SubspaceBasis::product(M, p.alpha, p.beta);
    }

    std::vector<BatchResult> results(cfg.n_batches);
    std::vector<std::exception_ptr> errors(cfg.n_batches);
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int b; (b = next.fetch_add(1)) < cfg.n_batches;) {
        try {
          SubspaceSolution sol = solve_subspace(ham, bases[b], cfg.solver);
          results[b] = BatchResult{b, sol.energy, std::move(sol.vector)};
        } catch (...) {
          errors[b] = std::current_exception();
        }
      }
    };
    const int nthreads = std::min(cfg.threads, cfg.n_batches);
    if (nthreads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool_threads;
      for (int t = 0; t < nthreads; ++t) pool_threads.emplace_back(worker);
      for (auto& t : pool_threads) t.join();
    }
    for (int b = 0; b < cfg.n_batches; ++b) {
      if (!errors[b]) continue;
      try {
        std::rethrow_exception(errors[b]);
      } catch (const ConvergenceError& e) {
        throw ConvergenceError("iteration " + std::to_string(it) + ", batch " +
                                   std::to_string(b) + ": " + e.what(),
                               e.residual());
      }
    }

    OccupationVector n_new{Eigen::VectorXd::Zero(2 * M)};
    std::set<Determinant> carry;
    if (cfg.accumulate_carryover) carry.insert(st.carryover.begin(), st.carryover.end());
    const double prev_best = st.e_best;
    for (const auto& r : results) {
      rec.energies.push_back(r.energy);
      rec.dims.push_back(r.state.basis.size());
      n_new.n += occupations(r.state).n;
      for (std::size_t k = 0; k < r.state.basis.size(); ++k)
        if (std::abs(r.state.coeffs(k)) >= cfg.carryover_threshold)
          carry.insert(r.state.basis[k]);
      if (!have_best || r.energy < st.e_best) {
        st.e_best = r.energy;
        res.best = r;
        have_best = true;
      }
    }
    n_new.n /= static_cast<double>(cfg.n_batches);
    const double dn = (n_new.n - st.n.n).cwiseAbs().maxCoeff();
    const double de = it == 1 ? std::numeric_limits<double>::infinity()
                              : std::abs(st.e_best - prev_best);
    st.n = std::move(n_new);
    st.carryover.assign(carry.begin(), carry.end());

    rec.occupations = st.n.n;
    rec.e_best = st.e_best;
    rec.delta_e = de;
    rec.delta_n = dn;
    rec.carryover = st.carryover.size();
    res.trace.push_back(std::move(rec));
    res.last_batches = std::move(results);

    if (it > 1 && de < cfg.e_tol && dn < cfg.occ_tol) {
      st.converged = true;
      break;
    }
  }
  res.e_best = st.e_best;
  return res;
}

void write_diagnostics(const std::vector<IterationRecord>& trace, std::ostream& out) {
  for (const auto& r : trace) {
    nlohmann::json j;
    j["iteration"] = r.iteration;
    j["energies"] = r.energies;
    j["dims"] = r.dims;
    j["occupations"] = std::vector<double>(r.occupations.data(),
                                           r.occupations.data() + r.occupations.size());
    j["e_best"] = r.e_best;
    j["delta_e"] = std::isfinite(r.delta_e) ? nlohmann::json(r.delta_e) : nlohmann::json();
    j["delta_n"] = r.delta_n;
    j["carryover"] = r.carryover;
    j["in_sector_shots"] = r.in_sector_shots;
    j["total_shots"] = r.total_shots;
    j["truncated"] = r.truncated;
    out << j.dump() << '\n';
  }
}

ExtResult extend_subspace(const ClusterHamiltonian& ham, const BatchResult& best,
                          const RecoveryConfig& cfg) {
  const CiVector& v = best.state;
  if (v.basis.empty()) throw DomainError("ext-SQD needs a solved batch");
  std::vector<Determinant> dets;
  std::size_t selected = 0;
  double cmax = 0.0;
  for (std::size_t k = 0; k < v.basis.size(); ++k) {
    const double c = std::abs(v.coeffs(k));
    cmax = std::max(cmax, c);
    if (c < cfg.ext_dominance_threshold) continue;
    ++selected;
    dets.push_back(v.basis[k]);
    for (const auto& s : connected_singles(v.basis[k], ham.norb)) dets.push_back(s);
  }
  if (selected == 0)
    throw ValidationError("ext_dominance_threshold",
                          "no determinant reaches the threshold " +
                              std::to_string(cfg.ext_dominance_threshold) +
                              "; largest |c| is " + std::to_string(cmax));
  SubspaceBasis basis(ham.norb, std::move(dets));
  SubspaceSolution sol = solve_subspace(ham, basis, cfg.solver);
  ExtResult out;
  out.energy = sol.energy;
  out.rdms = compute_rdms(sol.vector);
  out.stats = {selected, sol.vector.basis.size()};
  out.state = std::move(sol.vector);
  return out;
}

SolverKind dispatch_solver(int n_mo, int threshold) {
  if (n_mo < 1) throw ValidationError("n_mo", "cluster has no orbitals");
  return n_mo < threshold ? SolverKind::Fci : SolverKind::Sqd;
}

SubspaceStats subspace_stats(const std::string& cluster, const ClusterHamiltonian& ham,
                             const RecoveryResult& rec, const ExtResult& ext) {
  SubspaceStats s;
  s.cluster = cluster;
  s.norb = ham.norb;
  s.n_alpha = ham.n_alpha;
  s.n_beta = ham.n_beta;
  s.full_dim = sector_dimension(ham.norb, ham.n_alpha, ham.n_beta);
  for (const auto& r : rec.trace)
    for (std::size_t d : r.dims) s.sqd_dim = std::max<std::uint64_t>(s.sqd_dim, d);
  s.ext_dim = ext.stats.dim;
  return s;
}

}  // namespace ewfsqd
