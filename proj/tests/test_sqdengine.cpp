#include <sstream>

#include "doctest.h"
#include "ewfsqd/errors.hpp"
#include "ewfsqd/lucjsim.hpp"
#include "ewfsqd/sqdengine.hpp"
#include "oracles.hpp"

using namespace ewfsqd;

namespace {

Statevector from_ci(const CiVector& v) {
  const int M = v.basis.norb();
  Statevector psi{M, v.basis.n_alpha(), v.basis.n_beta(),
                  Eigen::MatrixXcd::Zero(binomial(M, v.basis.n_alpha()),
                                         binomial(M, v.basis.n_beta()))};
  const auto as = enumerate_strings(M, psi.n_alpha);
  const auto bs = enumerate_strings(M, psi.n_beta);
  for (std::size_t k = 0; k < v.basis.size(); ++k) {
    const auto ia = std::lower_bound(as.begin(), as.end(), v.basis[k].alpha) - as.begin();
    const auto ib = std::lower_bound(bs.begin(), bs.end(), v.basis[k].beta) - bs.begin();
    psi.amplitudes(ia, ib) = v.coeffs(k);
  }
  return psi;
}

struct H4 {
  ClusterHamiltonian ham = read_fcidump(oracle::fixture("h4_chain.fcidump"));
  FciResult fci = fci_solve(ham);
  SampleSet shots = sample_counts(from_ci(fci.vector), 100000, 12345);
};

const H4& h4() {
  static const H4 data;
  return data;
}

}  // namespace

TEST_CASE("recovery passes in-sector shots through and repairs the rest") {
  SampleSet s(4);
  s.add(from_bitstring("11000011", 4), 5);
  s.add(from_bitstring("11101100", 4), 3);
  OccupationVector n{Eigen::VectorXd::Zero(8)};
  n.n << 1, 1, 0, 0, 0, 0, 1, 1;
  const auto out = postselect_and_recover(s, n, 2, 2, 1);
  CHECK(out.total_shots() == 8);
  REQUIRE(out.entries().size() == 2);
  // alpha 1110 -> 1100 with certainty; beta 1100 is already in sector.
  bool seen = false;
  for (const auto& e : out.entries()) {
    if (e.bits == from_bitstring("11001100", 4)) {
      CHECK(e.count == 3);
      seen = true;
    }
    if (e.bits == from_bitstring("11000011", 4)) CHECK(e.count == 5);
  }
  CHECK(seen);

  // Deficit with all-zero weights falls back to uniform instead of failing.
  SampleSet empty_half(3);
  empty_half.add({0, 0b001}, 10);
  OccupationVector zero{Eigen::VectorXd::Zero(6)};
  const auto fixed = postselect_and_recover(empty_half, zero, 1, 1, 7);
  for (const auto& e : fixed.entries()) CHECK(e.bits.n_alpha() == 1);
}

TEST_CASE("every recovered determinant is in sector under heavy noise") {
  const auto noisy = inject_readout_noise(h4().shots, 0.05, 99);
  OccupationVector n = OccupationVector::of(hf_determinant(2, 2), 4);
  const auto out = postselect_and_recover(noisy, n, 2, 2, 3);
  CHECK(out.total_shots() == noisy.total_shots());
  for (const auto& e : out.entries()) {
    REQUIRE(e.bits.n_alpha() == 2);
    REQUIRE(e.bits.n_beta() == 2);
  }
  CHECK(postselect_and_recover(noisy, n, 2, 2, 3) == out);
}

TEST_CASE("noiseless closure on the M=4 fixture") {
  RecoveryConfig cfg;
  cfg.seed = 5;
  const auto rec = run_configuration_recovery(h4().ham, h4().shots, cfg);
  CHECK(std::abs(rec.e_best - h4().fci.energy) < 1e-6);
  CHECK(rec.e_best >= h4().fci.energy - 1e-10);
  CHECK(rec.trace.size() <= 5);
}

TEST_CASE("noisy recovery on the M=4 fixture") {
  const auto noisy = inject_readout_noise(h4().shots, 0.05, 2);
  RecoveryConfig cfg;
  cfg.seed = 8;
  const auto rec = run_configuration_recovery(h4().ham, noisy, cfg);
  CHECK(std::abs(rec.e_best - h4().fci.energy) < 1e-4);
  cfg.recover = false;
  const auto base = run_configuration_recovery(h4().ham, noisy, cfg);
  CHECK(base.e_best >= h4().fci.energy - 1e-10);
  MESSAGE("recovered " << rec.e_best - h4().fci.energy << ", postselected only "
                       << base.e_best - h4().fci.energy);
}

TEST_CASE("hartree-fock only samples give the HF energy at iteration two") {
  const auto& ham = h4().ham;
  SampleSet s(4);
  s.add(hf_determinant(2, 2), 50);
  RecoveryConfig cfg;
  cfg.n_batches = 1;
  const auto rec = run_configuration_recovery(ham, s, cfg);
  CHECK(rec.e_best ==
        doctest::Approx(slater_condon_element(ham, hf_determinant(2, 2), hf_determinant(2, 2)))
            .epsilon(1e-14));
  CHECK(rec.state.converged);
  CHECK(rec.state.iteration == 2);
}

TEST_CASE("persistent non-convergence stops at max_iters") {
  const auto ham = read_fcidump(oracle::fixture("h8_chain.fcidump"));
  const auto noisy = inject_readout_noise(SampleSet::from_entries(8, {{hf_determinant(4, 4), 2000}}), 0.2, 2);
  RecoveryConfig cfg;
  cfg.samples_per_batch = 5;
  cfg.n_batches = 2;
  cfg.occ_tol = 1e-300;
  const auto rec = run_configuration_recovery(ham, noisy, cfg);
  CHECK(rec.trace.size() == 5);
  CHECK_FALSE(rec.state.converged);
}

TEST_CASE("best energy bookkeeping and carryover containment") {
  const auto noisy = inject_readout_noise(h4().shots, 0.1, 6);
  RecoveryConfig cfg;
  cfg.samples_per_batch = 8;
  cfg.n_batches = 4;
  cfg.occ_tol = 1e-300;
  const auto rec = run_configuration_recovery(h4().ham, noisy, cfg);
  double lowest = INFINITY;
  for (const auto& r : rec.trace)
    for (double e : r.energies) lowest = std::min(lowest, e);
  CHECK(rec.e_best == lowest);
  CHECK(rec.best.energy == lowest);
  for (std::size_t k = 1; k < rec.trace.size(); ++k)
    CHECK(rec.trace[k].e_best <= rec.trace[k - 1].e_best);
  for (const auto& d : rec.state.carryover) CHECK(d.n_alpha() == 2);
}

TEST_CASE("carryover is included in every following batch") {
  const auto noisy = inject_readout_noise(h4().shots, 0.1, 6);
  RecoveryConfig cfg;
  cfg.samples_per_batch = 3;
  cfg.n_batches = 3;
  cfg.occ_tol = 1e-300;
  cfg.max_iters = 1;
  const auto first = run_configuration_recovery(h4().ham, noisy, cfg);
  cfg.max_iters = 2;
  const auto second = run_configuration_recovery(h4().ham, noisy, cfg);
  REQUIRE(second.trace.size() == 2);
  // Iteration 1 is identical in both runs, so its carryover seeds iteration 2.
  CHECK(first.state.carryover.size() == first.trace[0].carryover);
  REQUIRE(second.last_batches.size() == 3);
  for (const auto& batch : second.last_batches)
    for (const auto& d : first.state.carryover) CHECK(batch.state.basis.contains(d));
}

TEST_CASE("recovery is deterministic and independent of thread count") {
  const auto noisy = inject_readout_noise(h4().shots, 0.05, 3);
  RecoveryConfig cfg;
  cfg.seed = 17;
  const auto a = run_configuration_recovery(h4().ham, noisy, cfg);
  cfg.threads = 4;
  const auto b = run_configuration_recovery(h4().ham, noisy, cfg);
  std::ostringstream da, db;
  write_diagnostics(a.trace, da);
  write_diagnostics(b.trace, db);
  CHECK(da.str() == db.str());
  CHECK(a.e_best == b.e_best);
}

TEST_CASE("ext-SQD from a single closed-shell determinant has dimension 9") {
  const auto& ham = h4().ham;
  BatchResult best;
  best.state = CiVector{SubspaceBasis(4, {hf_determinant(2, 2)}), Eigen::VectorXd::Ones(1)};
  RecoveryConfig cfg;
  const auto ext = extend_subspace(ham, best, cfg);
  CHECK(ext.stats.selected == 1);
  CHECK(ext.stats.dim == 9);
  cfg.ext_dominance_threshold = 2.0;
  CHECK_THROWS_WITH_AS(extend_subspace(ham, best, cfg), doctest::Contains("largest |c|"),
                       ValidationError);
}

TEST_CASE("ext-SQD is a superset and improves a truncated subspace") {
  const auto& ham = h4().ham;
  const double e_fci = h4().fci.energy;
  SampleSet few(4);
  few.add(hf_determinant(2, 2), 10);
  few.add(from_bitstring("10101010", 4), 1);
  RecoveryConfig cfg;
  cfg.n_batches = 2;
  cfg.samples_per_batch = 20;
  const auto rec = run_configuration_recovery(ham, few, cfg);
  CHECK(rec.e_best - e_fci > 1e-6);

  RecoveryConfig zero = cfg;
  zero.ext_dominance_threshold = 0.0;
  const auto sup = extend_subspace(ham, rec.best, zero);
  for (const auto& d : rec.best.state.basis.dets()) REQUIRE(sup.state.basis.contains(d));
  CHECK(sup.energy <= rec.e_best + 1e-10);

  const auto ext = extend_subspace(ham, rec.best, cfg);
  CHECK(ext.energy - e_fci < rec.e_best - e_fci);
  CHECK(ext.energy >= e_fci - 1e-10);
  CHECK(energy_from_rdms(ham, ext.rdms.one, ext.rdms.two) ==
        doctest::Approx(ext.energy).epsilon(1e-10));
}

TEST_CASE("dispatch and subspace accounting") {
  CHECK(dispatch_solver(8) == SolverKind::Fci);
  CHECK(dispatch_solver(14) == SolverKind::Fci);
  CHECK(dispatch_solver(15) == SolverKind::Sqd);
  CHECK(dispatch_solver(33) == SolverKind::Sqd);
  CHECK(dispatch_solver(8, 6) == SolverKind::Sqd);
  CHECK(sector_dimension(12, 6, 6) == 853776);

  RecoveryConfig cfg;
  const auto rec = run_configuration_recovery(h4().ham, h4().shots, cfg);
  const auto ext = extend_subspace(h4().ham, rec.best, cfg);
  const auto s = subspace_stats("h4", h4().ham, rec, ext);
  CHECK(s.full_dim == 36);
  CHECK(s.sqd_dim <= s.full_dim);
  CHECK(s.ext_dim >= ext.stats.selected);
}

TEST_CASE("config validation") {
  RecoveryConfig cfg;
  cfg.n_batches = 0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("n_batches"), ValidationError);
  cfg = {};
  cfg.e_tol = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  SampleSet empty(4);
  CHECK_THROWS_AS(run_configuration_recovery(h4().ham, empty, RecoveryConfig{}),
                  ValidationError);
}
