#include <sstream>

#include "doctest.h"
#include "ewfsqd/assemble.hpp"
#include "ewfsqd/detcore.hpp"
#include "ewfsqd/errors.hpp"
#include "ewfsqd/ewfrag.hpp"
#include "oracles.hpp"

using namespace ewfsqd;
using Eigen::MatrixXd;

namespace {

struct Setup {
  Fragmentation frag;
  RunManifest manifest;
  std::vector<ClusterHamiltonian> hams;
};

Setup build(const std::string& system, bool whole, double eta) {
  const auto mf = load_meanfield_bundle(oracle::fixture(system + ".bundle"));
  Setup s;
  const FragmentSpec spec = whole ? FragmentSpec::whole_system(mf.n_ao)
                                  : FragmentSpec::per_atom(orthogonalize_localize(mf));
  s.frag = fragment_system(mf, spec, eta);
  s.manifest.conformer = system;
  s.manifest.n_local = s.frag.integrals.n;
  s.manifest.n_elec = mf.n_elec;
  s.manifest.e_nuc = mf.e_nuc;
  s.manifest.e_hf = s.frag.integrals.e_hf;
  for (const auto& c : s.frag.clusters) {
    ClusterRecord rec;
    rec.id = c.id;
    rec.fragment_orbitals = c.fragment;
    rec.n_mo = c.n_mo();
    rec.columns = c.columns;
    s.hams.push_back(extract_cluster_hamiltonian(s.frag.integrals, c, &rec.core_potential));
    s.manifest.clusters.push_back(rec);
  }
  return s;
}

ClusterResult hf_result(const Setup& s, std::size_t k) {
  const auto& ham = s.hams[k];
  SubspaceBasis basis(ham.norb, {hf_determinant(ham.n_alpha, ham.n_beta)});
  const auto rdms = compute_rdms(CiVector{basis, Eigen::VectorXd::Ones(1)});
  ClusterResult r;
  r.id = s.manifest.clusters[k].id;
  r.one = rdms.one;
  r.two = rdms.two;
  r.columns = s.frag.clusters[k].columns;
  r.projector = s.frag.clusters[k].projector;
  return r;
}

ClusterResult fci_result(const Setup& s, std::size_t k) {
  const auto fci = fci_solve(s.hams[k]);
  ClusterResult r;
  r.id = s.manifest.clusters[k].id;
  r.energy = fci.energy;
  r.one = fci.rdms.one;
  r.two = fci.rdms.two;
  r.columns = s.frag.clusters[k].columns;
  r.projector = s.frag.clusters[k].projector;
  return r;
}

}  // namespace

TEST_CASE("projection limits") {
  const Setup s = build("h4_chain", true, 1e-5);
  ClusterResult r = fci_result(s, 0);
  CHECK((r.projector - MatrixXd::Identity(4, 4)).norm() < 1e-12);
  auto p = project_cluster_rdms(r);
  CHECK((p.one - r.columns * r.one * r.columns.transpose()).norm() < 1e-12);
  double d = 0.0;
  for (std::size_t i = 0; i < p.two.data.size(); ++i)
    d = std::max(d, std::abs(p.two.data[i] - r.two.data[i]));
  CHECK(d < 1e-12);

  r.projector.setZero();
  p = project_cluster_rdms(r);
  CHECK(p.one.norm() == 0.0);
  r.projector = MatrixXd::Zero(3, 3);
  CHECK_THROWS_AS(project_cluster_rdms(r), DomainError);
}

TEST_CASE("fragment projector from columns") {
  const Setup s = build("h6_chain", false, 1e-5);
  for (std::size_t k = 0; k < s.frag.clusters.size(); ++k) {
    const auto& c = s.frag.clusters[k];
    CHECK((fragment_projector(c.columns, c.fragment) - c.projector).norm() < 1e-12);
  }
}

TEST_CASE("mean-field closure for per-atom fragments") {
  for (double eta : {2.0, 1e-5}) {
    const Setup s = build("h6_chain", false, eta);
    std::vector<ClusterResult> results;
    for (std::size_t k = 0; k < s.hams.size(); ++k) results.push_back(hf_result(s, k));
    const auto col = collate_global_energy(s.manifest, s.hams, results);
    CHECK(std::abs(col.e_total - oracle::reference("h6_chain", "e_hf")) < 1e-8);
    CHECK((col.rdms.one - s.frag.integrals.D).norm() < 1e-8);
    CHECK(std::abs(col.rdms.trace() - 6.0) < 1e-10);
    CHECK(col.rdms.two.size() == 6);
  }
}

TEST_CASE("whole-system cluster gives the FCI energy") {
  for (std::string sys : {"h4_chain", "h6_chain"}) {
    const Setup s = build(sys, true, 1e-5);
    const auto col = collate_global_energy(s.manifest, s.hams, {fci_result(s, 0)});
    CHECK(std::abs(col.e_total - oracle::reference(sys, "e_fci")) < 1e-8);
  }
}

TEST_CASE("per-atom FCI embedding of the H6 chain") {
  const Setup s = build("h6_chain", false, 1e-5);
  std::vector<ClusterResult> results;
  for (std::size_t k = 0; k < s.hams.size(); ++k) results.push_back(fci_result(s, k));
  // Results arriving out of order are folded in manifest order.
  std::vector<ClusterResult> shuffled(results.rbegin(), results.rend());
  const auto col = collate_global_energy(s.manifest, s.hams, results);
  const auto col2 = collate_global_energy(s.manifest, s.hams, shuffled);
  CHECK(col.e_total == col2.e_total);
  const double err = col.e_total - oracle::reference("h6_chain", "e_fci");
  MESSAGE("EWF(FCI) - FCI = " << err);
  // Regression bound, measured at 6.7e-6.
  CHECK(std::abs(err) < 1e-5);
  // Truncated baths leave the projected electron count slightly off (4.6e-4 measured).
  CHECK(std::abs(col.rdms.trace() - 6.0) < 1e-3);
}

TEST_CASE("untruncated clusters conserve the electron count") {
  const Setup s = build("h6_chain", false, 0.0);
  std::vector<ClusterResult> results;
  for (std::size_t k = 0; k < s.hams.size(); ++k) results.push_back(fci_result(s, k));
  const auto col = collate_global_energy(s.manifest, s.hams, results);
  CHECK(std::abs(col.rdms.trace() - 6.0) < 1e-6);
  CHECK(std::abs(col.e_total - oracle::reference("h6_chain", "e_fci")) < 1e-8);
}

TEST_CASE("missing cluster results are listed") {
  const Setup s = build("h4_chain", false, 1e-5);
  std::vector<ClusterResult> results{hf_result(s, 1), hf_result(s, 3)};
  try {
    collate_global_energy(s.manifest, s.hams, results);
    FAIL("expected a completeness error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(s.manifest.clusters[0].id) != std::string::npos);
    CHECK(msg.find(s.manifest.clusters[2].id) != std::string::npos);
    CHECK(msg.find(s.manifest.clusters[1].id) == std::string::npos);
  }
}

TEST_CASE("relative energy report") {
  auto rep = relative_energy_report(-7354.1372, -7354.2256, "unfolded", "folded");
  CHECK(rep.delta_e_kcal == doctest::Approx(55.47).epsilon(1e-3));
  CHECK(std::abs(rep.delta_e_kcal - 55.5) < 0.1);
  CHECK(relative_energy_report(-1.0, -1.0, "a", "b").delta_e_kcal == 0.0);
  CHECK(relative_energy_report(-7354.2256, -7354.1372, "folded", "unfolded").delta_e_kcal ==
        -rep.delta_e_kcal);

  std::ostringstream table;
  write_report_table(rep, table);
  const std::string text = table.str();
  CHECK(text.find("E_unfolded [Eh]") != std::string::npos);
  CHECK(text.find("E_folded [Eh]") != std::string::npos);
  CHECK(text.find("-7354.1372") != std::string::npos);
  CHECK(text.find("-7354.2256") != std::string::npos);
  CHECK(text.find("55.47") != std::string::npos);

  rep.solver_census = {{"fci", 3}, {"sqd", 1}};
  rep.a.clusters.push_back({"c0", SolverKind::Sqd, 5, -1.25, -0.5, 1.0, SubspaceStats{"c0", 5, 2, 2, 100, 40, 60}});
  const auto back = report_from_json(report_to_json(rep));
  CHECK(back.delta_e_kcal == rep.delta_e_kcal);
  CHECK(back.a.clusters.size() == 1);
  CHECK(back.a.clusters[0].stats->ext_dim == 60);
  CHECK(report_to_json(back) == report_to_json(rep));
  CHECK_THROWS_AS(report_from_json("{"), ParseError);
}
