#include "ewfsqd/assemble.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

#include "ewfsqd/errors.hpp"
#include "json.hpp"

namespace ewfsqd {

Eigen::MatrixXd fragment_projector(const Eigen::MatrixXd& columns,
                                   const std::vector<int>& fragment) {
  Eigen::MatrixXd rows(fragment.size(), columns.cols());
  for (std::size_t k = 0; k < fragment.size(); ++k) {
    if (fragment[k] < 0 || fragment[k] >= columns.rows())
      throw DomainError("fragment orbital outside the local basis");
    rows.row(k) = columns.row(fragment[k]);
  }
  return rows.transpose() * rows;
}

ProjectedRdms project_cluster_rdms(const ClusterResult& r) {
  const int m = static_cast<int>(r.columns.cols());
  if (r.projector.rows() != m || r.projector.cols() != m || r.one.rows() != m ||
      r.one.cols() != m || r.two.norb != m)
    throw DomainError("cluster " + r.id + ": projector, RDMs and columns disagree in size");
  const Eigen::MatrixXd& P = r.projector;
  ProjectedRdms out;
  out.one = r.columns * (0.5 * (P * r.one + r.one * P)) * r.columns.transpose();
  out.two = Rdm2(m);
  const std::size_t m2 = static_cast<std::size_t>(m) * m;
  // View Gamma as (p r) x (q s): project p from the left, r from the right.
  for (int r_ = 0; r_ < m; ++r_)
    for (std::size_t qs = 0; qs < m2; ++qs)
      for (int p = 0; p < m; ++p) {
        double left = 0.0, right = 0.0;
        for (int t = 0; t < m; ++t) {
          left += P(p, t) * r.two.data[(static_cast<std::size_t>(t) * m + r_) * m2 + qs];
          right += r.two.data[(static_cast<std::size_t>(p) * m + t) * m2 + qs] * P(t, r_);
        }
        out.two.data[(static_cast<std::size_t>(p) * m + r_) * m2 + qs] = 0.5 * (left + right);
      }
  return out;
}

Collation collate_global_energy(const RunManifest& manifest,
                                const std::vector<ClusterHamiltonian>& hams,
                                const std::vector<ClusterResult>& results) {
  if (hams.size() != manifest.clusters.size())
    throw DomainError("one cluster Hamiltonian per manifest entry required");
  std::map<std::string, const ClusterResult*> by_id;
  for (const auto& r : results) by_id[r.id] = &r;
  std::string missing;
  for (const auto& c : manifest.clusters)
    if (!by_id.count(c.id)) missing += (missing.empty() ? "" : ", ") + c.id;
  if (!missing.empty())
    throw ValidationError("completeness", "missing cluster results: " + missing);

  Collation out;
  out.e_total = manifest.e_nuc;
  out.rdms.one = Eigen::MatrixXd::Zero(manifest.n_local, manifest.n_local);
  for (std::size_t k = 0; k < manifest.clusters.size(); ++k) {
    const ClusterRecord& rec = manifest.clusters[k];
    const ClusterHamiltonian& ham = hams[k];
    ClusterResult r = *by_id.at(rec.id);
    if (r.columns.size() == 0) r.columns = rec.columns;
    if (r.projector.size() == 0) r.projector = fragment_projector(r.columns, rec.fragment_orbitals);
    const int m = ham.norb;
    if (r.columns.cols() != m || r.columns.rows() != manifest.n_local)
      throw DomainError("cluster " + rec.id + ": orbital columns do not match its Hamiltonian");
    Eigen::MatrixXd V = rec.core_potential;
    if (V.size() == 0) V = Eigen::MatrixXd::Zero(m, m);
    if (V.rows() != m || V.cols() != m)
      throw DomainError("cluster " + rec.id + ": core potential has the wrong size");

    const ProjectedRdms proj = project_cluster_rdms(r);
    const Eigen::MatrixXd Pg = r.projector * r.one;
    const Eigen::MatrixXd h1 = ham.h - 0.5 * V;
    double e2 = 0.0;
    for (std::size_t i = 0; i < proj.two.data.size(); ++i) e2 += ham.eri[i] * proj.two.data[i];
    const double e = (Pg.array() * h1.array()).sum() + 0.5 * e2;

    out.e_total += e;
    out.rdms.one += proj.one;
    out.rdms.two.push_back({rec.id, r.columns, proj.two});
    ClusterContribution cc;
    cc.id = rec.id;
    cc.solver = r.solver;
    cc.n_mo = m;
    cc.cluster_energy = r.energy;
    cc.fragment_energy = e;
    cc.electrons = Pg.trace();
    cc.stats = r.stats;
    out.clusters.push_back(std::move(cc));
  }
  out.rdms.one = 0.5 * (out.rdms.one + out.rdms.one.transpose()).eval();
  return out;
}

EnergyReport relative_energy_report(double e_a, double e_b, const std::string& label_a,
                                    const std::string& label_b) {
  EnergyReport rep;
  rep.a = {label_a, e_a, {}};
  rep.b = {label_b, e_b, {}};
  rep.delta_e_kcal = (e_a - e_b) * kKcalPerHartree;
  return rep;
}

void write_report_table(const EnergyReport& report, std::ostream& out) {
  const bool pair = !report.b.label.empty();
  const std::string ha = "E_" + report.a.label + " [Eh]";
  const std::string hb = "E_" + report.b.label + " [Eh]";
  const int wm = std::max<int>(14, report.method.size() + 2);
  const int wa = std::max<int>(18, ha.size() + 2), wb = std::max<int>(18, hb.size() + 2);
  out << std::left << std::setw(wm) << "method" << std::setw(wa) << ha;
  if (pair) out << std::setw(wb) << hb << "dE [kcal/mol]";
  out << "\n" << std::setw(wm) << report.method << std::fixed << std::setprecision(4)
      << std::setw(wa) << report.a.energy;
  if (pair)
    out << std::setw(wb) << report.b.energy << std::setprecision(2) << report.delta_e_kcal;
  out << "\n";
  for (const ConformerEntry* c : {&report.a, &report.b}) {
    if (c->clusters.empty()) continue;
    out << "\n" << c->label << " clusters\n";
    out << std::setw(24) << "id" << std::setw(8) << "solver" << std::setw(6) << "n_mo"
        << std::setw(20) << "fragment E [Eh]" << std::setw(12) << "electrons"
        << "subspace dim\n";
    for (const auto& cc : c->clusters) {
      out << std::setw(24) << cc.id << std::setw(8) << to_string(cc.solver) << std::setw(6)
          << cc.n_mo << std::setprecision(10) << std::setw(20) << cc.fragment_energy
          << std::setprecision(6) << std::setw(12) << cc.electrons;
      if (cc.stats)
        out << cc.stats->ext_dim << " / " << cc.stats->full_dim;
      else
        out << "full";
      out << "\n";
    }
  }
  if (!report.solver_census.empty()) {
    out << "\nsolvers:";
    for (const auto& [k, v] : report.solver_census) out << " " << k << "=" << v;
    out << "\n";
  }
  if (!report.diagnostics_digest.empty())
    out << "diagnostics sha256: " << report.diagnostics_digest << "\n";
  out.unsetf(std::ios::fixed);
}

namespace {

using nlohmann::json;

json stats_json(const SubspaceStats& s) {
  return {{"norb", s.norb},         {"n_alpha", s.n_alpha}, {"n_beta", s.n_beta},
          {"full_dim", s.full_dim}, {"sqd_dim", s.sqd_dim}, {"ext_dim", s.ext_dim}};
}

json conformer_json(const ConformerEntry& c) {
  json cl = json::array();
  for (const auto& cc : c.clusters) {
    json j = {{"id", cc.id},
              {"solver", to_string(cc.solver)},
              {"n_mo", cc.n_mo},
              {"cluster_energy", cc.cluster_energy},
              {"fragment_energy", cc.fragment_energy},
              {"electrons", cc.electrons}};
    if (cc.stats) j["stats"] = stats_json(*cc.stats);
    cl.push_back(j);
  }
  return {{"label", c.label}, {"energy", c.energy}, {"clusters", cl}};
}

ConformerEntry conformer_from(const json& j) {
  ConformerEntry c;
  c.label = j.at("label").get<std::string>();
  c.energy = j.at("energy").get<double>();
  for (const auto& e : j.at("clusters")) {
    ClusterContribution cc;
    cc.id = e.at("id").get<std::string>();
    cc.solver = solver_kind_from_string(e.at("solver").get<std::string>());
    cc.n_mo = e.at("n_mo").get<int>();
    cc.cluster_energy = e.at("cluster_energy").get<double>();
    cc.fragment_energy = e.at("fragment_energy").get<double>();
    cc.electrons = e.at("electrons").get<double>();
    if (e.contains("stats")) {
      const auto& s = e["stats"];
      SubspaceStats st;
      st.cluster = cc.id;
      st.norb = s.at("norb").get<int>();
      st.n_alpha = s.at("n_alpha").get<int>();
      st.n_beta = s.at("n_beta").get<int>();
      st.full_dim = s.at("full_dim").get<std::uint64_t>();
      st.sqd_dim = s.at("sqd_dim").get<std::uint64_t>();
      st.ext_dim = s.at("ext_dim").get<std::uint64_t>();
      cc.stats = st;
    }
    c.clusters.push_back(std::move(cc));
  }
  return c;
}

}  // namespace

std::string report_to_json(const EnergyReport& report) {
  json j = {{"method", report.method},
            {"conformers", {conformer_json(report.a), conformer_json(report.b)}},
            {"delta_e_kcal_per_mol", report.delta_e_kcal},
            {"hartree_to_kcal", kKcalPerHartree},
            {"solver_census", report.solver_census},
            {"diagnostics_sha256", report.diagnostics_digest}};
  return j.dump(2) + "\n";
}

EnergyReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what(), 0);
  }
  try {
    EnergyReport r;
    r.method = j.at("method").get<std::string>();
    r.a = conformer_from(j.at("conformers").at(0));
    r.b = conformer_from(j.at("conformers").at(1));
    r.delta_e_kcal = j.at("delta_e_kcal_per_mol").get<double>();
    r.solver_census = j.at("solver_census").get<std::map<std::string, int>>();
    r.diagnostics_digest = j.at("diagnostics_sha256").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what(), 0);
  }
}

}  // namespace ewfsqd
