#include <algorithm>
#include <fstream>
#include "json.hpp"
#include <set>
#include <sstream>

#include "ewfsqd/errors.hpp"
#include "ewfsqd/hamio.hpp"

namespace ewfsqd {

using nlohmann::json;

std::string to_string(SolverKind kind) {
  return kind == SolverKind::Fci ? "fci" : "sqd";
}

SolverKind solver_kind_from_string(const std::string& s) {
  if (s == "fci") return SolverKind::Fci;
  if (s == "sqd") return SolverKind::Sqd;
  throw ValidationError("solver", "unknown solver kind '" + s + "'");
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows ? static_cast<int>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j.at(i).size()) != cols)
      throw ValidationError("manifest", "ragged matrix");
    for (int k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
  }
  return m;
}

}  // namespace

void RunManifest::validate() const {
  std::set<std::string> ids;
  std::vector<int> owner(std::max(n_local, 0), -1);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const auto& rec = clusters[c];
    if (!ids.insert(rec.id).second)
      throw ValidationError("manifest", "duplicate cluster id '" + rec.id + "'");
    for (int idx : rec.fragment_orbitals) {
      if (idx < 0 || idx >= n_local)
        throw ValidationError("manifest", "fragment orbital " +
                                              std::to_string(idx) +
                                              " out of range");
      if (owner[idx] >= 0)
        throw ValidationError("manifest", "fragment orbital " +
                                              std::to_string(idx) +
                                              " appears in two clusters");
      owner[idx] = static_cast<int>(c);
    }
  }
  for (int i = 0; i < n_local; ++i)
    if (owner[i] < 0)
      throw ValidationError("manifest", "fragment orbital " +
                                            std::to_string(i) +
                                            " not covered by any cluster");
}

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["format"] = "ewfsqd-manifest";
  j["version"] = 1;
  j["conformer"] = m.conformer;
  j["bundle"] = m.bundle;
  j["n_local"] = m.n_local;
  j["n_elec"] = m.n_elec;
  j["e_nuc"] = m.e_nuc;
  j["e_hf"] = m.e_hf;
  json clusters = json::array();
  for (const auto& c : m.clusters) {
    json r;
    r["id"] = c.id;
    r["fcidump"] = c.fcidump;
    r["fragment_orbitals"] = c.fragment_orbitals;
    r["n_mo"] = c.n_mo;
    r["solver"] = to_string(c.solver);
    r["columns"] = matrix_to_json(c.columns);
    r["core_potential"] = matrix_to_json(c.core_potential);
    clusters.push_back(std::move(r));
  }
  j["clusters"] = std::move(clusters);
  if (!m.config_json.empty()) j["config"] = json::parse(m.config_json);
  return j.dump(1);
}

RunManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  try {
    if (j.value("format", "") != "ewfsqd-manifest")
      throw ValidationError("manifest", "not an ewfsqd manifest");
    RunManifest m;
    m.conformer = j.value("conformer", "");
    m.bundle = j.value("bundle", "");
    m.n_local = j.at("n_local").get<int>();
    m.n_elec = j.at("n_elec").get<int>();
    m.e_nuc = j.at("e_nuc").get<double>();
    m.e_hf = j.value("e_hf", 0.0);
    for (const auto& r : j.at("clusters")) {
      ClusterRecord c;
      c.id = r.at("id").get<std::string>();
      c.fcidump = r.at("fcidump").get<std::string>();
      c.fragment_orbitals = r.at("fragment_orbitals").get<std::vector<int>>();
      c.n_mo = r.at("n_mo").get<int>();
      c.solver = solver_kind_from_string(r.at("solver").get<std::string>());
      c.columns = matrix_from_json(r.at("columns"));
      c.core_potential = matrix_from_json(r.at("core_potential"));
      m.clusters.push_back(std::move(c));
    }
    if (j.contains("config")) m.config_json = j.at("config").dump();
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw ValidationError("manifest", e.what());
  }
}

void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest_to_json(manifest) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

}  // namespace ewfsqd
