#include "ewfsqd/clirun.hpp"

#include <openssl/evp.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "ewfsqd/errors.hpp"
#include "ewfsqd/ewfrag.hpp"
#include "ewfsqd/lucjsim.hpp"
#include "json.hpp"

namespace ewfsqd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write-then-rename so an interrupted run never leaves a truncated file.
void write_text(const fs::path& p, const std::string& text) {
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  if (ec) throw IoError("cannot create " + p.parent_path().string() + ": " + ec.message());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, p, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

template <class T>
T take(json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    T v = obj.at(key).get<T>();
    obj.erase(key);
    return v;
  } catch (const json::exception&) {
    throw ValidationError(key, "wrong type");
  }
}

void reject_unknown(const json& obj, const std::string& where) {
  if (obj.empty()) return;
  std::string keys;
  for (auto it = obj.begin(); it != obj.end(); ++it)
    keys += (keys.empty() ? "" : ", ") + it.key();
  throw ValidationError(where, "unknown keys: " + keys);
}

std::string source_name(SampleSource s) {
  return s == SampleSource::Simulator ? "simulator" : "files";
}

json recovery_json(const RecoveryConfig& r) {
  return {{"samples_per_batch", r.samples_per_batch},
          {"n_batches", r.n_batches},
          {"e_tol", r.e_tol},
          {"occ_tol", r.occ_tol},
          {"max_iters", r.max_iters},
          {"carryover_threshold", r.carryover_threshold},
          {"ext_dominance_threshold", r.ext_dominance_threshold},
          {"accumulate_carryover", r.accumulate_carryover},
          {"recover", r.recover},
          {"max_subspace", r.max_subspace},
          {"threads", r.threads}};
}

Connectivity make_connectivity(const PipelineConfig& cfg, int norb) {
  if (cfg.connectivity == "all_to_all") return Connectivity::all_to_all(norb);
  if (cfg.connectivity == "line") return Connectivity::line(norb);
  if (cfg.connectivity == "ladder") return Connectivity::ladder(norb);
  if (static_cast<int>(cfg.adjacency.size()) != 2 * norb)
    throw ValidationError("adjacency", "lists cover " + std::to_string(cfg.adjacency.size()) +
                                           " spin-orbitals, cluster has " +
                                           std::to_string(2 * norb));
  return Connectivity::from_lists(norb, cfg.adjacency);
}

json solver_settings(const PipelineConfig& cfg, SolverKind kind) {
  json j = {{"solver", to_string(kind)}, {"fci_max_determinants", cfg.fci_max_determinants}};
  if (kind == SolverKind::Sqd) {
    j["recovery"] = recovery_json(cfg.recovery);
    j["source"] = source_name(cfg.source);
    j["noise"] = cfg.noise;
    j["shots"] = cfg.shots;
    j["connectivity"] = cfg.connectivity;
    j["adjacency"] = cfg.adjacency;
    j["lucj_layers"] = cfg.lucj_layers;
  }
  return j;
}

std::uint64_t cluster_seed(const PipelineConfig& cfg, std::size_t index) {
  return mix_seed(cfg.seed, index);
}

json rdm_json(const Rdm1& one, const Rdm2& two) {
  json o = json::array();
  for (int i = 0; i < one.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < one.cols(); ++j) row.push_back(one(i, j));
    o.push_back(std::move(row));
  }
  return {{"one", o}, {"two", two.data}};
}

struct Solved {
  ClusterResult result;
  std::string diagnostics;
  bool converged = true;
  int iterations = 0;
};

Solved solve_one(const PipelineConfig& cfg, const WorkPaths& paths, const RunManifest& manifest,
                 std::size_t index) {
  const ClusterRecord& rec = manifest.clusters[index];
  ClusterHamiltonian ham;
  std::string stage = "load";
  try {
    ham = read_fcidump(paths.fcidump(rec.id));
    Solved out;
    out.result.id = rec.id;
    out.result.solver = rec.solver;
    if (rec.solver == SolverKind::Fci) {
      stage = "fci";
      FciOptions opts;
      opts.max_determinants = cfg.fci_max_determinants;
      const FciResult fci = fci_solve(ham, opts);
      out.result.energy = fci.energy;
      out.result.one = fci.rdms.one;
      out.result.two = fci.rdms.two;
      return out;
    }
    const std::uint64_t seed = cluster_seed(cfg, index);
    SampleSet raw;
    if (cfg.source == SampleSource::Simulator) {
      stage = "lucj";
      const AmplitudeSet amps = mp2_amplitudes(ham);
      const DoubleFactorization df = double_factorize_t2(amps);
      const int n_terms = static_cast<int>(df.terms.size());
      const int layers = std::max(1, cfg.lucj_layers == 0 ? n_terms
                                                          : std::min(cfg.lucj_layers, n_terms));
      const LucjParams params =
          lucj_from_factorization(df, make_connectivity(cfg, ham.norb), layers);
      const Statevector psi = prepare_lucj_state(ham.norb, ham.n_alpha, ham.n_beta, params);
      stage = "sampling";
      raw = sample_counts(psi, cfg.shots, mix_seed(seed, 1));
      if (cfg.noise > 0.0) raw = inject_readout_noise(raw, cfg.noise, mix_seed(seed, 2));
    } else {
      stage = "samples";
      raw = load_samples(fs::path(cfg.sample_dir) / (rec.id + ".samples"));
      if (raw.norb() != ham.norb)
        throw ValidationError("samples", "sample file has " + std::to_string(raw.norb()) +
                                             " orbitals, cluster has " +
                                             std::to_string(ham.norb));
    }
    stage = "recovery";
    RecoveryConfig rc = cfg.recovery;
    rc.seed = mix_seed(seed, 3);
    const RecoveryResult recovery = run_configuration_recovery(ham, raw, rc);
    stage = "ext-sqd";
    const ExtResult ext = extend_subspace(ham, recovery.best, rc);
    out.result.energy = ext.energy;
    out.result.one = ext.rdms.one;
    out.result.two = ext.rdms.two;
    out.result.stats = subspace_stats(rec.id, ham, recovery, ext);
    out.converged = recovery.state.converged;
    out.iterations = recovery.state.iteration;
    std::ostringstream diag;
    write_diagnostics(recovery.trace, diag);
    out.diagnostics = diag.str();
    return out;
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(e.kind(), rec.id, stage, e.what());
  } catch (const std::exception& e) {
    throw StageError(ErrorKind::Solver, rec.id, stage, e.what());
  }
}

std::string result_to_json(const Solved& s, const std::string& key) {
  const ClusterResult& r = s.result;
  json j = {{"format", "ewfsqd-result"},
            {"version", 1},
            {"key", key},
            {"id", r.id},
            {"solver", to_string(r.solver)},
            {"energy", r.energy},
            {"converged", s.converged},
            {"iterations", s.iterations},
            {"rdm", rdm_json(r.one, r.two)}};
  if (r.stats)
    j["stats"] = {{"norb", r.stats->norb},         {"n_alpha", r.stats->n_alpha},
                  {"n_beta", r.stats->n_beta},     {"full_dim", r.stats->full_dim},
                  {"sqd_dim", r.stats->sqd_dim},   {"ext_dim", r.stats->ext_dim}};
  return j.dump() + "\n";
}

std::string stored_key(const fs::path& path) {
  std::error_code ec;
  if (!fs::exists(path, ec)) return {};
  try {
    return json::parse(read_text(path)).value("key", "");
  } catch (const std::exception&) {
    return {};
  }
}

std::vector<ClusterHamiltonian> load_hamiltonians(const WorkPaths& paths,
                                                  const RunManifest& m) {
  std::vector<ClusterHamiltonian> hams;
  for (const auto& c : m.clusters) hams.push_back(read_fcidump(paths.fcidump(c.id)));
  return hams;
}

}  // namespace

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr))
    throw Error(ErrorKind::Io, "sha256 failed");
  std::ostringstream ss;
  for (unsigned int i = 0; i < len; ++i)
    ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return ss.str();
}

PipelineConfig validate_config(const std::string& json_text) {
  json j;
  try {
    j = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config", "expected a JSON object");

  PipelineConfig c;
  c.bundle = take<std::string>(j, "bundle", c.bundle);
  c.workdir = take<std::string>(j, "workdir", c.workdir);
  c.conformer = take<std::string>(j, "conformer", c.conformer);
  const std::string frag = take<std::string>(j, "fragmentation", "per_atom");
  if (frag != "per_atom" && frag != "explicit")
    throw ValidationError("fragmentation", "expected per_atom or explicit, got '" + frag + "'");
  c.per_atom = frag == "per_atom";
  c.fragments = take<std::vector<std::vector<int>>>(j, "fragments", {});
  c.eta = take<double>(j, "eta", c.eta);
  c.dispatch_threshold = take<int>(j, "dispatch_threshold", c.dispatch_threshold);
  if (j.contains("recovery")) {
    json r = j["recovery"];
    j.erase("recovery");
    if (!r.is_object()) throw ValidationError("recovery", "expected an object");
    RecoveryConfig& rc = c.recovery;
    rc.samples_per_batch = take<int>(r, "samples_per_batch", rc.samples_per_batch);
    rc.n_batches = take<int>(r, "n_batches", rc.n_batches);
    rc.e_tol = take<double>(r, "e_tol", rc.e_tol);
    rc.occ_tol = take<double>(r, "occ_tol", rc.occ_tol);
    rc.max_iters = take<int>(r, "max_iters", rc.max_iters);
    rc.carryover_threshold = take<double>(r, "carryover_threshold", rc.carryover_threshold);
    rc.ext_dominance_threshold =
        take<double>(r, "ext_dominance_threshold", rc.ext_dominance_threshold);
    rc.accumulate_carryover = take<bool>(r, "accumulate_carryover", rc.accumulate_carryover);
    rc.recover = take<bool>(r, "recover", rc.recover);
    rc.max_subspace = take<std::size_t>(r, "max_subspace", rc.max_subspace);
    rc.threads = take<int>(r, "threads", rc.threads);
    reject_unknown(r, "recovery");
  }
  const std::string src = take<std::string>(j, "sample_source", "simulator");
  if (src != "simulator" && src != "files")
    throw ValidationError("sample_source", "expected simulator or files, got '" + src + "'");
  c.source = src == "simulator" ? SampleSource::Simulator : SampleSource::Files;
  c.sample_dir = take<std::string>(j, "sample_dir", c.sample_dir);
  c.noise = take<double>(j, "noise", c.noise);
  c.shots = take<std::uint64_t>(j, "shots", c.shots);
  c.seed = take<std::uint64_t>(j, "seed", c.seed);
  c.workers = take<int>(j, "workers", c.workers);
  c.connectivity = take<std::string>(j, "connectivity", c.connectivity);
  c.adjacency = take<std::vector<std::vector<int>>>(j, "adjacency", {});
  c.lucj_layers = take<int>(j, "lucj_layers", c.lucj_layers);
  c.fci_max_determinants = take<std::uint64_t>(j, "fci_max_determinants", c.fci_max_determinants);
  reject_unknown(j, "config");

  if (!(c.eta <= 2.0) || std::isnan(c.eta) || c.eta < 0.0)
    throw ValidationError("eta", "must lie in [0, 2]");
  if (c.dispatch_threshold < 1) throw ValidationError("dispatch_threshold", "must be >= 1");
  c.recovery.validate();
  if (!(c.noise >= 0.0 && c.noise <= 0.5)) throw ValidationError("noise", "must lie in [0, 0.5]");
  if (c.workers < 1) throw ValidationError("workers", "must be >= 1");
  if (c.lucj_layers < 0) throw ValidationError("lucj_layers", "must be >= 0");
  if (c.fci_max_determinants < 1) throw ValidationError("fci_max_determinants", "must be >= 1");
  if (c.source == SampleSource::Simulator) {
    if (c.shots < static_cast<std::uint64_t>(c.recovery.samples_per_batch))
      throw ValidationError("shots", "must be at least recovery.samples_per_batch");
    if (!c.sample_dir.empty())
      throw ValidationError("sample_dir", "only used with sample_source = files");
  } else if (c.sample_dir.empty()) {
    throw ValidationError("sample_dir", "required with sample_source = files");
  }
  static const std::set<std::string> conns{"all_to_all", "line", "ladder", "lists"};
  if (!conns.count(c.connectivity))
    throw ValidationError("connectivity", "unknown connectivity '" + c.connectivity + "'");
  if ((c.connectivity == "lists") != !c.adjacency.empty())
    throw ValidationError("adjacency", "adjacency lists go with connectivity = lists");
  if (c.per_atom && !c.fragments.empty())
    throw ValidationError("fragments", "explicit fragments need fragmentation = explicit");
  if (!c.per_atom && c.fragments.empty())
    throw ValidationError("fragments", "fragmentation = explicit needs fragment groups");
  if (c.workdir.empty()) throw ValidationError("workdir", "must not be empty");
  return c;
}

std::string config_to_json(const PipelineConfig& c) {
  json j = {{"bundle", c.bundle},
            {"workdir", c.workdir},
            {"conformer", c.conformer},
            {"fragmentation", c.per_atom ? "per_atom" : "explicit"},
            {"fragments", c.fragments},
            {"eta", c.eta},
            {"dispatch_threshold", c.dispatch_threshold},
            {"recovery", recovery_json(c.recovery)},
            {"sample_source", source_name(c.source)},
            {"sample_dir", c.sample_dir},
            {"noise", c.noise},
            {"shots", c.shots},
            {"seed", c.seed},
            {"workers", c.workers},
            {"connectivity", c.connectivity},
            {"adjacency", c.adjacency},
            {"lucj_layers", c.lucj_layers},
            {"fci_max_determinants", c.fci_max_determinants}};
  return j.dump(1);
}

void apply_environment(PipelineConfig& cfg) {
  if (const char* w = std::getenv("EWFSQD_WORKDIR"); w && *w) cfg.workdir = w;
}

RunManifest fragment_stage(const PipelineConfig& cfg) {
  if (cfg.bundle.empty()) throw ValidationError("bundle", "no mean-field bundle given");
  const MeanFieldBundle mf = load_meanfield_bundle(cfg.bundle);
  const WorkPaths paths{cfg.workdir};
  FragmentSpec spec;
  const LocalBasis basis = orthogonalize_localize(mf);
  if (cfg.per_atom) {
    spec = FragmentSpec::per_atom(basis);
  } else {
    spec.groups = cfg.fragments;
    for (std::size_t g = 0; g < spec.groups.size(); ++g) spec.labels.push_back("g" + std::to_string(g));
  }
  const Fragmentation frag = fragment_system(mf, spec, cfg.eta);

  RunManifest m;
  m.conformer = cfg.conformer.empty() ? mf.label : cfg.conformer;
  m.bundle = fs::absolute(cfg.bundle).string();
  m.n_local = frag.integrals.n;
  m.n_elec = frag.integrals.n_elec;
  m.e_nuc = frag.integrals.e_nuc;
  m.e_hf = frag.integrals.e_hf;
  m.config_json = config_to_json(cfg);
  for (const auto& c : frag.clusters) {
    ClusterRecord rec;
    rec.id = c.id;
    rec.fcidump = "clusters/" + c.id + ".fcidump";
    rec.fragment_orbitals = c.fragment;
    rec.n_mo = c.n_mo();
    rec.solver = dispatch_solver(c.n_mo(), cfg.dispatch_threshold);
    rec.columns = c.columns;
    ClusterHamiltonian ham;
    try {
      ham = extract_cluster_hamiltonian(frag.integrals, c, &rec.core_potential);
    } catch (const Error& e) {
      throw StageError(e.kind(), c.id, "fragment", e.what());
    }
    std::ostringstream text;
    write_fcidump(ham, text);
    write_text(paths.fcidump(c.id), text.str());
    m.clusters.push_back(std::move(rec));
  }
  m.validate();
  write_text(paths.manifest(), manifest_to_json(m) + "\n");
  return m;
}

PipelineConfig load_workdir_config(const fs::path& workdir) {
  const RunManifest m = read_manifest(WorkPaths{workdir}.manifest());
  PipelineConfig cfg = validate_config(m.config_json);
  cfg.workdir = workdir.string();
  return cfg;
}

std::string checkpoint_key(const PipelineConfig& cfg, const RunManifest& manifest,
                           std::size_t index) {
  const WorkPaths paths{cfg.workdir};
  const ClusterRecord& rec = manifest.clusters.at(index);
  json settings = solver_settings(cfg, rec.solver);
  settings["seed"] = cluster_seed(cfg, index);
  std::string material = read_text(paths.fcidump(rec.id));
  material += '\n';
  material += settings.dump();
  if (rec.solver == SolverKind::Sqd && cfg.source == SampleSource::Files)
    material += read_text(fs::path(cfg.sample_dir) / (rec.id + ".samples"));
  return sha256_hex(material);
}

std::vector<SolveRecord> solve_stage(const PipelineConfig& cfg,
                                     const std::vector<std::string>& only) {
  const WorkPaths paths{cfg.workdir};
  const RunManifest m = read_manifest(paths.manifest());
  std::vector<std::size_t> todo;
  std::set<std::string> wanted(only.begin(), only.end());
  for (std::size_t k = 0; k < m.clusters.size(); ++k)
    if (wanted.empty() || wanted.erase(m.clusters[k].id)) todo.push_back(k);
  if (!wanted.empty())
    throw ValidationError("cluster", "unknown cluster id '" + *wanted.begin() + "'");

  std::vector<SolveRecord> records(todo.size());
  std::vector<std::exception_ptr> errors(todo.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < todo.size();) {
      const std::size_t k = todo[t];
      const ClusterRecord& rec = m.clusters[k];
      records[t] = {rec.id, rec.solver, false};
      try {
        const std::string key = checkpoint_key(cfg, m, k);
        if (stored_key(paths.result(rec.id)) == key) {
          records[t].reused = true;
          continue;
        }
        const Solved s = solve_one(cfg, paths, m, k);
        if (rec.solver == SolverKind::Sqd) write_text(paths.diagnostics(rec.id), s.diagnostics);
        write_text(paths.result(rec.id), result_to_json(s, key));
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const int width = std::max(1, std::min<int>(cfg.workers, todo.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < width; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return records;
}

ClusterResult read_cluster_result(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "ewfsqd-result")
      throw ValidationError("result", path.string() + " is not a cluster result");
    ClusterResult r;
    r.id = j.at("id").get<std::string>();
    r.solver = solver_kind_from_string(j.at("solver").get<std::string>());
    r.energy = j.at("energy").get<double>();
    const auto& one = j.at("rdm").at("one");
    const int m = static_cast<int>(one.size());
    r.one.resize(m, m);
    for (int p = 0; p < m; ++p)
      for (int q = 0; q < m; ++q) r.one(p, q) = one.at(p).at(q).get<double>();
    r.two = Rdm2(m);
    r.two.data = j.at("rdm").at("two").get<std::vector<double>>();
    if (r.two.data.size() != static_cast<std::size_t>(m) * m * m * m)
      throw ValidationError("result", "two-body density has the wrong length");
    if (j.contains("stats")) {
      const auto& s = j["stats"];
      SubspaceStats st;
      st.cluster = r.id;
      st.norb = s.at("norb").get<int>();
      st.n_alpha = s.at("n_alpha").get<int>();
      st.n_beta = s.at("n_beta").get<int>();
      st.full_dim = s.at("full_dim").get<std::uint64_t>();
      st.sqd_dim = s.at("sqd_dim").get<std::uint64_t>();
      st.ext_dim = s.at("ext_dim").get<std::uint64_t>();
      r.stats = st;
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Collation collate_stage(const fs::path& workdir) {
  const WorkPaths paths{workdir};
  const RunManifest m = read_manifest(paths.manifest());
  const auto hams = load_hamiltonians(paths, m);
  std::vector<ClusterResult> results;
  std::error_code ec;
  for (const auto& c : m.clusters)
    if (fs::exists(paths.result(c.id), ec)) {
      ClusterResult r = read_cluster_result(paths.result(c.id));
      r.columns = c.columns;
      r.projector = fragment_projector(c.columns, c.fragment_orbitals);
      results.push_back(std::move(r));
    }
  return collate_global_energy(m, hams, results);
}

EnergyReport report_stage(const fs::path& workdir) {
  const WorkPaths paths{workdir};
  const RunManifest m = read_manifest(paths.manifest());
  const Collation col = collate_stage(workdir);
  EnergyReport rep;
  rep.a.label = m.conformer;
  rep.a.energy = col.e_total;
  rep.a.clusters = col.clusters;
  rep.b.label.clear();
  std::string digest_material;
  std::error_code ec;
  for (const auto& c : m.clusters) {
    ++rep.solver_census[to_string(c.solver)];
    digest_material += read_text(paths.result(c.id));
    if (fs::exists(paths.diagnostics(c.id), ec)) digest_material += read_text(paths.diagnostics(c.id));
  }
  rep.diagnostics_digest = sha256_hex(digest_material);
  write_text(paths.report_json(), report_to_json(rep));
  std::ostringstream table;
  write_report_table(rep, table);
  write_text(paths.report_txt(), table.str());
  return rep;
}

EnergyReport run_pipeline(const PipelineConfig& cfg, RunLog* log) {
  fragment_stage(cfg);
  auto solves = solve_stage(cfg);
  if (log) log->solves = std::move(solves);
  return report_stage(cfg.workdir);
}

EnergyReport compare_workdirs(const fs::path& a, const fs::path& b) {
  const EnergyReport ra = report_from_json(read_text(WorkPaths{a}.report_json()));
  const EnergyReport rb = report_from_json(read_text(WorkPaths{b}.report_json()));
  EnergyReport rep = relative_energy_report(ra.a.energy, rb.a.energy, ra.a.label, rb.a.label);
  rep.a = ra.a;
  rep.b = rb.a;
  for (const auto* r : {&ra, &rb})
    for (const auto& [k, v] : r->solver_census) rep.solver_census[k] += v;
  rep.diagnostics_digest = sha256_hex(ra.diagnostics_digest + rb.diagnostics_digest);
  return rep;
}

}  // namespace ewfsqd
