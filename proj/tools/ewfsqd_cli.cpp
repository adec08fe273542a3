#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "ewfsqd/clirun.hpp"
#include "ewfsqd/errors.hpp"
#include "json.hpp"

using namespace ewfsqd;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUnexpected = 1, kValidation = 2, kSolver = 3, kIo = 4, kUsage = 64 };

struct Flags {
  std::string config;
  std::optional<std::string> bundle, workdir, conformer, source, sample_dir, connectivity;
  std::optional<double> eta, noise;
  std::optional<int> threshold, workers, samples_per_batch, batches, max_iters, layers, threads;
  std::optional<std::uint64_t> shots, seed;
  bool whole_system = false;
  bool no_recovery = false;
};

void add_config_flags(CLI::App* app, Flags& f) {
  app->add_option("-c,--config", f.config, "JSON pipeline configuration");
  app->add_option("--bundle", f.bundle, "mean-field bundle");
  app->add_option("-w,--workdir", f.workdir, "work directory (default: EWFSQD_WORKDIR)");
  app->add_option("--conformer", f.conformer, "label used in reports");
  app->add_option("--eta", f.eta, "BNO occupation threshold");
  app->add_option("--threshold", f.threshold, "clusters with at least this many MOs use SQD");
  app->add_option("--shots", f.shots);
  app->add_option("--noise", f.noise, "symmetric readout bit-flip probability");
  app->add_option("--seed", f.seed);
  app->add_option("-j,--workers", f.workers, "parallel cluster jobs");
  app->add_option("--source", f.source, "simulator | files");
  app->add_option("--sample-dir", f.sample_dir, "directory of <cluster>.samples files");
  app->add_option("--samples-per-batch", f.samples_per_batch);
  app->add_option("--batches", f.batches);
  app->add_option("--max-iters", f.max_iters);
  app->add_option("--threads", f.threads, "threads per cluster for batch solves");
  app->add_option("--connectivity", f.connectivity, "all_to_all | line | ladder | lists");
  app->add_option("--layers", f.layers, "LUCJ layers (0 = every factorization term)");
  app->add_flag("--whole-system", f.whole_system, "one fragment spanning every orbital");
  app->add_flag("--no-recovery", f.no_recovery, "discard out-of-sector shots instead");
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PipelineConfig build_config(const Flags& f, std::size_t n_orbitals_hint = 0) {
  json j = f.config.empty() ? json::object() : json::parse(slurp(f.config), nullptr, false);
  if (j.is_discarded()) throw ParseError("config " + f.config + " is not valid JSON");
  auto set = [&](const char* k, const auto& v) {
    if (v) j[k] = *v;
  };
  set("bundle", f.bundle);
  set("workdir", f.workdir);
  set("conformer", f.conformer);
  set("eta", f.eta);
  set("dispatch_threshold", f.threshold);
  set("shots", f.shots);
  set("noise", f.noise);
  set("seed", f.seed);
  set("workers", f.workers);
  set("sample_source", f.source);
  set("sample_dir", f.sample_dir);
  set("connectivity", f.connectivity);
  set("lucj_layers", f.layers);
  auto rec = [&](const char* k, const auto& v) {
    if (v) j["recovery"][k] = *v;
  };
  rec("samples_per_batch", f.samples_per_batch);
  rec("n_batches", f.batches);
  rec("max_iters", f.max_iters);
  rec("threads", f.threads);
  if (f.no_recovery) j["recovery"]["recover"] = false;
  if (f.whole_system) {
    j["fragmentation"] = "explicit";
    std::vector<int> all;
    for (std::size_t p = 0; p < n_orbitals_hint; ++p) all.push_back(static_cast<int>(p));
    j["fragments"] = {all};
  }
  PipelineConfig cfg = validate_config(j.dump());
  if (!f.workdir) apply_environment(cfg);
  return cfg;
}

std::size_t bundle_orbitals(const Flags& f) {
  std::string path;
  if (f.bundle) {
    path = *f.bundle;
  } else if (!f.config.empty()) {
    const json j = json::parse(slurp(f.config), nullptr, false);
    if (j.is_object() && j.contains("bundle")) path = j["bundle"].get<std::string>();
  }
  if (path.empty()) throw ValidationError("bundle", "no mean-field bundle given");
  return static_cast<std::size_t>(load_meanfield_bundle(path).n_ao);
}

std::string workdir_from(const std::optional<std::string>& flag) {
  if (flag) return *flag;
  if (const char* w = std::getenv("EWFSQD_WORKDIR"); w && *w) return w;
  return PipelineConfig{}.workdir;
}

void print_solves(const std::vector<SolveRecord>& solves) {
  for (const auto& s : solves)
    std::cout << s.id << "  " << to_string(s.solver) << "  " << (s.reused ? "reused" : "solved")
              << "\n";
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Validation: return kValidation;
    case ErrorKind::Solver: return kSolver;
    case ErrorKind::Io: return kIo;
  }
  return kUnexpected;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedded fragment solver pipeline (FCI / SQD)"};
  app.require_subcommand(1);

  Flags ff, rf;
  auto* frag = app.add_subcommand("fragment", "fragment a bundle into cluster FCIDUMPs");
  add_config_flags(frag, ff);

  std::optional<std::string> solve_dir;
  std::vector<std::string> solve_ids;
  std::optional<int> solve_workers;
  auto* solve = app.add_subcommand("solve", "solve clusters of a fragmented work directory");
  solve->add_option("-w,--workdir", solve_dir);
  solve->add_option("--cluster", solve_ids, "only these cluster ids");
  solve->add_option("-j,--workers", solve_workers);

  std::optional<std::string> collate_dir;
  auto* collate = app.add_subcommand("collate", "collate cluster results into a total energy");
  collate->add_option("-w,--workdir", collate_dir);

  auto* run = app.add_subcommand("run", "fragment, solve, collate and report");
  add_config_flags(run, rf);

  std::optional<std::string> rep_dir, rep_a, rep_b, rep_out;
  std::vector<double> rep_energies;
  std::vector<std::string> rep_labels;
  std::string rep_method = "EWF-(FCI,SQD)";
  bool rep_json = false;
  auto* report = app.add_subcommand("report", "conformer energy table");
  report->add_option("-w,--workdir", rep_dir, "single work directory");
  report->add_option("--a", rep_a, "first conformer work directory");
  report->add_option("--b", rep_b, "second conformer work directory");
  report->add_option("--energies", rep_energies, "E_a E_b in hartree")->expected(2);
  report->add_option("--labels", rep_labels, "labels for --energies")->expected(2);
  report->add_option("--method", rep_method);
  report->add_option("-o,--out", rep_out, "also write the table here");
  report->add_flag("--json", rep_json, "print JSON instead of the table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*frag) {
      PipelineConfig cfg = build_config(ff, ff.whole_system ? bundle_orbitals(ff) : 0);
      const RunManifest m = fragment_stage(cfg);
      for (const auto& c : m.clusters)
        std::cout << c.id << "  n_mo=" << c.n_mo << "  " << to_string(c.solver) << "\n";
      std::cout << "manifest: " << WorkPaths{cfg.workdir}.manifest().string() << "\n";
    } else if (*solve) {
      PipelineConfig cfg = load_workdir_config(workdir_from(solve_dir));
      if (solve_workers) cfg.workers = *solve_workers;
      if (cfg.workers < 1) throw ValidationError("workers", "must be >= 1");
      print_solves(solve_stage(cfg, solve_ids));
    } else if (*collate) {
      const Collation col = collate_stage(workdir_from(collate_dir));
      std::cout.precision(12);
      for (const auto& c : col.clusters)
        std::cout << c.id << "  " << c.fragment_energy << "  electrons=" << c.electrons << "\n";
      std::cout << "E_total " << col.e_total << "\n";
    } else if (*run) {
      PipelineConfig cfg = build_config(rf, rf.whole_system ? bundle_orbitals(rf) : 0);
      RunLog log;
      const EnergyReport rep = run_pipeline(cfg, &log);
      print_solves(log.solves);
      write_report_table(rep, std::cout);
    } else if (*report) {
      EnergyReport rep;
      if (rep_a || rep_b) {
        if (!rep_a || !rep_b) throw ValidationError("report", "--a and --b go together");
        rep = compare_workdirs(*rep_a, *rep_b);
      } else if (!rep_energies.empty()) {
        if (rep_labels.empty()) rep_labels = {"a", "b"};
        rep = relative_energy_report(rep_energies[0], rep_energies[1], rep_labels[0],
                                     rep_labels[1]);
      } else {
        rep = report_stage(workdir_from(rep_dir));
      }
      rep.method = rep_method;
      std::ostringstream text;
      if (rep_json)
        text << report_to_json(rep);
      else
        write_report_table(rep, text);
      std::cout << text.str();
      if (rep_out) {
        std::ofstream out(*rep_out);
        if (!out || !(out << text.str())) throw IoError("cannot write " + *rep_out);
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  return kOk;
}
