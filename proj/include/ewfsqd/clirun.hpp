#pragma once

// Pipeline orchestration: configuration, fragmentation into a work directory,
// checkpointed per-cluster solves, collation from files and reporting.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ewfsqd/assemble.hpp"
#include "ewfsqd/sqdengine.hpp"

namespace ewfsqd {

enum class SampleSource { Simulator, Files };

struct PipelineConfig {
  std::string bundle;
  std::string workdir = "ewfsqd-work";
  std::string conformer;  // defaults to the bundle label
  bool per_atom = true;   // false: explicit `fragments`
  std::vector<std::vector<int>> fragments;
  double eta = 1e-5;
  int dispatch_threshold = 15;
  RecoveryConfig recovery;
  SampleSource source = SampleSource::Simulator;
  std::string sample_dir;
  double noise = 0.0;
  std::uint64_t shots = 100000;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string connectivity = "all_to_all";  // all_to_all | line | ladder | lists
  std::vector<std::vector<int>> adjacency;
  int lucj_layers = 1;  // 0: one layer per factorization term
  std::uint64_t fci_max_determinants = 5000000;
};

/// Parses a JSON object, applies defaults and checks ranges. Unknown keys and
/// contradictory settings raise ValidationError naming the key.
PipelineConfig validate_config(const std::string& json_text);
/// Canonical JSON of a validated config (every key present).
std::string config_to_json(const PipelineConfig& cfg);

/// EWFSQD_WORKDIR, when set and non-empty, replaces cfg.workdir.
void apply_environment(PipelineConfig& cfg);

std::string sha256_hex(const std::string& data);

struct WorkPaths {
  std::filesystem::path root;
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path fcidump(const std::string& id) const {
    return root / "clusters" / (id + ".fcidump");
  }
  std::filesystem::path result(const std::string& id) const {
    return root / "results" / (id + ".json");
  }
  std::filesystem::path diagnostics(const std::string& id) const {
    return root / "diagnostics" / (id + ".jsonl");
  }
  std::filesystem::path report_json() const { return root / "report.json"; }
  std::filesystem::path report_txt() const { return root / "report.txt"; }
};

/// Fragments the bundle and writes manifest.json and one FCIDUMP per cluster.
RunManifest fragment_stage(const PipelineConfig& cfg);

/// Reads the config stored in a work directory's manifest.
PipelineConfig load_workdir_config(const std::filesystem::path& workdir);

struct SolveRecord {
  std::string id;
  SolverKind solver = SolverKind::Fci;
  bool reused = false;
};

/// Solves the listed clusters (all when `only` is empty) with cfg.workers
/// parallel jobs. Results whose checkpoint key still matches are reused.
/// Completed results are kept on disk when another cluster fails.
std::vector<SolveRecord> solve_stage(const PipelineConfig& cfg,
                                     const std::vector<std::string>& only = {});

/// Checkpoint key of one cluster: FCIDUMP text, solver settings and seed.
std::string checkpoint_key(const PipelineConfig& cfg, const RunManifest& manifest,
                           std::size_t index);

ClusterResult read_cluster_result(const std::filesystem::path& path);

/// Collates from the files in `workdir` only.
Collation collate_stage(const std::filesystem::path& workdir);

/// Single-conformer report (b left empty) written to report.json/report.txt.
EnergyReport report_stage(const std::filesystem::path& workdir);

struct RunLog {
  std::vector<SolveRecord> solves;
};

EnergyReport run_pipeline(const PipelineConfig& cfg, RunLog* log = nullptr);

/// Table-1 style comparison of two finished work directories.
EnergyReport compare_workdirs(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace ewfsqd
