#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ewfsqd/assemble.hpp"
#include "ewfsqd/clirun.hpp"
#include "ewfsqd/errors.hpp"
#include "ewfsqd/lucjsim.hpp"
#include "ewfsqd/sqdengine.hpp"

namespace py = pybind11;
using namespace ewfsqd;

namespace {

py::dict report_dict(const EnergyReport& rep) {
  auto conformer = [](const ConformerEntry& c) {
    py::list clusters;
    for (const auto& cc : c.clusters) {
      py::dict d;
      d["id"] = cc.id;
      d["solver"] = to_string(cc.solver);
      d["n_mo"] = cc.n_mo;
      d["fragment_energy"] = cc.fragment_energy;
      d["electrons"] = cc.electrons;
      if (cc.stats) {
        d["sqd_dim"] = cc.stats->sqd_dim;
        d["ext_dim"] = cc.stats->ext_dim;
        d["full_dim"] = cc.stats->full_dim;
      }
      clusters.append(d);
    }
    py::dict d;
    d["label"] = c.label;
    d["energy"] = c.energy;
    d["clusters"] = clusters;
    return d;
  };
  py::dict d;
  d["method"] = rep.method;
  d["a"] = conformer(rep.a);
  if (!rep.b.label.empty()) {
    d["b"] = conformer(rep.b);
    d["delta_e_kcal"] = rep.delta_e_kcal;
  }
  d["solvers"] = rep.solver_census;
  d["diagnostics_sha256"] = rep.diagnostics_digest;
  return d;
}

SampleSet to_samples(int norb, const std::map<std::string, std::uint64_t>& counts) {
  SampleSet s(norb);
  for (const auto& [bits, n] : counts) s.add(from_bitstring(bits, norb), n);
  return s;
}

std::map<std::string, std::uint64_t> from_samples(const SampleSet& s) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : s.entries()) out[to_bitstring(e.bits, s.norb())] = e.count;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Fragment embedding with FCI and sample-based subspace solvers";

  static PyObject* base = py::exception<Error>(m, "Error", PyExc_RuntimeError).ptr();
  static PyObject* validation = py::exception<Error>(m, "ValidationError", base).ptr();
  static PyObject* solver = py::exception<Error>(m, "SolverError", base).ptr();
  static PyObject* io = py::exception<Error>(m, "IoError", base).ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyObject* type = base;
      switch (e.kind()) {
        case ErrorKind::Validation: type = validation; break;
        case ErrorKind::Solver: type = solver; break;
        case ErrorKind::Io: type = io; break;
      }
      PyErr_SetString(type, e.what());
    }
  });

  py::class_<ClusterHamiltonian>(m, "ClusterHamiltonian")
      .def_readonly("norb", &ClusterHamiltonian::norb)
      .def_readonly("n_alpha", &ClusterHamiltonian::n_alpha)
      .def_readonly("n_beta", &ClusterHamiltonian::n_beta)
      .def_readonly("e0", &ClusterHamiltonian::e0)
      .def_readonly("h", &ClusterHamiltonian::h)
      .def("eri", &ClusterHamiltonian::eri_at, py::arg("p"), py::arg("r"), py::arg("q"),
           py::arg("s"));

  m.def("read_fcidump", [](const std::string& path) { return read_fcidump(path); });

  m.def(
      "fci",
      [](const ClusterHamiltonian& ham) {
        const auto r = fci_solve(ham);
        return py::make_tuple(r.energy, r.rdms.one);
      },
      py::arg("ham"), "Ground-state energy and spin-summed 1-RDM.");

  m.def("sector_dimension", &sector_dimension, py::arg("norb"), py::arg("n_alpha"),
        py::arg("n_beta"));
  m.def(
      "dispatch_solver",
      [](int n_mo, int threshold) { return to_string(dispatch_solver(n_mo, threshold)); },
      py::arg("n_mo"), py::arg("threshold") = 15);

  m.def(
      "lucj_samples",
      [](const ClusterHamiltonian& ham, std::uint64_t shots, std::uint64_t seed, int layers,
         double noise) {
        const auto df = double_factorize_t2(mp2_amplitudes(ham));
        const int n_terms = static_cast<int>(df.terms.size());
        const int l = std::max(1, layers == 0 ? n_terms : std::min(layers, n_terms));
        const auto p = lucj_from_factorization(df, Connectivity::all_to_all(ham.norb), l);
        auto s = sample_counts(prepare_lucj_state(ham.norb, ham.n_alpha, ham.n_beta, p), shots,
                               seed);
        if (noise > 0.0) s = inject_readout_noise(s, noise, mix_seed(seed, 2));
        return from_samples(s);
      },
      py::arg("ham"), py::arg("shots") = 100000, py::arg("seed") = 0, py::arg("layers") = 1,
      py::arg("noise") = 0.0, "Bitstring counts from the MP2-initialized LUCJ state.");

  m.def(
      "sqd",
      [](const ClusterHamiltonian& ham, const std::map<std::string, std::uint64_t>& counts,
         std::uint64_t seed) {
        RecoveryConfig cfg;
        cfg.seed = seed;
        const auto rec = run_configuration_recovery(ham, to_samples(ham.norb, counts), cfg);
        const auto ext = extend_subspace(ham, rec.best, cfg);
        const auto st = subspace_stats("", ham, rec, ext);
        py::dict d;
        d["e_sqd"] = rec.e_best;
        d["e_ext"] = ext.energy;
        d["iterations"] = rec.trace.size();
        d["converged"] = rec.state.converged;
        d["sqd_dim"] = st.sqd_dim;
        d["ext_dim"] = st.ext_dim;
        d["full_dim"] = st.full_dim;
        return d;
      },
      py::arg("ham"), py::arg("counts"), py::arg("seed") = 0,
      "Configuration recovery followed by ext-SQD, default settings.");

  m.def(
      "run",
      [](const std::string& config_json) {
        PipelineConfig cfg = validate_config(config_json);
        apply_environment(cfg);
        EnergyReport rep;
        {
          py::gil_scoped_release release;
          rep = run_pipeline(cfg);
        }
        return report_dict(rep);
      },
      py::arg("config_json"), "Runs fragment, solve, collate and report.");

  m.def("validate_config",
        [](const std::string& text) { return config_to_json(validate_config(text)); });

  m.def(
      "relative_energy",
      [](double e_a, double e_b, const std::string& a, const std::string& b) {
        const auto rep = relative_energy_report(e_a, e_b, a, b);
        std::ostringstream table;
        write_report_table(rep, table);
        return py::make_tuple(rep.delta_e_kcal, table.str());
      },
      py::arg("e_a"), py::arg("e_b"), py::arg("label_a") = "a", py::arg("label_b") = "b");

  m.attr("KCAL_PER_HARTREE") = kKcalPerHartree;
}
