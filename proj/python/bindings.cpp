#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tribody/analysis.hpp"
#include "tribody/disorder.hpp"
#include "tribody/errors.hpp"
#include "tribody/lattice.hpp"
#include "tribody/mc.hpp"
#include "tribody/oracle.hpp"
#include "tribody/sweep.hpp"

namespace py = pybind11;
using namespace tribody;

namespace {

Curve to_curve(int L, const std::vector<double>& T, const std::vector<double>& y, const std::vector<double>& err) {
  if (T.size() != y.size() || T.size() != err.size()) throw py::value_error("T, y and err must have equal length");
  Curve c;
  c.L = L;
  for (std::size_t i = 0; i < T.size(); ++i) c.points.push_back({T[i], y[i], err[i]});
  return c;
}

py::dict crossing_dict(const CrossingEstimate& e) {
  py::dict d;
  d["L1"] = e.L1;
  d["L2"] = e.L2;
  d["status"] = status_name(e.status);
  d["T_cross"] = e.T_cross;
  d["err"] = e.err;
  d["window"] = py::make_tuple(e.T_lo, e.T_hi);
  d["n_points"] = e.n_points;
  d["chi2_dof"] = py::make_tuple(e.chi2_dof[0], e.chi2_dof[1]);
  d["note"] = e.note;
  return d;
}

py::dict averages_dict(const ThermalAverages& a) {
  py::dict d;
  for (int o = 0; o < kNumObs; ++o) d[obs_name(static_cast<Obs>(o))] = a[static_cast<std::size_t>(o)];
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Simulation and phase-boundary analysis of the random three-body Ising model";

  py::register_exception<SizeError>(m, "SizeError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", PyExc_ValueError);
  py::register_exception<InsufficientDataError>(m, "InsufficientDataError", PyExc_ValueError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<Lattice>(m, "Lattice")
      .def_property_readonly("kind", [](const Lattice& l) { return to_string(l.kind()); })
      .def_property_readonly("L", &Lattice::L)
      .def_property_readonly("num_sites", &Lattice::num_sites)
      .def_property_readonly("num_triangles", &Lattice::num_triangles)
      .def_property_readonly("k_min", &Lattice::k_min)
      .def_property_readonly("triangles",
                             [](const Lattice& l) { return std::vector<Triangle>(l.triangles().begin(), l.triangles().end()); })
      .def_property_readonly("positions",
                             [](const Lattice& l) {
                               std::vector<std::pair<double, double>> out;
                               for (const auto& s : l.sites()) out.emplace_back(s.x, s.y);
                               return out;
                             })
      .def_property_readonly("colors",
                             [](const Lattice& l) {
                               std::vector<int> out;
                               for (const auto& s : l.sites()) out.push_back(static_cast<int>(s.color));
                               return out;
                             })
      .def("is_valid", [](const Lattice& l) { return verify_lattice(l).ok(); })
      .def("to_json", &lattice_to_json);

  m.def("build_lattice", [](const std::string& kind, int L) { return build_lattice(parse_lattice_kind(kind), L); },
        py::arg("kind"), py::arg("L"));

  py::class_<DisorderRealization>(m, "Disorder")
      .def_property_readonly("p", &DisorderRealization::p)
      .def_property_readonly("seed", &DisorderRealization::seed)
      .def_property_readonly("n_negative", &DisorderRealization::n_negative)
      .def_property_readonly("tau",
                             [](const DisorderRealization& d) { return std::vector<int>(d.tau().begin(), d.tau().end()); })
      .def("to_json", &disorder_to_json)
      .def("__eq__", [](const DisorderRealization& a, const DisorderRealization& b) { return a == b; });

  m.def("sample_disorder", &sample_disorder, py::arg("lattice"), py::arg("p"), py::arg("seed"));
  m.def("disorder_from_json", &disorder_from_json);
  m.def("nishimori_temperature", &nishimori_temperature, py::arg("p"));
  m.def("csv_header", &csv_header);

  m.def(
      "exact_thermal",
      [](const Lattice& lat, const DisorderRealization& dis, double T) {
        const auto r = exact_thermal(lat, dis, T);
        py::dict d = averages_dict(r.as_averages());
        d["log_z"] = r.log_z;
        d["ground_energy"] = r.ground_energy;
        d["ground_degeneracy"] = r.ground_degeneracy;
        return d;
      },
      py::arg("lattice"), py::arg("disorder"), py::arg("T"));

  m.def(
      "exact_disorder_average",
      [](const Lattice& lat, double p, double T) {
        const auto a = exact_disorder_average(lat, p, T);
        py::dict d;
        d["energy"] = a.energy;
        d["m2"] = a.m2;
        d["q2"] = a.q2;
        d["chi0"] = a.chi0;
        d["chik"] = a.chik;
        d["xi_over_L"] = a.xi_over_L;
        d["xi_sg_over_L"] = a.xi_sg_over_L;
        d["binder"] = a.binder;
        return d;
      },
      py::arg("lattice"), py::arg("p"), py::arg("T"));

  m.def(
      "run_simulation",
      [](const Lattice& lat, const DisorderRealization& dis, std::vector<double> temperatures, std::uint64_t n_sweeps,
         std::uint64_t seed, int measure_every) {
        Schedule s;
        s.temperatures = std::move(temperatures);
        s.n_sweeps = n_sweeps;
        s.seed = seed;
        s.measure_every = measure_every;
        SimulationResult r;
        {
          py::gil_scoped_release release;
          r = run_simulation(lat, dis, s);
        }
        py::list out;
        for (std::size_t t = 0; t < r.temperatures.size(); ++t) {
          py::dict d = averages_dict(r.production[t]);
          d["T"] = r.temperatures[t];
          out.append(d);
        }
        return out;
      },
      py::arg("lattice"), py::arg("disorder"), py::arg("temperatures"), py::arg("n_sweeps") = 1024,
      py::arg("seed") = 0, py::arg("measure_every") = 1);

  m.def(
      "find_crossing",
      [](int L1, const std::vector<double>& T1, const std::vector<double>& y1, const std::vector<double>& e1, int L2,
         const std::vector<double>& T2, const std::vector<double>& y2, const std::vector<double>& e2) {
        return crossing_dict(find_crossing(to_curve(L1, T1, y1, e1), to_curve(L2, T2, y2, e2)));
      },
      py::arg("L1"), py::arg("T1"), py::arg("y1"), py::arg("err1"), py::arg("L2"), py::arg("T2"), py::arg("y2"),
      py::arg("err2"));

  m.def(
      "scaling_collapse",
      [](const std::vector<std::tuple<int, std::vector<double>, std::vector<double>, std::vector<double>>>& curves,
         double T_c_init, double nu_init) {
        std::vector<Curve> cs;
        for (const auto& [L, T, y, e] : curves) cs.push_back(to_curve(L, T, y, e));
        const auto r = scaling_collapse(cs, T_c_init, nu_init);
        py::dict d;
        d["T_c"] = r.T_c;
        d["T_c_err"] = r.T_c_err;
        d["nu"] = r.nu;
        d["nu_err"] = r.nu_err;
        d["cost"] = r.cost;
        d["initial_cost"] = r.initial_cost;
        d["converged"] = r.converged;
        return d;
      },
      py::arg("curves"), py::arg("T_c_init"), py::arg("nu_init") = 1.0);

  m.def(
      "validate_config",
      [](const std::filesystem::path& path) {
        try {
          load_config(path);
        } catch (const ConfigError& e) {
          std::vector<std::string> lines;
          std::string s = e.what();
          for (std::size_t a = 0, b; a <= s.size(); a = b + 1) {
            b = s.find('\n', a);
            if (b == std::string::npos) b = s.size();
            if (b > a) lines.push_back(s.substr(a, b - a));
          }
          return lines;
        }
        return std::vector<std::string>{};
      },
      py::arg("path"), "Problems found in a configuration file; empty when valid.");

  m.def(
      "run_sweep",
      [](const std::filesystem::path& config, bool resume, int workers) {
        const SweepConfig cfg = load_config(config);
        RunOptions opt;
        opt.resume = resume;
        opt.workers = workers;
        SweepOutcome r;
        {
          py::gil_scoped_release release;
          r = run_sweep(cfg, opt);
        }
        py::dict d;
        d["points"] = r.points;
        d["completed_points"] = r.completed_points;
        d["unequilibrated"] = r.unequilibrated;
        d["interrupted"] = r.interrupted;
        d["output_dir"] = cfg.output_dir;
        return d;
      },
      py::arg("config"), py::arg("resume") = false, py::arg("workers") = 0);

  m.def(
      "analyze",
      [](const std::filesystem::path& dir) {
        const auto a = analyze(dir);
        py::list boundary;
        for (const auto& b : a.boundary) {
          py::dict d;
          d["p"] = b.p;
          d["T_c"] = b.T_c;
          d["err"] = b.T_c_err;
          d["status"] = status_name(b.status);
          boundary.append(d);
        }
        py::dict out;
        out["boundary"] = boundary;
        if (a.has_p_c) {
          py::dict pc;
          pc["p_c"] = a.p_c.p_c;
          pc["err"] = a.p_c.err;
          pc["bracket"] = py::make_tuple(a.p_c.lo, a.p_c.hi);
          pc["method"] = method_name(a.p_c.method);
          out["p_c"] = pc;
        } else {
          out["p_c"] = py::none();
        }
        py::list nus;
        for (const auto& n : a.nu_estimates) nus.append(py::make_tuple(n.p, n.nu, n.err));
        out["nu"] = nus;
        out["warnings"] = a.warnings;
        return out;
      },
      py::arg("dir"));
}
