#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "etcons/analysis.hpp"
#include "etcons/error.hpp"
#include "etcons/io.hpp"
#include "etcons/pipeline.hpp"

namespace py = pybind11;
using namespace etcons;

namespace {

DirectedGraph make_graph(std::size_t n,
                         const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  DirectedGraph g(n);
  for (const auto& [from, to] : edges) g.add_edge(from, to);
  return g;
}

// The simulation plus everything verify needs, kept together so the
// Python side cannot pair a trace with the wrong scenario.
struct Run {
  Scenario scenario;
  DesignArtifact artifact;
  ScenarioConfig config;
  SimTrace trace;

  py::array_t<double> times() const {
    py::array_t<double> out(static_cast<py::ssize_t>(trace.samples.size()));
    auto v = out.mutable_unchecked<1>();
    for (std::size_t k = 0; k < trace.samples.size(); ++k) v(k) = trace.samples[k].t;
    return out;
  }

  // samples x agents x state_dim
  py::array_t<double> block(Mat Sample::*field) const {
    const auto s = static_cast<py::ssize_t>(trace.samples.size());
    const auto n = static_cast<py::ssize_t>(trace.n_agents);
    const auto d = static_cast<py::ssize_t>(trace.state_dim);
    py::array_t<double> out({s, n, d});
    auto v = out.mutable_unchecked<3>();
    for (py::ssize_t k = 0; k < s; ++k) {
      const Mat& m = trace.samples[static_cast<std::size_t>(k)].*field;
      for (py::ssize_t i = 0; i < n; ++i)
        for (py::ssize_t j = 0; j < d; ++j) v(k, i, j) = m(j, i);
    }
    return out;
  }

  std::string verify_json() const {
    const BoundConstants c = scenario_constants(scenario, artifact, config.x0);
    return report_to_json(verify_trace(trace, config, artifact.spectral, c),
                          scenario_hash(scenario))
        .dump();
  }
};

}  // namespace

PYBIND11_MODULE(_etcons, m) {
  m.doc() = "Event-triggered consensus: design, bounds, simulation, verification";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_ValueError);
  py::register_exception<SimulationError>(m, "SimulationError", PyExc_RuntimeError);
  py::register_exception<BoundDegeneracy>(m, "BoundDegeneracy", PyExc_ArithmeticError);

  m.def("expm", [](const Mat& a) { return expm(a); }, py::arg("a"));
  m.def("laplacian",
        [](std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
          return laplacian(make_graph(n, edges));
        },
        py::arg("n_agents"), py::arg("edges"),
        "Laplacian for 0-based edges (from, to); 'to' receives from 'from'.");
  m.def("has_spanning_tree",
        [](std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
          return has_spanning_tree(make_graph(n, edges));
        },
        py::arg("n_agents"), py::arg("edges"));
  m.def("lambda2",
        [](std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
          return spectral_transform(laplacian(make_graph(n, edges))).lambda2_real;
        },
        py::arg("n_agents"), py::arg("edges"));

  py::class_<Scenario>(m, "Scenario")
      .def_static("from_file", &read_scenario, py::arg("path"))
      .def_static("from_json",
                  [](const std::string& text) { return parse_scenario(text); },
                  py::arg("text"))
      .def("to_json", [](const Scenario& s) { return scenario_to_json(s).dump(); })
      .def_property_readonly("hash", &scenario_hash)
      .def_property_readonly("n_agents", &Scenario::n_agents)
      .def_property_readonly("x0", &initial_state)
      .def_readwrite("name", &Scenario::name)
      .def_readwrite("delay", &Scenario::delay)
      .def_readwrite("t_end", &Scenario::t_end)
      .def_readwrite("step_h", &Scenario::step_h)
      .def_readwrite("seed", &Scenario::seed);

  m.def("design_json",
        [](const Scenario& s) { return design_to_json(design_scenario(s), scenario_hash(s)).dump(); },
        py::arg("scenario"));
  m.def("bounds_json",
        [](const Scenario& s) {
          const DesignArtifact art = design_scenario(s);
          return bounds_to_json(bounds_report(scenario_constants(s, art, initial_state(s))),
                                scenario_hash(s))
              .dump();
        },
        py::arg("scenario"));

  py::class_<Run>(m, "Run")
      .def_property_readonly("times", &Run::times)
      .def_property_readonly("states", [](const Run& r) { return r.block(&Sample::x); })
      .def_property_readonly("models", [](const Run& r) { return r.block(&Sample::y_self); })
      .def_property_readonly("events",
                             [](const Run& r) {
                               std::vector<std::tuple<std::size_t, double, double>> out;
                               for (const auto& e : r.trace.events)
                                 out.emplace_back(e.agent, e.t_event, e.t_delivered);
                               return out;
                             })
      .def_property_readonly("step_h", [](const Run& r) { return r.config.step_h; })
      .def("verify_json", &Run::verify_json);

  m.def("simulate",
        [](const Scenario& s) {
          Run r;
          r.scenario = s;
          r.artifact = design_scenario(s);
          const BoundsReport b =
              bounds_report(scenario_constants(s, r.artifact, initial_state(s)));
          r.config = make_config(s, r.artifact.design, governing_tau(b, s.delay > 0.0));
          py::gil_scoped_release release;
          r.trace = run(r.config);
          return r;
        },
        py::arg("scenario"));
}
