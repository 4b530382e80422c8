#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gocmpc/io.hpp"

namespace py = pybind11;
using namespace gocmpc;

namespace {

Goc graph(int num_nodes, const std::vector<std::pair<int, int>>& edges) {
  Goc g = Goc::from_edges(num_nodes, edges);
  SystemSpec spec;
  spec.agent_dims = {2};
  spec.workspace.lo = VectorXd::Constant(2, -1.0);
  spec.workspace.hi = VectorXd::Constant(2, 1.0);
  validate_goc(g, spec);
  return g;
}

Method method_of(const std::string& name) {
  if (name == "goc") return Method::kGoc;
  if (name == "baseline" || name == "linearized-baseline") return Method::kBaseline;
  throw py::value_error("method must be goc or baseline");
}

py::dict report_dict(const Scenario& s, Method m, const EpisodeReport& r) {
  py::dict d;
  const auto row = MetricsRow::from_report(s, m, r);
  d["scenario"] = row.scenario;
  d["method"] = row.method;
  d["seed"] = row.seed;
  d["success"] = r.success;
  d["cycles"] = r.cycles;
  d["max_time_s"] = r.max_cycle_seconds;
  d["avg_time_s"] = r.avg_cycle_seconds;
  d["total_length_m"] = r.total_length;
  d["backtracks"] = r.backtracks;
  d["sim_time_s"] = r.sim_time;
  d["first_makespan_s"] = r.first_makespan;
  d["error"] = r.error;
  d["warnings"] = r.warnings;
  std::vector<int> bt_nodes;
  for (const auto& e : r.backtrack_events) bt_nodes.push_back(e.node);
  d["backtrack_nodes"] = bt_nodes;
  d["times"] = r.times;
  MatrixXd traj(static_cast<Eigen::Index>(r.trajectory.size()), s.x0.size());
  for (std::size_t i = 0; i < r.trajectory.size(); ++i) traj.row(static_cast<Eigen::Index>(i)) = r.trajectory[i];
  d["trajectory"] = traj;
  d["metrics_csv_line"] = metrics_csv_line(row);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Graph-of-constraints model predictive control planner";
  m.attr("SCHEMA_VERSION") = kSchemaVersion;

  auto error = py::register_exception<Error>(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<SchemaVersionMismatch>(m, "SchemaVersionMismatch", error.ptr());
  py::register_exception<CycleDetected>(m, "CycleDetected", error.ptr());

  py::class_<Scenario>(m, "Scenario")
      .def_readwrite("id", &Scenario::id)
      .def_readwrite("seed", &Scenario::seed)
      .def_readwrite("budget", &Scenario::budget)
      .def_property_readonly("num_agents", [](const Scenario& s) { return s.model.spec.num_agents(); })
      .def_property_readonly("num_keypoints", [](const Scenario& s) { return s.model.spec.num_keypoints; })
      .def_property_readonly("num_nodes", [](const Scenario& s) { return s.model.goc.num_nodes; })
      .def_property_readonly("subtask_count", [](const Scenario& s) { return s.model.goc.subtask_count; })
      .def_property_readonly("edges", [](const Scenario& s) {
        std::vector<std::pair<int, int>> out;
        for (const auto& e : s.model.goc.edges) out.push_back(e.key());
        return out;
      })
      .def_property_readonly("x0", [](const Scenario& s) { return VectorXd(s.x0.values()); })
      .def("to_json", &serialize_scenario)
      .def("reseed", &reseed, py::arg("seed"));

  m.def("parse_scenario", [](const std::string& text) { return parse_scenario(text); }, py::arg("text"));
  m.def("load_scenario", [](const std::string& path) { return load_scenario(path); }, py::arg("path"));
  m.def("serialize_scenario", &serialize_scenario, py::arg("scenario"));
  m.def("generate_stacking_scenario", &generate_stacking_scenario, py::arg("n_objects"), py::arg("m_agents"),
        py::arg("seed") = 0);
  m.def("generate_parallel_pickup_scenario", &generate_parallel_pickup_scenario, py::arg("seed") = 0);

  m.def(
      "run_episode",
      [](const Scenario& s, const std::string& method, bool record_trajectory, double dt_sim) {
        EpisodeOptions opts;
        opts.method = method_of(method);
        opts.record_trajectory = record_trajectory;
        opts.dt_sim = dt_sim;
        EpisodeReport r;
        {
          py::gil_scoped_release release;
          r = run_episode(s, opts);
        }
        return report_dict(s, opts.method, r);
      },
      py::arg("scenario"), py::arg("method") = "goc", py::arg("record_trajectory") = true, py::arg("dt_sim") = 0.0);

  m.def(
      "trajectory_csv",
      [](const Scenario& s, const std::string& method) {
        EpisodeOptions opts;
        opts.method = method_of(method);
        return trajectory_csv(s, run_episode(s, opts));
      },
      py::arg("scenario"), py::arg("method") = "goc");
  m.def(
      "render_svg",
      [](const std::string& csv, const std::string& view) {
        if (view != "xy" && view != "xz") throw py::value_error("view must be xy or xz");
        return render_svg(parse_trajectory_csv(csv), view == "xy" ? View::kXY : View::kXZ);
      },
      py::arg("trajectory_csv"), py::arg("view") = "xy");

  m.def(
      "validate_goc", [](int n, const std::vector<std::pair<int, int>>& edges) { graph(n, edges); },
      py::arg("num_nodes"), py::arg("edges"));
  m.def(
      "cut_edges",
      [](int n, const std::vector<std::pair<int, int>>& edges, const std::set<int>& remaining) {
        return cut_edges(graph(n, edges), remaining);
      },
      py::arg("num_nodes"), py::arg("edges"), py::arg("remaining"));
  m.def(
      "frontier",
      [](int n, const std::vector<std::pair<int, int>>& edges, const std::set<int>& remaining) {
        return subgraph(graph(n, edges), remaining).frontier;
      },
      py::arg("num_nodes"), py::arg("edges"), py::arg("remaining"));
  m.def(
      "linearize_order", [](int n, const std::vector<std::pair<int, int>>& edges) { return linearize_order(graph(n, edges)); },
      py::arg("num_nodes"), py::arg("edges"));

  m.def(
      "solve_qp",
      [](const MatrixXd& p, const VectorXd& q, const MatrixXd& a, const VectorXd& l, const VectorXd& u) {
        const auto rep = solve_qp(QpProblem(p, q, a, l, u));
        py::dict d;
        d["x"] = rep.x;
        d["y"] = rep.multipliers;
        d["status"] = to_string(rep.status);
        d["objective"] = rep.objective;
        d["iterations"] = rep.iterations;
        return d;
      },
      py::arg("P"), py::arg("q"), py::arg("A"), py::arg("l"), py::arg("u"));

  m.def(
      "eval_spline",
      [](const std::vector<VectorXd>& waypoints, const std::vector<VectorXd>& velocities,
         const std::vector<double>& deltas, double t) {
        AgentSpline s{waypoints, velocities, deltas};
        if (s.waypoints.size() != s.deltas.size() + 1 || s.velocities.size() != s.waypoints.size()) {
          throw py::value_error("need one more waypoint and velocity than segment durations");
        }
        const auto smp = eval_spline(s, t);
        return py::make_tuple(smp.position, smp.velocity);
      },
      py::arg("waypoints"), py::arg("velocities"), py::arg("deltas"), py::arg("t"));
}
