// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gocmpc/io.hpp"
#include "oracles.hpp"

using namespace gocmpc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void fail(const std::string& why) {
    if (pass) detail << "first failure: " << why << "; ";
    pass = false;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Scripted residuals on the six-node graph against a state machine.

struct ScriptStep {
  std::map<std::pair<int, int>, double> edge_residual;
  std::vector<double> node_residual;
  std::vector<double> delta;  // per agent
};

struct Trace {
  std::vector<std::set<int>> remaining;
  std::vector<int> backtracks;               // node or -1, per step
  std::vector<std::vector<int>> progressed;  // per step, in removal order
};

// Hand-written machine for the fixed graph 0->1, 0->2, 1->3, 2->4, 3->4,
// 3->5, 4->5 with agent chains 0,1,3,5 and 0,2,4,5.
Trace state_machine(const std::vector<ScriptStep>& script, double eps, double tau) {
  static const std::pair<int, int> kEdges[] = {{0, 1}, {0, 2}, {1, 3}, {2, 4}, {3, 4}, {3, 5}, {4, 5}};
  static const std::vector<int> kPreds[] = {{}, {0}, {0}, {1}, {2, 3}, {3, 4}};
  static const std::vector<int> kChain[] = {{0, 1, 3, 5}, {0, 2, 4, 5}};
  Trace t;
  std::set<int> r = {0, 1, 2, 3, 4, 5};
  for (const auto& s : script) {
    int back = -1;
    for (const auto& [a, b] : kEdges) {
      if (!r.count(a) && r.count(b) && s.edge_residual.at({a, b}) >= eps) {
        back = a;
        break;
      }
    }
    std::vector<int> done;
    if (back >= 0) {
      r.insert(back);
    } else {
      // Each agent offers the first remaining node of its chain; offers are
      // examined by node id, then agent.
      std::vector<std::pair<int, int>> offers;
      for (int j = 0; j < 2; ++j) {
        for (int v : kChain[j]) {
          if (r.count(v)) {
            offers.push_back({v, j});
            break;
          }
        }
      }
      std::sort(offers.begin(), offers.end());
      for (const auto& [v, j] : offers) {
        if (!r.count(v) || s.delta[j] > tau || s.node_residual[v] > eps) continue;
        bool ready = true;
        for (int p : kPreds[v]) ready = ready && !r.count(p);
        if (!ready) continue;
        r.erase(v);
        done.push_back(v);
      }
    }
    t.remaining.push_back(r);
    t.backtracks.push_back(back);
    t.progressed.push_back(done);
  }
  return t;
}

Trace library_run(const std::vector<ScriptStep>& script, double eps, double tau) {
  const Goc g = fixtures::six_node_graph();
  const std::vector<std::vector<int>> chains = {{0, 1, 3, 5}, {0, 2, 4, 5}};
  Trace t;
  RemainingSet r = all_remaining(g);
  for (const auto& s : script) {
    auto er = [&](int a, int b) { return VectorXd::Constant(1, s.edge_residual.at({a, b})); };
    auto nr = [&](int v) { return VectorXd::Constant(1, s.node_residual[v]); };
    std::vector<int> done;
    int back = -1;
    if (auto node = phase_backtrack(g, r, er, eps)) {
      back = *node;
      r.insert(back);
    } else {
      std::vector<ProgressCandidate> cands;
      for (int j = 0; j < 2; ++j) {
        for (int v : chains[j]) {
          if (r.count(v)) {
            cands.push_back({j, v, s.delta[j]});
            break;
          }
        }
      }
      done = phase_progress(g, r, cands, nr, tau, eps);
      for (int v : done) r.erase(v);
    }
    t.remaining.push_back(std::set<int>(r.begin(), r.end()));
    t.backtracks.push_back(back);
    t.progressed.push_back(done);
  }
  return t;
}

Verdict criterion_residual_scripts() {
  Verdict v;
  const double eps = 0.01;
  const double tau = 0.15;
  std::mt19937 rng(101);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  std::bernoulli_distribution violated(0.15);
  std::bernoulli_distribution unmet(0.35);
  int backtracks = 0;
  int progressions = 0;
  for (int script = 0; script < 50; ++script) {
    std::vector<ScriptStep> steps(40);
    for (auto& s : steps) {
      for (const auto& e : fixtures::six_node_graph().edges) s.edge_residual[e.key()] = violated(rng) ? 2 * eps : -eps;
      // Residuals exactly at the tolerance exercise both boundaries.
      for (int n = 0; n < 6; ++n) s.node_residual.push_back(unmet(rng) ? 2 * eps : (n % 2 ? eps : -eps));
      for (int j = 0; j < 2; ++j) s.delta.push_back(u(rng));
    }
    const auto want = state_machine(steps, eps, tau);
    const auto got = library_run(steps, eps, tau);
    if (want.remaining != got.remaining || want.backtracks != got.backtracks || want.progressed != got.progressed) {
      v.fail("script " + std::to_string(script) + " diverges");
    }
    for (int b : got.backtracks) backtracks += b >= 0;
    for (const auto& p : got.progressed) progressions += static_cast<int>(p.size());
  }
  v.detail << "50 scripts x 40 steps, " << backtracks << " backtrack and " << progressions
           << " progression events matched";
  return v;
}

// ---------------------------------------------------------------------------
// 2. QP against KKT enumeration, NLP fixtures.

Verdict criterion_solvers() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> dim(1, 10);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> width(0.0, 1.0);
  std::uniform_int_distribution<int> kind(0, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = dim(rng);
    const int m = dim(rng);
    // Rank-deficient factor plus a small ridge keeps P positive definite but
    // poorly conditioned on some trials.
    const MatrixXd b = MatrixXd::NullaryExpr(n, std::max(1, n - trial % 3), [&] { return unit(rng); });
    const MatrixXd p = b * b.transpose() + 0.05 * MatrixXd::Identity(n, n);
    const VectorXd q = VectorXd::NullaryExpr(n, [&] { return 2.0 * unit(rng); });
    const MatrixXd a = MatrixXd::NullaryExpr(m, n, [&] { return unit(rng); });
    const VectorXd ax = a * VectorXd::NullaryExpr(n, [&] { return unit(rng); });
    VectorXd l(m), up(m);
    for (int i = 0; i < m; ++i) {
      switch (kind(rng)) {
        case 0: l[i] = -kInf; up[i] = ax[i] + width(rng); break;
        case 1: l[i] = ax[i] - width(rng); up[i] = kInf; break;
        case 2: l[i] = up[i] = ax[i]; break;
        default: l[i] = ax[i] - width(rng); up[i] = ax[i] + width(rng); break;
      }
    }
    const auto expected = oracle::qp_active_set(p, q, a, l, up);
    if (!expected) {
      v.fail("oracle found no solution for trial " + std::to_string(trial));
      continue;
    }
    const auto rep = solve_qp(QpProblem(p, q, a, l, up));
    if (!rep.optimal()) {
      v.fail("qp trial " + std::to_string(trial) + " not optimal");
      continue;
    }
    const double err = (rep.x - expected->x).lpNorm<Eigen::Infinity>();
    worst = std::max(worst, err);
    if (err > 1e-6) v.fail("qp trial " + std::to_string(trial) + " off by " + fmt("%.2e", err));
  }

  // Projection of (1, 1) onto x0 <= 0.
  NlpProblem proj;
  proj.dimension = 2;
  proj.objective = [](const VectorXd& x, VectorXd& g) {
    g = 2.0 * (x - VectorXd::Ones(2));
    return (x - VectorXd::Ones(2)).squaredNorm();
  };
  proj.num_constraints = 1;
  proj.constraints = [](const VectorXd& x, VectorXd& g, MatrixXd* j) {
    g = VectorXd::Constant(1, x[0]);
    if (j) {
      j->setZero(1, 2);
      (*j)(0, 0) = 1.0;
    }
  };
  const auto r1 = solve_nlp(proj, VectorXd::Zero(2));
  if (!r1.optimal() || std::abs(r1.x[0]) > 1e-5 || std::abs(r1.x[1] - 1.0) > 1e-5) v.fail("half-plane projection");

  // Linear objective on the unit disk.
  NlpProblem disk;
  disk.dimension = 2;
  disk.objective = [](const VectorXd& x, VectorXd& g) {
    g = VectorXd::Ones(2);
    return x.sum();
  };
  disk.num_constraints = 1;
  disk.constraints = [](const VectorXd& x, VectorXd& g, MatrixXd* j) {
    g = VectorXd::Constant(1, x.squaredNorm() - 1.0);
    if (j) *j = 2.0 * x.transpose();
  };
  const auto r2 = solve_nlp(disk, VectorXd::Zero(2));
  const double s = std::sqrt(0.5);
  if (!r2.optimal() || std::abs(r2.x[0] + s) > 1e-5 || std::abs(r2.x[1] + s) > 1e-5 || r2.primal_residual > 1e-6) {
    v.fail("unit disk");
  }

  // Unconstrained Rosenbrock from (-1.2, 1).
  NlpProblem rosen;
  rosen.dimension = 2;
  rosen.objective = [](const VectorXd& x, VectorXd& g) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  rosen.constraints = [](const VectorXd&, VectorXd& g, MatrixXd* j) {
    g.resize(0);
    if (j) j->resize(0, 2);
  };
  NlpOptions opts;
  opts.max_inner_iterations = 2000;
  const auto r3 = solve_nlp(rosen, (VectorXd(2) << -1.2, 1.0).finished(), opts);
  if (!r3.optimal() || (r3.x - VectorXd::Ones(2)).lpNorm<Eigen::Infinity>() > 1e-4) v.fail("rosenbrock");

  const double elapsed = seconds_since(t0);
  if (elapsed >= 5.0) v.fail("runtime " + fmt("%.2f s", elapsed));
  v.detail << "20 QPs max error " << fmt("%.1e", worst) << ", 3 NLP fixtures, " << fmt("%.3f s", elapsed);
  return v;
}

// ---------------------------------------------------------------------------
// 3. P1 argmin against exhaustive branch comparison.

// Whether one agent would hold two keypoints at once: the carries (pick to
// place) of subtasks k1 and k2 are not ordered by a path in the graph.
bool carries_overlap(const Goc& g, const std::vector<std::pair<int, int>>& carry, int k1, int k2) {
  std::vector<std::vector<int>> succ(g.num_nodes);
  for (const auto& e : g.edges) succ[e.from].push_back(e.to);
  auto reaches = [&](int from, int to) {
    std::vector<char> seen(g.num_nodes, 0);
    std::vector<int> stack = {from};
    while (!stack.empty()) {
      const int n = stack.back();
      stack.pop_back();
      if (n == to) return true;
      if (seen[n]) continue;
      seen[n] = 1;
      for (int s : succ[n]) stack.push_back(s);
    }
    return false;
  };
  const auto [pick1, place1] = carry[k1];
  const auto [pick2, place2] = carry[k2];
  return !reaches(place1, pick2) && !reaches(place2, pick1);
}

double largest_residual(const ConstraintSet& cs, const AssignmentMatrix& a, const Configuration& x, double m_big) {
  double worst = -kInf;
  for (const auto& c : cs) {
    const VectorXd r = eval(c, a, x, m_big);
    if (r.size()) worst = std::max(worst, r.maxCoeff());
  }
  return worst;
}

Verdict criterion_waypoint_optimality() {
  Verdict v;
  double worst_residual = -kInf;
  int branches = 0;
  for (int scene = 0; scene < 10; ++scene) {
    const int objects = 1 + scene % 3;
    const Scenario s = generate_stacking_scenario(objects, 2, 500 + scene);
    const TaskModel& model = s.model;
    const auto r = all_remaining(model.goc);

    // Pick and place node of each subtask, read from the grasp edges.
    std::vector<std::pair<int, int>> carry(objects, {-1, -1});
    for (const auto& e : model.goc.edges) {
      for (const auto& c : e.constraints) {
        if (c.kind == ConstraintKind::kGraspAt && c.subtask) carry[*c.subtask] = {e.from, e.to};
      }
    }

    PlannerParams p = s.params;
    p.threads = 1;
    const auto res = solve_waypoints(model, r, s.x0, std::nullopt, p);

    double best = kInf;
    std::vector<int> best_agents;
    std::vector<std::pair<std::vector<int>, double>> solved;
    const int count = 1 << objects;
    for (int code = 0; code < count; ++code) {
      std::vector<int> agents(objects);
      for (int k = 0; k < objects; ++k) agents[k] = (code >> (objects - 1 - k)) & 1;
      bool ok = true;
      for (int k1 = 0; k1 < objects && ok; ++k1) {
        for (int k2 = k1 + 1; k2 < objects && ok; ++k2) {
          if (agents[k1] == agents[k2] && carries_overlap(model.goc, carry, k1, k2)) ok = false;
        }
      }
      if (!ok) continue;
      const auto br = solve_waypoint_branch(model, r, s.x0, std::nullopt, p, AssignmentMatrix(2, agents));
      ++branches;
      if (!br.report.optimal()) continue;
      solved.push_back({agents, br.report.objective});
      // Codes ascend lexicographically, so a strict improvement keeps the
      // first of equal objectives.
      if (br.report.objective < best) {
        best = br.report.objective;
        best_agents = agents;
      }
    }
    // A second branch within the tie tolerance makes the argmin ambiguous.
    int ties = 0;
    for (const auto& [agents, obj] : solved) ties += std::abs(obj - best) <= 1e-6 * std::max(1.0, std::abs(best));
    if (ties > 1) v.fail("scene " + std::to_string(scene) + " has tied branches");
    if (res.assignment.agents() != best_agents) v.fail("scene " + std::to_string(scene) + " assignment differs");
    if (std::abs(res.objective - best) > 1e-9 * std::max(1.0, best)) {
      v.fail("scene " + std::to_string(scene) + " objective differs");
    }

    const double m_big = p.big_m(model.spec);
    for (const auto& [node, w] : res.waypoints) {
      worst_residual = std::max(worst_residual, largest_residual(model.goc.node_constraints[node], res.assignment, w, m_big));
    }
    for (const auto& e : model.goc.edges) {
      for (int end : {e.from, e.to}) {
        worst_residual = std::max(worst_residual, largest_residual(e.constraints, res.assignment, res.waypoints.at(end), m_big));
      }
    }
  }
  if (worst_residual > 1e-6) v.fail("waypoint residual " + fmt("%.2e", worst_residual));
  v.detail << "10 scenes, " << branches << " branches compared, max residual " << fmt("%.1e", worst_residual);
  return v;
}

// ---------------------------------------------------------------------------
// 4. Timing feasibility and synchronization.

Verdict criterion_timing() {
  Verdict v;
  const auto spec = fixtures::planar_spec(2, 0);
  Goc g = fixtures::six_node_graph();
  // Static relevance: 0 and 5 are shared, 1 and 3 belong to agent 0, 2 and 4
  // to agent 1.
  const std::vector<std::vector<int>> owners = {{0, 1}, {0}, {1}, {0}, {1}, {0, 1}};
  for (int n = 0; n < 6; ++n) {
    for (int j : owners[n]) {
      g.node_constraints[n].push_back(
          ConstraintFn::within_box(PointRef::agent(j), spec.workspace.lo, spec.workspace.hi));
    }
  }
  const std::vector<RemainingSet> remaining = {{0, 1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}, {2, 3, 4, 5}, {3, 4, 5}};
  std::mt19937 rng(44);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::uniform_real_distribution<double> uv(-0.3, 0.3);
  const PlannerParams p;
  double worst_order = -kInf;
  double worst_sync = 0.0;
  int plans = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const RemainingSet& r = remaining[trial % remaining.size()];
    const Subgraph sub = subgraph(g, r);
    const auto paths = agent_paths(sub, AssignmentMatrix(2, {}));
    WaypointSet w;
    for (int n : r) w.emplace(n, Configuration(spec, VectorXd::NullaryExpr(4, [&] { return u(rng); })));
    const Configuration x0(spec, VectorXd::NullaryExpr(4, [&] { return u(rng); }));
    const Configuration v0(spec, VectorXd::NullaryExpr(4, [&] { return uv(rng); }));
    TimingSolution sol;
    try {
      sol = solve_timing(paths, w, x0, v0, p);
    } catch (const std::exception& e) {
      v.fail(std::string("timing threw: ") + e.what());
      continue;
    }
    ++plans;
    // Arrival time of each visiting agent at each node.
    std::map<int, std::vector<double>> arrival;
    for (int j = 0; j < 2; ++j) {
      for (int pos = 0; pos < static_cast<int>(paths.chains[j].size()); ++pos) {
        arrival[paths.chains[j][pos]].push_back(sol.splines[j].arrival(pos));
      }
    }
    for (int n : r) {
      if (owners[n].size() != arrival[n].size()) v.fail("node " + std::to_string(n) + " visitor count");
    }
    for (const auto& e : sub.edges) {
      for (double ta : arrival[e.from]) {
        for (double tb : arrival[e.to]) worst_order = std::max(worst_order, ta - tb);
      }
    }
    for (const auto& [n, times] : arrival) {
      for (double t : times) worst_sync = std::max(worst_sync, std::abs(t - times.front()));
    }
  }
  if (worst_order > 1e-8) v.fail("order violation " + fmt("%.2e", worst_order));
  if (worst_sync > 1e-8) v.fail("sync mismatch " + fmt("%.2e", worst_sync));
  v.detail << plans << " plans, max order slack violation " << fmt("%.1e", std::max(0.0, worst_order))
           << ", max arrival mismatch " << fmt("%.1e", worst_sync);
  return v;
}

// ---------------------------------------------------------------------------
// 5. Parallel pickup against the linearized baseline.

Verdict criterion_parallelism() {
  Verdict v;
  std::ostringstream rows;
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scenario s = generate_parallel_pickup_scenario(seed);
    const auto goc = run_episode(s, {Method::kGoc, false});
    const auto base = run_episode(s, {Method::kBaseline, false});
    if (!goc.success || !base.success) {
      v.fail("seed " + std::to_string(seed) + " episode failed");
      continue;
    }
    const double ratio = goc.first_makespan / base.first_makespan;
    worst_ratio = std::max(worst_ratio, ratio);
    if (ratio > 0.85) v.fail("seed " + std::to_string(seed) + " makespan ratio " + fmt("%.3f", ratio));
    if (!(goc.total_length < base.total_length)) {
      v.fail("seed " + std::to_string(seed) + " length " + fmt("%.4f", goc.total_length) + " vs " +
             fmt("%.4f", base.total_length));
    }
    rows << " s" << seed << " " << fmt("%.3f", ratio) << "/" << fmt("%+.4f m", goc.total_length - base.total_length);
  }
  v.detail << "makespan ratio / length difference per seed:" << rows.str() << "; worst ratio "
           << fmt("%.3f", worst_ratio);
  return v;
}

// ---------------------------------------------------------------------------
// 6. Teleport disturbance recovery.

double attach_time(const EpisodeReport& r, int keypoint) {
  for (std::size_t i = 0; i < r.attachment_trace.size(); ++i) {
    if (r.attachment_trace[i][keypoint] >= 0) return r.times[i];
  }
  return -1.0;
}

Verdict criterion_disturbance() {
  Verdict v;
  const int block = 1;
  int total_backtracks = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Scenario s = generate_parallel_pickup_scenario(seed);
    const double t_attach = attach_time(run_episode(s), block);
    if (t_attach < 0.0) {
      v.fail("seed " + std::to_string(seed) + " block never grasped");
      continue;
    }
    s.disturbances = {{t_attach + 0.3, DisturbanceKind::kTeleportKeypoint, block, (VectorXd(3) << 0.0, 0.15, 0.0).finished(), 0.0}};
    const auto r = run_episode(s);
    const std::string tag = "seed " + std::to_string(seed);
    if (!r.success) v.fail(tag + " did not recover");
    if (r.backtracks < 1) v.fail(tag + " did not backtrack");
    total_backtracks += r.backtracks;
    if (r.assignments.empty()) continue;
    const int carrier = r.assignments.front().agent_of(block);
    for (const auto& a : r.assignments) {
      if (a.agent_of(block) != carrier) v.fail(tag + " block changed hands");
    }
    // Nodes gated on the disturbed block's subtask form the carrier's chain.
    for (const auto& e : r.backtrack_events) {
      bool own = false;
      for (const auto& c : s.model.goc.node_constraints[e.node]) own = own || (c.subtask && *c.subtask == block);
      if (!own) v.fail(tag + " backtracked to node " + std::to_string(e.node));
    }
  }
  v.detail << "5 seeds, " << total_backtracks << " backtracks, all on the carrier's chain";
  return v;
}

// ---------------------------------------------------------------------------
// 7 and 8. Cycle times and scalability.

Verdict criterion_cycle_envelope(const std::string& scenario_path) {
  Verdict v;
  const Scenario s = load_scenario(scenario_path);
  const auto r = run_episode(s, {Method::kGoc, false});
  if (!r.success) v.fail("episode failed: " + r.error);
  const double first = r.diagnostics.empty() ? kInf : r.diagnostics.front().total_seconds;
  if (r.avg_cycle_seconds > 0.5) v.fail("average cycle " + fmt("%.3f s", r.avg_cycle_seconds));
  if (first > 2.0) v.fail("first cycle " + fmt("%.3f s", first));
  v.detail << "(3,2): " << r.cycles << " cycles, average " << fmt("%.4f s", r.avg_cycle_seconds) << ", first "
           << fmt("%.4f s", first) << ", max " << fmt("%.4f s", r.max_cycle_seconds);
  return v;
}

Verdict criterion_scalability() {
  Verdict v;
  const auto t0 = Clock::now();
  std::ostringstream out;
  for (int agents : {2, 3, 4}) {
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto r = run_episode(generate_stacking_scenario(5, agents, seed), {Method::kGoc, false});
      ok += r.success;
    }
    if (ok != 5) v.fail("(5," + std::to_string(agents) + ") " + std::to_string(ok) + "/5");
    out << "(5," << agents << ") " << ok << "/5, ";
  }
  // Mean cycle time over the same seeds for each object count.
  std::vector<double> means;
  for (int objects : {3, 5, 8}) {
    double sum = 0.0;
    int n = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto r = run_episode(generate_stacking_scenario(objects, 2, seed), {Method::kGoc, false});
      sum += r.avg_cycle_seconds;
      ++n;
    }
    means.push_back(sum / n);
    out << "(" << objects << ",2) " << fmt("%.4f s", means.back()) << ", ";
  }
  for (std::size_t i = 1; i < means.size(); ++i) {
    if (means[i] < means[i - 1]) v.fail("cycle time not monotone");
  }
  const double elapsed = seconds_since(t0);
  if (elapsed > 900.0) v.fail("suite took " + fmt("%.0f s", elapsed));
  out << "suite " << fmt("%.1f s", elapsed);
  v.detail << out.str();
  return v;
}

// ---------------------------------------------------------------------------
// 9. Jacobians and spline boundaries.

Verdict criterion_numerics() {
  Verdict v;
  SystemSpec spec;
  spec.agent_dims.assign(2, 3);
  spec.num_keypoints = 2;
  spec.workspace.lo = VectorXd::Constant(3, -1.0);
  spec.workspace.hi = VectorXd::Constant(3, 1.0);
  std::vector<ConstraintFn> catalog = {
      ConstraintFn::point_distance_le(PointRef::agent(0), PointRef::keypoint(1), 0.2),
      ConstraintFn::point_distance_ge(PointRef::keypoint(0), PointRef::keypoint(1), 0.3),
      ConstraintFn::axis_offset_between(PointRef::keypoint(0), PointRef::keypoint(1), 2, 0.05, 0.1),
      ConstraintFn::within_box(PointRef::agent(1), VectorXd::Constant(3, -0.5), VectorXd::Constant(3, 0.5)),
      ConstraintFn::grasp_at_subtask(0, 1, 0.01),
      ConstraintFn::grasp_at_agent(1, 0, 0.0),
      ConstraintFn::clearance_ge({PointRef::agent(0), PointRef::agent(1), PointRef::keypoint(0)}, 0.15),
      ConstraintFn::point_distance_le(PointRef::assigned(), PointRef::keypoint(0), 0.1).gated_by(1),
  };
  std::mt19937 rng(909);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const VectorXd x = VectorXd::NullaryExpr(spec.total_size(), [&] { return u(rng); });
    const AssignmentMatrix a(2, {pick(rng), pick(rng)});
    for (const auto& c : catalog) {
      auto f = [&](const VectorXd& y) { return eval(c, a, Configuration(spec, y), 1e4); };
      const MatrixXd fd = oracle::finite_difference_jacobian(f, x);
      const MatrixXd an = eval_gradient(c, a, Configuration(spec, x), 1e4);
      const double err = (fd - an).lpNorm<Eigen::Infinity>() / std::max(1.0, an.lpNorm<Eigen::Infinity>());
      worst = std::max(worst, err);
      if (err > 1e-5) v.fail(to_string(c.kind) + " jacobian error " + fmt("%.2e", err));
    }
  }

  double spline_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    AgentSpline s;
    const int segs = 1 + trial % 6;
    for (int i = 0; i <= segs; ++i) {
      s.waypoints.push_back(VectorXd::NullaryExpr(3, [&] { return u(rng); }));
      s.velocities.push_back(VectorXd::NullaryExpr(3, [&] { return u(rng); }));
    }
    s.velocities.back().setZero();
    for (int i = 0; i < segs; ++i) s.deltas.push_back(0.05 + std::abs(u(rng)));
    for (int i = 0; i <= segs; ++i) {
      const double t = i == 0 ? 0.0 : s.arrival(i - 1);
      const auto smp = eval_spline(s, t);
      spline_err = std::max({spline_err, (smp.position - s.waypoints[i]).lpNorm<Eigen::Infinity>(),
                             (smp.velocity - s.velocities[i]).lpNorm<Eigen::Infinity>()});
    }
  }
  if (spline_err > 1e-10) v.fail("spline boundary error " + fmt("%.2e", spline_err));
  v.detail << "8 primitives x 100 configurations, max relative error " << fmt("%.1e", worst)
           << "; spline boundary error " << fmt("%.1e", spline_err);
  return v;
}

}  // namespace

int main() {
  const std::string scenario = std::string(GOCMPC_SOURCE_DIR) + "/scenarios/stacking_2agent.scn";
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"scripted residual semantics", criterion_residual_scripts},
      {"solver oracles", criterion_solvers},
      {"waypoint optimality", criterion_waypoint_optimality},
      {"timing feasibility", criterion_timing},
      {"parallelism benefit", criterion_parallelism},
      {"disturbance recovery", criterion_disturbance},
      {"cycle time envelope", [&] { return criterion_cycle_envelope(scenario); }},
      {"scalability", criterion_scalability},
      {"numerical hygiene", criterion_numerics},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.fail(std::string("exception: ") + e.what());
    }
    failed += !v.pass;
    std::printf("criterion %zu %-28s %s  %s\n", i + 1, criteria[i].first.c_str(), v.pass ? "PASS" : "FAIL",
                v.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
