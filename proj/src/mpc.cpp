#include <algorithm>
#include <chrono>
#include <functional>
#include <queue>

#include "gocmpc/planner.hpp"

namespace gocmpc {

void PlannerParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw Error(std::string("planner parameter ") + name + " must be positive");
  };
  positive(tau, "tau");
  positive(epsilon, "epsilon");
  positive(dt, "dt");
  positive(delta_min, "delta_min");
  positive(v_max, "v_max");
  positive(a_max, "a_max");
  positive(w_time, "w_time");
  positive(w_track, "w_track");
  positive(activation_radius, "activation_radius");
  positive(j_max, "j_max");
  if (horizon < 1) throw Error("planner parameter horizon must be at least 1");
  if (w_smooth < 0 || w_vel_max < 0 || w_acc_max < 0) throw Error("planner cost weights must be non-negative");
}

std::vector<std::string> PlannerParams::warnings() const {
  std::vector<std::string> out;
  if (tau <= dt) out.push_back("tau does not exceed dt; progression may wait an extra cycle");
  return out;
}

double PlannerParams::big_m(const SystemSpec& spec) const {
  return m_big > 0.0 ? m_big : 1e4 * spec.workspace.diagonal();
}

std::optional<int> phase_backtrack(const Goc& goc, const RemainingSet& r, const EdgeResidualFn& edge_residual,
                                   double eps) {
  for (const auto& [a, b] : cut_edges(goc, r)) {
    const VectorXd res = edge_residual(a, b);
    if (res.size() && res.maxCoeff() >= eps) return a;
  }
  return std::nullopt;
}

std::vector<int> phase_progress(const Goc& goc, const RemainingSet& r, const std::vector<ProgressCandidate>& candidates,
                                const NodeResidualFn& node_residual, double tau, double eps) {
  std::vector<int> rank(goc.num_nodes, 0);
  const auto order = linearize_order(goc);
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<int>(i);
  auto sorted = candidates;
  std::stable_sort(sorted.begin(), sorted.end(), [&](const ProgressCandidate& a, const ProgressCandidate& b) {
    return std::make_pair(rank[a.node], a.agent) < std::make_pair(rank[b.node], b.agent);
  });
  RemainingSet rem = r;
  std::vector<int> removed;
  for (const auto& c : sorted) {
    if (!rem.count(c.node) || c.delta0 > tau) continue;
    const VectorXd res = node_residual(c.node);
    if (res.size() && res.maxCoeff() > eps) continue;
    const auto preds = goc.predecessors(c.node);
    if (std::any_of(preds.begin(), preds.end(), [&](int p) { return rem.count(p) > 0; })) continue;
    rem.erase(c.node);
    removed.push_back(c.node);
  }
  return removed;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool rests_at(const ConstraintSet& set, int agent, const AssignmentMatrix& a) {
  for (const auto& c : set) {
    if (c.kind == ConstraintKind::kGraspAt && c.relevant_to(agent, a)) return true;
  }
  return false;
}

HorizonPlan hold_position(const Configuration& x, const PlannerParams& params) {
  HorizonPlan plan;
  plan.dt = params.dt;
  plan.steps.assign(params.horizon + 1, x.actuated());
  return plan;
}

}  // namespace

CycleResult mpc_cycle(const TaskModel& model, const RemainingSet& r, const Configuration& x, const Velocity& xdot,
                      const PlannerParams& params, CycleState& state) {
  const auto t_start = Clock::now();
  const double m_big = params.big_m(model.spec);
  const int m = model.spec.num_agents();
  CycleResult out;
  out.remaining = r;
  auto& diag = out.diagnostics;

  if (state.previous) {
    const AssignmentMatrix& prev = *state.previous;
    auto edge_res = [&](int a, int b) { return eval_all(model.goc.find_edge(a, b)->constraints, prev, x, m_big); };
    if (auto node = phase_backtrack(model.goc, r, edge_res, params.epsilon)) {
      out.remaining.insert(*node);
      diag.backtracked = node;
      out.assignment = prev;
      diag.total_seconds = seconds_since(t_start);
      return out;
    }
  }

  if (r.empty()) {
    out.assignment = state.previous ? *state.previous
                                    : AssignmentMatrix(m, std::vector<int>(model.goc.subtask_count, 0));
    out.timing = solve_timing(AgentPathPlan{std::vector<std::vector<int>>(m), {}, {}}, {}, x, xdot, params);
    out.plan = hold_position(x, params);
    diag.first_deltas.assign(m, -1.0);
    diag.total_seconds = seconds_since(t_start);
    return out;
  }

  // P1: waypoints and assignment.
  auto t1 = Clock::now();
  WaypointOptions opts{state.previous, state.fixed_assignment};
  try {
    auto wp = solve_waypoints(model, r, x, state.warm, params, opts);
    out.waypoints = std::move(wp.waypoints);
    out.assignment = wp.assignment;
    diag.p1_objective = wp.objective;
    diag.branches_total = static_cast<int>(wp.branches.size());
    diag.branches_pruned = wp.pruned;
    for (const auto& b : wp.branches) diag.branches_solved += b.solved ? 1 : 0;
  } catch (const AllBranchesInfeasible&) {
    if (!state.previous || !state.warm) throw;
    diag.p1_fallback = true;
    out.assignment = *state.previous;
    for (int v : r) {
      auto it = state.warm->find(v);
      out.waypoints.emplace(v, it != state.warm->end() ? it->second : x);
    }
  }
  diag.p1_seconds = seconds_since(t1);

  // Agent paths and P2 timing.
  auto t2 = Clock::now();
  const Subgraph sub = subgraph(model.goc, r);
  out.paths = agent_paths(sub, out.assignment);
  std::vector<std::vector<bool>> rest(m);
  for (int j = 0; j < m; ++j) {
    for (int v : out.paths.chains[j]) {
      rest[j].push_back(params.rest_at_grasp && rests_at(model.goc.node_constraints[v], j, out.assignment));
    }
  }
  out.timing = solve_timing(out.paths, out.waypoints, x, xdot, params, rest);
  diag.makespan = out.timing.makespan;
  diag.p2_seconds = seconds_since(t2);

  // Phase progression.
  std::vector<ProgressCandidate> candidates;
  diag.first_deltas.assign(m, -1.0);
  for (int j = 0; j < m; ++j) {
    if (out.paths.chains[j].empty()) continue;
    const double d0 = out.timing.splines[j].deltas.front();
    diag.first_deltas[j] = d0;
    candidates.push_back({j, out.paths.chains[j].front(), d0});
  }
  auto node_res = [&](int v) { return eval_all(model.goc.node_constraints[v], out.assignment, x, m_big); };
  diag.progressed = phase_progress(model.goc, r, candidates, node_res, params.tau, params.epsilon);
  for (int v : diag.progressed) out.remaining.erase(v);
  // Frontier nodes without constraints or visitors complete on their own.
  bool changed = true;
  while (changed) {
    changed = false;
    for (int v : RemainingSet(out.remaining)) {
      if (!model.goc.node_constraints[v].empty() || !out.paths.visitors(v).empty()) continue;
      const auto preds = model.goc.predecessors(v);
      if (std::any_of(preds.begin(), preds.end(), [&](int p) { return out.remaining.count(p) > 0; })) continue;
      out.remaining.erase(v);
      diag.progressed.push_back(v);
      changed = true;
    }
  }

  // P3 horizon.
  auto t3 = Clock::now();
  HorizonPlan plan = solve_horizon(out.timing.splines, x, model.obstacles, model.spec.workspace, params);
  diag.p3_fallback = plan.fallback;
  out.plan = std::move(plan);
  diag.p3_seconds = seconds_since(t3);

  state.previous = out.assignment;
  state.warm = out.waypoints;
  diag.total_seconds = seconds_since(t_start);
  return out;
}

std::vector<int> linearize_order(const Goc& goc) {
  std::vector<int> indeg(goc.num_nodes, 0);
  for (const auto& e : goc.edges) ++indeg[e.to];
  std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
  for (int v = 0; v < goc.num_nodes; ++v) {
    if (indeg[v] == 0) ready.push(v);
  }
  std::vector<int> order;
  while (!ready.empty()) {
    const int v = ready.top();
    ready.pop();
    order.push_back(v);
    for (int w : goc.successors(v)) {
      if (--indeg[w] == 0) ready.push(w);
    }
  }
  if (static_cast<int>(order.size()) != goc.num_nodes) throw Error("linearize: graph is not acyclic");
  return order;
}

Goc linearize_goc(const Goc& goc) {
  Goc chain = goc;
  const auto order = linearize_order(goc);
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (!chain.find_edge(order[i - 1], order[i])) chain.edges.push_back({order[i - 1], order[i], {}});
  }
  return chain;
}

BaselinePlan linearize_baseline(const TaskModel& model, const Configuration& x0, const PlannerParams& params) {
  BaselinePlan out;
  out.order = linearize_order(model.goc);
  out.chain = linearize_goc(model.goc);
  TaskModel chain_model = model;
  chain_model.goc = out.chain;
  if (out.chain.num_nodes == 0) {
    out.assignment = AssignmentMatrix(model.spec.num_agents(), std::vector<int>(model.goc.subtask_count, 0));
    return out;
  }
  out.assignment = solve_waypoints(chain_model, all_remaining(out.chain), x0, std::nullopt, params).assignment;
  return out;
}

SolutionEvaluation evaluate_solution(const TaskModel& model, const RemainingSet& r, const Configuration& x0,
                                     const WaypointSet& w, const AssignmentMatrix& a, const TimingSolution& timing,
                                     const PlannerParams& params) {
  SolutionEvaluation ev;
  ev.makespan = timing.makespan;
  const double m_big = params.big_m(model.spec);
  auto clip = [](double v) { return std::max(0.0, v); };
  for (int v : r) {
    ev.node_violation = std::max(ev.node_violation, clip(max_residual(model.goc.node_constraints[v], a, w.at(v), m_big)));
  }
  const Reachability reach(model.goc);
  const auto carries = model.carries();
  const int p = model.spec.num_keypoints;
  for (const auto& e : model.goc.edges) {
    if (!r.count(e.from) || !r.count(e.to)) continue;
    ev.edge_violation = std::max({ev.edge_violation, clip(max_residual(e.constraints, a, w.at(e.from), m_big)),
                                  clip(max_residual(e.constraints, a, w.at(e.to), m_big))});
    const auto rc = transition_coupling(carries, reach, r, e.from, e.to, p);
    const VectorXd res = rigid_transition_residual(rc, a, w.at(e.from), w.at(e.to), m_big);
    if (res.size()) ev.rigid_violation = std::max(ev.rigid_violation, clip(res.maxCoeff()));
  }
  for (int v : subgraph(model.goc, r).frontier) {
    const auto rc = transition_coupling(carries, reach, r, -1, v, p);
    const VectorXd res = rigid_transition_residual(rc, a, x0, w.at(v), m_big);
    if (res.size()) ev.rigid_violation = std::max(ev.rigid_violation, clip(res.maxCoeff()));
  }
  return ev;
}

}  // namespace gocmpc
