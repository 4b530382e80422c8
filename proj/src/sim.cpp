#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "gocmpc/sim.hpp"

namespace gocmpc {

std::string to_string(DisturbanceKind kind) {
  switch (kind) {
    case DisturbanceKind::kTeleportKeypoint:
      return "teleport_keypoint";
    case DisturbanceKind::kDetachKeypoint:
      return "detach_keypoint";
    case DisturbanceKind::kFreezeAgent:
      return "freeze_agent";
  }
  return "unknown";
}

std::optional<DisturbanceKind> disturbance_kind_from_string(const std::string& name) {
  for (auto k : {DisturbanceKind::kTeleportKeypoint, DisturbanceKind::kDetachKeypoint, DisturbanceKind::kFreezeAgent}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

bool Disturbance::operator==(const Disturbance& other) const {
  const bool same_disp = displacement.size() == other.displacement.size() &&
                         (displacement.size() == 0 || displacement == other.displacement);
  return time == other.time && kind == other.kind && id == other.id && same_disp && duration == other.duration;
}

std::string to_string(Method m) { return m == Method::kGoc ? "goc" : "linearized-baseline"; }

void Scenario::validate() const {
  try {
    model.spec.validate();
    if (!x0.conforms(model.spec)) throw ScenarioInvalid("initial configuration does not match the system");
    if (!v0.conforms(model.spec)) throw ScenarioInvalid("initial velocity does not match the system");
    if (!x0.finite() || !v0.finite()) throw ScenarioInvalid("initial state is not finite");
    validate_goc(model.goc, model.spec);
    const int dim = model.spec.dim();
    for (const auto& c : model.declared_carries) {
      if (c.from < 0 || c.from >= model.goc.num_nodes || c.to < 0 || c.to >= model.goc.num_nodes ||
          !model.goc.find_edge(c.from, c.to)) {
        throw ScenarioInvalid("carry refers to a missing edge");
      }
      if (c.keypoint < 0 || c.keypoint >= model.spec.num_keypoints) throw ScenarioInvalid("carry keypoint out of range");
      if (c.subtask >= model.goc.subtask_count || c.agent >= model.spec.num_agents() || (c.subtask < 0) == (c.agent < 0)) {
        throw ScenarioInvalid("carry needs exactly one valid subtask or agent");
      }
    }
    for (const auto& o : model.obstacles) {
      if (o.center.size() != dim || !(o.radius > 0)) throw ScenarioInvalid("obstacle shape is invalid");
    }
    for (const auto& d : disturbances) {
      if (!(d.time >= 0)) throw ScenarioInvalid("disturbance time must be non-negative");
      const int limit = d.kind == DisturbanceKind::kFreezeAgent ? model.spec.num_agents() : model.spec.num_keypoints;
      if (d.id < 0 || d.id >= limit) throw ScenarioInvalid("disturbance refers to a missing id");
      if (d.kind == DisturbanceKind::kTeleportKeypoint && d.displacement.size() != dim) {
        throw ScenarioInvalid("teleport displacement has the wrong dimension");
      }
      if (d.kind == DisturbanceKind::kFreezeAgent && !(d.duration >= 0)) {
        throw ScenarioInvalid("freeze duration must be non-negative");
      }
    }
    params.validate();
    if (!(budget > 0)) throw ScenarioInvalid("budget must be positive");
  } catch (const ScenarioInvalid&) {
    throw;
  } catch (const Error& e) {
    throw ScenarioInvalid(e.what());
  }
}

WorldState WorldState::initial(const Scenario& s) {
  WorldState w;
  w.x = s.x0;
  w.v = s.v0;
  w.attached_to.assign(s.model.spec.num_keypoints, -1);
  w.grasp_offset.assign(s.model.spec.num_keypoints, VectorXd::Zero(s.model.spec.dim()));
  w.frozen_until.assign(s.model.spec.num_agents(), 0.0);
  w.fired.assign(s.disturbances.size(), 0);
  return w;
}

WorldState step_world(const WorldState& w, const HorizonPlan& plan, double dt_sim,
                      const std::vector<Disturbance>& schedule, double v_max, double eps_attach,
                      const Box& workspace) {
  WorldState n = w;
  if (n.fired.size() < schedule.size()) n.fired.resize(schedule.size(), 0);
  const int m = w.x.num_agents();
  const int dim = w.x.dim();
  // The commanded point is the plan sampled dt_sim ahead.
  VectorXd target = w.x.actuated();
  if (plan.steps.size() > 1) {
    const double frac = plan.dt > 0.0 ? std::min(1.0, dt_sim / plan.dt) : 1.0;
    target = plan.steps[0] + frac * (plan.steps[1] - plan.steps[0]);
  } else if (!plan.steps.empty()) {
    target = plan.steps[0];
  }
  const double step = v_max * dt_sim;
  for (int j = 0; j < m; ++j) {
    if (w.clock < w.frozen_until[j]) continue;
    const VectorXd delta = (target.segment(j * dim, dim) - w.x.agent(j)).cwiseMax(-step).cwiseMin(step);
    n.x.agent(j) += delta;
  }
  for (int p = 0; p < w.x.num_keypoints(); ++p) {
    if (w.attached_to[p] >= 0) n.x.keypoint(p) = n.x.agent(w.attached_to[p]) + w.grasp_offset[p];
  }
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const auto& d = schedule[i];
    if (n.fired[i] || d.time > w.clock + 1e-12) continue;
    n.fired[i] = 1;
    switch (d.kind) {
      case DisturbanceKind::kTeleportKeypoint: {
        auto kp = n.x.keypoint(d.id);
        kp = (kp + d.displacement).cwiseMax(workspace.lo).cwiseMin(workspace.hi);
        const int carrier = n.attached_to[d.id];
        if (carrier >= 0) {
          if ((n.x.agent(carrier) - kp).lpNorm<Eigen::Infinity>() > eps_attach) {
            n.attached_to[d.id] = -1;
          } else {
            n.grasp_offset[d.id] = kp - n.x.agent(carrier);
          }
        }
        break;
      }
      case DisturbanceKind::kDetachKeypoint:
        n.attached_to[d.id] = -1;
        break;
      case DisturbanceKind::kFreezeAgent:
        n.frozen_until[d.id] = std::max(n.frozen_until[d.id], d.time + d.duration);
        break;
    }
  }
  n.v.values() = (n.x.values() - w.x.values()) / dt_sim;
  n.clock = w.clock + dt_sim;
  return n;
}

WorldState update_attachments(const WorldState& w, const RemainingSet& r_before, const RemainingSet& r_after,
                              const TaskModel& model, const AssignmentMatrix& a, double eps_attach,
                              std::vector<AttachmentEvent>* events, std::vector<std::string>* warnings) {
  WorldState n = w;
  auto detach = [&](int p) {
    if (n.attached_to[p] < 0) return;
    if (events) events->push_back({p, n.attached_to[p], false});
    n.attached_to[p] = -1;
  };
  auto grasps = [&](int v, auto&& fn) {
    for (const auto& c : model.goc.node_constraints[v]) {
      if (c.kind != ConstraintKind::kGraspAt) continue;
      const int carrier = c.subtask ? a.agent_of(*c.subtask) : c.points[0].id;
      fn(carrier, c.points[1].id);
    }
  };

  for (int v : r_after) {
    if (!r_before.count(v)) grasps(v, [&](int, int p) { detach(p); });
  }
  const auto carries = model.carries();
  for (int v : r_before) {
    if (r_after.count(v)) continue;
    for (const auto& ce : carries) {
      if (ce.to != v) continue;
      const bool continues = std::any_of(carries.begin(), carries.end(), [&](const CarryEdge& o) {
        return o.from == v && o.keypoint == ce.keypoint;
      });
      if (!continues) detach(ce.keypoint);
    }
    grasps(v, [&](int carrier, int p) {
      const double sep = (n.x.agent(carrier) - n.x.keypoint(p)).lpNorm<Eigen::Infinity>();
      if (sep <= eps_attach + 1e-12) {
        n.attached_to[p] = carrier;
        n.grasp_offset[p] = n.x.keypoint(p) - n.x.agent(carrier);
        if (events) events->push_back({p, carrier, true});
      } else if (warnings) {
        warnings->push_back("node " + std::to_string(v) + " completed with keypoint " + std::to_string(p) +
                            " out of reach of agent " + std::to_string(carrier));
      }
    });
  }
  return n;
}

bool terminal_constraints_hold(const TaskModel& model, const AssignmentMatrix& a, const Configuration& x, double eps,
                               double m_big) {
  for (int v : model.goc.sinks()) {
    if (max_residual(model.goc.node_constraints[v], a, x, m_big) > eps) return false;
  }
  return true;
}

EpisodeReport run_episode(const Scenario& scenario, const EpisodeOptions& options) {
  scenario.validate();
  const auto& params = scenario.params;
  const double m_big = params.big_m(scenario.model.spec);
  const double eps_attach = params.epsilon;
  const double dt_sim = options.dt_sim > 0.0 ? options.dt_sim : params.dt;
  if (dt_sim > params.dt + 1e-12) throw ScenarioInvalid("simulation step must not exceed the planner dt");
  EpisodeReport rep;
  TaskModel model = scenario.model;
  CycleState state;
  WorldState w = WorldState::initial(scenario);
  AssignmentMatrix current(model.spec.num_agents(), std::vector<int>(model.goc.subtask_count, 0));
  auto record = [&] {
    if (!options.record_trajectory) return;
    rep.times.push_back(w.clock);
    rep.trajectory.push_back(w.x.values());
    rep.attachment_trace.push_back(w.attached_to);
  };

  double cycle_total = 0.0;
  try {
    if (options.method == Method::kBaseline && model.goc.num_nodes > 0) {
      auto base = linearize_baseline(model, scenario.x0, params);
      model.goc = std::move(base.chain);
      state.fixed_assignment = base.assignment;
      current = base.assignment;
    }
    RemainingSet r = all_remaining(model.goc);
    record();
    int consecutive_backtracks = 0;
    bool first_plan = true;
    while (true) {
      if (r.empty() && terminal_constraints_hold(model, current, w.x, params.epsilon, m_big)) {
        rep.success = true;
        break;
      }
      if (w.clock >= scenario.budget - 1e-9) break;

      const auto t0 = std::chrono::steady_clock::now();
      CycleResult res = mpc_cycle(model, r, w.x, w.v, params, state);
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      ++rep.cycles;
      cycle_total += wall;
      rep.max_cycle_seconds = std::max(rep.max_cycle_seconds, wall);
      rep.diagnostics.push_back(res.diagnostics);

      if (res.diagnostics.backtracked) {
        ++rep.backtracks;
        rep.backtrack_events.push_back({rep.cycles - 1, w.clock, *res.diagnostics.backtracked});
        w = update_attachments(w, r, res.remaining, model, res.assignment, eps_attach, &rep.attachment_events,
                               &rep.warnings);
        r = res.remaining;
        if (++consecutive_backtracks > model.goc.num_nodes) {
          rep.error = "backtracking did not settle";
          break;
        }
        continue;
      }
      consecutive_backtracks = 0;
      current = res.assignment;
      rep.assignments.push_back(res.assignment);
      if (first_plan) {
        rep.first_makespan = res.diagnostics.makespan;
        first_plan = false;
      }
      w = update_attachments(w, r, res.remaining, model, res.assignment, eps_attach, &rep.attachment_events,
                             &rep.warnings);
      r = res.remaining;
      if (r.empty() && terminal_constraints_hold(model, current, w.x, params.epsilon, m_big)) {
        rep.success = true;
        break;
      }
      const WorldState next = step_world(w, *res.plan, dt_sim, scenario.disturbances, params.v_max, eps_attach,
                                         model.spec.workspace);
      for (int j = 0; j < w.x.num_agents(); ++j) rep.total_length += (next.x.agent(j) - w.x.agent(j)).norm();
      w = next;
      record();
    }
  } catch (const Error& e) {
    rep.success = false;
    rep.error = e.what();
  }
  rep.sim_time = w.clock;
  rep.avg_cycle_seconds = rep.cycles ? cycle_total / rep.cycles : 0.0;
  return rep;
}

namespace {

constexpr double kBlockHalf = 0.025;  // blocks rest at this height
constexpr double kAgentHeight = 0.3;

SystemSpec desk_spec(int agents, int keypoints) {
  SystemSpec s;
  s.agent_dims.assign(agents, 3);
  s.num_keypoints = keypoints;
  s.workspace.lo = (VectorXd(3) << -0.6, -0.6, 0.0).finished();
  s.workspace.hi = (VectorXd(3) << 0.6, 0.6, 0.6).finished();
  return s;
}

VectorXd point(double x, double y, double z) { return (VectorXd(3) << x, y, z).finished(); }

PlannerParams desk_params() {
  PlannerParams p;
  p.tau = 0.15;
  p.epsilon = 0.01;
  return p;
}

}  // namespace

Scenario generate_stacking_scenario(int n_objects, int m_agents, std::uint64_t seed) {
  if (n_objects < 1 || m_agents < 1) throw Error("stacking scenario needs at least one block and one agent");
  const double eps = desk_params().epsilon;
  Scenario s;
  s.id = "stacking_" + std::to_string(n_objects) + "x" + std::to_string(m_agents);
  s.seed = seed;
  s.generator = GeneratorSpec{"stacking", n_objects, m_agents};
  s.params = desk_params();
  s.budget = 20.0 + 8.0 * n_objects;
  s.model.spec = desk_spec(m_agents, n_objects);
  const auto& spec = s.model.spec;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-0.45, 0.45);
  const VectorXd base = point(0.0, 0.0, kBlockHalf);
  std::vector<VectorXd> blocks;
  int attempts = 0;
  while (static_cast<int>(blocks.size()) < n_objects) {
    if (++attempts > 10000) throw PlacementOverlap("could not place " + std::to_string(n_objects) + " blocks apart");
    const VectorXd b = point(coord(rng), coord(rng), kBlockHalf);
    if ((b - base).head(2).norm() < 0.15) continue;
    if (std::any_of(blocks.begin(), blocks.end(), [&](const VectorXd& o) { return (o - b).head(2).norm() < 0.1; })) {
      continue;
    }
    blocks.push_back(b);
  }

  s.x0 = Configuration::zeros(spec);
  s.v0 = Configuration::zeros(spec);
  for (int j = 0; j < m_agents; ++j) {
    const double angle = std::numbers::pi / 4 + 2.0 * std::numbers::pi * j / m_agents;
    s.x0.agent(j) = point(0.45 * std::cos(angle), 0.45 * std::sin(angle), kAgentHeight);
  }
  for (int k = 0; k < n_objects; ++k) s.x0.keypoint(k) = blocks[k];

  // Nodes: pick k is k, place k is n + k.
  std::vector<std::pair<int, int>> edges;
  for (int k = 0; k < n_objects; ++k) edges.push_back({k, n_objects + k});
  for (int k = 1; k < n_objects; ++k) edges.push_back({n_objects + k - 1, n_objects + k});
  // An agent releases a block before it picks the next one.
  for (int k = 0; k + m_agents < n_objects; ++k) edges.push_back({n_objects + k, k + m_agents});
  s.model.goc = Goc::from_edges(2 * n_objects, edges, n_objects);
  auto& g = s.model.goc;
  g.node_names.resize(2 * n_objects);
  for (int k = 0; k < n_objects; ++k) {
    g.node_names[k] = "pick" + std::to_string(k);
    g.node_names[n_objects + k] = "place" + std::to_string(k);
    g.node_constraints[k].push_back(ConstraintFn::grasp_at_subtask(k, k, 0.0));
    auto& place = g.node_constraints[n_objects + k];
    if (k == 0) {
      const VectorXd slack = point(0.01, 0.01, 0.0);
      place.push_back(ConstraintFn::within_box(PointRef::keypoint(0), base - slack, base + slack).gated_by(0));
    } else {
      const auto cur = PointRef::keypoint(k);
      const auto below = PointRef::keypoint(k - 1);
      place.push_back(ConstraintFn::axis_offset_between(cur, below, 0, -0.005, 0.005).gated_by(k));
      place.push_back(ConstraintFn::axis_offset_between(cur, below, 1, -0.005, 0.005).gated_by(k));
      place.push_back(ConstraintFn::axis_offset_between(cur, below, 2, 2 * kBlockHalf, 2 * kBlockHalf).gated_by(k));
    }
  }
  for (auto& e : g.edges) {
    if (e.from < n_objects) e.constraints.push_back(ConstraintFn::grasp_at_subtask(e.from, e.from, eps));
  }
  return s;
}

Scenario generate_parallel_pickup_scenario(std::uint64_t seed) {
  const double eps = desk_params().epsilon;
  Scenario s;
  s.id = "parallel_pickup";
  s.seed = seed;
  s.generator = GeneratorSpec{"parallel_pickup", 2, 2};
  s.params = desk_params();
  s.budget = 30.0;
  s.model.spec = desk_spec(2, 2);
  const auto& spec = s.model.spec;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);

  s.x0 = Configuration::zeros(spec);
  s.v0 = Configuration::zeros(spec);
  s.x0.agent(0) = point(-0.4, 0.0, kAgentHeight);
  s.x0.agent(1) = point(0.4, 0.0, kAgentHeight);
  s.x0.keypoint(0) = point(-0.3 + jitter(rng), 0.3 + jitter(rng), kBlockHalf);
  s.x0.keypoint(1) = point(0.3 + jitter(rng), 0.3 + jitter(rng), kBlockHalf);
  const std::vector<VectorXd> targets = {point(-0.3 + jitter(rng), -0.3 + jitter(rng), kBlockHalf),
                                         point(0.3 + jitter(rng), -0.3 + jitter(rng), kBlockHalf)};

  // pick0 = 0, place0 = 1, pick1 = 2, place1 = 3.
  s.model.goc = Goc::from_edges(4, {{0, 1}, {2, 3}}, 2);
  auto& g = s.model.goc;
  g.node_names = {"pick0", "place0", "pick1", "place1"};
  const VectorXd slack = point(0.01, 0.01, 0.0);
  for (int k = 0; k < 2; ++k) {
    g.node_constraints[2 * k].push_back(ConstraintFn::grasp_at_subtask(k, k, 0.0));
    g.node_constraints[2 * k + 1].push_back(
        ConstraintFn::within_box(PointRef::keypoint(k), targets[k] - slack, targets[k] + slack).gated_by(k));
  }
  for (auto& e : g.edges) {
    const int k = e.from / 2;
    e.constraints.push_back(ConstraintFn::grasp_at_subtask(k, k, eps));
  }
  return s;
}

Scenario reseed(const Scenario& s, std::uint64_t seed) {
  Scenario out;
  if (s.generator && s.generator->kind == "stacking") {
    out = generate_stacking_scenario(s.generator->objects, s.generator->agents, seed);
  } else if (s.generator && s.generator->kind == "parallel_pickup") {
    out = generate_parallel_pickup_scenario(seed);
  } else {
    out = s;
    out.seed = seed;
    if (seed != s.seed) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(-0.02, 0.02);
      const auto& box = s.model.spec.workspace;
      for (int j = 0; j < out.x0.num_agents(); ++j) {
        VectorXd a = out.x0.agent(j);
        for (int d = 0; d < a.size(); ++d) a[d] += u(rng);
        out.x0.agent(j) = a.cwiseMax(box.lo).cwiseMin(box.hi);
      }
    }
    return out;
  }
  out.id = s.id;
  out.params = s.params;
  out.budget = s.budget;
  out.disturbances = s.disturbances;
  out.model.obstacles = s.model.obstacles;
  return out;
}

}  // namespace gocmpc
