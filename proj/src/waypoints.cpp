#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <limits>
#include <numeric>
#include <thread>

#include "gocmpc/planner.hpp"

namespace gocmpc {

std::vector<CarryEdge> TaskModel::carries() const {
  std::vector<CarryEdge> out = declared_carries;
  for (const auto& e : goc.edges) {
    for (const auto& c : e.constraints) {
      if (c.kind != ConstraintKind::kGraspAt) continue;
      const auto& kp = c.points[1];
      if (kp.kind != PointRef::Kind::kKeypoint) continue;
      CarryEdge ce{e.from, e.to, kp.id, -1, -1};
      if (c.subtask) {
        ce.subtask = *c.subtask;
      } else if (c.points[0].kind == PointRef::Kind::kAgent) {
        ce.agent = c.points[0].id;
      } else {
        continue;
      }
      out.push_back(ce);
    }
  }
  auto key = [](const CarryEdge& c) { return std::make_tuple(c.from, c.to, c.keypoint, c.subtask, c.agent); };
  std::sort(out.begin(), out.end(), [&](const CarryEdge& a, const CarryEdge& b) { return key(a) < key(b); });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

RigidCoupling transition_coupling(const std::vector<CarryEdge>& carries, const Reachability& reach,
                                  const RemainingSet& r, int from, int to, int num_keypoints) {
  enum Verdict { kDisjoint = 0, kFree = 1, kCarried = 2 };
  RigidCoupling rc = RigidCoupling::all_fixed(num_keypoints);
  std::vector<int> verdict(num_keypoints, kDisjoint);
  for (const auto& ce : carries) {
    if (ce.keypoint < 0 || ce.keypoint >= num_keypoints) continue;
    const bool start_done = !r.count(ce.from);
    const bool end_done = !r.count(ce.to);
    int v = kDisjoint;
    if (end_done) {
      v = kDisjoint;
    } else if (start_done) {
      if (reach.reaches(to, ce.to)) {
        v = kCarried;
      } else if (from >= 0 && reach.reaches(ce.to, from)) {
        v = kDisjoint;
      } else {
        v = kFree;
      }
    } else if (from < 0) {
      v = reach.reaches(to, ce.from) ? kDisjoint : kFree;
    } else if (reach.reaches(ce.from, from) && reach.reaches(to, ce.to)) {
      v = kCarried;
    } else if (reach.reaches(ce.to, from) || reach.reaches(to, ce.from)) {
      v = kDisjoint;
    } else {
      v = kFree;
    }
    auto& slot = rc.keypoints[ce.keypoint];
    if (v == kCarried && verdict[ce.keypoint] != kCarried) {
      slot = {CouplingMode::kCarried, ce.subtask, ce.agent};
    } else if (v == kFree && verdict[ce.keypoint] == kDisjoint) {
      slot = {CouplingMode::kFree, -1, -1};
    }
    verdict[ce.keypoint] = std::max(verdict[ce.keypoint], v);
  }
  return rc;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int i) {
    while (parent_[i] != i) i = parent_[i] = parent_[parent_[i]];
    return i;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<int> parent_;
};

int worker_count(const PlannerParams& params) {
  if (params.threads > 0) return params.threads;
  if (const char* env = std::getenv("GOC_MPC_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Branch-independent structure of the waypoint program: variable layout,
// objective and constraint terms for the subgraph induced by R.
class WaypointProgram {
 public:
  WaypointProgram(const TaskModel& model, const RemainingSet& r, const Configuration& x0, const PlannerParams& params)
      : spec_(model.spec), sub_(subgraph(model.goc, r)), x0_(x0), params_(params) {
    const int n = static_cast<int>(sub_.nodes.size());
    const int p_count = spec_.num_keypoints;
    const int dim = spec_.dim();
    const int act = spec_.actuated_size();
    const Reachability reach(model.goc);
    const auto carries = model.carries();

    // Constraint terms evaluated at single waypoints.
    for (int i = 0; i < n; ++i) {
      for (const auto& c : sub_.node_constraints[i]) terms_.push_back({&c, i});
    }
    for (const auto& e : sub_.edges) {
      for (const auto& c : e.constraints) {
        terms_.push_back({&c, sub_.index_of(e.from)});
        terms_.push_back({&c, sub_.index_of(e.to)});
      }
    }
    for (const auto& [a, b] : cut_edges(model.goc, r)) {
      for (const auto& c : model.goc.find_edge(a, b)->constraints) terms_.push_back({&c, sub_.index_of(b)});
    }

    // Passive slots (node, keypoint) joined by fixed transitions; slot n*P is
    // the measured state.
    const int const_slot = n * p_count;
    UnionFind uf(const_slot + 1);
    auto slot = [&](int i, int p) { return i * p_count + p; };
    auto couple = [&](int from_node, int from_i, int to_i) {
      const int to_node = sub_.nodes[to_i];
      const auto rc = transition_coupling(carries, reach, r, from_node, to_node, p_count);
      for (int p = 0; p < p_count; ++p) {
        const auto& kc = rc.keypoints[p];
        if (kc.mode == CouplingMode::kFixed) {
          uf.unite(from_i < 0 ? const_slot : slot(from_i, p), slot(to_i, p));
        } else if (kc.mode == CouplingMode::kCarried) {
          carry_terms_.push_back({from_i, to_i, p, kc.subtask, kc.agent});
        }
      }
    };
    for (int v : sub_.frontier) couple(-1, -1, sub_.index_of(v));
    for (const auto& e : sub_.edges) couple(e.from, sub_.index_of(e.from), sub_.index_of(e.to));

    // Classes that no constraint touches stay at their measured values.
    std::vector<char> referenced(const_slot + 1, 0);
    for (const auto& t : terms_) {
      for (const auto& pr : t.c->points) {
        if (pr.kind == PointRef::Kind::kKeypoint) referenced[uf.find(slot(t.node, pr.id))] = 1;
      }
    }
    for (const auto& ct : carry_terms_) {
      if (ct.from >= 0) referenced[uf.find(slot(ct.from, ct.keypoint))] = 1;
      referenced[uf.find(slot(ct.to, ct.keypoint))] = 1;
    }

    var_index_.assign(n, std::vector<int>(spec_.total_size(), -1));
    int next = 0;
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < act; ++c) var_index_[i][c] = next++;
    }
    std::vector<int> class_var(const_slot + 1, -1);
    const int const_root = uf.find(const_slot);
    for (int i = 0; i < n; ++i) {
      for (int p = 0; p < p_count; ++p) {
        const int root = uf.find(slot(i, p));
        if (root == const_root || !referenced[root]) continue;
        if (class_var[root] < 0) {
          class_var[root] = next;
          next += dim;
        }
        for (int d = 0; d < dim; ++d) var_index_[i][spec_.keypoint_offset(p) + d] = class_var[root] + d;
      }
    }
    num_vars_ = next;

    // Objective ||D z - e||^2 over actuated components.
    const int rows = static_cast<int>(sub_.frontier.size() + sub_.edges.size()) * act;
    d_ = MatrixXd::Zero(rows, num_vars_);
    e_ = VectorXd::Zero(rows);
    int row = 0;
    for (int v : sub_.frontier) {
      const int i = sub_.index_of(v);
      for (int c = 0; c < act; ++c, ++row) {
        d_(row, var_index_[i][c]) = 1.0;
        e_[row] = x0_.values()[c];
      }
    }
    for (const auto& e : sub_.edges) {
      const int a = sub_.index_of(e.from);
      const int b = sub_.index_of(e.to);
      for (int c = 0; c < act; ++c, ++row) {
        d_(row, var_index_[b][c]) += 1.0;
        d_(row, var_index_[a][c]) -= 1.0;
      }
    }
    hessian_ = 2.0 * d_.transpose() * d_;

    lower_ = VectorXd::Constant(num_vars_, -kInf);
    upper_ = VectorXd::Constant(num_vars_, kInf);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < spec_.total_size(); ++c) {
        const int v = var_index_[i][c];
        if (v < 0) continue;
        const int axis = c % dim;
        lower_[v] = spec_.workspace.lo[axis];
        upper_[v] = spec_.workspace.hi[axis];
      }
    }

    // Depth of each node from the frontier, for branch bounds.
    depth_.assign(n, -1);
    std::deque<int> queue;
    for (int v : sub_.frontier) {
      depth_[sub_.index_of(v)] = 1;
      queue.push_back(sub_.index_of(v));
    }
    while (!queue.empty()) {
      const int i = queue.front();
      queue.pop_front();
      for (const auto& e : sub_.edges) {
        if (sub_.index_of(e.from) != i) continue;
        const int j = sub_.index_of(e.to);
        if (depth_[j] < 0) {
          depth_[j] = depth_[i] + 1;
          queue.push_back(j);
        }
      }
    }
    frontier_flag_.assign(n, 0);
    for (int v : sub_.frontier) frontier_flag_[sub_.index_of(v)] = 1;

    // Subtasks whose assignment changes this program.
    std::set<int> subtasks;
    for (const auto& t : terms_) {
      if (t.c->subtask) subtasks.insert(*t.c->subtask);
    }
    for (const auto& ct : carry_terms_) {
      if (ct.subtask >= 0) subtasks.insert(ct.subtask);
    }
    subtasks_.assign(subtasks.begin(), subtasks.end());
    for (const auto& ce : carries) {
      if (ce.subtask >= 0 && !r.count(ce.from) && r.count(ce.to)) active_carry_subtasks_.insert(ce.subtask);
    }
    // Carries of one agent must follow each other in the graph.
    for (std::size_t x = 0; x < carries.size(); ++x) {
      for (std::size_t y = x + 1; y < carries.size(); ++y) {
        const auto& c1 = carries[x];
        const auto& c2 = carries[y];
        if (!r.count(c1.to) || !r.count(c2.to) || c1.keypoint == c2.keypoint) continue;
        if (reach.reaches(c1.to, c2.from) || reach.reaches(c2.to, c1.from)) continue;
        grasp_conflicts_.push_back({{c1.subtask, c1.agent}, {c2.subtask, c2.agent}});
      }
    }
  }

  const Subgraph& sub() const { return sub_; }
  int num_vars() const { return num_vars_; }
  const std::vector<int>& subtasks() const { return subtasks_; }
  const std::set<int>& active_carry_subtasks() const { return active_carry_subtasks_; }

  /// No agent holds two keypoints whose carries overlap in time.
  bool single_grasp(const AssignmentMatrix& a) const {
    auto carrier = [&](const Carrier& c) { return c.subtask >= 0 ? a.agent_of(c.subtask) : c.agent; };
    for (const auto& [c1, c2] : grasp_conflicts_) {
      if (carrier(c1) == carrier(c2)) return false;
    }
    return true;
  }

  bool scope_consistent(const AssignmentMatrix& a) const {
    for (const auto& t : terms_) {
      const auto& c = *t.c;
      if (!c.subtask || c.scope.empty()) continue;
      if (std::find(c.scope.begin(), c.scope.end(), a.agent_of(*c.subtask)) == c.scope.end()) return false;
    }
    return true;
  }

  Configuration assemble(const VectorXd& z, int i) const {
    Configuration w = x0_;
    auto& vals = w.values();
    for (int c = 0; c < spec_.total_size(); ++c) {
      if (var_index_[i][c] >= 0) vals[c] = z[var_index_[i][c]];
    }
    return w;
  }

  VectorXd initial(const std::optional<WaypointSet>& warm) const {
    VectorXd z(num_vars_);
    for (int i = 0; i < static_cast<int>(sub_.nodes.size()); ++i) {
      const Configuration* src = &x0_;
      if (warm) {
        auto it = warm->find(sub_.nodes[i]);
        if (it != warm->end() && it->second.size() == x0_.size()) src = &it->second;
      }
      for (int c = 0; c < spec_.total_size(); ++c) {
        if (var_index_[i][c] >= 0) z[var_index_[i][c]] = src->values()[c];
      }
    }
    return z.cwiseMax(lower_).cwiseMin(upper_);
  }

  WaypointSet extract(const VectorXd& z) const {
    WaypointSet w;
    for (int i = 0; i < static_cast<int>(sub_.nodes.size()); ++i) w.emplace(sub_.nodes[i], assemble(z, i));
    return w;
  }

  /// Lower bound on the branch objective from grasp targets at constant
  /// keypoints: direct frontier hops, and hop-count-scaled distances deeper in.
  double lower_bound(const AssignmentMatrix& a) const {
    const int m = spec_.num_agents();
    const int n = static_cast<int>(sub_.nodes.size());
    std::vector<std::vector<double>> frontier_need(m, std::vector<double>(n, 0.0));
    std::vector<double> deep(m, 0.0);
    for (const auto& t : terms_) {
      const auto& c = *t.c;
      if (c.kind != ConstraintKind::kGraspAt || c.points[1].kind != PointRef::Kind::kKeypoint) continue;
      int agent = -1;
      if (c.points[0].kind == PointRef::Kind::kAssigned && c.subtask) agent = a.agent_of(*c.subtask);
      if (c.points[0].kind == PointRef::Kind::kAgent) agent = c.points[0].id;
      if (agent < 0 || depth_[t.node] < 0) continue;
      const int off = spec_.keypoint_offset(c.points[1].id);
      if (var_index_[t.node][off] >= 0) continue;  // target not constant
      const VectorXd q = x0_.values().segment(off, spec_.dim());
      const double gap = std::max(0.0, (x0_.agent(agent) - q).lpNorm<Eigen::Infinity>() - c.distance);
      const double need = gap * gap;
      if (frontier_flag_[t.node]) frontier_need[agent][t.node] = std::max(frontier_need[agent][t.node], need);
      deep[agent] = std::max(deep[agent], need / depth_[t.node]);
    }
    double total = 0.0;
    for (int j = 0; j < m; ++j) {
      double direct = 0.0;
      for (double v : frontier_need[j]) direct += v;
      total += std::max(direct, deep[j]);
    }
    return total;
  }

  NlpProblem problem(const AssignmentMatrix& a) const {
    NlpProblem p;
    p.dimension = num_vars_;
    p.lower = lower_;
    p.upper = upper_;
    p.objective = [this](const VectorXd& z, VectorXd& grad) {
      const VectorXd res = d_ * z - e_;
      grad = 2.0 * d_.transpose() * res;
      return res.squaredNorm();
    };
    p.hessian = [this](const VectorXd&) { return hessian_; };
    const int dim = spec_.dim();
    int rows = 0;
    for (const auto& t : terms_) rows += t.c->raw_arity(dim);
    rows += static_cast<int>(carry_terms_.size()) * 2 * dim;
    p.num_constraints = rows;
    p.constraints = [this, a, rows, dim](const VectorXd& z, VectorXd& g, MatrixXd* jac) {
      const int n = static_cast<int>(sub_.nodes.size());
      std::vector<Configuration> w;
      w.reserve(n);
      for (int i = 0; i < n; ++i) w.push_back(assemble(z, i));
      g.resize(rows);
      if (jac) jac->setZero(rows, num_vars_);
      int row = 0;
      VectorXd res;
      MatrixXd local;
      for (const auto& t : terms_) {
        eval_binding(*t.c, a, w[t.node], res, jac ? &local : nullptr);
        const int k = static_cast<int>(res.size());
        g.segment(row, k) = res;
        if (jac) {
          for (int c = 0; c < local.cols(); ++c) {
            const int v = var_index_[t.node][c];
            if (v >= 0) jac->block(row, v, k, 1) += local.col(c);
          }
        }
        row += k;
      }
      for (const auto& ct : carry_terms_) {
        const int agent = ct.subtask >= 0 ? a.agent_of(ct.subtask) : ct.agent;
        const int kp = spec_.keypoint_offset(ct.keypoint);
        const int ee = spec_.agent_offset(agent);
        const VectorXd& from = ct.from >= 0 ? w[ct.from].values() : x0_.values();
        const VectorXd& to = w[ct.to].values();
        const VectorXd r = (to.segment(kp, dim) - from.segment(kp, dim)) - (to.segment(ee, dim) - from.segment(ee, dim));
        g.segment(row, dim) = r;
        g.segment(row + dim, dim) = -r;
        if (jac) {
          for (int d = 0; d < dim; ++d) {
            auto add = [&](int node, int comp, double s) {
              if (node < 0) return;
              const int v = var_index_[node][comp];
              if (v < 0) return;
              (*jac)(row + d, v) += s;
              (*jac)(row + dim + d, v) -= s;
            };
            add(ct.to, kp + d, 1.0);
            add(ct.from, kp + d, -1.0);
            add(ct.to, ee + d, -1.0);
            add(ct.from, ee + d, 1.0);
          }
        }
        row += 2 * dim;
      }
    };
    return p;
  }

 private:
  struct Term {
    const ConstraintFn* c;
    int node;  // index into sub_.nodes
  };
  struct CarryTerm {
    int from;  // node index, or -1 for the measured state
    int to;
    int keypoint;
    int subtask;
    int agent;
  };

  const SystemSpec& spec_;
  Subgraph sub_;
  Configuration x0_;
  const PlannerParams& params_;
  std::vector<Term> terms_;
  std::vector<CarryTerm> carry_terms_;
  std::vector<std::vector<int>> var_index_;
  int num_vars_ = 0;
  MatrixXd d_;
  VectorXd e_;
  MatrixXd hessian_;
  VectorXd lower_;
  VectorXd upper_;
  std::vector<int> depth_;
  std::vector<char> frontier_flag_;
  std::vector<int> subtasks_;
  std::set<int> active_carry_subtasks_;
  struct Carrier {
    int subtask;
    int agent;
  };
  std::vector<std::pair<Carrier, Carrier>> grasp_conflicts_;
};

// Objectives closer than this are ties broken by the lexicographic order.
double tie_tolerance(double objective) {
  return 1e-6 * std::max(1.0, std::abs(objective));
}

AssignmentMatrix default_assignment(int num_subtasks, int num_agents, const std::optional<AssignmentMatrix>& previous) {
  std::vector<int> agents(num_subtasks, 0);
  if (previous && previous->num_subtasks() == num_subtasks && previous->num_agents() == num_agents) {
    agents = previous->agents();
  }
  return AssignmentMatrix(num_agents, agents);
}

}  // namespace

WaypointBranch solve_waypoint_branch(const TaskModel& model, const RemainingSet& r, const Configuration& x0,
                                     const std::optional<WaypointSet>& warm, const PlannerParams& params,
                                     const AssignmentMatrix& a) {
  const WaypointProgram prog(model, r, x0, params);
  WaypointBranch out;
  if (prog.num_vars() == 0) {
    out.report.status = SolveStatus::kOptimal;
    out.report.x = VectorXd(0);
    return out;
  }
  out.report = solve_nlp(prog.problem(a), prog.initial(warm), params.nlp);
  out.waypoints = prog.extract(out.report.x);
  return out;
}

WaypointResult solve_waypoints(const TaskModel& model, const RemainingSet& r, const Configuration& x0,
                               const std::optional<WaypointSet>& warm, const PlannerParams& params,
                               const WaypointOptions& options) {
  const int m = model.spec.num_agents();
  const int k_total = model.goc.subtask_count;
  WaypointResult result;
  if (r.empty()) {
    result.assignment = default_assignment(k_total, m, options.fixed ? options.fixed : options.previous);
    return result;
  }
  const WaypointProgram prog(model, r, x0, params);
  const auto base = default_assignment(k_total, m, options.previous);

  std::vector<AssignmentMatrix> candidates;
  if (options.fixed) {
    candidates.push_back(*options.fixed);
  } else {
    const auto& ks = prog.subtasks();
    const auto& pinned = prog.active_carry_subtasks();
    auto expand = [&](const AssignmentMatrix& partial) {
      std::vector<int> agents = base.agents();
      for (std::size_t i = 0; i < ks.size(); ++i) agents[ks[i]] = partial.agent_of(static_cast<int>(i));
      return AssignmentMatrix(m, agents);
    };
    auto feasible = [&](const AssignmentMatrix& partial) {
      const auto full = expand(partial);
      if (options.previous && options.previous->num_subtasks() == k_total) {
        for (int k : pinned) {
          if (full.agent_of(k) != options.previous->agent_of(k)) return false;
        }
      }
      if (params.single_grasp && !prog.single_grasp(full)) return false;
      return prog.scope_consistent(full);
    };
    for (const auto& partial : enumerate_assignments(static_cast<int>(ks.size()), m, feasible)) {
      candidates.push_back(expand(partial));
    }
  }

  const int n = static_cast<int>(candidates.size());
  result.branches.resize(n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < n; ++i) {
    result.branches[i].assignment = candidates[i];
    result.branches[i].lower_bound = prog.lower_bound(candidates[i]);
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return result.branches[a].lower_bound < result.branches[b].lower_bound;
  });

  const VectorXd init = prog.initial(warm);
  std::vector<VectorXd> solutions(n);
  auto solve_one = [&](int i) {
    auto& br = result.branches[i];
    if (prog.num_vars() == 0) {
      br.status = SolveStatus::kOptimal;
      br.objective = 0.0;
      solutions[i] = VectorXd(0);
      br.solved = true;
      return;
    }
    const auto rep = solve_nlp(prog.problem(br.assignment), init, params.nlp);
    br.solved = true;
    br.status = rep.status;
    br.objective = rep.objective;
    br.violation = rep.primal_residual;
    solutions[i] = rep.x;
  };

  const int workers = std::max(1, std::min(worker_count(params), n));
  double best = kInf;
  std::size_t pos = 0;
  while (pos < order.size()) {
    std::vector<int> batch;
    while (pos < order.size() && static_cast<int>(batch.size()) < workers) {
      const int i = order[pos++];
      if (!params.exhaustive && result.branches[i].lower_bound > best + tie_tolerance(best)) {
        ++result.pruned;
        continue;
      }
      batch.push_back(i);
    }
    if (batch.size() == 1) {
      solve_one(batch[0]);
    } else if (!batch.empty()) {
      std::vector<std::thread> pool;
      for (int i : batch) pool.emplace_back(solve_one, i);
      for (auto& t : pool) t.join();
    }
    for (int i : batch) {
      if (result.branches[i].status == SolveStatus::kOptimal) best = std::min(best, result.branches[i].objective);
    }
  }

  int winner = -1;
  for (int i = 0; i < n; ++i) {
    const auto& br = result.branches[i];
    if (!br.solved || br.status != SolveStatus::kOptimal) continue;
    if (winner < 0) {
      winner = i;
      continue;
    }
    const auto& w = result.branches[winner];
    const double tol = tie_tolerance(std::min(br.objective, w.objective));
    if (br.objective < w.objective - tol ||
        (std::abs(br.objective - w.objective) <= tol && br.assignment.lex_less(w.assignment))) {
      winner = i;
    }
  }
  if (winner < 0) throw AllBranchesInfeasible("waypoint problem: no assignment branch solved to optimality");
  result.assignment = result.branches[winner].assignment;
  result.objective = result.branches[winner].objective;
  result.waypoints = prog.extract(solutions[winner]);
  return result;
}

}  // namespace gocmpc
