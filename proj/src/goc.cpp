#include "gocmpc/goc.hpp"

#include <algorithm>
#include <deque>
#include <map>

namespace gocmpc {

namespace {

std::string join_nodes(const std::vector<int>& nodes) {
  std::string s;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(nodes[i]);
  }
  return s;
}

void check_constraint_refs(const ConstraintFn& c, const SystemSpec& spec, int subtask_count,
                           const std::string& where) {
  if (c.subtask && (*c.subtask < 0 || *c.subtask >= subtask_count)) {
    throw DanglingReference("subtask", *c.subtask, where);
  }
  for (const auto& p : c.points) {
    if (p.kind == PointRef::Kind::kAgent && (p.id < 0 || p.id >= spec.num_agents())) {
      throw DanglingReference("agent", p.id, where);
    }
    if (p.kind == PointRef::Kind::kKeypoint && (p.id < 0 || p.id >= spec.num_keypoints)) {
      throw DanglingReference("keypoint", p.id, where);
    }
  }
  for (int j : c.scope) {
    if (j < 0 || j >= spec.num_agents()) throw DanglingReference("agent", j, where);
  }
  try {
    c.validate(spec, subtask_count);
  } catch (const Error& e) {
    throw Error(where + ": " + e.what());
  }
}

}  // namespace

Goc Goc::from_edges(int num_nodes, const std::vector<std::pair<int, int>>& edges, int subtask_count) {
  Goc g;
  g.num_nodes = num_nodes;
  g.node_constraints.resize(num_nodes);
  g.subtask_count = subtask_count;
  for (const auto& [a, b] : edges) g.edges.push_back({a, b, {}});
  return g;
}

const GocEdge* Goc::find_edge(int from, int to) const {
  for (const auto& e : edges) {
    if (e.from == from && e.to == to) return &e;
  }
  return nullptr;
}

std::vector<int> Goc::predecessors(int v) const {
  std::vector<int> out;
  for (const auto& e : edges) {
    if (e.to == v) out.push_back(e.from);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> Goc::successors(int v) const {
  std::vector<int> out;
  for (const auto& e : edges) {
    if (e.from == v) out.push_back(e.to);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> Goc::sinks() const {
  std::vector<int> out;
  for (int v = 0; v < num_nodes; ++v) {
    if (successors(v).empty()) out.push_back(v);
  }
  return out;
}

std::vector<int> Goc::all_nodes() const {
  std::vector<int> out(num_nodes);
  for (int v = 0; v < num_nodes; ++v) out[v] = v;
  return out;
}

CycleDetected::CycleDetected(std::vector<int> cycle)
    : Error("cycle detected through nodes [" + join_nodes(cycle) + "]"), cycle_(std::move(cycle)) {}

DanglingReference::DanglingReference(std::string kind, int id, const std::string& detail)
    : Error("dangling " + kind + " reference " + std::to_string(id) + " (" + detail + ")"),
      kind_(std::move(kind)),
      id_(id) {}

void validate_goc(const Goc& goc, const SystemSpec& spec) {
  const int n = goc.num_nodes;
  if (n < 0) throw Error("goc: negative node count");
  if (static_cast<int>(goc.node_constraints.size()) != n) {
    throw Error("goc: node constraint table has " + std::to_string(goc.node_constraints.size()) + " entries for " +
                std::to_string(n) + " nodes");
  }
  if (goc.subtask_count < 0) throw Error("goc: negative subtask count");
  std::set<std::pair<int, int>> seen;
  for (const auto& e : goc.edges) {
    if (e.from < 0 || e.from >= n) throw DanglingReference("node", e.from, "edge source");
    if (e.to < 0 || e.to >= n) throw DanglingReference("node", e.to, "edge target");
    if (!seen.insert(e.key()).second) {
      throw Error("goc: duplicate edge (" + std::to_string(e.from) + "," + std::to_string(e.to) + ")");
    }
  }

  // Iterative DFS; the first back edge found yields the cycle witness.
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : goc.edges) adj[e.from].push_back(e.to);
  for (auto& a : adj) std::sort(a.begin(), a.end());
  std::vector<int> color(n, 0);  // 0 white, 1 on stack, 2 done
  for (int root = 0; root < n; ++root) {
    if (color[root]) continue;
    std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
    color[root] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < adj[v].size()) {
        const int w = adj[v][next++];
        if (color[w] == 1) {
          std::vector<int> cycle;
          bool on = false;
          for (const auto& [u, _] : stack) {
            if (u == w) on = true;
            if (on) cycle.push_back(u);
          }
          throw CycleDetected(std::move(cycle));
        }
        if (color[w] == 0) {
          color[w] = 1;
          stack.push_back({w, 0});
        }
      } else {
        color[v] = 2;
        stack.pop_back();
      }
    }
  }

  for (int v = 0; v < n; ++v) {
    for (const auto& c : goc.node_constraints[v]) {
      check_constraint_refs(c, spec, goc.subtask_count, "node " + std::to_string(v));
    }
  }
  for (const auto& e : goc.edges) {
    for (const auto& c : e.constraints) {
      check_constraint_refs(c, spec, goc.subtask_count,
                            "edge (" + std::to_string(e.from) + "," + std::to_string(e.to) + ")");
    }
  }
}

RemainingSet all_remaining(const Goc& goc) {
  RemainingSet r;
  for (int v = 0; v < goc.num_nodes; ++v) r.insert(v);
  return r;
}

std::vector<std::pair<int, int>> cut_edges(const Goc& goc, const RemainingSet& r) {
  std::vector<std::pair<int, int>> out;
  for (const auto& e : goc.edges) {
    if (!r.contains(e.from) && r.contains(e.to)) out.push_back(e.key());
  }
  return out;
}

int Subgraph::index_of(int node) const {
  const auto it = std::lower_bound(nodes.begin(), nodes.end(), node);
  if (it == nodes.end() || *it != node) return -1;
  return static_cast<int>(it - nodes.begin());
}

const ConstraintSet& Subgraph::constraints_of(int node) const {
  const int i = index_of(node);
  if (i < 0) throw Error("subgraph: node " + std::to_string(node) + " is not active");
  return node_constraints[i];
}

Subgraph subgraph(const Goc& goc, const RemainingSet& r) {
  Subgraph s;
  s.subtask_count = goc.subtask_count;
  for (int v : r) {
    if (v < 0 || v >= goc.num_nodes) continue;
    s.nodes.push_back(v);
    s.node_constraints.push_back(goc.node_constraints[v]);
  }
  std::vector<int> indeg(s.nodes.size(), 0);
  for (const auto& e : goc.edges) {
    if (r.contains(e.from) && r.contains(e.to)) {
      s.edges.push_back(e);
      ++indeg[s.index_of(e.to)];
    }
  }
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    if (indeg[i] == 0) s.frontier.push_back(s.nodes[i]);
  }
  return s;
}

std::vector<int> topological_bfs_order(const std::vector<int>& nodes, const std::vector<GocEdge>& edges) {
  std::map<int, int> indeg;
  std::map<int, std::vector<int>> out;
  for (int v : nodes) indeg[v] = 0;
  for (const auto& e : edges) {
    ++indeg[e.to];
    out[e.from].push_back(e.to);
  }
  for (auto& [_, succ] : out) std::sort(succ.begin(), succ.end());
  std::deque<int> queue;
  for (const auto& [v, d] : indeg) {
    if (d == 0) queue.push_back(v);
  }
  std::vector<int> order;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    order.push_back(v);
    for (int w : out[v]) {
      if (--indeg[w] == 0) queue.push_back(w);
    }
  }
  if (order.size() != indeg.size()) throw Error("topological order: graph has a cycle");
  return order;
}

Reachability::Reachability(const Goc& goc) : reach_(goc.num_nodes, std::vector<std::uint8_t>(goc.num_nodes, 0)) {
  const auto order = topological_bfs_order(goc.all_nodes(), goc.edges);
  for (int v = 0; v < goc.num_nodes; ++v) reach_[v][v] = 1;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int v = *it;
    for (int w : goc.successors(v)) {
      for (int u = 0; u < goc.num_nodes; ++u) reach_[v][u] |= reach_[w][u];
    }
  }
}

std::vector<AssignmentMatrix> enumerate_assignments(int num_subtasks, int num_agents,
                                                    const AssignmentPredicate& feasible, std::int64_t cap) {
  if (num_subtasks < 0) throw Error("enumerate_assignments: negative subtask count");
  if (num_agents < 1) throw Error("enumerate_assignments: at least one agent is required");
  std::int64_t total = 1;
  for (int k = 0; k < num_subtasks; ++k) {
    total *= num_agents;
    if (total > cap) {
      throw ExplosionGuard("enumerate_assignments: " + std::to_string(num_agents) + "^" +
                           std::to_string(num_subtasks) + " assignments exceed the cap of " + std::to_string(cap));
    }
  }
  std::vector<AssignmentMatrix> out;
  std::vector<int> digits(num_subtasks, 0);
  for (std::int64_t i = 0; i < total; ++i) {
    AssignmentMatrix a(num_agents, digits);
    if (!feasible || feasible(a)) out.push_back(std::move(a));
    // Odometer increment, last subtask least significant.
    for (int k = num_subtasks - 1; k >= 0; --k) {
      if (++digits[k] < num_agents) break;
      digits[k] = 0;
    }
  }
  return out;
}

int AgentPathPlan::position_in_chain(int agent, int node) const {
  const auto& c = chains.at(agent);
  const auto it = std::find(c.begin(), c.end(), node);
  return it == c.end() ? -1 : static_cast<int>(it - c.begin());
}

std::vector<int> AgentPathPlan::visitors(int node) const {
  std::vector<int> out;
  for (int j = 0; j < static_cast<int>(chains.size()); ++j) {
    if (position_in_chain(j, node) >= 0) out.push_back(j);
  }
  return out;
}

bool node_relevant_to(const Subgraph& g, int node, int agent, const AssignmentMatrix& a) {
  for (const auto& c : g.constraints_of(node)) {
    if (c.relevant_to(agent, a)) return true;
  }
  for (const auto& e : g.edges) {
    if (e.from != node && e.to != node) continue;
    for (const auto& c : e.constraints) {
      if (c.relevant_to(agent, a)) return true;
    }
  }
  return false;
}

AgentPathPlan agent_paths(const Subgraph& g, const AssignmentMatrix& a) {
  auto check = [](const ConstraintFn& c) {
    if (!c.has_relevance()) {
      throw AmbiguousRelevance(to_string(c.kind) + " constraint declares neither an agent scope nor a subtask gate");
    }
  };
  for (const auto& set : g.node_constraints) {
    for (const auto& c : set) check(c);
  }
  for (const auto& e : g.edges) {
    for (const auto& c : e.constraints) check(c);
  }

  const int m = a.num_agents();
  AgentPathPlan plan;
  plan.chains.resize(m);
  for (int v : topological_bfs_order(g.nodes, g.edges)) {
    for (int j = 0; j < m; ++j) {
      if (node_relevant_to(g, v, j, a)) plan.chains[j].push_back(v);
    }
  }

  // Convergence: every additional visitor is synchronized with the first.
  for (int v : g.nodes) {
    const auto vis = plan.visitors(v);
    for (std::size_t i = 1; i < vis.size(); ++i) {
      plan.sync_constraints.push_back(
          {vis[0], plan.position_in_chain(vis[0], v), vis[i], plan.position_in_chain(vis[i], v)});
    }
  }

  // Edges not already ordered by a shared chain become cross-agent orderings.
  for (const auto& e : g.edges) {
    const auto va = plan.visitors(e.from);
    const auto vb = plan.visitors(e.to);
    if (va.empty() || vb.empty()) continue;
    bool shared = false;
    for (int j : va) shared = shared || std::binary_search(vb.begin(), vb.end(), j);
    if (shared) continue;
    plan.order_constraints.push_back(
        {va[0], plan.position_in_chain(va[0], e.from), vb[0], plan.position_in_chain(vb[0], e.to)});
  }
  std::sort(plan.order_constraints.begin(), plan.order_constraints.end());
  std::sort(plan.sync_constraints.begin(), plan.sync_constraints.end());
  return plan;
}

}  // namespace gocmpc
