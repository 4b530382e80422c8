#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gocmpc/constraints.hpp"
#include "gocmpc/types.hpp"

namespace gocmpc {

struct GocEdge {
  int from = 0;
  int to = 0;
  ConstraintSet constraints;

  std::pair<int, int> key() const { return {from, to}; }
};

/// Graph of constraints: a DAG over dense node ids [0, N) whose nodes carry
/// waypoint constraints and whose edges carry transition constraints.
struct Goc {
  int num_nodes = 0;
  std::vector<ConstraintSet> node_constraints;  // indexed by node id
  std::vector<GocEdge> edges;
  int subtask_count = 0;
  std::vector<std::string> node_names;  // optional, empty or size N

  static Goc from_edges(int num_nodes, const std::vector<std::pair<int, int>>& edges, int subtask_count = 0);

  const GocEdge* find_edge(int from, int to) const;
  std::vector<int> predecessors(int v) const;
  std::vector<int> successors(int v) const;
  /// Nodes with no outgoing edge.
  std::vector<int> sinks() const;
  std::vector<int> all_nodes() const;
};

class CycleDetected : public Error {
 public:
  explicit CycleDetected(std::vector<int> cycle);
  const std::vector<int>& cycle() const { return cycle_; }

 private:
  std::vector<int> cycle_;
};

class DanglingReference : public Error {
 public:
  DanglingReference(std::string kind, int id, const std::string& detail);
  const std::string& kind() const { return kind_; }
  int id() const { return id_; }

 private:
  std::string kind_;
  int id_;
};

class ExplosionGuard : public Error {
 public:
  using Error::Error;
};

class AmbiguousRelevance : public Error {
 public:
  using Error::Error;
};

/// Throws CycleDetected or DanglingReference on the first violation found.
void validate_goc(const Goc& goc, const SystemSpec& spec);

/// Remaining (not yet completed) nodes R.
using RemainingSet = std::set<int>;

RemainingSet all_remaining(const Goc& goc);

/// E ∩ ((V \ R) × R), in edge-list order.
std::vector<std::pair<int, int>> cut_edges(const Goc& goc, const RemainingSet& r);

/// Induced subgraph on R. Node ids keep their values in the parent graph.
struct Subgraph {
  std::vector<int> nodes;  // ascending
  std::vector<ConstraintSet> node_constraints;  // parallel to nodes
  std::vector<GocEdge> edges;
  std::vector<int> frontier;  // in-degree zero within R, ascending
  int subtask_count = 0;

  int index_of(int node) const;  // position in `nodes`, or -1
  bool contains(int node) const { return index_of(node) >= 0; }
  const ConstraintSet& constraints_of(int node) const;
};

Subgraph subgraph(const Goc& goc, const RemainingSet& r);

/// Deterministic Kahn traversal: frontier processed FIFO, released nodes
/// appended in ascending id order.
std::vector<int> topological_bfs_order(const std::vector<int>& nodes, const std::vector<GocEdge>& edges);

/// Reflexive-transitive reachability over a full graph.
class Reachability {
 public:
  explicit Reachability(const Goc& goc);
  bool reaches(int from, int to) const { return reach_[from][to] != 0; }
  int size() const { return static_cast<int>(reach_.size()); }

 private:
  std::vector<std::vector<std::uint8_t>> reach_;
};

using AssignmentPredicate = std::function<bool(const AssignmentMatrix&)>;

/// All M^K row-stochastic binary matrices accepted by `feasible`, in
/// lexicographic order of the per-subtask agent index.
std::vector<AssignmentMatrix> enumerate_assignments(int num_subtasks, int num_agents,
                                                    const AssignmentPredicate& feasible = {},
                                                    std::int64_t cap = 4096);

/// (agent_a, index_a, agent_b, index_b): cumulative time of agent_a at its
/// chain position index_a relates to agent_b at index_b.
struct TimingTuple {
  int agent_a = 0;
  int index_a = 0;
  int agent_b = 0;
  int index_b = 0;

  bool operator==(const TimingTuple&) const = default;
  auto operator<=>(const TimingTuple&) const = default;
};

struct AgentPathPlan {
  std::vector<std::vector<int>> chains;  // per agent, node ids in visiting order
  std::vector<TimingTuple> order_constraints;  // E_<=
  std::vector<TimingTuple> sync_constraints;   // E_=

  int position_in_chain(int agent, int node) const;
  /// Agents whose chain contains `node`, ascending.
  std::vector<int> visitors(int node) const;
};

/// Whether agent j is relevant to `node` under A: a node constraint or an
/// incident edge constraint is statically scoped to j or gated on a subtask
/// assigned to j.
bool node_relevant_to(const Subgraph& g, int node, int agent, const AssignmentMatrix& a);

/// Per-agent waypoint chains and inter-agent timing constraints. Throws
/// AmbiguousRelevance for constraints with neither a static agent nor a gate.
AgentPathPlan agent_paths(const Subgraph& g, const AssignmentMatrix& a);

}  // namespace gocmpc
