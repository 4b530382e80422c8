#include <algorithm>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "gocmpc/goc.hpp"

using namespace gocmpc;

namespace {
using EdgeList = std::vector<std::pair<int, int>>;

RemainingSet set_of(std::initializer_list<int> v) { return RemainingSet(v); }

std::vector<std::pair<int, int>> edge_keys(const std::vector<GocEdge>& e) {
  std::vector<std::pair<int, int>> k;
  for (const auto& x : e) k.push_back(x.key());
  std::sort(k.begin(), k.end());
  return k;
}
}  // namespace

TEST_CASE("validate accepts the six-node DAG and rejects cycles") {
  const auto spec = fixtures::planar_spec(2, 0);
  CHECK_NOTHROW(validate_goc(fixtures::six_node_graph(), spec));
  try {
    validate_goc(Goc::from_edges(1, {{0, 0}}), spec);
    FAIL("expected a cycle");
  } catch (const CycleDetected& e) {
    CHECK(e.cycle() == std::vector<int>{0});
  }
  try {
    validate_goc(Goc::from_edges(2, {{0, 1}, {1, 0}}), spec);
    FAIL("expected a cycle");
  } catch (const CycleDetected& e) {
    CHECK(e.cycle() == std::vector<int>{0, 1});
  }
}

TEST_CASE("validate rejects dangling references") {
  const auto spec = fixtures::planar_spec(2, 1);
  CHECK_THROWS_AS(validate_goc(Goc::from_edges(2, {{0, 9}}), spec), DanglingReference);
  auto g = Goc::from_edges(1, {}, 1);
  g.node_constraints[0].push_back(ConstraintFn::grasp_at_subtask(3, 0, 0.0));
  CHECK_THROWS_AS(validate_goc(g, spec), DanglingReference);
  auto h = Goc::from_edges(1, {}, 1);
  h.node_constraints[0].push_back(ConstraintFn::grasp_at_agent(0, 4, 0.0));
  CHECK_THROWS_AS(validate_goc(h, spec), DanglingReference);
}

TEST_CASE("cut edges") {
  const auto g = fixtures::six_node_graph();
  CHECK(cut_edges(g, set_of({2, 3, 4, 5})) == EdgeList{{0, 2}, {1, 3}});
  CHECK(cut_edges(g, all_remaining(g)).empty());
  CHECK(cut_edges(g, {}).empty());
}

TEST_CASE("every edge is in exactly one partition class") {
  const auto g = fixtures::six_node_graph();
  std::mt19937 rng(3);
  for (int t = 0; t < 50; ++t) {
    RemainingSet r;
    for (int v = 0; v < 6; ++v)
      if (rng() % 2) r.insert(v);
    const auto cut = cut_edges(g, r);
    for (const auto& e : g.edges) {
      const bool both_in = r.count(e.from) && r.count(e.to);
      const bool both_out = !r.count(e.from) && !r.count(e.to);
      const bool is_cut = std::find(cut.begin(), cut.end(), e.key()) != cut.end();
      CHECK(int(both_in) + int(both_out) + int(is_cut) + int(r.count(e.from) && !r.count(e.to)) == 1);
    }
  }
}

TEST_CASE("subgraph and frontier") {
  const auto g = fixtures::six_node_graph();
  const auto s = subgraph(g, set_of({2, 3, 4, 5}));
  CHECK(s.nodes == std::vector<int>{2, 3, 4, 5});
  CHECK(edge_keys(s.edges) == EdgeList{{2, 4}, {3, 4}, {3, 5}, {4, 5}});
  CHECK(s.frontier == std::vector<int>{2, 3});
  CHECK(subgraph(g, all_remaining(g)).frontier == std::vector<int>{0});
  const auto single = subgraph(g, set_of({5}));
  CHECK(single.nodes == std::vector<int>{5});
  CHECK(single.edges.empty());
  CHECK(single.frontier == std::vector<int>{5});
}

TEST_CASE("assignment enumeration") {
  const auto all = enumerate_assignments(2, 2);
  REQUIRE(all.size() == 4);
  CHECK(all[0].agents() == std::vector<int>{0, 0});
  CHECK(all[1].agents() == std::vector<int>{0, 1});
  CHECK(all[2].agents() == std::vector<int>{1, 0});
  CHECK(all[3].agents() == std::vector<int>{1, 1});
  for (const auto& a : all) CHECK((a.dense().rowwise().sum().array() == 1.0).all());
  const auto empty = enumerate_assignments(0, 3);
  REQUIRE(empty.size() == 1);
  CHECK(empty[0].num_subtasks() == 0);
  // Oracle: count of the 2^3 vectors that are not all zero.
  int expected = 0;
  for (int code = 0; code < 8; ++code) expected += code != 0;
  const auto filtered = enumerate_assignments(3, 2, [](const AssignmentMatrix& a) {
    return !std::all_of(a.agents().begin(), a.agents().end(), [](int j) { return j == 0; });
  });
  CHECK(static_cast<int>(filtered.size()) == expected);
  CHECK(enumerate_assignments(4, 3).size() == 81);
  CHECK_THROWS_AS(enumerate_assignments(13, 2), ExplosionGuard);
}

namespace {

// Nodes statically scoped to agents via box constraints.
Subgraph scoped_subgraph(const Goc& g, const RemainingSet& r, const std::vector<std::vector<int>>& agents_of_node) {
  Goc copy = g;
  for (std::size_t v = 0; v < agents_of_node.size(); ++v) {
    for (int j : agents_of_node[v]) {
      copy.node_constraints[v].push_back(
          ConstraintFn::within_box(PointRef::agent(j), VectorXd::Constant(2, -1), VectorXd::Constant(2, 1)));
    }
  }
  return subgraph(copy, r);
}

}  // namespace

TEST_CASE("agent paths on the six-node graph") {
  // Agents are indexed 0 and 1 here (agents 1 and 2 in one-based notation).
  const auto g = fixtures::six_node_graph();
  const auto s = scoped_subgraph(g, set_of({2, 3, 4, 5}), {{}, {}, {1}, {0}, {1}, {0, 1}});
  const auto plan = agent_paths(s, AssignmentMatrix(2, {}));
  CHECK(plan.chains[0] == std::vector<int>{3, 5});
  CHECK(plan.chains[1] == std::vector<int>{2, 4, 5});
  CHECK(plan.order_constraints == std::vector<TimingTuple>{{0, 0, 1, 1}});
  CHECK(plan.sync_constraints == std::vector<TimingTuple>{{0, 1, 1, 2}});
  for (const auto& t : plan.sync_constraints) CHECK(plan.chains[t.agent_a][t.index_a] == plan.chains[t.agent_b][t.index_b]);
}

TEST_CASE("agent paths trivial cases") {
  const auto chain = Goc::from_edges(3, {{0, 1}, {1, 2}});
  const auto s = scoped_subgraph(chain, all_remaining(chain), {{0}, {0}, {0}});
  const auto plan = agent_paths(s, AssignmentMatrix(1, {}));
  CHECK(plan.chains[0] == std::vector<int>{0, 1, 2});
  CHECK(plan.order_constraints.empty());
  CHECK(plan.sync_constraints.empty());

  const auto pair = Goc::from_edges(2, {});
  const auto ps = scoped_subgraph(pair, all_remaining(pair), {{0}, {1}});
  const auto pp = agent_paths(ps, AssignmentMatrix(2, {}));
  CHECK(pp.chains[0] == std::vector<int>{0});
  CHECK(pp.chains[1] == std::vector<int>{1});
  CHECK(pp.order_constraints.empty());
  CHECK(pp.sync_constraints.empty());
}

TEST_CASE("agent paths follow the assignment and reject unscoped constraints") {
  auto g = Goc::from_edges(2, {{0, 1}}, 1);
  g.node_constraints[0].push_back(ConstraintFn::grasp_at_subtask(0, 0, 0.0));
  g.node_constraints[1].push_back(ConstraintFn::grasp_at_subtask(0, 0, 0.0));
  const auto s = subgraph(g, all_remaining(g));
  CHECK(agent_paths(s, AssignmentMatrix(2, {1})).chains[1] == std::vector<int>{0, 1});
  CHECK(agent_paths(s, AssignmentMatrix(2, {1})).chains[0].empty());

  auto bad = Goc::from_edges(1, {});
  bad.node_constraints[0].push_back(
      ConstraintFn::within_box(PointRef::keypoint(0), VectorXd::Constant(2, -1), VectorXd::Constant(2, 1)));
  CHECK_THROWS_AS(agent_paths(subgraph(bad, all_remaining(bad)), AssignmentMatrix(1, {})), AmbiguousRelevance);
}

TEST_CASE("agent path chains are subsequences of a topological order and deterministic") {
  const auto g = fixtures::six_node_graph();
  std::mt19937 rng(5);
  for (int t = 0; t < 30; ++t) {
    std::vector<std::vector<int>> agents(6);
    for (auto& a : agents) {
      a.push_back(static_cast<int>(rng() % 2));
      if (rng() % 3 == 0) a.push_back(1 - a.front());
    }
    // Runs keep R closed under successors.
    const Reachability closure(g);
    RemainingSet r;
    for (int v = 0; v < 6; ++v)
      if (rng() % 4 == 0)
        for (int w = 0; w < 6; ++w)
          if (closure.reaches(v, w)) r.insert(w);
    const auto s = scoped_subgraph(g, r, agents);
    const auto plan = agent_paths(s, AssignmentMatrix(2, {}));
    CHECK(agent_paths(s, AssignmentMatrix(2, {})).chains == plan.chains);
    const Reachability& reach = closure;
    for (const auto& c : plan.chains)
      for (std::size_t i = 1; i < c.size(); ++i) CHECK(!reach.reaches(c[i], c[i - 1]));
    for (const auto& e : plan.sync_constraints) CHECK(plan.chains[e.agent_a][e.index_a] == plan.chains[e.agent_b][e.index_b]);
  }
}
