#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gocmpc/goc.hpp"
#include "gocmpc/solvers.hpp"

namespace gocmpc {

/// W(v) for every node of the active subgraph.
using WaypointSet = std::map<int, Configuration>;

/// Static spherical obstacle agents keep at least `radius` away from.
struct Obstacle {
  VectorXd center;
  double radius = 0.0;
};

/// Declares that `keypoint` travels with its carrier along edge (from, to).
/// The carrier is the agent assigned to `subtask`, or the static `agent`.
struct CarryEdge {
  int from = 0;
  int to = 0;
  int keypoint = 0;
  int subtask = -1;
  int agent = -1;

  bool operator==(const CarryEdge&) const = default;
};

/// Everything about a task that stays fixed for a run.
struct TaskModel {
  SystemSpec spec;
  Goc goc;
  std::vector<CarryEdge> declared_carries;  // in addition to edge GraspAt records
  std::vector<Obstacle> obstacles;

  /// Carry edges from edge GraspAt records plus the declared ones, sorted.
  std::vector<CarryEdge> carries() const;
};

struct PlannerParams {
  double tau = 0.15;       // time-delta cutoff, s
  double epsilon = 0.01;   // constraint tolerance
  int horizon = 10;        // H
  double dt = 0.1;         // s
  double delta_min = 0.05; // s
  double v_max = 0.5;      // m/s per axis
  double a_max = 2.0;      // m/s^2 per axis
  double w_time = 1.0;
  double w_smooth = 0.1;
  double w_vel_max = 0.05;
  double w_acc_max = 0.05;
  double w_track = 1.0;
  double activation_radius = 0.15;  // m
  bool jerk_surrogate = false;
  double j_max = 20.0;     // m/s^2 per segment, surrogate only
  bool rest_at_grasp = true;
  double m_big = 0.0;      // <= 0 selects 1e4 x workspace diagonal
  bool exhaustive = false; // solve every branch, no bound pruning
  bool single_grasp = true; // an agent carries one keypoint at a time
  int threads = 0;         // 0 selects GOC_MPC_THREADS or the hardware count
  NlpOptions nlp;
  QpOptions qp;

  /// Throws Error for non-positive parameters.
  void validate() const;
  std::vector<std::string> warnings() const;
  double big_m(const SystemSpec& spec) const;
};

/// Per-keypoint motion model for the transition from node `from` (or the
/// current state when from < 0) to node `to`, given the remaining set.
RigidCoupling transition_coupling(const std::vector<CarryEdge>& carries, const Reachability& reach,
                                  const RemainingSet& r, int from, int to, int num_keypoints);

class AllBranchesInfeasible : public Error {
 public:
  using Error::Error;
};

struct BranchOutcome {
  AssignmentMatrix assignment;
  double lower_bound = 0.0;
  bool solved = false;  // false when pruned by its bound
  SolveStatus status = SolveStatus::kMaxIterations;
  double objective = 0.0;
  double violation = 0.0;
};

struct WaypointResult {
  WaypointSet waypoints;
  AssignmentMatrix assignment;
  double objective = 0.0;
  std::vector<BranchOutcome> branches;  // in enumeration order
  int pruned = 0;
};

struct WaypointOptions {
  std::optional<AssignmentMatrix> previous;  // A of the last cycle, pins active carries
  std::optional<AssignmentMatrix> fixed;     // only this assignment is considered
};

/// P1: enumerates assignments and solves the waypoint program per branch.
/// Throws AllBranchesInfeasible and ExplosionGuard.
WaypointResult solve_waypoints(const TaskModel& model, const RemainingSet& r, const Configuration& x0,
                               const std::optional<WaypointSet>& warm, const PlannerParams& params,
                               const WaypointOptions& options = {});

/// One P1 branch with the assignment held fixed.
struct WaypointBranch {
  SolveReport report;
  WaypointSet waypoints;
};

WaypointBranch solve_waypoint_branch(const TaskModel& model, const RemainingSet& r, const Configuration& x0,
                                     const std::optional<WaypointSet>& warm, const PlannerParams& params,
                                     const AssignmentMatrix& a);

/// Cubic Hermite trajectory of one agent. waypoints[0] is the start state;
/// deltas[i] is the duration of the segment ending at waypoints[i + 1].
struct AgentSpline {
  std::vector<VectorXd> waypoints;
  std::vector<VectorXd> velocities;
  std::vector<double> deltas;

  int num_segments() const { return static_cast<int>(deltas.size()); }
  double duration() const;
  /// Cumulative time at which waypoint `index + 1` is reached.
  double arrival(int index) const;
};

struct SplineSample {
  VectorXd position;
  VectorXd velocity;
};

/// Evaluates the spline; times past the end give the final waypoint at rest.
SplineSample eval_spline(const AgentSpline& s, double t);

struct TimingSolution {
  std::vector<AgentSpline> splines;  // one per agent
  double makespan = 0.0;
  SolveReport report;
};

class TimingInfeasible : public Error {
 public:
  using Error::Error;
};

/// P2: timing QP over velocities, segment durations and epigraph scalars.
/// `rest[j][i]` forces a zero velocity at agent j's chain position i.
TimingSolution solve_timing(const AgentPathPlan& plan, const WaypointSet& w, const Configuration& x0, const Velocity& v0,
                            const PlannerParams& params, const std::vector<std::vector<bool>>& rest = {});

/// Receding-horizon tracking plan. steps[0] is the current actuated state and
/// steps[1..H] follow at dt spacing.
struct HorizonPlan {
  double dt = 0.0;
  std::vector<VectorXd> steps;
  double tracking_cost = 0.0;
  bool fallback = false;  // obstacle half-spaces were dropped
  SolveStatus status = SolveStatus::kOptimal;
};

/// P3: tracks the joint reference over H steps under per-axis speed bounds,
/// workspace bounds and linearized obstacle clearance.
HorizonPlan solve_horizon(const std::vector<AgentSpline>& reference, const Configuration& x,
                          const std::vector<Obstacle>& obstacles, const Box& workspace, const PlannerParams& params);

/// Residuals of an edge (from, to), evaluated at the measured state.
using EdgeResidualFn = std::function<VectorXd(int from, int to)>;
/// Residuals of a node's waypoint constraints at the measured state.
using NodeResidualFn = std::function<VectorXd(int node)>;

/// Source of the first cut edge (edge order) with a component >= eps.
std::optional<int> phase_backtrack(const Goc& goc, const RemainingSet& r, const EdgeResidualFn& edge_residual,
                                   double eps);

struct ProgressCandidate {
  int agent = 0;
  int node = 0;
  double delta0 = 0.0;
};

/// Nodes removed by phase progression, in removal order. A candidate is
/// removed when delta0 <= tau, every node residual is <= eps and all its
/// predecessors are already completed. Candidates are examined in
/// topological order so a node and its successor may complete together.
std::vector<int> phase_progress(const Goc& goc, const RemainingSet& r, const std::vector<ProgressCandidate>& candidates,
                                const NodeResidualFn& node_residual, double tau, double eps);

struct CycleState {
  std::optional<AssignmentMatrix> previous;  // A of the last successful cycle
  std::optional<WaypointSet> warm;
  std::optional<AssignmentMatrix> fixed_assignment;  // baseline mode
};

struct CycleDiagnostics {
  std::optional<int> backtracked;  // node re-added to R
  std::vector<int> progressed;     // nodes removed from R
  double p1_seconds = 0.0;
  double p2_seconds = 0.0;
  double p3_seconds = 0.0;
  double total_seconds = 0.0;
  int branches_total = 0;
  int branches_solved = 0;
  int branches_pruned = 0;
  bool p1_fallback = false;  // reused the previous waypoints after P1 failed
  bool p3_fallback = false;
  double makespan = 0.0;
  double p1_objective = 0.0;
  std::vector<double> first_deltas;  // Delta_j(0), or -1 for agents without a chain
};

struct CycleResult {
  std::optional<HorizonPlan> plan;  // empty after a backtrack
  RemainingSet remaining;
  CycleDiagnostics diagnostics;
  AssignmentMatrix assignment;
  AgentPathPlan paths;
  WaypointSet waypoints;
  TimingSolution timing;
};

/// One GoC-MPC cycle: backtracking, P1, agent paths, P2, progression, P3.
CycleResult mpc_cycle(const TaskModel& model, const RemainingSet& r, const Configuration& x, const Velocity& xdot,
                      const PlannerParams& params, CycleState& state);

/// Deterministic topological order with ascending-id tie-break.
std::vector<int> linearize_order(const Goc& goc);

struct BaselinePlan {
  Goc chain;
  std::vector<int> order;
  AssignmentMatrix assignment;
};

/// Total-order baseline: the GoC threaded into a chain, with the assignment
/// fixed once by P1 at the initial state.
BaselinePlan linearize_baseline(const TaskModel& model, const Configuration& x0, const PlannerParams& params);

/// Chain GoC only (original edges plus unconstrained chain edges).
Goc linearize_goc(const Goc& goc);

/// Post-hoc check of a decomposed solution against the full problem.
struct SolutionEvaluation {
  double makespan = 0.0;
  double node_violation = 0.0;
  double edge_violation = 0.0;
  double rigid_violation = 0.0;
};

SolutionEvaluation evaluate_solution(const TaskModel& model, const RemainingSet& r, const Configuration& x0,
                                     const WaypointSet& w, const AssignmentMatrix& a, const TimingSolution& timing,
                                     const PlannerParams& params);

}  // namespace gocmpc
