#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gocmpc/planner.hpp"

namespace gocmpc {

class ScenarioInvalid : public Error {
 public:
  using Error::Error;
};

class PlacementOverlap : public Error {
 public:
  using Error::Error;
};

enum class DisturbanceKind { kTeleportKeypoint, kDetachKeypoint, kFreezeAgent };

std::string to_string(DisturbanceKind kind);
std::optional<DisturbanceKind> disturbance_kind_from_string(const std::string& name);

struct Disturbance {
  double time = 0.0;  // s
  DisturbanceKind kind = DisturbanceKind::kTeleportKeypoint;
  int id = 0;              // keypoint or agent
  VectorXd displacement;   // teleport only, m
  double duration = 0.0;   // freeze only, s

  bool operator==(const Disturbance& other) const;
};

/// Parameters a generated scenario was built from, so trials can reseed it.
struct GeneratorSpec {
  std::string kind;  // "stacking" or "parallel_pickup"
  int objects = 0;
  int agents = 0;

  bool operator==(const GeneratorSpec&) const = default;
};

struct Scenario {
  std::string id;
  TaskModel model;
  Configuration x0;
  Velocity v0;
  std::vector<Disturbance> disturbances;
  PlannerParams params;
  double budget = 60.0;  // simulated seconds
  std::uint64_t seed = 0;
  std::optional<GeneratorSpec> generator;

  /// Throws ScenarioInvalid naming the first problem.
  void validate() const;
};

struct WorldState {
  Configuration x;
  Velocity v;
  std::vector<int> attached_to;      // per keypoint, carrier agent or -1
  std::vector<VectorXd> grasp_offset;  // keypoint minus carrier at attach time
  std::vector<double> frozen_until;  // per agent, s
  std::vector<char> fired;           // per scheduled disturbance
  double clock = 0.0;

  static WorldState initial(const Scenario& s);
};

/// Advances the world by dt_sim toward the plan's first step. Attached
/// keypoints follow their carrier; due disturbances apply after motion.
WorldState step_world(const WorldState& w, const HorizonPlan& plan, double dt_sim,
                      const std::vector<Disturbance>& schedule, double v_max, double eps_attach,
                      const Box& workspace);

struct AttachmentEvent {
  int keypoint = 0;
  int agent = -1;
  bool attached = false;
};

/// Applies grasp and release events implied by the change from r_before to
/// r_after. Failed grasp attempts are reported in `warnings`.
WorldState update_attachments(const WorldState& w, const RemainingSet& r_before, const RemainingSet& r_after,
                              const TaskModel& model, const AssignmentMatrix& a, double eps_attach,
                              std::vector<AttachmentEvent>* events = nullptr,
                              std::vector<std::string>* warnings = nullptr);

enum class Method { kGoc, kBaseline };

std::string to_string(Method m);

struct BacktrackEvent {
  int cycle = 0;
  double time = 0.0;
  int node = 0;
};

struct EpisodeReport {
  bool success = false;
  int cycles = 0;
  double max_cycle_seconds = 0.0;
  double avg_cycle_seconds = 0.0;
  double total_length = 0.0;  // executed end-effector arc length, m
  int backtracks = 0;
  double sim_time = 0.0;
  double first_makespan = 0.0;
  std::vector<CycleDiagnostics> diagnostics;
  std::vector<BacktrackEvent> backtrack_events;
  std::vector<AttachmentEvent> attachment_events;
  std::vector<double> times;          // trajectory samples
  std::vector<VectorXd> trajectory;   // full configuration per sample
  std::vector<std::vector<int>> attachment_trace;  // attached_to per sample
  std::vector<AssignmentMatrix> assignments;       // per planning cycle
  std::vector<std::string> warnings;
  std::string error;                  // planner failure, if any
};

struct EpisodeOptions {
  Method method = Method::kGoc;
  bool record_trajectory = true;
  double dt_sim = 0.0;  // world step, s; non-positive means the planner dt
};

/// Runs mpc cycles and world steps until the task completes or the simulated
/// budget runs out.
EpisodeReport run_episode(const Scenario& scenario, const EpisodeOptions& options = {});

/// Per-block pick subtasks that may run in parallel and a chain of placements
/// that builds a stack at the workspace centre.
Scenario generate_stacking_scenario(int n_objects, int m_agents, std::uint64_t seed);

/// Two independent pick-and-place tasks for two agents.
Scenario generate_parallel_pickup_scenario(std::uint64_t seed);

/// The scenario regenerated or jittered for a trial seed.
Scenario reseed(const Scenario& s, std::uint64_t seed);

/// Sinks of the GoC whose node constraints hold at x within eps.
bool terminal_constraints_hold(const TaskModel& model, const AssignmentMatrix& a, const Configuration& x, double eps,
                               double m_big);

}  // namespace gocmpc
