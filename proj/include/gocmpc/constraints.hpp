#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gocmpc/types.hpp"

namespace gocmpc {

/// A point referenced by a constraint: a fixed agent's end-effector, a passive
/// keypoint, or the end-effector of whichever agent the constraint's subtask
/// is assigned to.
struct PointRef {
  enum class Kind { kAgent, kKeypoint, kAssigned };
  Kind kind = Kind::kKeypoint;
  int id = 0;

  static PointRef agent(int j) { return {Kind::kAgent, j}; }
  static PointRef keypoint(int p) { return {Kind::kKeypoint, p}; }
  static PointRef assigned() { return {Kind::kAssigned, 0}; }

  bool operator==(const PointRef&) const = default;
};

enum class ConstraintKind {
  kPointDistanceLE,    // |a - b| - d <= 0
  kPointDistanceGE,    // d - |a - b| <= 0
  kAxisOffsetBetween,  // lo <= (a - b)[axis] <= hi
  kWithinBox,          // lo <= a <= hi
  kGraspAt,            // |ee - p|_inf <= tol
  kClearanceGE,        // d - |p_i - p_j| <= 0 for every pair
};

std::string to_string(ConstraintKind kind);
std::optional<ConstraintKind> constraint_kind_from_string(const std::string& name);

/// One keypoint constraint primitive. Satisfaction means every residual
/// component is <= 0. A constraint with a gating subtask is evaluated once per
/// agent; copy j is relaxed by m_big * (1 - A(subtask, j)).
struct ConstraintFn {
  ConstraintKind kind = ConstraintKind::kWithinBox;
  std::vector<PointRef> points;
  double distance = 0.0;  // distance bound, or tolerance for kGraspAt
  int axis = 0;
  double lo = 0.0;
  double hi = 0.0;
  VectorXd box_lo;
  VectorXd box_hi;
  std::vector<int> scope;  // additional statically relevant agents
  std::optional<int> subtask;

  static ConstraintFn point_distance_le(PointRef a, PointRef b, double d);
  static ConstraintFn point_distance_ge(PointRef a, PointRef b, double d);
  static ConstraintFn axis_offset_between(PointRef a, PointRef b, int axis, double lo, double hi);
  static ConstraintFn within_box(PointRef a, VectorXd lo, VectorXd hi);
  static ConstraintFn grasp_at_subtask(int subtask, int keypoint, double tol);
  static ConstraintFn grasp_at_agent(int agent, int keypoint, double tol);
  static ConstraintFn clearance_ge(std::vector<PointRef> points, double d);

  ConstraintFn& gated_by(int k) {
    subtask = k;
    return *this;
  }

  int raw_arity(int dim) const;
  /// Output dimension d_i, counting the per-agent copies of gated constraints.
  int arity(const SystemSpec& spec) const;
  bool is_gated() const { return subtask.has_value(); }
  /// Agents named directly by point references or the explicit scope.
  std::vector<int> static_agents() const;
  bool has_relevance() const { return is_gated() || !static_agents().empty(); }
  bool relevant_to(int agent, const AssignmentMatrix& a) const;

  /// Throws Error naming the first dangling reference.
  void validate(const SystemSpec& spec, int subtask_count) const;

  bool operator==(const ConstraintFn& other) const;
};

using ConstraintSet = std::vector<ConstraintFn>;

/// Residual vector of c at (A, x).
VectorXd eval(const ConstraintFn& c, const AssignmentMatrix& a, const Configuration& x, double m_big);

/// Jacobian of eval with respect to x (arity x total size), holding A fixed.
/// Norms at coincident points contribute a zero row.
MatrixXd eval_gradient(const ConstraintFn& c, const AssignmentMatrix& a, const Configuration& x, double m_big);

/// Rows of eval that can bind under a fixed A: the ungated residual, or the
/// copy of the agent assigned to the gating subtask. The remaining copies are
/// relaxed by m_big and never active. Jacobian has x.size() columns.
void eval_binding(const ConstraintFn& c, const AssignmentMatrix& a, const Configuration& x, VectorXd& residual,
                  MatrixXd* jac);

/// Evaluates a constraint set, concatenating residuals.
VectorXd eval_all(const ConstraintSet& set, const AssignmentMatrix& a, const Configuration& x, double m_big);

/// Largest residual component (or -inf for an empty set).
double max_residual(const ConstraintSet& set, const AssignmentMatrix& a, const Configuration& x, double m_big);

enum class CouplingMode { kFixed, kFree, kCarried };

struct KeypointCoupling {
  CouplingMode mode = CouplingMode::kFixed;
  int subtask = -1;  // carrier subtask, or -1 when carried by a static agent
  int agent = -1;    // static carrier agent

  bool operator==(const KeypointCoupling&) const = default;
};

/// Per-transition keypoint motion model: keypoints stay fixed, move freely, or
/// translate rigidly with their carrier agent.
struct RigidCoupling {
  std::vector<KeypointCoupling> keypoints;

  static RigidCoupling all_fixed(int num_keypoints);
  /// Marks every keypoint grasped by a GraspAt record in the edge's constraint
  /// set as carried; all others fixed.
  static RigidCoupling from_edge_constraints(const ConstraintSet& edge_constraints, int num_keypoints);
  bool operator==(const RigidCoupling&) const = default;
};

/// Equality residual pairs for the rigid transition w_a -> w_b. Carried
/// keypoints produce one gated copy per agent.
VectorXd rigid_transition_residual(const RigidCoupling& rc, const AssignmentMatrix& a, const Configuration& w_a,
                                   const Configuration& w_b, double m_big);

/// Jacobian of rigid_transition_residual with respect to the stacked vector
/// [w_a; w_b]. Constant because the residual is affine.
MatrixXd rigid_transition_jacobian(const RigidCoupling& rc, const AssignmentMatrix& a, const SystemSpec& spec);

}  // namespace gocmpc
