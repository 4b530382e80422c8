#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gocmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box, meters.
struct Box {
  VectorXd lo;
  VectorXd hi;

  bool contains(const Eigen::Ref<const VectorXd>& p, double tol = 0.0) const;
  double diagonal() const { return (hi - lo).norm(); }
};

/// Dimensions of the joint system: M actuated point end-effectors followed by
/// P passive keypoints, all living in the same 2D or 3D workspace.
struct SystemSpec {
  std::vector<int> agent_dims;
  int num_keypoints = 0;
  Box workspace;

  int num_agents() const { return static_cast<int>(agent_dims.size()); }
  /// Coordinate dimension shared by agents and keypoints.
  int dim() const { return agent_dims.empty() ? static_cast<int>(workspace.lo.size()) : agent_dims.front(); }
  int actuated_size() const { return num_agents() * dim(); }
  int total_size() const { return actuated_size() + num_keypoints * dim(); }

  int agent_offset(int j) const { return j * dim(); }
  int keypoint_offset(int p) const { return actuated_size() + p * dim(); }

  /// Throws Error when the invariants do not hold.
  void validate() const;
};

/// Joint configuration x = (actuated end-effectors, passive keypoints), stored
/// flat in agent-major then keypoint-major order. The same layout doubles as a
/// velocity (m/s).
class Configuration {
 public:
  Configuration() = default;
  Configuration(const SystemSpec& spec, VectorXd values);
  static Configuration zeros(const SystemSpec& spec);

  int dim() const { return dim_; }
  int num_agents() const { return num_agents_; }
  int num_keypoints() const { return num_keypoints_; }
  int size() const { return static_cast<int>(values_.size()); }

  const VectorXd& values() const { return values_; }
  VectorXd& values() { return values_; }

  auto agent(int j) const { return values_.segment(j * dim_, dim_); }
  auto agent(int j) { return values_.segment(j * dim_, dim_); }
  auto keypoint(int p) const { return values_.segment((num_agents_ + p) * dim_, dim_); }
  auto keypoint(int p) { return values_.segment((num_agents_ + p) * dim_, dim_); }
  auto actuated() const { return values_.head(num_agents_ * dim_); }
  auto actuated() { return values_.head(num_agents_ * dim_); }

  bool conforms(const SystemSpec& spec) const;
  bool finite() const { return values_.allFinite(); }

 private:
  int dim_ = 0;
  int num_agents_ = 0;
  int num_keypoints_ = 0;
  VectorXd values_;
};

using Velocity = Configuration;

/// K x M binary row-stochastic matrix, stored as the agent index of each
/// subtask so row-stochasticity holds by construction.
class AssignmentMatrix {
 public:
  AssignmentMatrix() = default;
  AssignmentMatrix(int num_agents, std::vector<int> agent_of_subtask);

  int num_subtasks() const { return static_cast<int>(agent_of_subtask_.size()); }
  int num_agents() const { return num_agents_; }
  int agent_of(int k) const { return agent_of_subtask_.at(k); }
  const std::vector<int>& agents() const { return agent_of_subtask_; }

  /// Entry A(k, j) in {0, 1}.
  int operator()(int k, int j) const { return agent_of_subtask_.at(k) == j ? 1 : 0; }
  MatrixXd dense() const;

  bool operator==(const AssignmentMatrix& other) const = default;
  /// Lexicographic over the per-subtask agent indices, subtask 0 most significant.
  bool lex_less(const AssignmentMatrix& other) const { return agent_of_subtask_ < other.agent_of_subtask_; }

 private:
  int num_agents_ = 0;
  std::vector<int> agent_of_subtask_;
};

}  // namespace gocmpc
