#include "gocmpc/types.hpp"

#include <cmath>

namespace gocmpc {

bool Box::contains(const Eigen::Ref<const VectorXd>& p, double tol) const {
  if (p.size() != lo.size()) return false;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] < lo[i] - tol || p[i] > hi[i] + tol) return false;
  }
  return true;
}

void SystemSpec::validate() const {
  if (agent_dims.empty()) throw Error("system: at least one agent is required");
  const int d = agent_dims.front();
  for (int ad : agent_dims) {
    if (ad != d) throw Error("system: agent dimensions must all be equal");
    if (ad != 2 && ad != 3) throw Error("system: agent dimension must be 2 or 3");
  }
  if (num_keypoints < 0) throw Error("system: negative keypoint count");
  if (workspace.lo.size() != d || workspace.hi.size() != d) {
    throw Error("system: workspace box dimension does not match agent dimension");
  }
  for (int i = 0; i < d; ++i) {
    if (!(workspace.lo[i] < workspace.hi[i])) throw Error("system: workspace box must have lo < hi on every axis");
  }
}

Configuration::Configuration(const SystemSpec& spec, VectorXd values)
    : dim_(spec.dim()),
      num_agents_(spec.num_agents()),
      num_keypoints_(spec.num_keypoints),
      values_(std::move(values)) {
  if (values_.size() != spec.total_size()) {
    throw Error("configuration length " + std::to_string(values_.size()) + " does not match system size " +
                std::to_string(spec.total_size()));
  }
}

Configuration Configuration::zeros(const SystemSpec& spec) {
  return Configuration(spec, VectorXd::Zero(spec.total_size()));
}

bool Configuration::conforms(const SystemSpec& spec) const {
  return dim_ == spec.dim() && num_agents_ == spec.num_agents() && num_keypoints_ == spec.num_keypoints &&
         values_.size() == spec.total_size();
}

AssignmentMatrix::AssignmentMatrix(int num_agents, std::vector<int> agent_of_subtask)
    : num_agents_(num_agents), agent_of_subtask_(std::move(agent_of_subtask)) {
  if (num_agents_ < 1) throw Error("assignment: at least one agent is required");
  for (int j : agent_of_subtask_) {
    if (j < 0 || j >= num_agents_) throw Error("assignment: agent index out of range");
  }
}

MatrixXd AssignmentMatrix::dense() const {
  MatrixXd a = MatrixXd::Zero(num_subtasks(), num_agents_);
  for (int k = 0; k < num_subtasks(); ++k) a(k, agent_of_subtask_[k]) = 1.0;
  return a;
}

}  // namespace gocmpc
