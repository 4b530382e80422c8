#pragma once

#include "gocmpc/goc.hpp"

namespace fixtures {

/// Six-node graph threaded by two agents' splines.
inline gocmpc::Goc six_node_graph() {
  return gocmpc::Goc::from_edges(6, {{0, 1}, {0, 2}, {1, 3}, {2, 4}, {3, 4}, {3, 5}, {4, 5}});
}

inline gocmpc::SystemSpec planar_spec(int agents, int keypoints, double half_width = 2.0) {
  gocmpc::SystemSpec s;
  s.agent_dims.assign(agents, 2);
  s.num_keypoints = keypoints;
  s.workspace.lo = Eigen::VectorXd::Constant(2, -half_width);
  s.workspace.hi = Eigen::VectorXd::Constant(2, half_width);
  return s;
}

}  // namespace fixtures
