#include <cmath>
#include <limits>

#include "gocmpc/planner.hpp"

namespace gocmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct HorizonQp {
  MatrixXd p;
  VectorXd q;
  std::vector<VectorXd> a_rows;
  std::vector<double> lo;
  std::vector<double> hi;
};

}  // namespace

HorizonPlan solve_horizon(const std::vector<AgentSpline>& reference, const Configuration& x,
                          const std::vector<Obstacle>& obstacles, const Box& workspace, const PlannerParams& params) {
  const int m = x.num_agents();
  const int dim = x.dim();
  const int na = m * dim;
  const int h = params.horizon;
  const int n = h * na;
  if (static_cast<int>(reference.size()) != m) throw Error("solve_horizon: one reference spline per agent required");

  std::vector<VectorXd> ref(h + 1, VectorXd(na));
  for (int t = 0; t <= h; ++t) {
    for (int j = 0; j < m; ++j) ref[t].segment(j * dim, dim) = eval_spline(reference[j], t * params.dt).position;
  }
  const VectorXd x_now = x.actuated();

  HorizonQp base;
  base.p = 2.0 * params.w_track * MatrixXd::Identity(n, n);
  base.q = VectorXd(n);
  for (int t = 1; t <= h; ++t) base.q.segment((t - 1) * na, na) = -2.0 * params.w_track * ref[t];
  const double step = params.v_max * params.dt;
  for (int t = 1; t <= h; ++t) {
    for (int c = 0; c < na; ++c) {
      VectorXd row = VectorXd::Zero(n);
      row[(t - 1) * na + c] = 1.0;
      const int axis = c % dim;
      base.a_rows.push_back(row);
      base.lo.push_back(workspace.lo[axis]);
      base.hi.push_back(workspace.hi[axis]);
      if (t == 1) {
        base.a_rows.push_back(row);
        base.lo.push_back(x_now[c] - step);
        base.hi.push_back(x_now[c] + step);
      } else {
        row[(t - 2) * na + c] = -1.0;
        base.a_rows.push_back(row);
        base.lo.push_back(-step);
        base.hi.push_back(step);
      }
    }
  }

  HorizonQp full = base;
  int half_spaces = 0;
  for (int t = 1; t <= h; ++t) {
    for (int j = 0; j < m; ++j) {
      const VectorXd r = ref[t].segment(j * dim, dim);
      for (const auto& o : obstacles) {
        const VectorXd diff = r - o.center;
        const double d_ref = diff.norm();
        if (d_ref - o.radius >= params.activation_radius || d_ref < 1e-12) continue;
        const VectorXd normal = diff / d_ref;
        VectorXd row = VectorXd::Zero(n);
        row.segment((t - 1) * na + j * dim, dim) = normal;
        full.a_rows.push_back(row);
        full.lo.push_back(o.radius + normal.dot(o.center));
        full.hi.push_back(kInf);
        ++half_spaces;
      }
    }
  }

  auto solve = [&](const HorizonQp& qp) {
    MatrixXd a(static_cast<Eigen::Index>(qp.a_rows.size()), n);
    VectorXd l(a.rows()), u(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      a.row(i) = qp.a_rows[i].transpose();
      l[i] = qp.lo[i];
      u[i] = qp.hi[i];
    }
    return solve_qp(QpProblem(qp.p, qp.q, a, l, u), std::nullopt, params.qp);
  };

  HorizonPlan plan;
  plan.dt = params.dt;
  SolveReport rep = solve(full);
  if (!rep.optimal() && half_spaces > 0) {
    rep = solve(base);
    plan.fallback = true;
  }
  plan.status = rep.status;
  plan.steps.push_back(x_now);
  if (rep.x.size() != n || !rep.x.allFinite()) {
    for (int t = 1; t <= h; ++t) plan.steps.push_back(x_now);
    plan.status = SolveStatus::kInfeasible;
    return plan;
  }
  for (int t = 1; t <= h; ++t) {
    plan.steps.push_back(rep.x.segment((t - 1) * na, na));
    plan.tracking_cost += (plan.steps.back() - ref[t]).squaredNorm();
  }
  return plan;
}

}  // namespace gocmpc
