#include <algorithm>
#include <cmath>
#include <limits>

#include "gocmpc/planner.hpp"

namespace gocmpc {

double AgentSpline::duration() const {
  double t = 0.0;
  for (double d : deltas) t += d;
  return t;
}

double AgentSpline::arrival(int index) const {
  double t = 0.0;
  for (int i = 0; i <= index && i < num_segments(); ++i) t += deltas[i];
  return t;
}

SplineSample eval_spline(const AgentSpline& s, double t) {
  if (s.waypoints.empty()) throw Error("eval_spline: spline has no waypoints");
  if (s.num_segments() == 0) return {s.waypoints.front(), VectorXd::Zero(s.waypoints.front().size())};
  if (t <= 0.0) return {s.waypoints.front(), s.velocities.front()};
  double start = 0.0;
  for (int i = 0; i < s.num_segments(); ++i) {
    const double h = s.deltas[i];
    if (t <= start + h) {
      const double u = (t - start) / h;
      const double u2 = u * u;
      const double u3 = u2 * u;
      const VectorXd& p0 = s.waypoints[i];
      const VectorXd& p1 = s.waypoints[i + 1];
      const VectorXd& v0 = s.velocities[i];
      const VectorXd& v1 = s.velocities[i + 1];
      SplineSample out;
      out.position = (2 * u3 - 3 * u2 + 1) * p0 + (u3 - 2 * u2 + u) * h * v0 + (-2 * u3 + 3 * u2) * p1 +
                     (u3 - u2) * h * v1;
      out.velocity = ((6 * u2 - 6 * u) * p0 + (3 * u2 - 4 * u + 1) * h * v0 + (-6 * u2 + 6 * u) * p1 +
                      (3 * u2 - 2 * u) * h * v1) /
                     h;
      return out;
    }
    start += h;
  }
  return {s.waypoints.back(), VectorXd::Zero(s.waypoints.back().size())};
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Sparse-by-row builder for l <= A z <= u.
struct RowBuilder {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> rows;
  std::vector<double> lo;
  std::vector<double> hi;

  void add(std::vector<std::pair<int, double>> coeffs, double l, double u) {
    rows.push_back(std::move(coeffs));
    lo.push_back(l);
    hi.push_back(u);
  }

  void dense(MatrixXd& a, VectorXd& l, VectorXd& u) const {
    a = MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), n);
    l.resize(static_cast<Eigen::Index>(rows.size()));
    u.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (const auto& [c, v] : rows[r]) a(static_cast<Eigen::Index>(r), c) += v;
      l[static_cast<Eigen::Index>(r)] = lo[r];
      u[static_cast<Eigen::Index>(r)] = hi[r];
    }
  }
};

// Affine expression over the QP variables: sum coeff * z + constant.
struct Affine {
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;
};

}  // namespace

TimingSolution solve_timing(const AgentPathPlan& plan, const WaypointSet& w, const Configuration& x0, const Velocity& v0,
                            const PlannerParams& params, const std::vector<std::vector<bool>>& rest) {
  const int m = x0.num_agents();
  const int dim = x0.dim();
  if (static_cast<int>(plan.chains.size()) != m) throw Error("solve_timing: chain count does not match agent count");

  // Per-agent waypoint lists and variable layout.
  struct AgentLayout {
    std::vector<VectorXd> points;  // start state then chain nodes
    int delta0 = 0;                // first delta variable
    int vel0 = 0;                  // first interior velocity variable
    int s_vel = 0;
    int s_acc = 0;
    int segments = 0;
  };
  std::vector<AgentLayout> lay(m);
  int n = 0;
  for (int j = 0; j < m; ++j) {
    auto& L = lay[j];
    L.points.push_back(x0.agent(j));
    for (int node : plan.chains[j]) {
      auto it = w.find(node);
      if (it == w.end()) throw Error("solve_timing: no waypoint for node " + std::to_string(node));
      L.points.push_back(it->second.agent(j));
    }
    L.segments = static_cast<int>(plan.chains[j].size());
    if (L.segments == 0) continue;
    L.delta0 = n;
    n += L.segments;
    L.vel0 = n;
    n += (L.segments - 1) * dim;
    L.s_vel = n++;
    L.s_acc = n++;
  }

  TimingSolution sol;
  sol.splines.resize(m);
  if (n == 0) {
    for (int j = 0; j < m; ++j) {
      sol.splines[j].waypoints = {x0.agent(j)};
      sol.splines[j].velocities = {VectorXd::Zero(dim)};
    }
    sol.report.status = SolveStatus::kOptimal;
    return sol;
  }

  // Velocity V_j(i), component d, as an affine expression.
  auto velocity = [&](int j, int i, int d) {
    Affine a;
    const auto& L = lay[j];
    if (i == 0) {
      a.constant = v0.agent(j)[d];
    } else if (i < L.segments) {
      a.terms.push_back({L.vel0 + (i - 1) * dim + d, 1.0});
    }
    return a;
  };
  auto combine = [](const Affine& x, double sx, const Affine& y, double sy) {
    Affine out;
    for (const auto& [c, v] : x.terms) out.terms.push_back({c, sx * v});
    for (const auto& [c, v] : y.terms) out.terms.push_back({c, sy * v});
    out.constant = sx * x.constant + sy * y.constant;
    return out;
  };

  MatrixXd p = MatrixXd::Zero(n, n);
  VectorXd q = VectorXd::Zero(n);
  RowBuilder rows;
  rows.n = n;
  auto add_square = [&](const Affine& a, double weight) {
    for (const auto& [ci, vi] : a.terms) {
      for (const auto& [cj, vj] : a.terms) p(ci, cj) += 2.0 * weight * vi * vj;
      q[ci] += 2.0 * weight * a.constant * vi;
    }
  };
  // Row: expr - k * var in [lo, hi] after moving constants to the bounds.
  auto add_row = [&](const Affine& a, std::vector<std::pair<int, double>> extra, double lo, double hi) {
    auto coeffs = a.terms;
    coeffs.insert(coeffs.end(), extra.begin(), extra.end());
    rows.add(std::move(coeffs), lo - a.constant, hi - a.constant);
  };

  constexpr double kLaterSlack = 1e-3;  // prefers waiting late in a chain
  constexpr double kPeakSpeed = 1.5;    // cubic rest-to-rest peak over mean speed
  for (int j = 0; j < m; ++j) {
    const auto& L = lay[j];
    if (L.segments == 0) continue;
    for (int i = 0; i < L.segments; ++i) {
      const int di = L.delta0 + i;
      q[di] += params.w_time * (1.0 + kLaterSlack * (L.segments - 1 - i));
      const double span = (L.points[i + 1] - L.points[i]).lpNorm<Eigen::Infinity>();
      rows.add({{di, 1.0}}, std::max(params.delta_min, kPeakSpeed * span / params.v_max), kInf);
    }
    q[L.s_vel] += params.w_vel_max;
    q[L.s_acc] += params.w_acc_max;
    rows.add({{L.s_vel, 1.0}}, 0.0, kInf);
    rows.add({{L.s_acc, 1.0}}, 0.0, kInf);
    for (int i = 1; i < L.segments; ++i) {
      const bool stop = j < static_cast<int>(rest.size()) && i - 1 < static_cast<int>(rest[j].size()) && rest[j][i - 1];
      for (int d = 0; d < dim; ++d) {
        const int vi = L.vel0 + (i - 1) * dim + d;
        if (stop) {
          rows.add({{vi, 1.0}}, 0.0, 0.0);
        } else {
          rows.add({{vi, 1.0}}, -params.v_max, params.v_max);
        }
      }
    }
    for (int i = 0; i <= L.segments; ++i) {
      for (int d = 0; d < dim; ++d) {
        const Affine v = velocity(j, i, d);
        add_row(v, {{L.s_vel, 1.0}}, 0.0, kInf);
        add_row(combine(v, -1.0, {}, 0.0), {{L.s_vel, 1.0}}, 0.0, kInf);
      }
    }
    for (int i = 0; i < L.segments; ++i) {
      const int di = L.delta0 + i;
      for (int d = 0; d < dim; ++d) {
        const Affine dv = combine(velocity(j, i + 1, d), 1.0, velocity(j, i, d), -1.0);
        add_square(dv, params.w_smooth);
        add_row(dv, {{di, -params.a_max}}, -kInf, 0.0);
        add_row(combine(dv, -1.0, {}, 0.0), {{di, -params.a_max}}, -kInf, 0.0);
        add_row(dv, {{L.s_acc, 1.0}}, 0.0, kInf);
        add_row(combine(dv, -1.0, {}, 0.0), {{L.s_acc, 1.0}}, 0.0, kInf);
        if (params.jerk_surrogate && i >= 1) {
          const Affine jerk = combine(dv, 1.0, combine(velocity(j, i, d), 1.0, velocity(j, i - 1, d), -1.0), -1.0);
          add_row(jerk, {{di, -params.j_max}}, -kInf, 0.0);
          add_row(combine(jerk, -1.0, {}, 0.0), {{di, -params.j_max}}, -kInf, 0.0);
        }
      }
    }
  }

  auto cumulative = [&](int agent, int index, double sign, std::vector<std::pair<int, double>>& out) {
    const auto& L = lay[agent];
    if (index < 0 || index >= L.segments) throw Error("solve_timing: timing tuple index out of range");
    for (int i = 0; i <= index; ++i) out.push_back({L.delta0 + i, sign});
  };
  for (const auto& t : plan.order_constraints) {
    std::vector<std::pair<int, double>> c;
    cumulative(t.agent_a, t.index_a, 1.0, c);
    cumulative(t.agent_b, t.index_b, -1.0, c);
    rows.add(std::move(c), -kInf, 0.0);
  }
  for (const auto& t : plan.sync_constraints) {
    std::vector<std::pair<int, double>> c;
    cumulative(t.agent_a, t.index_a, 1.0, c);
    cumulative(t.agent_b, t.index_b, -1.0, c);
    rows.add(std::move(c), 0.0, 0.0);
  }

  MatrixXd a;
  VectorXd l, u;
  rows.dense(a, l, u);
  p = 0.5 * (p + p.transpose());
  sol.report = solve_qp(QpProblem(p, q, a, l, u), std::nullopt, params.qp);
  if (sol.report.status == SolveStatus::kInfeasible) {
    throw TimingInfeasible("timing problem is infeasible (contradictory ordering or synchronization)");
  }
  const VectorXd& z = sol.report.x;

  for (int j = 0; j < m; ++j) {
    const auto& L = lay[j];
    auto& s = sol.splines[j];
    s.waypoints = L.points;
    if (L.segments == 0) {
      s.velocities = {VectorXd::Zero(dim)};
      continue;
    }
    s.velocities.push_back(v0.agent(j));
    for (int i = 1; i < L.segments; ++i) s.velocities.push_back(z.segment(L.vel0 + (i - 1) * dim, dim));
    s.velocities.push_back(VectorXd::Zero(dim));
    for (int i = 0; i < L.segments; ++i) s.deltas.push_back(z[L.delta0 + i]);
    sol.makespan = std::max(sol.makespan, s.duration());
  }
  return sol;
}

}  // namespace gocmpc
