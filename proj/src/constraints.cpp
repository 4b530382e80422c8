#include "gocmpc/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gocmpc {
namespace {

int point_offset(const PointRef& ref, int dim, int num_agents, int assigned) {
  switch (ref.kind) {
    case PointRef::Kind::kAgent:
      return ref.id * dim;
    case PointRef::Kind::kKeypoint:
      return (num_agents + ref.id) * dim;
    case PointRef::Kind::kAssigned:
      return assigned * dim;
  }
  return 0;
}

// Raw (ungated) residual and optional Jacobian, with kAssigned resolved to
// `assigned`. `jac` has x.size() columns and raw_arity rows.
void eval_raw(const ConstraintFn& c, const Configuration& x, int assigned, Eigen::Ref<VectorXd> out,
              MatrixXd* jac) {
  const int dim = x.dim();
  const int m = x.num_agents();
  const VectorXd& v = x.values();
  auto pos = [&](const PointRef& r) { return v.segment(point_offset(r, dim, m, assigned), dim); };
  auto col = [&](const PointRef& r) { return point_offset(r, dim, m, assigned); };

  auto norm_rows = [&](int row, const PointRef& a, const PointRef& b, double sign) {
    const VectorXd diff = pos(a) - pos(b);
    const double n = diff.norm();
    if (jac && n > 0.0) {
      const VectorXd u = diff / n;
      jac->block(row, col(a), 1, dim) += sign * u.transpose();
      jac->block(row, col(b), 1, dim) -= sign * u.transpose();
    }
    return n;
  };

  switch (c.kind) {
    case ConstraintKind::kPointDistanceLE:
      out[0] = norm_rows(0, c.points[0], c.points[1], 1.0) - c.distance;
      break;
    case ConstraintKind::kPointDistanceGE:
      out[0] = c.distance - norm_rows(0, c.points[0], c.points[1], -1.0);
      break;
    case ConstraintKind::kAxisOffsetBetween: {
      const double r = pos(c.points[0])[c.axis] - pos(c.points[1])[c.axis];
      out[0] = r - c.hi;
      out[1] = c.lo - r;
      if (jac) {
        (*jac)(0, col(c.points[0]) + c.axis) += 1.0;
        (*jac)(0, col(c.points[1]) + c.axis) -= 1.0;
        (*jac)(1, col(c.points[0]) + c.axis) -= 1.0;
        (*jac)(1, col(c.points[1]) + c.axis) += 1.0;
      }
      break;
    }
    case ConstraintKind::kWithinBox: {
      const auto p = pos(c.points[0]);
      out.head(dim) = p - c.box_hi;
      out.tail(dim) = c.box_lo - p;
      if (jac) {
        const int c0 = col(c.points[0]);
        for (int i = 0; i < dim; ++i) {
          (*jac)(i, c0 + i) += 1.0;
          (*jac)(dim + i, c0 + i) -= 1.0;
        }
      }
      break;
    }
    case ConstraintKind::kGraspAt: {
      const VectorXd e = pos(c.points[0]) - pos(c.points[1]);
      out.head(dim) = e.array() - c.distance;
      out.tail(dim) = -e.array() - c.distance;
      if (jac) {
        const int ce = col(c.points[0]);
        const int cp = col(c.points[1]);
        for (int i = 0; i < dim; ++i) {
          (*jac)(i, ce + i) += 1.0;
          (*jac)(i, cp + i) -= 1.0;
          (*jac)(dim + i, ce + i) -= 1.0;
          (*jac)(dim + i, cp + i) += 1.0;
        }
      }
      break;
    }
    case ConstraintKind::kClearanceGE: {
      int row = 0;
      for (std::size_t i = 0; i < c.points.size(); ++i) {
        for (std::size_t j = i + 1; j < c.points.size(); ++j) {
          out[row] = c.distance - norm_rows(row, c.points[i], c.points[j], -1.0);
          ++row;
        }
      }
      break;
    }
  }
}

void eval_impl(const ConstraintFn& c, const AssignmentMatrix& a, const Configuration& x, double m_big,
               VectorXd* residual, MatrixXd* jac) {
  const int raw = c.raw_arity(x.dim());
  const int copies = c.is_gated() ? x.num_agents() : 1;
  if (residual) residual->resize(raw * copies);
  if (jac) jac->setZero(raw * copies, x.size());
  VectorXd scratch(raw);
  MatrixXd jscratch;
  for (int j = 0; j < copies; ++j) {
    if (jac) jscratch.setZero(raw, x.size());
    eval_raw(c, x, j, scratch, jac ? &jscratch : nullptr);
    if (c.is_gated()) scratch.array() -= m_big * (1.0 - a(*c.subtask, j));
    if (residual) residual->segment(j * raw, raw) = scratch;
    if (jac) jac->middleRows(j * raw, raw) = jscratch;
  }
}

}  // namespace

void eval_binding(const ConstraintFn& c, const AssignmentMatrix& a, const Configuration& x, VectorXd& residual,
                  MatrixXd* jac) {
  const int raw = c.raw_arity(x.dim());
  residual.resize(raw);
  if (jac) jac->setZero(raw, x.size());
  const int assigned = c.is_gated() ? a.agent_of(*c.subtask) : 0;
  eval_raw(c, x, assigned, residual, jac);
}

std::string to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::kPointDistanceLE:
      return "point_distance_le";
    case ConstraintKind::kPointDistanceGE:
      return "point_distance_ge";
    case ConstraintKind::kAxisOffsetBetween:
      return "axis_offset_between";
    case ConstraintKind::kWithinBox:
      return "within_box";
    case ConstraintKind::kGraspAt:
      return "grasp_at";
    case ConstraintKind::kClearanceGE:
      return "clearance_ge";
  }
  return "unknown";
}

std::optional<ConstraintKind> constraint_kind_from_string(const std::string& name) {
  for (auto k : {ConstraintKind::kPointDistanceLE, ConstraintKind::kPointDistanceGE,
                 ConstraintKind::kAxisOffsetBetween, ConstraintKind::kWithinBox, ConstraintKind::kGraspAt,
                 ConstraintKind::kClearanceGE}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

ConstraintFn ConstraintFn::point_distance_le(PointRef a, PointRef b, double d) {
  ConstraintFn c;
  c.kind = ConstraintKind::kPointDistanceLE;
  c.points = {a, b};
  c.distance = d;
  return c;
}

ConstraintFn ConstraintFn::point_distance_ge(PointRef a, PointRef b, double d) {
  ConstraintFn c = point_distance_le(a, b, d);
  c.kind = ConstraintKind::kPointDistanceGE;
  return c;
}

ConstraintFn ConstraintFn::axis_offset_between(PointRef a, PointRef b, int axis, double lo, double hi) {
  ConstraintFn c;
  c.kind = ConstraintKind::kAxisOffsetBetween;
  c.points = {a, b};
  c.axis = axis;
  c.lo = lo;
  c.hi = hi;
  return c;
}

ConstraintFn ConstraintFn::within_box(PointRef a, VectorXd lo, VectorXd hi) {
  ConstraintFn c;
  c.kind = ConstraintKind::kWithinBox;
  c.points = {a};
  c.box_lo = std::move(lo);
  c.box_hi = std::move(hi);
  return c;
}

ConstraintFn ConstraintFn::grasp_at_subtask(int subtask, int keypoint, double tol) {
  ConstraintFn c;
  c.kind = ConstraintKind::kGraspAt;
  c.points = {PointRef::assigned(), PointRef::keypoint(keypoint)};
  c.distance = tol;
  c.subtask = subtask;
  return c;
}

ConstraintFn ConstraintFn::grasp_at_agent(int agent, int keypoint, double tol) {
  ConstraintFn c;
  c.kind = ConstraintKind::kGraspAt;
  c.points = {PointRef::agent(agent), PointRef::keypoint(keypoint)};
  c.distance = tol;
  return c;
}

ConstraintFn ConstraintFn::clearance_ge(std::vector<PointRef> points, double d) {
  ConstraintFn c;
  c.kind = ConstraintKind::kClearanceGE;
  c.points = std::move(points);
  c.distance = d;
  return c;
}

int ConstraintFn::raw_arity(int dim) const {
  switch (kind) {
    case ConstraintKind::kPointDistanceLE:
    case ConstraintKind::kPointDistanceGE:
      return 1;
    case ConstraintKind::kAxisOffsetBetween:
      return 2;
    case ConstraintKind::kWithinBox:
    case ConstraintKind::kGraspAt:
      return 2 * dim;
    case ConstraintKind::kClearanceGE: {
      const int n = static_cast<int>(points.size());
      return n * (n - 1) / 2;
    }
  }
  return 0;
}

int ConstraintFn::arity(const SystemSpec& spec) const {
  return raw_arity(spec.dim()) * (is_gated() ? spec.num_agents() : 1);
}

std::vector<int> ConstraintFn::static_agents() const {
  std::vector<int> out = scope;
  for (const auto& p : points) {
    if (p.kind == PointRef::Kind::kAgent) out.push_back(p.id);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool ConstraintFn::relevant_to(int agent, const AssignmentMatrix& a) const {
  if (subtask && a(*subtask, agent) == 1) return true;
  const auto s = static_agents();
  return std::binary_search(s.begin(), s.end(), agent);
}

void ConstraintFn::validate(const SystemSpec& spec, int subtask_count) const {
  const std::string name = to_string(kind);
  std::size_t want = 0;
  switch (kind) {
    case ConstraintKind::kPointDistanceLE:
    case ConstraintKind::kPointDistanceGE:
    case ConstraintKind::kAxisOffsetBetween:
    case ConstraintKind::kGraspAt:
      want = 2;
      break;
    case ConstraintKind::kWithinBox:
      want = 1;
      break;
    case ConstraintKind::kClearanceGE:
      if (points.size() < 2) throw Error(name + ": needs at least two points");
      want = points.size();
      break;
  }
  if (points.size() != want) throw Error(name + ": wrong number of points");
  if (subtask && (*subtask < 0 || *subtask >= subtask_count)) {
    throw Error(name + ": subtask " + std::to_string(*subtask) + " does not exist");
  }
  for (const auto& p : points) {
    switch (p.kind) {
      case PointRef::Kind::kAgent:
        if (p.id < 0 || p.id >= spec.num_agents()) throw Error(name + ": agent " + std::to_string(p.id) + " does not exist");
        break;
      case PointRef::Kind::kKeypoint:
        if (p.id < 0 || p.id >= spec.num_keypoints) {
          throw Error(name + ": keypoint " + std::to_string(p.id) + " does not exist");
        }
        break;
      case PointRef::Kind::kAssigned:
        if (!subtask) throw Error(name + ": assigned-agent reference requires a gating subtask");
        break;
    }
  }
  for (int j : scope) {
    if (j < 0 || j >= spec.num_agents()) throw Error(name + ": scope agent " + std::to_string(j) + " does not exist");
  }
  if (kind == ConstraintKind::kAxisOffsetBetween) {
    if (axis < 0 || axis >= spec.dim()) throw Error(name + ": axis out of range");
    if (lo > hi) throw Error(name + ": lo > hi");
  }
  if (kind == ConstraintKind::kWithinBox) {
    if (box_lo.size() != spec.dim() || box_hi.size() != spec.dim()) throw Error(name + ": box dimension mismatch");
    if ((box_lo.array() > box_hi.array()).any()) throw Error(name + ": lo > hi");
  }
  if (kind == ConstraintKind::kGraspAt) {
    if (points[0].kind == PointRef::Kind::kKeypoint || points[1].kind != PointRef::Kind::kKeypoint) {
      throw Error(name + ": expects an end-effector and a keypoint");
    }
    if (distance < 0.0) throw Error(name + ": negative tolerance");
  }
}

bool ConstraintFn::operator==(const ConstraintFn& o) const {
  return kind == o.kind && points == o.points && distance == o.distance && axis == o.axis && lo == o.lo &&
         hi == o.hi && box_lo.size() == o.box_lo.size() && box_lo == o.box_lo && box_hi.size() == o.box_hi.size() &&
         box_hi == o.box_hi && scope == o.scope && subtask == o.subtask;
}

VectorXd eval(const ConstraintFn& c, const AssignmentMatrix& a, const Configuration& x, double m_big) {
  VectorXd r;
  eval_impl(c, a, x, m_big, &r, nullptr);
  return r;
}

MatrixXd eval_gradient(const ConstraintFn& c, const AssignmentMatrix& a, const Configuration& x, double m_big) {
  MatrixXd j;
  eval_impl(c, a, x, m_big, nullptr, &j);
  return j;
}

VectorXd eval_all(const ConstraintSet& set, const AssignmentMatrix& a, const Configuration& x, double m_big) {
  std::vector<VectorXd> parts;
  Eigen::Index n = 0;
  for (const auto& c : set) {
    parts.push_back(eval(c, a, x, m_big));
    n += parts.back().size();
  }
  VectorXd out(n);
  n = 0;
  for (const auto& p : parts) {
    out.segment(n, p.size()) = p;
    n += p.size();
  }
  return out;
}

double max_residual(const ConstraintSet& set, const AssignmentMatrix& a, const Configuration& x, double m_big) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& c : set) {
    const VectorXd r = eval(c, a, x, m_big);
    if (r.size() > 0) best = std::max(best, r.maxCoeff());
  }
  return best;
}

RigidCoupling RigidCoupling::all_fixed(int num_keypoints) {
  RigidCoupling rc;
  rc.keypoints.assign(num_keypoints, KeypointCoupling{});
  return rc;
}

RigidCoupling RigidCoupling::from_edge_constraints(const ConstraintSet& edge_constraints, int num_keypoints) {
  RigidCoupling rc = all_fixed(num_keypoints);
  for (const auto& c : edge_constraints) {
    if (c.kind != ConstraintKind::kGraspAt) continue;
    auto& kc = rc.keypoints.at(c.points[1].id);
    if (kc.mode == CouplingMode::kCarried) continue;
    kc.mode = CouplingMode::kCarried;
    if (c.subtask) {
      kc.subtask = *c.subtask;
    } else {
      kc.agent = c.points[0].id;
    }
  }
  return rc;
}

namespace {

int coupling_rows(const RigidCoupling& rc, int dim, int num_agents) {
  int rows = 0;
  for (const auto& kc : rc.keypoints) {
    if (kc.mode == CouplingMode::kFixed) rows += 2 * dim;
    if (kc.mode == CouplingMode::kCarried) rows += 2 * dim * (kc.subtask >= 0 ? num_agents : 1);
  }
  return rows;
}

}  // namespace

VectorXd rigid_transition_residual(const RigidCoupling& rc, const AssignmentMatrix& a, const Configuration& w_a,
                                   const Configuration& w_b, double m_big) {
  const int dim = w_a.dim();
  const int m = w_a.num_agents();
  VectorXd out(coupling_rows(rc, dim, m));
  int row = 0;
  for (int p = 0; p < static_cast<int>(rc.keypoints.size()); ++p) {
    const auto& kc = rc.keypoints[p];
    const VectorXd dp = w_b.keypoint(p) - w_a.keypoint(p);
    if (kc.mode == CouplingMode::kFixed) {
      out.segment(row, dim) = dp;
      out.segment(row + dim, dim) = -dp;
      row += 2 * dim;
    } else if (kc.mode == CouplingMode::kCarried) {
      const bool gated = kc.subtask >= 0;
      const int copies = gated ? m : 1;
      for (int c = 0; c < copies; ++c) {
        const int agent = gated ? c : kc.agent;
        const VectorXd e = dp - (w_b.agent(agent) - w_a.agent(agent));
        const double relax = gated ? m_big * (1.0 - a(kc.subtask, agent)) : 0.0;
        out.segment(row, dim) = e.array() - relax;
        out.segment(row + dim, dim) = -e.array() - relax;
        row += 2 * dim;
      }
    }
  }
  return out;
}

MatrixXd rigid_transition_jacobian(const RigidCoupling& rc, const AssignmentMatrix& /*a*/, const SystemSpec& spec) {
  const int dim = spec.dim();
  const int m = spec.num_agents();
  const int n = spec.total_size();
  MatrixXd jac = MatrixXd::Zero(coupling_rows(rc, dim, m), 2 * n);
  int row = 0;
  for (int p = 0; p < static_cast<int>(rc.keypoints.size()); ++p) {
    const auto& kc = rc.keypoints[p];
    const int kp = spec.keypoint_offset(p);
    if (kc.mode == CouplingMode::kFree) continue;
    const int copies = kc.mode == CouplingMode::kFixed ? 1 : (kc.subtask >= 0 ? m : 1);
    for (int c = 0; c < copies; ++c) {
      for (int i = 0; i < dim; ++i) {
        // +e then -e rows; e = (b.p - a.p) - (b.ee - a.ee)
        for (int s = 0; s < 2; ++s) {
          const double sign = s == 0 ? 1.0 : -1.0;
          const int r = row + s * dim + i;
          jac(r, n + kp + i) += sign;
          jac(r, kp + i) -= sign;
          if (kc.mode == CouplingMode::kCarried) {
            const int agent = kc.subtask >= 0 ? c : kc.agent;
            const int ka = spec.agent_offset(agent);
            jac(r, n + ka + i) -= sign;
            jac(r, ka + i) += sign;
          }
        }
      }
      row += 2 * dim;
    }
  }
  return jac;
}

}  // namespace gocmpc
