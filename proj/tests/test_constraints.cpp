#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "gocmpc/constraints.hpp"
#include "oracles.hpp"

using namespace gocmpc;

namespace {

SystemSpec spatial_spec(int agents, int keypoints) {
  SystemSpec s;
  s.agent_dims.assign(agents, 3);
  s.num_keypoints = keypoints;
  s.workspace.lo = VectorXd::Constant(3, -1.0);
  s.workspace.hi = VectorXd::Constant(3, 1.0);
  return s;
}

std::vector<ConstraintFn> catalog() {
  std::vector<ConstraintFn> c;
  c.push_back(ConstraintFn::point_distance_le(PointRef::agent(0), PointRef::keypoint(1), 0.2));
  c.push_back(ConstraintFn::point_distance_ge(PointRef::keypoint(0), PointRef::keypoint(1), 0.3));
  c.push_back(ConstraintFn::axis_offset_between(PointRef::keypoint(0), PointRef::keypoint(1), 2, 0.05, 0.1));
  c.push_back(ConstraintFn::within_box(PointRef::agent(1), VectorXd::Constant(3, -0.5), VectorXd::Constant(3, 0.5)));
  c.push_back(ConstraintFn::grasp_at_subtask(0, 1, 0.01));
  c.push_back(ConstraintFn::grasp_at_agent(1, 0, 0.0));
  c.push_back(ConstraintFn::clearance_ge({PointRef::agent(0), PointRef::agent(1), PointRef::keypoint(0)}, 0.15));
  c.push_back(ConstraintFn::point_distance_le(PointRef::assigned(), PointRef::keypoint(0), 0.1).gated_by(1));
  c.push_back(ConstraintFn::within_box(PointRef::keypoint(1), VectorXd::Constant(3, -0.2), VectorXd::Constant(3, 0.2))
                  .gated_by(0));
  return c;
}

}  // namespace

TEST_CASE("point distance boundary") {
  const auto spec = fixtures::planar_spec(1, 1);
  auto x = Configuration::zeros(spec);
  x.keypoint(0) << 0.1, 0.0;
  const auto c = ConstraintFn::point_distance_le(PointRef::agent(0), PointRef::keypoint(0), 0.1);
  CHECK(std::abs(eval(c, AssignmentMatrix(1, {}), x, 1e4)[0]) < 1e-15);
  const MatrixXd j = eval_gradient(c, AssignmentMatrix(1, {}), x, 1e4);
  CHECK(j(0, 0) == doctest::Approx(-1.0));
  CHECK(j(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("big-M gating opens and closes a branch") {
  const auto spec = fixtures::planar_spec(2, 3);
  auto x = Configuration::zeros(spec);
  x.keypoint(2) << 0.51, 0.0;  // raw residual 0.5 against tolerance 0.01
  const auto c = ConstraintFn::grasp_at_subtask(0, 2, 0.01);
  const double m_big = 1e4;
  // Rows of agent 1's copy come after agent 0's copy.
  const int raw = c.raw_arity(2);
  const VectorXd open = eval(c, AssignmentMatrix(2, {0}), x, m_big).segment(raw, raw);
  const VectorXd closed = eval(c, AssignmentMatrix(2, {1}), x, m_big).segment(raw, raw);
  CHECK(closed.maxCoeff() == doctest::Approx(0.5));
  CHECK(open.maxCoeff() == doctest::Approx(0.5 - m_big));
  CHECK(((closed - open).array() == m_big).all());
}

TEST_CASE("gated residual depends only on its own gate entry") {
  const auto spec = spatial_spec(3, 2);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  Configuration x(spec, VectorXd::NullaryExpr(spec.total_size(), [&] { return u(rng); }));
  const auto c = ConstraintFn::grasp_at_subtask(1, 0, 0.0);
  const VectorXd a = eval(c, AssignmentMatrix(3, {0, 2}), x, 1e4);
  const VectorXd b = eval(c, AssignmentMatrix(3, {1, 2}), x, 1e4);
  const VectorXd d = eval(c, AssignmentMatrix(3, {2, 0}), x, 1e4);
  CHECK(a == b);
  CHECK(a != d);
}

TEST_CASE("box and distance gradients") {
  const auto spec = fixtures::planar_spec(1, 0);
  auto x = Configuration::zeros(spec);
  const auto c = ConstraintFn::within_box(PointRef::agent(0), VectorXd::Constant(2, -1), VectorXd::Constant(2, 1));
  const MatrixXd j = eval_gradient(c, AssignmentMatrix(1, {}), x, 1e4);
  MatrixXd expected(4, 2);
  expected << 1, 0, 0, 1, -1, 0, 0, -1;
  CHECK(j == expected);
}

TEST_CASE("analytic jacobians match central differences") {
  const auto spec = spatial_spec(2, 2);
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  const AssignmentMatrix a(2, {1, 0});
  for (const auto& c : catalog()) {
    for (int trial = 0; trial < 100; ++trial) {
      const VectorXd v = VectorXd::NullaryExpr(spec.total_size(), [&] { return u(rng); });
      const Configuration x(spec, v);
      auto f = [&](const VectorXd& y) { return eval(c, a, Configuration(spec, y), 1e4); };
      const MatrixXd fd = oracle::finite_difference_jacobian(f, v);
      const MatrixXd an = eval_gradient(c, a, x, 1e4);
      REQUIRE(an.rows() == c.arity(spec));
      const double err = (fd - an).lpNorm<Eigen::Infinity>() / std::max(1.0, an.lpNorm<Eigen::Infinity>());
      CAPTURE(to_string(c.kind));
      CHECK(err <= 1e-5);
    }
  }
}

TEST_CASE("rigid transition residuals") {
  const auto spec = spatial_spec(1, 1);
  auto wa = Configuration::zeros(spec);
  auto wb = Configuration::zeros(spec);
  wa.keypoint(0) << 1, 2, 3;
  wb.keypoint(0) << 1, 2, 3;
  const AssignmentMatrix a(1, {0});
  const auto fixed = RigidCoupling::all_fixed(1);
  const VectorXd r_fixed = rigid_transition_residual(fixed, a, wa, wb, 1e4);
  CHECK(r_fixed.size() == 6);
  CHECK(r_fixed.cwiseAbs().maxCoeff() == 0.0);

  const auto carried = RigidCoupling::from_edge_constraints({ConstraintFn::grasp_at_subtask(0, 0, 0.0)}, 1);
  CHECK(carried.keypoints[0].mode == CouplingMode::kCarried);
  wb.agent(0) << 0.5, 0, 0;
  wb.keypoint(0) << 1.5, 2, 3;
  CHECK(rigid_transition_residual(carried, a, wa, wb, 1e4).cwiseAbs().maxCoeff() == 0.0);
  wb.keypoint(0) << 1, 2, 3;
  CHECK(rigid_transition_residual(carried, a, wa, wb, 1e4).maxCoeff() == doctest::Approx(0.5));

  RigidCoupling free_kp = fixed;
  free_kp.keypoints[0].mode = CouplingMode::kFree;
  CHECK(rigid_transition_residual(free_kp, a, wa, wb, 1e4).size() == 0);
}

TEST_CASE("rigid transition jacobian matches differences") {
  const auto spec = spatial_spec(2, 2);
  RigidCoupling rc;
  rc.keypoints = {{CouplingMode::kFixed}, {CouplingMode::kCarried, 0, -1}};
  const AssignmentMatrix a(2, {1});
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  const int n = spec.total_size();
  const VectorXd v = VectorXd::NullaryExpr(2 * n, [&] { return u(rng); });
  auto f = [&](const VectorXd& y) {
    return rigid_transition_residual(rc, a, Configuration(spec, y.head(n)), Configuration(spec, y.tail(n)), 1e4);
  };
  CHECK((oracle::finite_difference_jacobian(f, v) - rigid_transition_jacobian(rc, a, spec)).lpNorm<Eigen::Infinity>() <
        1e-6);
}
