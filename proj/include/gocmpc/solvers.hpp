#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gocmpc/types.hpp"

namespace gocmpc {

enum class SolveStatus { kOptimal, kMaxIterations, kInfeasible };

std::string to_string(SolveStatus status);

/// One outer iteration of the augmented Lagrangian method.
struct OuterIterate {
  double violation = 0.0;
  double penalty = 0.0;  // weight used for this iteration's inner solve
  int inner_iterations = 0;
};

struct SolveReport {
  VectorXd x;
  /// QP: constraint multipliers y (positive at active upper bounds, negative
  /// at active lower bounds). NLP: inequality multipliers (>= 0).
  VectorXd multipliers;
  SolveStatus status = SolveStatus::kMaxIterations;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity = 0.0;
  double objective = 0.0;
  double penalty = 0.0;  // NLP only
  std::vector<OuterIterate> trace;  // NLP only

  bool optimal() const { return status == SolveStatus::kOptimal; }
};

/// minimize 1/2 x'Px + q'x  subject to  l <= Ax <= u  (bounds may be infinite).
class QpProblem {
 public:
  QpProblem(MatrixXd p, VectorXd q, MatrixXd a, VectorXd l, VectorXd u);

  const MatrixXd& p() const { return p_; }
  const VectorXd& q() const { return q_; }
  const MatrixXd& a() const { return a_; }
  const VectorXd& l() const { return l_; }
  const VectorXd& u() const { return u_; }
  int num_variables() const { return static_cast<int>(q_.size()); }
  int num_constraints() const { return static_cast<int>(l_.size()); }

  double objective(const VectorXd& x) const { return 0.5 * x.dot(p_ * x) + q_.dot(x); }

 private:
  MatrixXd p_;
  VectorXd q_;
  MatrixXd a_;
  VectorXd l_;
  VectorXd u_;
};

struct QpOptions {
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  double kkt_tol = 1e-6;  // stationarity, feasibility and complementarity for kOptimal
  int max_iterations = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  int scaling_iterations = 15;
  int polish_interval = 25;
};

/// KKT residuals of (x, y) for a QP: stationarity, primal infeasibility,
/// complementarity, in that order.
struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;

  double max() const;
};

KktResiduals qp_kkt_residuals(const QpProblem& p, const VectorXd& x, const VectorXd& y);

/// Operator-splitting (ADMM) QP solver with Ruiz equilibration and
/// active-set polishing. Deterministic for identical inputs.
SolveReport solve_qp(const QpProblem& problem, const std::optional<VectorXd>& warm_start = std::nullopt,
                     const QpOptions& opts = {});

/// minimize f(x) subject to g(x) <= 0 and lower <= x <= upper.
struct NlpProblem {
  int dimension = 0;
  /// Returns f(x) and writes its gradient.
  std::function<double(const VectorXd& x, VectorXd& grad)> objective;
  /// Optional objective Hessian; enables Gauss-Newton inner steps.
  std::function<MatrixXd(const VectorXd& x)> hessian;
  /// Writes residuals g(x) and, when `jac` is non-null, the Jacobian.
  std::function<void(const VectorXd& x, VectorXd& g, MatrixXd* jac)> constraints;
  int num_constraints = 0;
  VectorXd lower;
  VectorXd upper;
};

struct NlpOptions {
  double feas_tol = 1e-6;
  double opt_tol = 1e-5;
  double initial_penalty = 10.0;
  double max_penalty = 1e10;
  double penalty_growth = 10.0;
  double required_decrease = 0.25;
  int max_outer_iterations = 60;
  int max_inner_iterations = 300;
  int stagnation_window = 25;
  double stagnation_rel_change = 1e-10;
};

struct NlpWarmStart {
  VectorXd multipliers;
  double penalty = 0.0;
};

/// Augmented Lagrangian method with a bound-projected Newton/BFGS inner
/// solver. Local optimality only.
SolveReport solve_nlp(const NlpProblem& problem, const VectorXd& init, const NlpOptions& opts = {},
                      const std::optional<NlpWarmStart>& warm = std::nullopt);

}  // namespace gocmpc
