#include <algorithm>
#include <cmath>
#include <limits>

#include "gocmpc/solvers.hpp"

namespace gocmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class AugmentedLagrangian {
 public:
  AugmentedLagrangian(const NlpProblem& p, const VectorXd& lower, const VectorXd& upper)
      : p_(p), lower_(lower), upper_(upper) {}

  VectorXd lambda;
  double rho = 10.0;

  /// Value of the augmented Lagrangian; fills gradient and constraint data.
  double value(const VectorXd& x, VectorXd& grad, VectorXd& g, MatrixXd* jac) const {
    VectorXd gf(x.size());
    const double f = p_.objective(x, gf);
    MatrixXd local;
    MatrixXd* j = jac ? jac : &local;
    p_.constraints(x, g, j);
    const VectorXd shifted = (lambda + rho * g).cwiseMax(0.0);
    grad = gf;
    if (g.size()) grad.noalias() += j->transpose() * shifted;
    return f + (shifted.squaredNorm() - lambda.squaredNorm()) / (2.0 * rho);
  }

  VectorXd project(const VectorXd& x) const { return x.cwiseMax(lower_).cwiseMin(upper_); }

  double projected_gradient_norm(const VectorXd& x, const VectorXd& grad) const {
    return (project(x - grad) - x).lpNorm<Eigen::Infinity>();
  }

  /// Bound-projected Newton (when a Hessian is available) or BFGS descent on
  /// the augmented Lagrangian. Returns the number of iterations taken.
  int minimize(VectorXd& x, double tol, int max_iterations, double& pg_out) const {
    const int n = static_cast<int>(x.size());
    VectorXd grad(n), g;
    MatrixXd jac;
    double val = value(x, grad, g, &jac);
    MatrixXd bfgs = MatrixXd::Identity(n, n);
    bool bfgs_scaled = false;
    int it = 0;
    for (; it < max_iterations; ++it) {
      const double pg = projected_gradient_norm(x, grad);
      pg_out = pg;
      if (pg <= tol) break;

      std::vector<int> free_idx;
      for (int i = 0; i < n; ++i) {
        const bool at_lo = x[i] <= lower_[i] + 1e-12 && grad[i] > 0;
        const bool at_hi = x[i] >= upper_[i] - 1e-12 && grad[i] < 0;
        if (!at_lo && !at_hi) free_idx.push_back(i);
      }
      const int nf = static_cast<int>(free_idx.size());
      MatrixXd h;
      if (p_.hessian) {
        h = p_.hessian(x);
        if (g.size()) {
          std::vector<int> active;
          for (Eigen::Index r = 0; r < g.size(); ++r) {
            if (lambda[r] + rho * g[r] > 0) active.push_back(static_cast<int>(r));
          }
          if (!active.empty()) {
            MatrixXd ja(active.size(), n);
            for (std::size_t r = 0; r < active.size(); ++r) ja.row(r) = jac.row(active[r]);
            h.noalias() += rho * ja.transpose() * ja;
          }
        }
      } else {
        h = bfgs;
      }
      VectorXd d = VectorXd::Zero(n);
      if (nf > 0) {
        MatrixXd hf(nf, nf);
        VectorXd gfree(nf);
        for (int a = 0; a < nf; ++a) {
          gfree[a] = grad[free_idx[a]];
          for (int b = 0; b < nf; ++b) hf(a, b) = h(free_idx[a], free_idx[b]);
        }
        double mu = 0.0;
        const double base = std::max(1e-12, hf.diagonal().cwiseAbs().maxCoeff());
        VectorXd df;
        for (int attempt = 0; attempt < 12; ++attempt) {
          MatrixXd hr = hf;
          if (mu > 0) hr.diagonal().array() += mu;
          Eigen::LLT<MatrixXd> llt(hr);
          if (llt.info() == Eigen::Success) {
            df = -llt.solve(gfree);
            if (df.allFinite() && df.dot(gfree) < 0) break;
          }
          mu = mu == 0.0 ? 1e-10 * base : mu * 100.0;
          df.resize(0);
        }
        if (df.size() == 0) df = -gfree;
        for (int a = 0; a < nf; ++a) d[free_idx[a]] = df[a];
      }
      if (grad.dot(d) >= 0) d = -grad;

      // Projected backtracking line search.
      double step = 1.0;
      VectorXd x_new, grad_new(n), g_new;
      MatrixXd jac_new;
      double val_new = val;
      bool accepted = false;
      for (int ls = 0; ls < 50; ++ls) {
        x_new = project(x + step * d);
        val_new = value(x_new, grad_new, g_new, &jac_new);
        if (std::isfinite(val_new) && val_new <= val + 1e-4 * grad.dot(x_new - x)) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        // Fall back to a projected steepest-descent step.
        step = 1.0 / std::max(1.0, grad.lpNorm<Eigen::Infinity>());
        for (int ls = 0; ls < 60; ++ls) {
          x_new = project(x - step * grad);
          val_new = value(x_new, grad_new, g_new, &jac_new);
          if (std::isfinite(val_new) && val_new <= val + 1e-4 * grad.dot(x_new - x)) {
            accepted = true;
            break;
          }
          step *= 0.5;
        }
        bfgs.setIdentity();
        bfgs_scaled = false;
      }
      if (!accepted) break;

      if (!p_.hessian) {
        const VectorXd s = x_new - x;
        const VectorXd y = grad_new - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
          if (!bfgs_scaled) {
            bfgs = MatrixXd::Identity(n, n) * (y.squaredNorm() / sy);
            bfgs_scaled = true;
          }
          const VectorXd bs = bfgs * s;
          bfgs += (y * y.transpose()) / sy - (bs * bs.transpose()) / s.dot(bs);
        }
      }
      x = x_new;
      grad = grad_new;
      g = g_new;
      jac = jac_new;
      val = val_new;
    }
    pg_out = projected_gradient_norm(x, grad);
    return it;
  }

 private:
  const NlpProblem& p_;
  VectorXd lower_;
  VectorXd upper_;
};

double violation(const VectorXd& g) { return g.size() ? std::max(0.0, g.maxCoeff()) : 0.0; }

}  // namespace

SolveReport solve_nlp(const NlpProblem& problem, const VectorXd& init, const NlpOptions& opts,
                      const std::optional<NlpWarmStart>& warm) {
  const int n = problem.dimension;
  if (init.size() != n) throw Error("nlp: initial point has wrong dimension");
  const VectorXd lower = problem.lower.size() == n ? problem.lower : VectorXd::Constant(n, -kInf);
  const VectorXd upper = problem.upper.size() == n ? problem.upper : VectorXd::Constant(n, kInf);
  const int mc = problem.num_constraints;

  AugmentedLagrangian al(problem, lower, upper);
  al.lambda = VectorXd::Zero(mc);
  al.rho = opts.initial_penalty;
  if (warm) {
    if (warm->multipliers.size() == mc) al.lambda = warm->multipliers.cwiseMax(0.0);
    if (warm->penalty > 0) al.rho = warm->penalty;
  }

  SolveReport report;
  VectorXd x = al.project(init);

  auto finish = [&](SolveStatus status) {
    VectorXd gf(n), g;
    report.x = x;
    report.objective = problem.objective(x, gf);
    problem.constraints(x, g, nullptr);
    report.primal_residual = violation(g);
    report.multipliers = al.lambda;
    report.penalty = al.rho;
    report.status = status;
    double comp = 0.0;
    for (Eigen::Index i = 0; i < g.size(); ++i) comp = std::max(comp, al.lambda[i] * std::abs(g[i]));
    report.complementarity = comp;
    return report;
  };

  // A warm start that already satisfies the KKT conditions terminates at once.
  if (warm && warm->multipliers.size() == mc) {
    VectorXd gf(n), g;
    MatrixXd jac;
    problem.objective(x, gf);
    problem.constraints(x, g, &jac);
    VectorXd lag = gf;
    if (mc) lag.noalias() += jac.transpose() * al.lambda;
    const double stat = al.projected_gradient_norm(x, lag);
    double comp = 0.0;
    for (int i = 0; i < mc; ++i) comp = std::max(comp, al.lambda[i] * std::abs(g[i]));
    if (violation(g) <= opts.feas_tol && stat <= opts.opt_tol && comp <= opts.opt_tol) {
      report.iterations = 1;
      report.dual_residual = stat;
      report.trace.push_back({violation(g), al.rho, 0});
      return finish(SolveStatus::kOptimal);
    }
  }

  double prev_viol = kInf;
  std::vector<double> history;
  for (int outer = 1; outer <= opts.max_outer_iterations; ++outer) {
    double pg = kInf;
    const double rho_used = al.rho;
    const int inner = al.minimize(x, 0.5 * opts.opt_tol, opts.max_inner_iterations, pg);
    VectorXd g;
    problem.constraints(x, g, nullptr);
    const double viol = violation(g);
    report.iterations = outer;
    report.dual_residual = pg;
    report.trace.push_back({viol, rho_used, inner});
    history.push_back(viol);

    al.lambda = (al.lambda + al.rho * g).cwiseMax(0.0);
    if (viol <= opts.feas_tol && pg <= opts.opt_tol) return finish(SolveStatus::kOptimal);

    if (outer > 1 && viol > opts.required_decrease * prev_viol) {
      al.rho = std::min(al.rho * opts.penalty_growth, opts.max_penalty);
    }
    prev_viol = viol;

    // Infeasibility: penalty saturated while violation stagnates.
    const int w = opts.stagnation_window;
    if (rho_used >= opts.max_penalty && viol > opts.feas_tol && static_cast<int>(history.size()) > w) {
      const double old = history[history.size() - 1 - w];
      if (std::abs(old - viol) <= opts.stagnation_rel_change * std::max(1.0, old)) {
        return finish(SolveStatus::kInfeasible);
      }
    }
    if (rho_used >= opts.max_penalty && viol > opts.feas_tol && history.size() >= 2 &&
        viol >= 0.999 * history[history.size() - 2]) {
      return finish(SolveStatus::kInfeasible);
    }
  }
  return finish(SolveStatus::kMaxIterations);
}

}  // namespace gocmpc
