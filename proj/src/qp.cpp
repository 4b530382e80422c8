#include <algorithm>
#include <cmath>
#include <limits>

#include "gocmpc/solvers.hpp"

namespace gocmpc {
namespace {

constexpr double kInfBound = 1e19;

bool is_inf(double b) { return std::abs(b) >= kInfBound || std::isinf(b); }

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

VectorXd clip(const VectorXd& v, const VectorXd& l, const VectorXd& u) { return v.cwiseMax(l).cwiseMin(u); }

struct Scaling {
  VectorXd d;  // variable scaling
  VectorXd e;  // constraint scaling
  double c = 1.0;  // cost scaling
};

// Ruiz equilibration of the KKT matrix [P A'; A 0] followed by cost scaling.
Scaling equilibrate(MatrixXd& p, VectorXd& q, MatrixXd& a, int iterations) {
  const auto n = p.rows();
  const auto m = a.rows();
  Scaling s{VectorXd::Ones(n), VectorXd::Ones(m), 1.0};
  auto limit = [](double v) {
    if (v < 1e-4) return 1.0;
    return std::clamp(v, 1e-4, 1e4);
  };
  for (int it = 0; it < iterations; ++it) {
    VectorXd dx(n), dz(m);
    for (Eigen::Index j = 0; j < n; ++j) {
      double norm = p.col(j).lpNorm<Eigen::Infinity>();
      if (m) norm = std::max(norm, a.col(j).lpNorm<Eigen::Infinity>());
      dx[j] = 1.0 / std::sqrt(limit(norm));
    }
    for (Eigen::Index i = 0; i < m; ++i) dz[i] = 1.0 / std::sqrt(limit(a.row(i).lpNorm<Eigen::Infinity>()));
    p = dx.asDiagonal() * p * dx.asDiagonal();
    q = dx.asDiagonal() * q;
    if (m) a = dz.asDiagonal() * a * dx.asDiagonal();
    s.d.array() *= dx.array();
    s.e.array() *= dz.array();

    double mean_col = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) mean_col += p.col(j).lpNorm<Eigen::Infinity>();
    mean_col = n ? mean_col / static_cast<double>(n) : 0.0;
    const double gamma = limit(std::max(mean_col, inf_norm(q)));
    const double ci = 1.0 / gamma;
    p *= ci;
    q *= ci;
    s.c *= ci;
  }
  return s;
}

// Solves the equality-constrained KKT system for the guessed active set and
// returns a candidate primal/dual pair.
bool polish(const QpProblem& prob, const VectorXd& z, const VectorXd& y, VectorXd& x_out, VectorXd& y_out) {
  const int n = prob.num_variables();
  const int m = prob.num_constraints();
  std::vector<int> act;
  std::vector<double> rhs_b;
  for (int i = 0; i < m; ++i) {
    const double l = prob.l()[i];
    const double u = prob.u()[i];
    const bool lo_active = !is_inf(l) && (z[i] - l < -y[i]);
    const bool hi_active = !is_inf(u) && (u - z[i] < y[i]);
    const bool equality = !is_inf(l) && !is_inf(u) && u - l < 1e-10;
    if (equality) {
      act.push_back(i);
      rhs_b.push_back(u);
    } else if (lo_active) {
      act.push_back(i);
      rhs_b.push_back(l);
    } else if (hi_active) {
      act.push_back(i);
      rhs_b.push_back(u);
    }
  }
  const int k = static_cast<int>(act.size());
  MatrixXd k0 = MatrixXd::Zero(n + k, n + k);
  k0.topLeftCorner(n, n) = prob.p();
  for (int r = 0; r < k; ++r) {
    k0.block(n + r, 0, 1, n) = prob.a().row(act[r]);
    k0.block(0, n + r, n, 1) = prob.a().row(act[r]).transpose();
  }
  VectorXd rhs(n + k);
  rhs.head(n) = -prob.q();
  for (int r = 0; r < k; ++r) rhs[n + r] = rhs_b[r];

  const double delta = 1e-9;
  MatrixXd kd = k0;
  kd.topLeftCorner(n, n).diagonal().array() += delta;
  kd.bottomRightCorner(k, k).diagonal().array() -= delta;
  Eigen::PartialPivLU<MatrixXd> lu(kd);
  VectorXd sol = lu.solve(rhs);
  for (int it = 0; it < 12; ++it) {
    const VectorXd res = rhs - k0 * sol;
    if (!res.allFinite()) return false;
    if (inf_norm(res) < 1e-14 * (1.0 + inf_norm(rhs))) break;
    sol += lu.solve(res);
  }
  if (!sol.allFinite()) return false;
  x_out = sol.head(n);
  y_out = VectorXd::Zero(m);
  for (int r = 0; r < k; ++r) y_out[act[r]] = sol[n + r];
  return true;
}

}  // namespace

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal:
      return "optimal";
    case SolveStatus::kMaxIterations:
      return "max-iterations";
    case SolveStatus::kInfeasible:
      return "infeasible";
  }
  return "unknown";
}

QpProblem::QpProblem(MatrixXd p, VectorXd q, MatrixXd a, VectorXd l, VectorXd u)
    : p_(std::move(p)), q_(std::move(q)), a_(std::move(a)), l_(std::move(l)), u_(std::move(u)) {
  const auto n = q_.size();
  if (p_.rows() != n || p_.cols() != n) throw Error("qp: cost matrix must be n x n");
  if (a_.cols() != n && !(a_.rows() == 0)) throw Error("qp: constraint matrix must have n columns");
  if (a_.rows() == 0) a_.resize(0, n);
  if (l_.size() != a_.rows() || u_.size() != a_.rows()) throw Error("qp: bound vectors must have m entries");
  const double scale = std::max(1.0, p_.lpNorm<Eigen::Infinity>());
  if ((p_ - p_.transpose()).lpNorm<Eigen::Infinity>() > 1e-10 * scale) throw Error("qp: cost matrix is not symmetric");
  p_ = 0.5 * (p_ + p_.transpose());
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(p_, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-8 * scale) throw Error("qp: cost matrix is not positive semidefinite");
  }
  for (Eigen::Index i = 0; i < l_.size(); ++i) {
    if (l_[i] > u_[i]) throw Error("qp: lower bound exceeds upper bound in row " + std::to_string(i));
  }
  if (!q_.allFinite()) throw Error("qp: linear cost must be finite");
}

double KktResiduals::max() const { return std::max({stationarity, primal, complementarity}); }

KktResiduals qp_kkt_residuals(const QpProblem& p, const VectorXd& x, const VectorXd& y) {
  KktResiduals r;
  const VectorXd ax = p.a() * x;
  r.stationarity = inf_norm(p.p() * x + p.q() + p.a().transpose() * y);
  for (Eigen::Index i = 0; i < ax.size(); ++i) {
    const double l = p.l()[i];
    const double u = p.u()[i];
    double viol = 0.0;
    if (!is_inf(l)) viol = std::max(viol, l - ax[i]);
    if (!is_inf(u)) viol = std::max(viol, ax[i] - u);
    r.primal = std::max(r.primal, viol);
    double comp = 0.0;
    if (y[i] > 0) comp = is_inf(u) ? y[i] : y[i] * std::abs(u - ax[i]);
    if (y[i] < 0) comp = is_inf(l) ? -y[i] : -y[i] * std::abs(ax[i] - l);
    r.complementarity = std::max(r.complementarity, comp);
  }
  return r;
}

SolveReport solve_qp(const QpProblem& problem, const std::optional<VectorXd>& warm_start, const QpOptions& opts) {
  const int n = problem.num_variables();
  const int m = problem.num_constraints();
  SolveReport report;

  MatrixXd ps = problem.p();
  VectorXd qs = problem.q();
  MatrixXd as = problem.a();
  const Scaling sc = equilibrate(ps, qs, as, opts.scaling_iterations);
  VectorXd ls(m), us(m);
  for (int i = 0; i < m; ++i) {
    ls[i] = is_inf(problem.l()[i]) ? -std::numeric_limits<double>::infinity() : problem.l()[i] * sc.e[i];
    us[i] = is_inf(problem.u()[i]) ? std::numeric_limits<double>::infinity() : problem.u()[i] * sc.e[i];
  }

  double rho = opts.rho;
  VectorXd rho_vec(m);
  auto set_rho = [&] {
    for (int i = 0; i < m; ++i) {
      if (std::isinf(ls[i]) && std::isinf(us[i])) {
        rho_vec[i] = 1e-6;
      } else if (us[i] - ls[i] < 1e-10) {
        rho_vec[i] = 1e3 * rho;
      } else {
        rho_vec[i] = rho;
      }
    }
  };
  set_rho();
  Eigen::LLT<MatrixXd> llt;
  auto factor = [&] {
    MatrixXd k = ps + as.transpose() * rho_vec.asDiagonal() * as;
    k.diagonal().array() += opts.sigma;
    llt.compute(k);
  };
  factor();

  VectorXd xb = VectorXd::Zero(n);
  if (warm_start && warm_start->size() == n) xb = warm_start->cwiseQuotient(sc.d);
  VectorXd zb = clip(as * xb, ls, us);
  VectorXd yb = VectorXd::Zero(m);

  auto unscale_x = [&](const VectorXd& v) -> VectorXd { return sc.d.cwiseProduct(v); };
  auto unscale_y = [&](const VectorXd& v) -> VectorXd { return sc.e.cwiseProduct(v) / sc.c; };
  auto unscale_z = [&](const VectorXd& v) -> VectorXd { return v.cwiseQuotient(sc.e); };

  VectorXd best_x = unscale_x(xb);
  VectorXd best_y = VectorXd::Zero(m);
  bool have_polished = false;
  double best_kkt = std::numeric_limits<double>::infinity();

  auto try_polish = [&](const VectorXd& z, const VectorXd& y) {
    VectorXd xp, yp;
    if (!polish(problem, z, y, xp, yp)) return false;
    const double kkt = qp_kkt_residuals(problem, xp, yp).max();
    if (kkt <= opts.kkt_tol * 1e-2 && kkt < best_kkt) {
      best_x = xp;
      best_y = yp;
      best_kkt = kkt;
      have_polished = true;
      return true;
    }
    return false;
  };

  const double alpha = opts.alpha;
  const int check_every = 5;
  int iter = 0;
  bool converged = false;
  bool infeasible = false;
  for (iter = 1; iter <= opts.max_iterations; ++iter) {
    const VectorXd rhs = opts.sigma * xb - qs + as.transpose() * (rho_vec.cwiseProduct(zb) - yb);
    const VectorXd xt = llt.solve(rhs);
    const VectorXd zt = as * xt;
    const VectorXd x_new = alpha * xt + (1.0 - alpha) * xb;
    const VectorXd zr = alpha * zt + (1.0 - alpha) * zb;
    const VectorXd z_new = clip(zr + yb.cwiseQuotient(rho_vec), ls, us);
    const VectorXd y_new = yb + rho_vec.cwiseProduct(zr - z_new);
    const VectorXd dy = y_new - yb;
    const VectorXd dx = x_new - xb;
    xb = x_new;
    zb = z_new;
    yb = y_new;

    if (iter % check_every != 0) continue;

    const VectorXd x = unscale_x(xb);
    const VectorXd y = unscale_y(yb);
    const VectorXd z = unscale_z(zb);
    const VectorXd ax = problem.a() * x;
    const VectorXd px = problem.p() * x;
    const VectorXd aty = problem.a().transpose() * y;
    const double r_prim = m ? inf_norm(ax - z) : 0.0;
    const double r_dual = inf_norm(px + problem.q() + aty);
    const double eps_prim = opts.eps_abs + opts.eps_rel * std::max(inf_norm(ax), inf_norm(z));
    const double eps_dual =
        opts.eps_abs + opts.eps_rel * std::max({inf_norm(px), inf_norm(aty), inf_norm(problem.q())});

    if (r_prim <= eps_prim && r_dual <= eps_dual) {
      converged = true;
      const double kkt = qp_kkt_residuals(problem, x, y).max();
      if (kkt < best_kkt && !have_polished) {
        best_x = x;
        best_y = y;
        best_kkt = kkt;
      }
      try_polish(z, y);
      break;
    }

    // Periodic polishing once the active set has likely settled.
    if (iter % opts.polish_interval == 0 && r_prim < 1e-3 && r_dual < 1e-3) {
      if (try_polish(z, y)) {
        converged = true;
        break;
      }
    }

    // Primal infeasibility certificate from the dual iterate change.
    if (m) {
      const VectorXd dyu = unscale_y(dy);
      const double ndy = inf_norm(dyu);
      if (ndy > 1e-12) {
        const double tol = 1e-6 * ndy;
        bool cert = inf_norm(problem.a().transpose() * dyu) <= tol;
        double support = 0.0;
        for (int i = 0; cert && i < m; ++i) {
          if (dyu[i] > 0) {
            if (is_inf(problem.u()[i])) {
              cert = dyu[i] <= tol;
            } else {
              support += problem.u()[i] * dyu[i];
            }
          } else if (dyu[i] < 0) {
            if (is_inf(problem.l()[i])) {
              cert = -dyu[i] <= tol;
            } else {
              support += problem.l()[i] * dyu[i];
            }
          }
        }
        if (cert && support < -tol) {
          infeasible = true;
          break;
        }
      }
    }
    // Dual infeasibility (unbounded objective) certificate.
    {
      const VectorXd dxu = unscale_x(dx);
      const double ndx = inf_norm(dxu);
      if (ndx > 1e-12) {
        const double tol = 1e-6 * ndx;
        bool cert = inf_norm(problem.p() * dxu) <= tol && problem.q().dot(dxu) < -tol;
        const VectorXd adx = problem.a() * dxu;
        for (int i = 0; cert && i < m; ++i) {
          if (!is_inf(problem.u()[i]) && adx[i] > tol) cert = false;
          if (!is_inf(problem.l()[i]) && adx[i] < -tol) cert = false;
        }
        if (cert) {
          infeasible = true;
          break;
        }
      }
    }

    // Adaptive step size.
    if (iter % 25 == 0 && m) {
      const VectorXd psx = ps * xb;
      const VectorXd asx = as * xb;
      const VectorXd asty = as.transpose() * yb;
      const double prim_s = inf_norm(asx - zb) / std::max({inf_norm(asx), inf_norm(zb), 1e-10});
      const double dual_s = inf_norm(psx + qs + asty) / std::max({inf_norm(psx), inf_norm(asty), inf_norm(qs), 1e-10});
      const double new_rho = std::clamp(rho * std::sqrt(prim_s / std::max(dual_s, 1e-12)), 1e-6, 1e6);
      if (new_rho > 5.0 * rho || new_rho < 0.2 * rho) {
        rho = new_rho;
        set_rho();
        factor();
      }
    }
  }

  report.iterations = std::min(iter, opts.max_iterations);
  if (!have_polished && !converged) {
    const VectorXd x = unscale_x(xb);
    const VectorXd y = unscale_y(yb);
    best_x = x;
    best_y = y;
    try_polish(unscale_z(zb), y);
  }
  const KktResiduals kkt = qp_kkt_residuals(problem, best_x, best_y);
  report.x = best_x;
  report.multipliers = best_y;
  report.primal_residual = kkt.primal;
  report.dual_residual = kkt.stationarity;
  report.complementarity = kkt.complementarity;
  report.objective = problem.objective(best_x);
  if (infeasible && kkt.max() > opts.kkt_tol) {
    report.status = SolveStatus::kInfeasible;
  } else if (kkt.max() <= opts.kkt_tol) {
    report.status = SolveStatus::kOptimal;
  } else {
    report.status = SolveStatus::kMaxIterations;
  }
  return report;
}

}  // namespace gocmpc
