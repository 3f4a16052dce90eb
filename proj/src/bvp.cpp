#include "pmp/bvp.hpp"

#include <algorithm>
#include <cmath>

#include "pmp/expr.hpp"

namespace pmp {

ClosedSystem build_avav_system(double nu, double sigma, double b, double K0,
                               const std::string& g_src, const std::string& h_src) {
  if (!(sigma > 0.0 && sigma <= 1.0)) throw InvalidParams("sigma must lie in (0, 1]");
  if (!(b > 0.0)) throw InvalidParams("b must be positive");
  if (!(K0 > 0.0)) throw InvalidParams("K0 must be positive");

  ExprPtr g = parse(g_src, {0, 0});
  ExprPtr h = parse(h_src, {0, 0});

  ClosedSystem sys;
  sys.dim = 2;
  sys.names = {"x", "I"};
  sys.known_idx = {0};
  sys.known_vals = Eigen::VectorXd::Constant(1, K0);
  sys.shoot_idx = {1};
  sys.rhs = [nu, sigma, b, g, h](double t, const Eigen::VectorXd& z) {
    EvalEnv env;
    env.t = t;
    double gt = eval(g, env), ht = eval(h, env);
    if (!(ht > 0.0)) throw PathBlowup("h(t) not positive on the horizon");
    Eigen::VectorXd dz(2);
    dz(0) = -nu * z(0) + std::exp(nu * t) / (b * ht) * z(1);
    dz(1) = -sigma * gt * std::exp(-nu * t) * std::pow(z(0), sigma - 1.0);
    if (!dz.allFinite()) throw PathBlowup("non-finite right-hand side");
    return dz;
  };
  sys.terminal_condition = [](const Eigen::VectorXd& z) {
    return Eigen::VectorXd::Constant(1, z(1)).eval();
  };
  // investment value must stay positive until the terminal time; the capital
  // stock must as well (fractional powers of it enter the dynamics)
  sys.guard = [](double, const Eigen::VectorXd& z) { return z(0) > 0.0 && z(1) > 0.0; };
  return sys;
}

namespace {

Eigen::VectorXd assemble_z0(const ClosedSystem& sys, const Eigen::VectorXd& s) {
  Eigen::VectorXd z0(sys.dim);
  for (size_t i = 0; i < sys.known_idx.size(); ++i)
    z0(sys.known_idx[i]) = sys.known_vals(static_cast<int>(i));
  for (size_t i = 0; i < sys.shoot_idx.size(); ++i)
    z0(sys.shoot_idx[i]) = s(static_cast<int>(i));
  return z0;
}

struct ShotEval {
  bool feasible = false;
  Eigen::VectorXd residual;
  OdeSolution solution;
};

// The guard is relaxed at the terminal node: the shot drives the terminal
// residual to zero, so the guarded quantity legitimately approaches zero there.
ShotEval evaluate_shot(const ClosedSystem& sys, const Eigen::VectorXd& s, double T_max,
                       const IntegratorConfig& cfg) {
  ShotEval ev;
  try {
    ev.solution = integrate_ode(sys.rhs, 0.0, assemble_z0(sys, s), T_max, cfg);
  } catch (const std::exception&) {
    return ev;  // blow-up along the path: infeasible guess
  }
  if (sys.guard) {
    for (size_t i = 0; i + 1 < ev.solution.ts.size(); ++i)
      if (!sys.guard(ev.solution.ts[i], ev.solution.ys[i])) return ev;
  }
  ev.residual = sys.terminal_condition(ev.solution.ys.back());
  ev.feasible = ev.residual.allFinite();
  return ev;
}

ShootResult shoot_scalar(const ClosedSystem& sys, const SearchBox& search, double T_max,
                         double tol, const IntegratorConfig& cfg) {
  double lo = search.lo(0), hi = search.hi(0);
  int iters = 0;

  // every feasible evaluation competes for the reported solution
  double best_s = std::numeric_limits<double>::quiet_NaN();
  double best_r = std::numeric_limits<double>::infinity();
  ShotEval best;

  // infeasible guesses undershoot the guard, so they count as negative sign
  auto signed_res = [&](double s) -> double {
    ++iters;
    ShotEval ev = evaluate_shot(sys, Eigen::VectorXd::Constant(1, s), T_max, cfg);
    if (!ev.feasible) return -std::numeric_limits<double>::infinity();
    double r = ev.residual(0);
    if (std::abs(r) < best_r) {
      best_r = std::abs(r);
      best_s = s;
      best = std::move(ev);
    }
    return r;
  };

  double rlo = signed_res(lo);
  double rhi = signed_res(hi);
  if ((rlo < 0) == (rhi < 0))
    throw NoBracket("terminal residual does not change sign over the bracket");
  if (rlo > rhi) std::swap(lo, hi);

  while (std::abs(hi - lo) > tol * std::max(1.0, 0.5 * std::abs(hi + lo))) {
    double mid = 0.5 * (lo + hi);
    double rm = signed_res(mid);
    if (rm < 0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }

  // Newton polish from the best feasible point; one side of the root is
  // typically infeasible, so fall back to a one-sided difference there
  double s = best_s;
  double r = (best.residual.size() > 0) ? best.residual(0) : 0.0;
  for (int it = 0; it < 5 && best.feasible; ++it) {
    double dh = 1e-6 * std::max(1.0, std::abs(s));
    double rp = signed_res(s + dh);
    double rm = signed_res(s - dh);
    double dr;
    if (std::isfinite(rp) && std::isfinite(rm)) {
      dr = (rp - rm) / (2 * dh);
    } else if (std::isfinite(rp)) {
      dr = (rp - r) / dh;
    } else if (std::isfinite(rm)) {
      dr = (r - rm) / dh;
    } else {
      break;
    }
    if (dr == 0.0) break;
    double s_next = s - r / dr;
    if (s_next <= std::min(search.lo(0), search.hi(0)) ||
        s_next >= std::max(search.lo(0), search.hi(0)))
      break;
    double r_next = signed_res(s_next);
    if (!std::isfinite(r_next) || std::abs(r_next) >= std::abs(r)) break;
    s = s_next;
    r = r_next;
  }

  ShootResult out;
  out.init_values = Eigen::VectorXd::Constant(1, best_s);
  out.terminal_residual = best_r;
  out.solution = std::move(best.solution);
  out.iterations = iters;
  out.converged = best.feasible && best_r < tol;
  return out;
}

ShootResult shoot_vector(const ClosedSystem& sys, const SearchBox& search, double T_max,
                         double tol, const IntegratorConfig& cfg) {
  const int n = static_cast<int>(sys.shoot_idx.size());
  Eigen::VectorXd s = 0.5 * (search.lo + search.hi);
  int iters = 0;

  auto eval_at = [&](const Eigen::VectorXd& v) {
    ++iters;
    ShotEval ev = evaluate_shot(sys, v, T_max, cfg);
    if (!ev.feasible) throw PathBlowup("infeasible guess inside Newton iteration");
    return ev;
  };

  ShotEval cur = eval_at(s);
  for (int it = 0; it < 50; ++it) {
    double rn = cur.residual.norm();
    if (rn < tol) {
      ShootResult out;
      out.init_values = s;
      out.terminal_residual = rn;
      out.solution = std::move(cur.solution);
      out.iterations = iters;
      out.converged = true;
      return out;
    }
    Eigen::MatrixXd Jac(cur.residual.size(), n);
    for (int j = 0; j < n; ++j) {
      double dh = 1e-6 * std::max(1.0, std::abs(s(j)));
      Eigen::VectorXd sp = s, sm = s;
      sp(j) += dh;
      sm(j) -= dh;
      Jac.col(j) = (eval_at(sp).residual - eval_at(sm).residual) / (2 * dh);
    }
    Eigen::VectorXd step = Jac.colPivHouseholderQr().solve(-cur.residual);
    // backtracking damping
    double alpha = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 8; ++bt, alpha *= 0.5) {
      Eigen::VectorXd cand =
          (s + alpha * step).cwiseMax(search.lo).cwiseMin(search.hi);
      try {
        ShotEval ev = eval_at(cand);
        if (ev.residual.norm() < rn) {
          s = cand;
          cur = std::move(ev);
          accepted = true;
          break;
        }
      } catch (const PathBlowup&) {
        continue;  // damped further on the next backtrack
      }
    }
    if (!accepted) throw MaxIterations("Newton stalled without residual decrease");
  }
  throw MaxIterations("Newton did not converge within 50 iterations");
}

}  // namespace

ShootResult shoot(const ClosedSystem& sys, const SearchBox& search, double T_max,
                  double tol, const IntegratorConfig& cfg) {
  if (search.lo.size() != static_cast<int>(sys.shoot_idx.size()) ||
      search.hi.size() != search.lo.size())
    throw InvalidParams("search box does not match the number of shoot components");
  if (sys.shoot_idx.size() == 1) return shoot_scalar(sys, search, T_max, tol, cfg);
  return shoot_vector(sys, search, T_max, tol, cfg);
}

VerifyReport verify_solution(const ClosedSystem& sys, const ShootResult& result,
                             double T_max, const IntegratorConfig& cfg,
                             const std::function<Eigen::VectorXd(double)>& reference,
                             double t_lo, double t_hi) {
  if (!result.converged) throw InvalidParams("verify_solution requires a converged shot");

  IntegratorConfig tight = cfg;
  tight.rel_tol = cfg.rel_tol / 10.0;
  tight.abs_tol = cfg.abs_tol / 10.0;
  OdeSolution sol =
      integrate_ode(sys.rhs, 0.0, assemble_z0(sys, result.init_values), T_max, tight);

  VerifyReport rep;
  rep.terminal_residual_tight = sys.terminal_condition(sol.ys.back()).norm();
  rep.init_shift = (sol.ys.front() - result.solution.ys.front()).norm();

  if (reference) {
    rep.has_reference = true;
    if (t_hi < t_lo) t_hi = T_max;
    rep.max_rel_dev = Eigen::VectorXd::Zero(sys.dim);
    for (size_t i = 0; i < sol.ts.size(); ++i) {
      double t = sol.ts[i];
      if (t < t_lo || t > t_hi) continue;
      Eigen::VectorXd ref = reference(t);
      for (int j = 0; j < sys.dim; ++j) {
        double dev = std::abs(sol.ys[i](j) - ref(j)) / std::max(1e-300, std::abs(ref(j)));
        rep.max_rel_dev(j) = std::max(rep.max_rel_dev(j), dev);
      }
    }
  }
  return rep;
}

RichardsonResult shoot_richardson(const ClosedSystem& sys, const SearchBox& search,
                                  const std::vector<double>& horizons, double tol,
                                  const IntegratorConfig& cfg) {
  if (horizons.empty()) throw InvalidParams("need at least one horizon");
  RichardsonResult out;
  out.horizons = horizons;
  for (double T : horizons) out.runs.push_back(shoot(sys, search, T, tol, cfg));

  // truncation error of the shot initial values decays like 1/T_max:
  // successive horizon doublings eliminate the leading terms
  std::vector<Eigen::VectorXd> col;
  for (const auto& r : out.runs) col.push_back(r.init_values);
  int level = 1;
  while (col.size() > 1) {
    std::vector<Eigen::VectorXd> next;
    for (size_t i = 0; i + 1 < col.size(); ++i) {
      double w = std::pow(2.0, level);
      next.push_back(((w * col[i + 1] - col[i]) / (w - 1.0)).eval());
    }
    col = std::move(next);
    ++level;
  }
  out.extrapolated = col.front();
  return out;
}

}  // namespace pmp
