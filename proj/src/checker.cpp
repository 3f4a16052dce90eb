#include "pmp/checker.hpp"

#include <algorithm>
#include <cmath>

#include "pmp/expr.hpp"

namespace pmp {

double hamiltonian(const ControlProblem& p, const Eigen::VectorXd& x, double t,
                   const Eigen::VectorXd& u, double lambda, const Eigen::RowVectorXd& psi) {
  double h = psi.dot(p.f(t, x, u)) + lambda * p.g(t, x, u);
  if (!std::isfinite(h)) throw NonFiniteValue("non-finite Hamiltonian value");
  return h;
}

namespace {

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (int i = 0; i < a.size(); ++i) {
    if (a(i) < b(i)) return true;
    if (a(i) > b(i)) return false;
  }
  return false;
}

struct BestTracker {
  Eigen::VectorXd u;
  double H = -std::numeric_limits<double>::infinity();

  // allow_tie: grid and finite-set candidates may displace an equal incumbent
  // by the lexicographic rule; refinement candidates may not, so an exact
  // boundary maximizer is never replaced by an interior point that merely
  // ties it within the tolerance
  void offer(const Eigen::VectorXd& cand, double h, bool allow_tie = true) {
    if (u.size() == 0) {
      u = cand;
      H = h;
      return;
    }
    double tie = 1e-12 * (1.0 + std::abs(H));
    if (h > H + tie) {
      u = cand;
      H = h;
    } else if (allow_tie && h >= H - tie && lex_less(cand, u)) {
      u = cand;  // tie: lexicographically smallest control wins
    }
  }
};

}  // namespace

MaximizeResult maximize_hamiltonian(const ControlProblem& p, const Eigen::VectorXd& x,
                                    double t, double lambda, const Eigen::RowVectorXd& psi) {
  const auto& cs = p.control_set;
  auto H = [&](const Eigen::VectorXd& u) { return hamiltonian(p, x, t, u, lambda, psi); };

  if (cs.kind == ControlSet::Kind::Finite) {
    BestTracker best;
    for (const auto& u : cs.pts(t)) best.offer(u, H(u));
    return {best.u, best.H};
  }

  Eigen::VectorXd lo = cs.lo(t), hi = cs.hi(t);
  if (!lo.allFinite() || !hi.allFinite())
    throw UnboundedSet("box control set with infinite side");
  const int k = static_cast<int>(lo.size());
  constexpr int kGrid = 33;
  constexpr int kGolden = 20;
  constexpr double kPhi = 0.6180339887498949;

  BestTracker best;

  // coarse grid: full tensor product for small k, axis sweeps otherwise
  if (k <= 3) {
    Eigen::VectorXd u(k);
    std::vector<int> idx(static_cast<size_t>(k), 0);
    for (;;) {
      for (int j = 0; j < k; ++j)
        u(j) = lo(j) + (hi(j) - lo(j)) * idx[static_cast<size_t>(j)] / (kGrid - 1);
      best.offer(u, H(u));
      int j = 0;
      while (j < k && ++idx[static_cast<size_t>(j)] == kGrid) {
        idx[static_cast<size_t>(j)] = 0;
        ++j;
      }
      if (j == k) break;
    }
  } else {
    Eigen::VectorXd u = 0.5 * (lo + hi);
    best.offer(u, H(u));
    for (int j = 0; j < k; ++j) {
      Eigen::VectorXd cand = best.u;
      for (int i = 0; i < kGrid; ++i) {
        cand(j) = lo(j) + (hi(j) - lo(j)) * i / (kGrid - 1);
        best.offer(cand, H(cand));
      }
    }
  }

  // two cyclic sweeps of golden-section refinement per axis
  Eigen::VectorXd radius = (hi - lo) / (kGrid - 1);
  for (int sweep = 0; sweep < 2; ++sweep) {
    for (int j = 0; j < k; ++j) {
      if (hi(j) == lo(j)) continue;
      double a = std::max(lo(j), best.u(j) - radius(j));
      double b = std::min(hi(j), best.u(j) + radius(j));
      Eigen::VectorXd u = best.u;
      auto Hj = [&](double v) {
        u(j) = v;
        double h = H(u);
        best.offer(u, h, /*allow_tie=*/false);
        return h;
      };
      double x1 = b - kPhi * (b - a), x2 = a + kPhi * (b - a);
      double f1 = Hj(x1), f2 = Hj(x2);
      for (int it = 0; it < kGolden; ++it) {
        if (f1 < f2) {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + kPhi * (b - a);
          f2 = Hj(x2);
        } else {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - kPhi * (b - a);
          f1 = Hj(x1);
        }
      }
      radius(j) *= std::pow(kPhi, kGolden);
    }
  }
  return {best.u, best.H};
}

// --------------------------------------------------------------------------
// PMP residual report
// --------------------------------------------------------------------------

namespace {

std::vector<int> subsample(size_t n, size_t cap) {
  std::vector<int> idx;
  if (n <= cap) {
    for (size_t i = 0; i < n; ++i) idx.push_back(static_cast<int>(i));
  } else {
    for (size_t i = 0; i < cap; ++i)
      idx.push_back(static_cast<int>(i * (n - 1) / (cap - 1)));
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  }
  return idx;
}

double ls_slope(const std::vector<double>& ts, const std::vector<double>& vals) {
  // least-squares slope; pairs with non-finite values are dropped
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (size_t i = 0; i < ts.size(); ++i) {
    if (!std::isfinite(vals[i])) continue;
    sx += ts[i];
    sy += vals[i];
    sxx += ts[i] * ts[i];
    sxy += ts[i] * vals[i];
    ++n;
  }
  if (n < 2) return 0.0;
  double denom = n * sxx - sx * sx;
  return denom == 0 ? 0.0 : (n * sxy - sx * sy) / denom;
}

bool near_law_jump(const ControlLaw& law, double t, double h) {
  Eigen::VectorXd a = law(t - h), b = law(t + h);
  return (b - a).lpNorm<Eigen::Infinity>() > 0.1 * (1.0 + a.lpNorm<Eigen::Infinity>());
}

}  // namespace

PmpReport check_pmp(const ControlProblem& p,
                    const std::shared_ptr<const TrajectoryBundle>& bundle,
                    const ControlLaw& law, const Multiplier& mult, const TauSequence& tau) {
  if (tau.values.back() > bundle->t_end() + 1e-9)
    throw GridMismatch("tau sequence extends beyond the bundle");

  PmpReport rep;

  // rescale to the ||psi(0)|| + lambda = 1 normalization
  Eigen::RowVectorXd psi0 = mult.psi.at(0.0);
  double s = mult.lambda + psi0.norm();
  if (s == 0.0) {
    rep.normalization_defect = 1.0;
    return rep;
  }
  const double c = 1.0 / s;
  const double lambda = c * mult.lambda;
  auto psi = [&](double t) -> Eigen::RowVectorXd { return c * mult.psi.at(t); };
  rep.normalization_defect = std::abs(psi(0.0).norm() + lambda - 1.0);

  const auto& grid = bundle->grid();
  auto idx = subsample(grid.size(), 400);
  const double t_end = bundle->t_end();

  const double h = 1e-4;
  for (int i : idx) {
    double t = grid[static_cast<size_t>(i)];
    Eigen::VectorXd x = bundle->x_node(i);
    Eigen::VectorXd u = law(t);
    Eigen::RowVectorXd ps = psi(t);

    double Hu = hamiltonian(p, x, t, u, lambda, ps);
    double Hstar = maximize_hamiltonian(p, x, t, lambda, ps).H_star;
    rep.max_residual = std::max(rep.max_residual, (Hstar - Hu) / (1.0 + std::abs(Hstar)));

    if (t - h <= 0 || t + h >= t_end || near_law_jump(law, t, h)) continue;

    // adjoint equation defect via central differences of the dense path
    Eigen::RowVectorXd dpsi = (psi(t + h) - psi(t - h)) / (2 * h);
    Eigen::RowVectorXd rhs = -ps * p.jac_f(t, x, u) - lambda * p.jac_g(t, x, u);
    rep.adjoint_residual = std::max(
        rep.adjoint_residual,
        (dpsi - rhs).lpNorm<Eigen::Infinity>() / (1.0 + rhs.lpNorm<Eigen::Infinity>()));

    Eigen::VectorXd fx = p.f(t, x, u);
    Eigen::VectorXd dx = (bundle->x(t + h) - bundle->x(t - h)) / (2 * h);
    rep.state_residual = std::max(
        rep.state_residual,
        (dx - fx).lpNorm<Eigen::Infinity>() / (1.0 + fx.lpNorm<Eigen::Infinity>()));
  }

  // transversality block
  auto& tr = rep.transversality;
  tr.trans_norm = psi(t_end).norm();
  {
    std::vector<double> ts, logs;
    for (int i : idx) {
      double t = grid[static_cast<size_t>(i)];
      if (t < 2.0 * t_end / 3.0) continue;
      double n = psi(t).norm();
      ts.push_back(t);
      logs.push_back(n > 0 ? std::log(n) : -745.0);
    }
    tr.trans_slope = ls_slope(ts, logs);
    tr.trans_ok = tr.trans_slope < -1e-3;
  }

  tr.partlim_min = std::numeric_limits<double>::infinity();
  tr.partlim1_min = std::numeric_limits<double>::infinity();
  rep.lem1_check = std::numeric_limits<double>::infinity();
  std::vector<double> lim_ts, lim_logs;
  for (double tn : tau.values) {
    Eigen::RowVectorXd ps = psi(tn);
    tr.partlim_min = std::min(tr.partlim_min, ps.norm());
    double pa = (ps * bundle->A(tn)).norm();
    tr.partlim1_min = std::min(tr.partlim1_min, pa);
    lim_ts.push_back(tn);
    lim_logs.push_back(pa > 0 ? std::log(pa) : -745.0);
    rep.lem1_check =
        std::min(rep.lem1_check, (psi(0.0) - lambda * bundle->I(tn)).norm());
  }
  tr.lim_norm = (psi(tau.values.back()) * bundle->A(tau.values.back())).norm();
  tr.lim_slope = ls_slope(lim_ts, lim_logs);
  tr.lim_ok = tr.lim_slope < -1e-3;

  return rep;
}

// --------------------------------------------------------------------------
// Cone / monotonicity report
// --------------------------------------------------------------------------

ConeReport monotone_report(const ControlProblem& p,
                           const std::shared_ptr<const TrajectoryBundle>& bundle,
                           const ControlLaw& law, const Multiplier& mult,
                           const SampleTable& table, double M_div) {
  const int m = p.state_dim;
  ConeReport rep;
  rep.gradient_sign_ok = true;
  rep.offdiag_ok = true;
  rep.zero_shift_ok = true;
  rep.psi_nonneg = std::numeric_limits<double>::infinity();
  rep.shift_bound = std::numeric_limits<double>::infinity();

  const auto& grid = bundle->grid();
  auto idx = subsample(grid.size(), 400);
  const double t_end = bundle->t_end();
  const double t_half = 0.5 * t_end;

  double integral = 0.0, integral_half = 0.0;
  double prev_t = 0.0;
  Eigen::RowVectorXd prev_G;
  constexpr double kSignEps = 1e-12;

  for (int i : idx) {
    double t = grid[static_cast<size_t>(i)];
    Eigen::VectorXd x = bundle->x_node(i);
    Eigen::VectorXd u = law(t);
    Eigen::MatrixXd F = p.jac_f(t, x, u);
    Eigen::RowVectorXd G = p.jac_g(t, x, u);

    if (G.minCoeff() < -kSignEps) rep.gradient_sign_ok = false;
    for (int r = 0; r < m; ++r)
      for (int col = 0; col < m; ++col)
        if (r != col && F(r, col) < -kSignEps) rep.offdiag_ok = false;
    rep.shift_bound = std::min(rep.shift_bound, F.diagonal().minCoeff());

    if (!rep.strict_point && G.minCoeff() > 1e-8) rep.strict_point = t;

    Eigen::RowVectorXd ps = mult.psi.at(t);
    rep.psi_nonneg = std::min(rep.psi_nonneg, ps.minCoeff());

    if (prev_G.size() > 0) {
      // trapezoid on the largest component of dg/dx
      double seg = 0.5 * (G.maxCoeff() + prev_G.maxCoeff()) * (t - prev_t);
      integral += seg;
      if (t <= t_half) integral_half = integral;
    }
    prev_t = t;
    prev_G = G;
  }
  rep.zero_shift_ok = rep.offdiag_ok && rep.shift_bound >= -kSignEps;
  rep.gradient_integral = integral;

  // flag of the degenerate-by-growth remark: zero shift admissible and the
  // gradient integral keeps growing (doubling over the horizon) or is huge
  rep.degenerate_flag =
      rep.gradient_sign_ok && rep.zero_shift_ok &&
      (integral > M_div || (integral > 1e-3 && integral >= 1.9 * integral_half));

  // sandwich per basis direction
  const double lambda = mult.lambda;
  Eigen::RowVectorXd psi0 = mult.psi.at(0.0);
  size_t last = table.taus.size() - 1;
  for (int j = 0; j < m; ++j) {
    SandwichEntry e;
    double up = -std::numeric_limits<double>::infinity();
    for (const auto& row : table.rows)
      if (row.ok) up = std::max(up, row.I[last](j));
    e.upper = lambda * up;
    e.mid = psi0(j);
    e.lower = lambda * bundle->I(t_end)(j);
    rep.sandwich.push_back(e);
  }
  return rep;
}

}  // namespace pmp
