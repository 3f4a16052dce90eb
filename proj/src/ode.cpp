#include "pmp/ode.hpp"

#include <algorithm>
#include <cmath>

#include "pmp/expr.hpp"

namespace pmp {

namespace {

// Dormand-Prince 5(4) coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

double hermite_scalar(double t, double t0, double t1, double y0, double y1, double d0,
                      double d1) {
  double h = t1 - t0;
  double s = (t - t0) / h;
  double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0 +
         (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * d1;
}

}  // namespace

int OdeSolution::segment(double t) const {
  bool forward = ts.back() >= ts.front();
  if (forward) {
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    int i = static_cast<int>(it - ts.begin()) - 1;
    return std::clamp(i, 0, static_cast<int>(ts.size()) - 2);
  }
  auto it = std::upper_bound(ts.begin(), ts.end(), t, std::greater<>());
  int i = static_cast<int>(it - ts.begin()) - 1;
  return std::clamp(i, 0, static_cast<int>(ts.size()) - 2);
}

Eigen::VectorXd OdeSolution::at(double t) const {
  if (ts.size() == 1) return ys[0];
  int i = segment(t);
  if (t == ts[i]) return ys[i];
  if (t == ts[i + 1]) return ys[i + 1];
  Eigen::VectorXd out(ys[i].size());
  for (int j = 0; j < out.size(); ++j)
    out(j) = hermite_scalar(t, ts[i], ts[i + 1], ys[i](j), ys[i + 1](j), yds[i](j),
                            yds[i + 1](j));
  return out;
}

OdeSolution integrate_ode(const OdeRhs& rhs, double t0, const Eigen::VectorXd& y0, double t1,
                          const IntegratorConfig& cfg, const std::vector<double>& mandatory) {
  const double dir = t1 >= t0 ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);

  std::vector<double> stops;
  for (double s : mandatory)
    if ((s - t0) * dir > 0 && (t1 - s) * dir > 0) stops.push_back(s);
  stops.push_back(t1);
  std::sort(stops.begin(), stops.end(),
            [dir](double a, double b) { return a * dir < b * dir; });
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());

  OdeSolution sol;
  double t = t0;
  Eigen::VectorXd y = y0;
  Eigen::VectorXd k1 = rhs(t, y);
  sol.ts.push_back(t);
  sol.ys.push_back(y);
  sol.yds.push_back(k1);

  double h = dir * std::min({span / 10.0, cfg.max_step, 0.1});
  if (h == 0) return sol;

  Eigen::VectorXd k2, k3, k4, k5, k6, k7, y5, err;
  for (double stop : stops) {
    bool done = false;
    while (!done) {
      if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t)))
        throw StepSizeUnderflow("step size underflow at t=" + std::to_string(t));
      if ((t + h - stop) * dir >= 0) {
        h = stop - t;
        done = true;
      }
      k2 = rhs(t + c2 * h, y + h * (a21 * k1));
      k3 = rhs(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
      k4 = rhs(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
      k5 = rhs(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      k6 = rhs(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      k7 = rhs(t + h, y5);
      err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

      if (!y5.allFinite() || !err.allFinite())
        throw NonFiniteValue("non-finite state during integration at t=" +
                             std::to_string(t));

      double errnorm = 0.0;
      for (int j = 0; j < y.size(); ++j) {
        double sc = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y(j)), std::abs(y5(j)));
        errnorm = std::max(errnorm, std::abs(err(j)) / sc);
      }

      if (errnorm <= 1.0) {
        t += h;
        y = y5;
        k1 = k7;  // FSAL
        sol.ts.push_back(t);
        sol.ys.push_back(y);
        sol.yds.push_back(k1);
        if (done && t != stop) {  // guard against roundoff drift
          sol.ts.back() = stop;
          t = stop;
        }
      } else {
        done = false;
      }
      double fac = errnorm == 0.0 ? 5.0 : 0.9 * std::pow(errnorm, -0.2);
      fac = std::clamp(fac, 0.2, 5.0);
      h *= fac;
      if (std::abs(h) > cfg.max_step) h = dir * cfg.max_step;
      if (done && errnorm > 1.0) done = false;
    }
  }
  return sol;
}

// --------------------------------------------------------------------------
// TrajectoryBundle
// --------------------------------------------------------------------------

namespace {

// Flat layout: [x (m), A (m*m col-major), Ainv (m*m), I (m), J (1)].
struct BundleLayout {
  int m;
  int size() const { return 2 * m + 2 * m * m + 1; }
  auto x(const Eigen::VectorXd& y) const { return y.segment(0, m); }
  Eigen::MatrixXd A(const Eigen::VectorXd& y) const {
    return Eigen::Map<const Eigen::MatrixXd>(y.data() + m, m, m);
  }
  Eigen::MatrixXd Ainv(const Eigen::VectorXd& y) const {
    return Eigen::Map<const Eigen::MatrixXd>(y.data() + m + m * m, m, m);
  }
  auto I(const Eigen::VectorXd& y) const { return y.segment(m + 2 * m * m, m); }
  double J(const Eigen::VectorXd& y) const { return y(2 * m + 2 * m * m); }
};

// Locates a jump of the control law inside [a, b] by bisection on the
// half-interval carrying the larger variation. Returns the refined time,
// or a negative value if the variation vanishes at fine scale (smooth law).
double locate_switch(const ControlLaw& law, double a, double b, double jump_floor) {
  Eigen::VectorXd ua = law(a), ub = law(b);
  while (b - a > 1e-10) {
    double mid = 0.5 * (a + b);
    Eigen::VectorXd um = law(mid);
    double left = (um - ua).lpNorm<Eigen::Infinity>();
    double right = (ub - um).lpNorm<Eigen::Infinity>();
    if (left >= right) {
      b = mid;
      ub = um;
    } else {
      a = mid;
      ua = um;
    }
  }
  if ((ub - ua).lpNorm<Eigen::Infinity>() < jump_floor) return -1.0;
  return 0.5 * (a + b);
}

}  // namespace

TrajectoryBundle::TrajectoryBundle(ControlProblem problem, ControlLaw law, Eigen::VectorXd xi,
                                   OdeSolution sol)
    : problem_(std::move(problem)),
      law_(std::move(law)),
      xi_(std::move(xi)),
      sol_(std::move(sol)),
      m_(problem_.state_dim) {}

Eigen::VectorXd TrajectoryBundle::x(double t) const {
  return BundleLayout{m_}.x(sol_.at(t));
}
Eigen::MatrixXd TrajectoryBundle::A(double t) const {
  return BundleLayout{m_}.A(sol_.at(t));
}
Eigen::MatrixXd TrajectoryBundle::Ainv(double t) const {
  return BundleLayout{m_}.Ainv(sol_.at(t));
}
Eigen::RowVectorXd TrajectoryBundle::I(double t) const {
  return BundleLayout{m_}.I(sol_.at(t)).transpose();
}
double TrajectoryBundle::J(double t) const { return BundleLayout{m_}.J(sol_.at(t)); }

Eigen::VectorXd TrajectoryBundle::x_node(int i) const {
  return BundleLayout{m_}.x(sol_.ys[i]);
}
Eigen::MatrixXd TrajectoryBundle::A_node(int i) const {
  return BundleLayout{m_}.A(sol_.ys[i]);
}
Eigen::MatrixXd TrajectoryBundle::Ainv_node(int i) const {
  return BundleLayout{m_}.Ainv(sol_.ys[i]);
}
Eigen::RowVectorXd TrajectoryBundle::I_node(int i) const {
  return BundleLayout{m_}.I(sol_.ys[i]).transpose();
}
double TrajectoryBundle::J_node(int i) const { return BundleLayout{m_}.J(sol_.ys[i]); }

TrajectoryBundle integrate_bundle(const ControlProblem& p, const ControlLaw& law,
                                  const Eigen::VectorXd& xi, double t_end,
                                  const IntegratorConfig& cfg) {
  if (t_end <= 0) throw InvalidParams("t_end must be positive");
  const int m = p.state_dim;
  BundleLayout L{m};

  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(L.size());
  y0.segment(0, m) = p.x_init + xi;
  Eigen::Map<Eigen::MatrixXd>(y0.data() + m, m, m).setIdentity();
  Eigen::Map<Eigen::MatrixXd>(y0.data() + m + m * m, m, m).setIdentity();

  OdeRhs rhs = [&p, &law, m, L](double t, const Eigen::VectorXd& y) {
    Eigen::VectorXd u = law(t);
    Eigen::VectorXd x = L.x(y);
    Eigen::MatrixXd A = L.A(y);
    Eigen::MatrixXd Ainv = L.Ainv(y);
    Eigen::MatrixXd F = p.jac_f(t, x, u);
    Eigen::RowVectorXd G = p.jac_g(t, x, u);

    Eigen::VectorXd dy(y.size());
    dy.segment(0, m) = p.f(t, x, u);
    Eigen::Map<Eigen::MatrixXd>(dy.data() + m, m, m) = F * A;
    Eigen::Map<Eigen::MatrixXd>(dy.data() + m + m * m, m, m) = -Ainv * F;
    dy.segment(m + 2 * m * m, m) = (G * A).transpose();
    dy(2 * m + 2 * m * m) = p.g(t, x, u);
    return dy;
  };

  // mandatory nodes: piecewise-constant breakpoints, plus sign switches of
  // closed-form discontinuous laws located by bisection
  std::vector<double> mandatory = law.breakpoints(0.0, t_end);
  if (!law.piecewise_constant()) {
    // scan on a coarse grid for jumps, refine each by bisection
    Eigen::VectorXd u_prev = law(0.0);
    double scale = 1.0 + u_prev.lpNorm<Eigen::Infinity>();
    const int scan = std::max(64, static_cast<int>(t_end * 8));
    for (int i = 1; i <= scan; ++i) {
      double a = t_end * (i - 1) / scan, b = t_end * i / scan;
      Eigen::VectorXd u_next = law(b);
      if ((u_next - u_prev).lpNorm<Eigen::Infinity>() > 0.1 * scale) {
        double s = locate_switch(law, a, b, 1e-3 * scale);
        if (s > 0) mandatory.push_back(s);
      }
      u_prev = u_next;
      scale = std::max(scale, 1.0 + u_prev.lpNorm<Eigen::Infinity>());
    }
  }

  OdeSolution sol = integrate_ode(rhs, 0.0, y0, t_end, cfg, mandatory);

  // A and its inverse are integrated independently, so their errors drift
  // apart over long horizons; two Newton refinement passes per node pin the
  // stored inverse back onto the stored A before the consistency check
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(m, m);
  for (size_t i = 0; i < sol.ts.size(); ++i) {
    Eigen::Map<const Eigen::MatrixXd> A(sol.ys[i].data() + m, m, m);
    Eigen::Map<Eigen::MatrixXd> Ainv(sol.ys[i].data() + m + m * m, m, m);
    for (int pass = 0; pass < 2; ++pass) {
      if ((A * Ainv - id).lpNorm<Eigen::Infinity>() < 0.5)
        Ainv = Ainv * (2.0 * id - A * Ainv);
    }
    double defect = (A * Ainv - id).lpNorm<Eigen::Infinity>();
    if (!(defect < cfg.inv_check_tol)) {
      char msg[96];
      snprintf(msg, sizeof msg, "fundamental-matrix inverse defect %g at t=%g", defect,
               sol.ts[i]);
      throw NonFiniteValue(msg);
    }
  }

  return TrajectoryBundle(p, law, xi, std::move(sol));
}

// --------------------------------------------------------------------------
// Adjoint computation
// --------------------------------------------------------------------------

AdjointPath adjoint_via_cauchy(const std::shared_ptr<const TrajectoryBundle>& b,
                               const Eigen::RowVectorXd& psi0, double lambda) {
  AdjointPath path;
  path.lambda = lambda;
  path.psi0 = psi0;
  path.grid = b->grid();
  path.psi.reserve(path.grid.size());
  for (size_t i = 0; i < path.grid.size(); ++i)
    path.psi.push_back((psi0 - lambda * b->I_node(static_cast<int>(i))) *
                       b->Ainv_node(static_cast<int>(i)));
  path.dense = [b, psi0, lambda](double t) -> Eigen::RowVectorXd {
    return (psi0 - lambda * b->I(t)) * b->Ainv(t);
  };
  return path;
}

AdjointPath adjoint_via_backward(const ControlProblem& p,
                                 const std::shared_ptr<const TrajectoryBundle>& b,
                                 double lambda, const Eigen::RowVectorXd& psi_terminal,
                                 double t_terminal, const IntegratorConfig& cfg) {
  if (t_terminal > b->t_end() + 1e-12)
    throw InvalidParams("t_terminal beyond bundle end");
  const int m = p.state_dim;

  OdeRhs rhs = [&p, b, lambda, m](double t, const Eigen::VectorXd& y) {
    Eigen::VectorXd u = b->law()(t);
    Eigen::VectorXd x = b->x(t);
    Eigen::RowVectorXd psi = y.transpose();
    Eigen::RowVectorXd dpsi = -psi * p.jac_f(t, x, u) - lambda * p.jac_g(t, x, u);
    return dpsi.transpose().eval();
  };

  std::vector<double> mandatory = b->law().breakpoints(0.0, t_terminal);
  // When the terminal data is tiny the backward direction is typically the
  // unstable one: absolute local errors near t_terminal get amplified all the
  // way to t = 0.  Tie the absolute tolerance to the terminal magnitude so the
  // early backward steps are controlled relatively.
  IntegratorConfig bcfg = cfg;
  bcfg.abs_tol =
      std::max(1e-30, std::min(cfg.abs_tol, cfg.rel_tol * psi_terminal.norm()));
  OdeSolution sol =
      integrate_ode(rhs, t_terminal, psi_terminal.transpose(), 0.0, bcfg, mandatory);

  auto shared = std::make_shared<OdeSolution>(std::move(sol));

  AdjointPath path;
  path.lambda = lambda;
  path.psi0 = shared->ys.back().transpose();
  path.dense = [shared](double t) -> Eigen::RowVectorXd {
    return shared->at(t).transpose();
  };
  // report on the bundle grid (ascending), restricted to [0, t_terminal]
  for (double t : b->grid()) {
    if (t > t_terminal + 1e-12) break;
    path.grid.push_back(t);
    path.psi.push_back(path.dense(std::min(t, t_terminal)));
  }
  return path;
}

}  // namespace pmp
