#ifndef PMP_ODE_HPP
#define PMP_ODE_HPP

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "pmp/problem.hpp"

namespace pmp {

struct StepSizeUnderflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IntegratorConfig {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double max_step = std::numeric_limits<double>::infinity();
  double inv_check_tol = 1e-7;  // ||A*Ainv - Id||_inf allowed at nodes
};

/// Adaptive embedded Runge-Kutta 4(5) (Dormand-Prince) over a flat state.
/// Accepted nodes and their derivatives are appended to ts/ys/yds;
/// dense output between nodes is cubic Hermite.
struct OdeSolution {
  std::vector<double> ts;
  std::vector<Eigen::VectorXd> ys;
  std::vector<Eigen::VectorXd> yds;

  Eigen::VectorXd at(double t) const;
  int segment(double t) const;
};

using OdeRhs = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

/// Integrates y' = rhs(t, y) from (t0, y0) to t1 (t1 may be < t0).
/// Nodes include every time listed in mandatory (within the span).
OdeSolution integrate_ode(const OdeRhs& rhs, double t0, const Eigen::VectorXd& y0, double t1,
                          const IntegratorConfig& cfg,
                          const std::vector<double>& mandatory = {});

/// Joint solution of the state, fundamental matrix, its inverse, the
/// sensitivity covector I and the running objective J, for one initial
/// perturbation xi and one control law.
class TrajectoryBundle {
 public:
  TrajectoryBundle(ControlProblem problem, ControlLaw law, Eigen::VectorXd xi,
                   OdeSolution sol);

  int state_dim() const { return m_; }
  double t_end() const { return sol_.ts.back(); }
  const std::vector<double>& grid() const { return sol_.ts; }
  const ControlProblem& problem() const { return problem_; }
  const ControlLaw& law() const { return law_; }
  const Eigen::VectorXd& xi() const { return xi_; }

  Eigen::VectorXd x(double t) const;
  Eigen::MatrixXd A(double t) const;
  Eigen::MatrixXd Ainv(double t) const;
  Eigen::RowVectorXd I(double t) const;
  double J(double t) const;

  Eigen::VectorXd x_node(int i) const;
  Eigen::MatrixXd A_node(int i) const;
  Eigen::MatrixXd Ainv_node(int i) const;
  Eigen::RowVectorXd I_node(int i) const;
  double J_node(int i) const;

 private:
  ControlProblem problem_;
  ControlLaw law_;
  Eigen::VectorXd xi_;
  OdeSolution sol_;
  int m_;

  Eigen::VectorXd unpack_x(const Eigen::VectorXd& y) const;
};

/// Integrates x' = f, A' = (df/dx)A, (A^-1)' = -(A^-1)(df/dx),
/// I' = (dg/dx)A, J' = g from t=0 to t_end, starting at x_init + xi.
TrajectoryBundle integrate_bundle(const ControlProblem& p, const ControlLaw& law,
                                  const Eigen::VectorXd& xi, double t_end,
                                  const IntegratorConfig& cfg = {});

struct AdjointPath {
  std::vector<double> grid;
  std::vector<Eigen::RowVectorXd> psi;
  double lambda = 1.0;
  Eigen::RowVectorXd psi0;
  bool normalized = false;  // ||psi(0)|| + lambda == 1

  /// Dense evaluation; exact for the Cauchy-formula route,
  /// Hermite interpolation for the backward-integrated route.
  std::function<Eigen::RowVectorXd(double)> dense;

  Eigen::RowVectorXd at(double t) const { return dense(t); }
};

/// psi(T) = (psi0 - lambda * I(T)) * A^-1(T).
AdjointPath adjoint_via_cauchy(const std::shared_ptr<const TrajectoryBundle>& b,
                               const Eigen::RowVectorXd& psi0, double lambda);

/// Backward integration of psi' = -psi * df/dx - lambda * dg/dx from
/// psi(t_terminal) = psi_terminal; cross-validates the Cauchy route.
AdjointPath adjoint_via_backward(const ControlProblem& p,
                                 const std::shared_ptr<const TrajectoryBundle>& b,
                                 double lambda, const Eigen::RowVectorXd& psi_terminal,
                                 double t_terminal, const IntegratorConfig& cfg = {});

}  // namespace pmp

#endif
