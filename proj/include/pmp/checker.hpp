#ifndef PMP_CHECKER_HPP
#define PMP_CHECKER_HPP

#include <Eigen/Dense>
#include <memory>
#include <optional>

#include "pmp/ode.hpp"
#include "pmp/problem.hpp"
#include "pmp/shadow.hpp"

namespace pmp {

struct UnboundedSet : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GridMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// H(x, t, u, lambda, psi) = psi . f + lambda g.
double hamiltonian(const ControlProblem& p, const Eigen::VectorXd& x, double t,
                   const Eigen::VectorXd& u, double lambda, const Eigen::RowVectorXd& psi);

struct MaximizeResult {
  Eigen::VectorXd u_star;
  double H_star = 0.0;
};

/// Maximizes H over U(t): exhaustive for finite sets; for boxes a 33-point
/// coarse grid per axis followed by two cyclic sweeps of 20 golden-section
/// refinements.  Ties break to the lexicographically smallest control.
MaximizeResult maximize_hamiltonian(const ControlProblem& p, const Eigen::VectorXd& x,
                                    double t, double lambda, const Eigen::RowVectorXd& psi);

struct TransversalityReport {
  double trans_norm = 0.0;      // ||psi(t_end)||
  double trans_slope = 0.0;     // LS slope of log||psi|| over last third
  bool trans_ok = false;        // decaying trend
  double partlim_min = 0.0;     // min_n ||psi(tau_n)||
  double lim_norm = 0.0;        // ||psi(tau_N) A0(tau_N)||
  double lim_slope = 0.0;       // trend of log||psi A0|| over tau samples
  bool lim_ok = false;
  double partlim1_min = 0.0;    // min_n ||psi(tau_n) A0(tau_n)||
};

struct PmpReport {
  // residuals are relative: each defect is scaled by (1 + magnitude of the
  // quantity it checks), so blow-up examples remain comparable
  double max_residual = 0.0;            // sup_t [H* - H(u(t))] / (1+|H*|)
  double adjoint_residual = 0.0;        // defect of the adjoint equation
  double state_residual = 0.0;          // defect of the state equation
  double normalization_defect = 0.0;    // | ||psi(0)|| + lambda - 1 |
  TransversalityReport transversality;
  double lem1_check = 0.0;              // dist of psi(0) to {lambda I0(tau_n)}

  bool residuals_ok(double tol = 1e-5) const {
    return max_residual < tol && adjoint_residual < tol && state_residual < tol;
  }
};

PmpReport check_pmp(const ControlProblem& p,
                    const std::shared_ptr<const TrajectoryBundle>& bundle,
                    const ControlLaw& law, const Multiplier& mult, const TauSequence& tau);

struct SandwichEntry {
  double upper = 0.0;  // lambda * max sampled I_xi(tau_N) . e_j
  double mid = 0.0;    // psi(0) . e_j
  double lower = 0.0;  // lambda * I_0(t_end) . e_j
};

struct ConeReport {
  bool gradient_sign_ok = false;  // dg/dx >= 0 along the path
  bool offdiag_ok = false;        // df/dx has nonnegative off-diagonal entries
  bool zero_shift_ok = false;     // df/dx >= 0 entrywise (shift d == 0 admissible)
  double psi_nonneg = 0.0;        // min over grid and components of psi
  std::vector<SandwichEntry> sandwich;
  std::optional<double> strict_point;  // first t with dg/dx > 0 componentwise
  double shift_bound = 0.0;  // computed witness d: min diagonal of df/dx on path
  bool degenerate_flag = false;  // gradient integral grows without bound
  double gradient_integral = 0.0;
};

ConeReport monotone_report(const ControlProblem& p,
                           const std::shared_ptr<const TrajectoryBundle>& bundle,
                           const ControlLaw& law, const Multiplier& mult,
                           const SampleTable& table, double M_div = 1e6);

}  // namespace pmp

#endif
