#ifndef PMP_BVP_HPP
#define PMP_BVP_HPP

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "pmp/ode.hpp"

namespace pmp {

struct NoBracket : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MaxIterations : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PathBlowup : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// First-order system closed over the Hamiltonian argmax, with some initial
/// components known and the rest found by shooting against a terminal
/// condition.
struct ClosedSystem {
  int dim = 0;
  OdeRhs rhs;
  std::vector<int> known_idx;
  Eigen::VectorXd known_vals;  // aligned with known_idx
  std::vector<int> shoot_idx;

  /// Residual at the terminal state; the shot drives it to zero.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> terminal_condition;

  /// Feasibility predicate checked at every accepted node (e.g. positivity
  /// guards); violation marks the initial guess infeasible.
  std::function<bool(double, const Eigen::VectorXd&)> guard;

  std::vector<std::string> names;  // z1..zn labels for dumps
};

struct ShootResult {
  Eigen::VectorXd init_values;  // solved shoot components
  double terminal_residual = 0.0;
  OdeSolution solution;
  int iterations = 0;
  bool converged = false;
};

struct SearchBox {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

/// Capital-accumulation example: z1' = -nu z1 + (e^{nu t}/(b h(t))) z2,
/// z2' = -sigma g(t) e^{-nu t} z1^{sigma-1}, z1(0) = K0 known, z2(0) shot
/// against z2(T_max) = 0 with the guard z2 > 0, z1 > 0 along the path.
/// g_src and h_src are DSL expressions in t.
ClosedSystem build_avav_system(double nu, double sigma, double b, double K0,
                               const std::string& g_src = "(1+t)^(-4/3)",
                               const std::string& h_src = "(1+t)^(-4/3)");

/// Scalar unknown: bisection over the bracket to tol, then 5 Newton polish
/// steps with finite-difference sensitivity.  Vector unknown: damped Newton
/// with finite-difference Jacobian, at most 50 iterations.
ShootResult shoot(const ClosedSystem& sys, const SearchBox& search, double T_max,
                  double tol = 1e-8, const IntegratorConfig& cfg = {});

struct VerifyReport {
  double terminal_residual_tight = 0.0;  // residual re-integrated at 10x tighter tol
  double init_shift = 0.0;               // change of the shot components, coarse vs tight
  bool has_reference = false;
  Eigen::VectorXd max_rel_dev;  // per component, over [t_lo, t_hi]
};

/// Re-integrates the solved path at 10x tighter tolerance; when a reference
/// z(t) is supplied, also reports per-component max relative deviation over
/// [t_lo, t_hi].
VerifyReport verify_solution(const ClosedSystem& sys, const ShootResult& result,
                             double T_max, const IntegratorConfig& cfg = {},
                             const std::function<Eigen::VectorXd(double)>& reference = {},
                             double t_lo = 0.0, double t_hi = -1.0);

/// Repeats the shot for each horizon and extrapolates the shot initial values
/// assuming O(1/T_max) truncation error.  Returns per-horizon results plus
/// the extrapolated initial values.
struct RichardsonResult {
  std::vector<double> horizons;
  std::vector<ShootResult> runs;
  Eigen::VectorXd extrapolated;
};

RichardsonResult shoot_richardson(const ClosedSystem& sys, const SearchBox& search,
                                  const std::vector<double>& horizons, double tol = 1e-8,
                                  const IntegratorConfig& cfg = {});

}  // namespace pmp

#endif
