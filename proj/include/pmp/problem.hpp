#ifndef PMP_PROBLEM_HPP
#define PMP_PROBLEM_HPP

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmp {

struct UnknownExample : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidParams : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Admissible control region U(t): a time-dependent box or a finite point set.
struct ControlSet {
  enum class Kind { Box, Finite };
  Kind kind = Kind::Box;
  std::function<Eigen::VectorXd(double)> lo, hi;            // Box
  std::function<std::vector<Eigen::VectorXd>(double)> pts;  // Finite

  static ControlSet box(Eigen::VectorXd lo, Eigen::VectorXd hi);
  static ControlSet box_fn(std::function<Eigen::VectorXd(double)> lo,
                           std::function<Eigen::VectorXd(double)> hi);
  static ControlSet finite(std::vector<Eigen::VectorXd> points);

  /// Euclidean distance from u to the set at time t (0 iff admissible).
  double projection_residual(double t, const Eigen::VectorXd& u) const;
};

/// A control as a function of time: closed form, or piecewise constant
/// (right-continuous with left limits at grid points).
struct ControlLaw {
  std::function<Eigen::VectorXd(double)> fn;  // closed form, null if piecewise
  std::vector<double> knots;                  // piecewise variant
  std::vector<Eigen::VectorXd> values;        // values[i] on [knots[i], knots[i+1])

  static ControlLaw closed_form(std::function<Eigen::VectorXd(double)> f);
  static ControlLaw constant(Eigen::VectorXd u);
  static ControlLaw piecewise(std::vector<double> knots,
                              std::vector<Eigen::VectorXd> values);

  bool piecewise_constant() const { return !fn; }
  Eigen::VectorXd operator()(double t) const;
  /// Grid times in (t0, t1) that the integrator must hit exactly.
  std::vector<double> breakpoints(double t0, double t1) const;
};

/// Strictly increasing evaluation times approximating tau -> infinity.
struct TauSequence {
  std::vector<double> values;

  static TauSequence geometric(double t0, double ratio, int n);
  static TauSequence explicit_times(std::vector<double> values);
};

using VectorField =
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>;
using ScalarField =
    std::function<double(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>;
using MatrixField =
    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>;
using CovectorField =
    std::function<Eigen::RowVectorXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>;

struct ControlProblem {
  int state_dim = 0;
  int control_dim = 0;
  Eigen::VectorXd x_init;
  VectorField f;
  ScalarField g;
  MatrixField dfdx;    // null -> central finite differences
  CovectorField dgdx;  // null -> central finite differences
  ControlSet control_set;

  /// Jacobians, falling back to scale-aware central differences
  /// with step h = max(1e-6, 1e-6*||x||).
  Eigen::MatrixXd jac_f(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  Eigen::RowVectorXd jac_g(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
};

struct EvalResult {
  Eigen::VectorXd dx;
  double reward_rate = 0.0;
};

EvalResult evaluate_dynamics(const ControlProblem& p, double t, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u);

struct JacobianResult {
  Eigen::MatrixXd F;
  Eigen::RowVectorXd G;
};

JacobianResult jacobian_x(const ControlProblem& p, double t, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u);

/// Closed-form reference paths where the source problem states them.
struct KnownSolution {
  std::function<Eigen::VectorXd(double)> x;         // nominal trajectory
  std::function<Eigen::MatrixXd(double)> A;         // fundamental matrix
  std::function<Eigen::RowVectorXd(double)> I;      // sensitivity covector
  std::function<Eigen::RowVectorXd(double)> psi;    // shadow price, may be null
  double lambda = 1.0;
  std::optional<Eigen::RowVectorXd> I_star;         // finite limit when it exists
};

struct RegistryEntry {
  ControlProblem problem;
  ControlLaw law;
  std::optional<KnownSolution> known;
};

RegistryEntry registry_get(const std::string& name,
                           const std::map<std::string, double>& params = {});
std::vector<std::string> registry_names();

}  // namespace pmp

#endif
