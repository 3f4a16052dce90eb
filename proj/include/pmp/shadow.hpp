#ifndef PMP_SHADOW_HPP
#define PMP_SHADOW_HPP

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pmp/ode.hpp"
#include "pmp/problem.hpp"

namespace pmp {

struct InsufficientData : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VerdictMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BallSpec {
  double radius = 0.01;  // r0; directions are +-coordinate unit vectors
  int levels = 3;        // radii r0 * 2^-l, l = 0..levels-1
};

/// I_xi(tau_n) sampled for xi in {0} union {+-r0 2^-l e_j}.
struct SampleTable {
  std::vector<double> taus;
  struct Row {
    Eigen::VectorXd xi;
    int level = -1;  // -1 for the nominal row
    bool ok = true;  // integration succeeded
    std::string error;
    std::vector<Eigen::RowVectorXd> I;  // one entry per tau
  };
  std::vector<Row> rows;  // rows[0] is the nominal xi = 0

  const Row& nominal() const { return rows.front(); }
};

struct ShadowConfig {
  double eps_conv = 1e-4;
  double M_div = 1e6;
  IntegratorConfig integrator;
};

struct SampleResult {
  SampleTable table;
  std::shared_ptr<const TrajectoryBundle> nominal_bundle;
};

SampleResult sample_I(const ControlProblem& p, const ControlLaw& law, const TauSequence& tau,
                      const BallSpec& ball = {}, const IntegratorConfig& cfg = {});

struct LimitVerdict {
  enum class Kind { Converged, Diverged, Oscillating };
  Kind kind;
  Eigen::RowVectorXd I_star;                 // Converged
  Eigen::RowVectorXd iota_star;              // Diverged, unit norm
  std::vector<Eigen::RowVectorXd> clusters;  // Oscillating
  bool uniformity_ok = false;
  std::vector<double> evidence;  // ||I_0(tau_n)|| per n

  std::string kind_name() const;
};

LimitVerdict classify_limit(const SampleTable& table, double eps_conv = 1e-4,
                            double M_div = 1e6);

/// Largest gap ||I_xi(tau_N) - I_0(tau_N)|| per ball level (normalize
/// compares unit directions instead); the sampled uniformity proxy.
std::vector<double> ball_deviations(const SampleTable& table, bool normalize = false);

struct Multiplier {
  enum class Source { Normal, Degenerate, FiniteTauApprox };
  Source source;
  double lambda = 1.0;
  AdjointPath psi;
  int approx_index = -1;  // FiniteTauApprox only
};

/// Normal branch: lambda = 1, psi0 = I*; degenerate branch: lambda = 0,
/// psi(T) = iota* A0^-1(T).  Oscillating verdicts map to one multiplier
/// per cluster via build_multiplier_for_cluster.
Multiplier build_multiplier(const LimitVerdict& v,
                            const std::shared_ptr<const TrajectoryBundle>& nominal);
Multiplier build_multiplier_for_cluster(const Eigen::RowVectorXd& cluster_I,
                                        const std::shared_ptr<const TrajectoryBundle>& nominal);

/// psi_n(T) = lambda_n (I(tau_n) - I(T)) A^-1(T); vanishes at tau_n exactly.
AdjointPath finite_tau_approximant(const std::shared_ptr<const TrajectoryBundle>& b,
                                   const TauSequence& tau, int n, double lambda_n);

struct DominationCertificate {
  std::vector<double> grid;
  std::vector<Eigen::MatrixXd> B_star;  // solution of B' = (F + m Id) B
  double rescale = 1.0;                 // exp(integral of m_shift)
  double margin = 0.0;                  // min over grid of omega*R - ||G B*||
  bool valid = false;
  double tail_bound = 0.0;  // user-declared integral of omega beyond t_end

  /// Signed margin omega(t)*R - ||G(t)B_*(t)|| at arbitrary t (dense output).
  std::function<double(double)> margin_fn;
  double margin_at(double t) const { return margin_fn(t); }

  // stored sampled values for reporting
  std::vector<double> omega_scaled;
  std::vector<double> gb_norm;
};

/// Checks ||G(t) B_*(t)|| <= omega(t) * exp(int m) on [0, t_end], where
/// B_*' = (F + m Id) B_*, B_*(0) = Id.  A nonnegative margin certifies the
/// convergent classification with truncation tail bounded by tail_bound.
DominationCertificate check_domination(const std::function<Eigen::MatrixXd(double)>& F,
                                       const std::function<Eigen::RowVectorXd(double)>& G,
                                       const std::function<double(double)>& omega,
                                       const std::function<double(double)>& m_shift,
                                       int state_dim, double t_end, double tail_bound,
                                       const IntegratorConfig& cfg = {});

}  // namespace pmp

#endif
