#include "pmp/shadow.hpp"

#include <algorithm>
#include <cmath>

namespace pmp {

std::string LimitVerdict::kind_name() const {
  switch (kind) {
    case Kind::Converged: return "Converged";
    case Kind::Diverged: return "Diverged";
    case Kind::Oscillating: return "Oscillating";
  }
  return "";
}

SampleResult sample_I(const ControlProblem& p, const ControlLaw& law, const TauSequence& tau,
                      const BallSpec& ball, const IntegratorConfig& cfg) {
  const int m = p.state_dim;
  const double t_end = tau.values.back();

  std::vector<std::pair<Eigen::VectorXd, int>> xis;
  xis.emplace_back(Eigen::VectorXd::Zero(m), -1);
  for (int l = 0; l < ball.levels; ++l) {
    double r = ball.radius * std::pow(2.0, -l);
    for (int j = 0; j < m; ++j) {
      for (double sgn : {+1.0, -1.0}) {
        Eigen::VectorXd xi = Eigen::VectorXd::Zero(m);
        xi(j) = sgn * r;
        xis.emplace_back(std::move(xi), l);
      }
    }
  }

  SampleResult out;
  out.table.taus = tau.values;
  for (auto& [xi, level] : xis) {
    SampleTable::Row row;
    row.xi = xi;
    row.level = level;
    try {
      auto bundle = std::make_shared<const TrajectoryBundle>(
          integrate_bundle(p, law, xi, t_end, cfg));
      for (double t : tau.values) row.I.push_back(bundle->I(t));
      if (level == -1) out.nominal_bundle = bundle;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      if (level == -1) throw;  // nominal failure is fatal
    }
    out.table.rows.push_back(std::move(row));
  }
  return out;
}

std::vector<double> ball_deviations(const SampleTable& t, bool normalize) {
  int max_level = -1;
  for (const auto& r : t.rows) max_level = std::max(max_level, r.level);
  std::vector<double> dev(static_cast<size_t>(max_level + 1), 0.0);
  size_t last = t.taus.size() - 1;
  Eigen::RowVectorXd ref = t.nominal().I[last];
  if (normalize && ref.norm() > 0) ref /= ref.norm();
  for (const auto& r : t.rows) {
    if (r.level < 0 || !r.ok) continue;
    Eigen::RowVectorXd v = r.I[last];
    if (normalize && v.norm() > 0) v /= v.norm();
    dev[static_cast<size_t>(r.level)] =
        std::max(dev[static_cast<size_t>(r.level)], (v - ref).norm());
  }
  return dev;
}

namespace {

bool uniformity_check(const SampleTable& t, double eps, bool normalize) {
  auto dev = ball_deviations(t, normalize);
  if (dev.empty()) return true;
  for (size_t l = 1; l < dev.size(); ++l)
    if (dev[l] > dev[l - 1] + 1e-12) return false;
  return dev.back() < eps;
}

}  // namespace

LimitVerdict classify_limit(const SampleTable& table, double eps_conv, double M_div) {
  if (table.taus.size() < 3 || table.rows.empty() || !table.nominal().ok)
    throw InsufficientData("need at least 3 tau rows and a nominal sample");

  const auto& I0 = table.nominal().I;
  const size_t N = I0.size();

  LimitVerdict v;
  v.evidence.reserve(N);
  for (const auto& In : I0) v.evidence.push_back(In.norm());

  // Convergent case: tail of the nominal sequence is Cauchy, and the
  // xi-ball deviations shrink with the radius.
  bool tail_cauchy = (I0[N - 1] - I0[N - 2]).norm() < eps_conv &&
                     (I0[N - 2] - I0[N - 3]).norm() < eps_conv;
  if (tail_cauchy) {
    v.uniformity_ok = uniformity_check(table, eps_conv, /*normalize=*/false);
    if (v.uniformity_ok) {
      v.kind = LimitVerdict::Kind::Converged;
      v.I_star = I0[N - 1];
      return v;
    }
  }

  // Divergent case: norms increase and either blow past M_div or keep
  // doubling, while the unit directions settle.
  bool increasing = true;
  for (size_t n = 1; n < N; ++n)
    if (v.evidence[n] <= v.evidence[n - 1]) increasing = false;
  bool big = v.evidence[N - 1] > M_div;
  bool doubling = v.evidence[N - 1] >= 2.0 * v.evidence[N - 2] &&
                  v.evidence[N - 2] >= 2.0 * v.evidence[N - 3];
  if (increasing && (big || doubling) && v.evidence[N - 1] > 0) {
    Eigen::RowVectorXd d_last = I0[N - 1] / v.evidence[N - 1];
    Eigen::RowVectorXd d_prev = I0[N - 2] / v.evidence[N - 2];
    Eigen::RowVectorXd d_prev2 = I0[N - 3] / v.evidence[N - 3];
    if ((d_last - d_prev).norm() < eps_conv && (d_prev - d_prev2).norm() < eps_conv) {
      v.kind = LimitVerdict::Kind::Diverged;
      v.iota_star = d_last / d_last.norm();
      v.uniformity_ok = uniformity_check(table, eps_conv, /*normalize=*/true);
      return v;
    }
  }

  // Oscillating: greedy merge of tail samples within 2*eps_conv,
  // earliest tau index wins ties.
  v.kind = LimitVerdict::Kind::Oscillating;
  v.uniformity_ok = false;
  size_t tail_start = N >= 6 ? N - 6 : 0;
  for (size_t n = tail_start; n < N; ++n) {
    bool merged = false;
    for (auto& c : v.clusters) {
      if ((I0[n] - c).norm() <= 2.0 * eps_conv) {
        merged = true;
        break;
      }
    }
    if (!merged) v.clusters.push_back(I0[n]);
  }
  return v;
}

Multiplier build_multiplier_for_cluster(
    const Eigen::RowVectorXd& cluster_I,
    const std::shared_ptr<const TrajectoryBundle>& nominal) {
  Multiplier mult;
  mult.source = Multiplier::Source::Normal;
  mult.lambda = 1.0;
  mult.psi = adjoint_via_cauchy(nominal, cluster_I, 1.0);
  mult.psi.normalized = false;  // lambda = 1 satisfies the weak normalization
  return mult;
}

Multiplier build_multiplier(const LimitVerdict& v,
                            const std::shared_ptr<const TrajectoryBundle>& nominal) {
  if (v.kind == LimitVerdict::Kind::Oscillating)
    throw VerdictMismatch("oscillating verdict: build one multiplier per cluster");

  if (v.kind == LimitVerdict::Kind::Converged) {
    Multiplier mult = build_multiplier_for_cluster(v.I_star, nominal);
    return mult;
  }

  // Degenerate branch: lambda = 0, psi(T) = iota* A0^-1(T).
  // With ||iota*|| = 1 this already satisfies the lambda = 0 normalization.
  Multiplier mult;
  mult.source = Multiplier::Source::Degenerate;
  mult.lambda = 0.0;
  mult.psi = adjoint_via_cauchy(nominal, v.iota_star / v.iota_star.norm(), 0.0);
  mult.psi.normalized = true;
  return mult;
}

AdjointPath finite_tau_approximant(const std::shared_ptr<const TrajectoryBundle>& b,
                                   const TauSequence& tau, int n, double lambda_n) {
  if (n < 0 || n >= static_cast<int>(tau.values.size()))
    throw std::out_of_range("tau index out of range");
  double tn = tau.values[static_cast<size_t>(n)];
  if (tn > b->t_end() + 1e-12) throw std::out_of_range("tau_n beyond bundle end");
  Eigen::RowVectorXd psi0 = lambda_n * b->I(tn);
  return adjoint_via_cauchy(b, psi0, lambda_n);
}

DominationCertificate check_domination(const std::function<Eigen::MatrixXd(double)>& F,
                                       const std::function<Eigen::RowVectorXd(double)>& G,
                                       const std::function<double(double)>& omega,
                                       const std::function<double(double)>& m_shift,
                                       int state_dim, double t_end, double tail_bound,
                                       const IntegratorConfig& cfg) {
  const int m = state_dim;
  // Flat state: [B (m*m col-major), integral of m_shift (1)].
  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(m * m + 1);
  Eigen::Map<Eigen::MatrixXd>(y0.data(), m, m).setIdentity();

  OdeRhs rhs = [&](double t, const Eigen::VectorXd& y) {
    Eigen::Map<const Eigen::MatrixXd> B(y.data(), m, m);
    double ms = m_shift(t);
    Eigen::VectorXd dy(y.size());
    Eigen::Map<Eigen::MatrixXd>(dy.data(), m, m) =
        (F(t) + ms * Eigen::MatrixXd::Identity(m, m)) * B;
    dy(m * m) = ms;
    return dy;
  };

  auto sol = std::make_shared<OdeSolution>(integrate_ode(rhs, 0.0, y0, t_end, cfg));

  DominationCertificate cert;
  cert.tail_bound = tail_bound;
  cert.rescale = std::exp(sol->ys.back()(m * m));
  const double R = cert.rescale;
  cert.margin_fn = [sol, G, omega, R, m](double t) {
    Eigen::VectorXd y = sol->at(t);
    Eigen::Map<const Eigen::MatrixXd> B(y.data(), m, m);
    return omega(t) * R - (G(t) * B).norm();
  };

  cert.margin = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < sol->ts.size(); ++i) {
    double t = sol->ts[i];
    Eigen::Map<const Eigen::MatrixXd> B(sol->ys[i].data(), m, m);
    double gb = (G(t) * B).norm();
    double w = omega(t) * R;
    cert.grid.push_back(t);
    cert.B_star.push_back(B);
    cert.gb_norm.push_back(gb);
    cert.omega_scaled.push_back(w);
    cert.margin = std::min(cert.margin, w - gb);
  }
  // tiny negative slack: a certificate that is exactly tight in closed form
  // (omega == ||G B*||) lands at margin 0 only up to integration error
  cert.valid = cert.margin >= -1e-9 && std::isfinite(tail_bound);
  return cert;
}

}  // namespace pmp
