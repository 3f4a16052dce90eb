#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pmp/checker.hpp"
#include "pmp/shadow.hpp"

using namespace pmp;

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::VectorXd scal(double v) { return Eigen::VectorXd::Constant(1, v); }
Eigen::RowVectorXd rscal(double v) { return Eigen::RowVectorXd::Constant(1, v); }

IntegratorConfig tight() {
  IntegratorConfig cfg;
  cfg.rel_tol = 1e-10;
  cfg.abs_tol = 1e-12;
  return cfg;
}

std::shared_ptr<const TrajectoryBundle> bundle_of(const RegistryEntry& e, double t_end,
                                                  const IntegratorConfig& cfg = {}) {
  return std::make_shared<const TrajectoryBundle>(
      integrate_bundle(e.problem, e.law, Eigen::VectorXd::Zero(e.problem.state_dim),
                       t_end, cfg));
}

Multiplier make_mult(const std::shared_ptr<const TrajectoryBundle>& b,
                     const Eigen::RowVectorXd& psi0, double lambda) {
  Multiplier m;
  m.source = Multiplier::Source::Normal;
  m.lambda = lambda;
  m.psi = adjoint_via_cauchy(b, psi0, lambda);
  return m;
}

}  // namespace

TEST_CASE("hamiltonian: hand-checked values") {
  auto seisei = registry_get("seisei");
  CHECK(hamiltonian(seisei.problem, scal(1.0), 0.0, scal(1.0), 1.0, rscal(1.0)) ==
        doctest::Approx(2.0));
  CHECK(hamiltonian(seisei.problem, scal(1.0), 0.0, scal(1.0), 0.0, rscal(0.0)) == 0.0);

  auto stern = registry_get("sternstern");
  Eigen::VectorXd x = (Eigen::VectorXd(2) << 1.0, 0.0).finished();
  Eigen::RowVectorXd psi = (Eigen::RowVectorXd(2) << 1.0, 2.0).finished();
  // f = (0, -0.5), g = x2 = 0: H = 1*0 + 2*(-0.5) + 1*0 = -1
  CHECK(hamiltonian(stern.problem, x, 0.0, scal(0.5), 1.0, psi) == doctest::Approx(-1.0));
}

TEST_CASE("maximize_hamiltonian: boundary maximizers are exact") {
  auto seisei = registry_get("seisei");
  // H(u) = psi*u*x + lambda*g: increasing in u when psi*x > 0
  auto up = maximize_hamiltonian(seisei.problem, scal(1.0), 0.0, 1.0, rscal(1.0));
  CHECK(up.u_star(0) == 1.0);
  CHECK(up.H_star == doctest::Approx(2.0));
  auto down = maximize_hamiltonian(seisei.problem, scal(1.0), 0.0, 1.0, rscal(-1.0));
  CHECK(down.u_star(0) == 0.5);

  // bang-bang: u* = sgn(psi_2) at the box edge
  auto stern = registry_get("sternstern");
  Eigen::VectorXd x = (Eigen::VectorXd(2) << 0.3, -0.2).finished();
  for (double p2 : {1.0, -1.0, 0.4, -0.7}) {
    Eigen::RowVectorXd psi = (Eigen::RowVectorXd(2) << 0.8, p2).finished();
    auto r = maximize_hamiltonian(stern.problem, x, 1.0, 1.0, psi);
    CHECK(r.u_star(0) == (p2 > 0 ? 1.0 : -1.0));
  }
}

TEST_CASE("maximize_hamiltonian: interior maximizer of the concave example") {
  auto av = registry_get("avav");
  // stationarity: psi = lambda * disc(t) * b * u, so u* = psi / (b * disc(t))
  for (double t : {0.0, 1.0, 4.0}) {
    double x = std::pow(1.0 + t, 4.0 / 3.0);
    double psi = 0.5 / (1.0 + t);
    double expected = (4.0 / 3.0) * std::cbrt(1.0 + t);
    auto r = maximize_hamiltonian(av.problem, scal(x), t, 1.0, rscal(psi));
    CHECK(r.u_star(0) == doctest::Approx(expected).epsilon(1e-3));
  }
}

TEST_CASE("maximize_hamiltonian: ties break to the smallest control") {
  ControlProblem p;
  p.state_dim = 1;
  p.control_dim = 1;
  p.x_init = scal(1.0);
  p.f = [](double, const Eigen::VectorXd&, const Eigen::VectorXd& u) {
    return scal(u(0) * u(0));  // even in u: +-1 tie
  };
  p.g = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&) { return 0.0; };
  p.control_set = ControlSet::finite({scal(-1.0), scal(1.0), scal(0.0)});
  auto r = maximize_hamiltonian(p, scal(1.0), 0.0, 1.0, rscal(1.0));
  CHECK(r.u_star(0) == -1.0);
  CHECK(r.H_star == doctest::Approx(1.0));
}

TEST_CASE("maximize_hamiltonian: argmax invariant under positive scaling") {
  auto av = registry_get("avav");
  auto base = maximize_hamiltonian(av.problem, scal(1.0), 0.0, 1.0, rscal(0.5));
  auto scaled = maximize_hamiltonian(av.problem, scal(1.0), 0.0, 2.5, rscal(1.25));
  CHECK(scaled.u_star(0) == doctest::Approx(base.u_star(0)).epsilon(1e-9));
  CHECK(scaled.H_star == doctest::Approx(2.5 * base.H_star).epsilon(1e-9));
}

TEST_CASE("check_pmp: exponential example satisfies every condition") {
  auto e = registry_get("seisei");
  auto tau = TauSequence::geometric(5.0, 2.0, 6);
  auto b = bundle_of(e, tau.values.back(), tight());
  auto mult = make_mult(b, rscal(1.0), 1.0);  // psi(T) = e^(-2T)
  auto rep = check_pmp(e.problem, b, e.law, mult, tau);
  CHECK(rep.residuals_ok());
  CHECK(rep.normalization_defect < 1e-9);
  CHECK(rep.max_residual < 1e-8);  // the law is the exact maximizer
  CHECK(rep.transversality.trans_ok);
  CHECK(rep.transversality.lim_ok);
  CHECK(rep.transversality.partlim1_min < 1e-3);
  CHECK(rep.lem1_check < 1e-9);
}

TEST_CASE("check_pmp: decay slopes match the closed form on a short horizon") {
  // psi = (1 - I(T))e^-T: beyond T ~ 25 the factor 1 - I(T) sinks under the
  // integration-error floor of I, so slopes are read off a short horizon
  auto e = registry_get("seisei");
  auto tau = TauSequence::geometric(1.0, 2.0, 4);  // 1, 2, 4, 8
  auto b = bundle_of(e, 8.0, tight());
  auto mult = make_mult(b, rscal(1.0), 1.0);
  auto rep = check_pmp(e.problem, b, e.law, mult, tau);
  CHECK(rep.transversality.trans_slope == doctest::Approx(-2.0).epsilon(1e-3));
  CHECK(rep.transversality.lim_slope == doctest::Approx(-1.0).epsilon(1e-3));
  // normalization halves psi: min_n ||psi(tau_n) A(tau_n)|| = e^-8 / 2
  CHECK(rep.transversality.partlim1_min ==
        doctest::Approx(std::exp(-8.0) / 2.0).epsilon(1e-4));
}

TEST_CASE("check_pmp: matched and mismatched sampling phases") {
  auto e = registry_get("sternstern", {{"varsigma", kPi / 3}});
  std::vector<double> match, mismatch;
  for (int k = 1; k <= 3; ++k) {
    match.push_back(2 * kPi * k + kPi / 3);
    mismatch.push_back(2 * kPi * k + kPi);
  }
  auto b = bundle_of(e, mismatch.back(), tight());
  Eigen::RowVectorXd I_phase =
      (Eigen::RowVectorXd(2) << std::cos(kPi / 3) - 1.0, std::sin(kPi / 3)).finished();
  auto mult = make_mult(b, I_phase, 1.0);

  auto good = check_pmp(e.problem, b, e.law, mult, TauSequence::explicit_times(match));
  CHECK(good.transversality.partlim1_min < 1e-6);
  CHECK(good.transversality.partlim_min < 1e-6);

  auto bad = check_pmp(e.problem, b, e.law, mult, TauSequence::explicit_times(mismatch));
  // ||psi(tau) A(tau)|| = ||I(pi/3) - I(pi)|| = sqrt(3), halved by normalization
  CHECK(bad.transversality.partlim1_min ==
        doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-4));
}

TEST_CASE("check_pmp: finite-tau approximant vanishes at its own tau exactly") {
  auto e = registry_get("seisei");
  auto tau = TauSequence::explicit_times({3.0, 6.0, 9.0});
  auto b = bundle_of(e, 9.0);
  auto path = finite_tau_approximant(b, tau, 2, 1.0);
  Multiplier mult;
  mult.source = Multiplier::Source::FiniteTauApprox;
  mult.approx_index = 2;
  mult.lambda = 1.0;
  mult.psi = path;
  auto rep = check_pmp(e.problem, b, e.law, mult, tau);
  CHECK(rep.transversality.partlim_min == 0.0);
  CHECK(rep.transversality.partlim1_min == 0.0);
}

TEST_CASE("check_pmp: zero multiplier is flagged by the normalization") {
  auto e = registry_get("seisei");
  auto tau = TauSequence::explicit_times({1.0, 2.0, 3.0});
  auto b = bundle_of(e, 3.0);
  auto mult = make_mult(b, rscal(0.0), 0.0);
  auto rep = check_pmp(e.problem, b, e.law, mult, tau);
  CHECK(rep.normalization_defect == 1.0);
}

TEST_CASE("check_pmp: tau beyond the bundle raises GridMismatch") {
  auto e = registry_get("seisei");
  auto b = bundle_of(e, 3.0);
  auto mult = make_mult(b, rscal(1.0), 1.0);
  CHECK_THROWS_AS(
      check_pmp(e.problem, b, e.law, mult, TauSequence::explicit_times({1.0, 2.0, 4.0})),
      GridMismatch);
}

TEST_CASE("monotone_report: exponential example passes the full cone suite") {
  auto e = registry_get("seisei");
  auto tau = TauSequence::geometric(5.0, 2.0, 6);
  auto sample = sample_I(e.problem, e.law, tau);
  auto v = classify_limit(sample.table);
  REQUIRE(v.kind == LimitVerdict::Kind::Converged);
  auto mult = build_multiplier(v, sample.nominal_bundle);
  auto rep = monotone_report(e.problem, sample.nominal_bundle, e.law, mult, sample.table);
  CHECK(rep.gradient_sign_ok);
  CHECK(rep.offdiag_ok);
  CHECK(rep.zero_shift_ok);
  CHECK(rep.psi_nonneg >= 0.0);
  REQUIRE(rep.strict_point.has_value());
  CHECK(*rep.strict_point == 0.0);
  CHECK(rep.gradient_integral == doctest::Approx(0.5).epsilon(1e-2));
  CHECK_FALSE(rep.degenerate_flag);
  REQUIRE(rep.sandwich.size() == 1);
  CHECK(rep.sandwich[0].upper >= rep.sandwich[0].mid - 1e-6);
  CHECK(rep.sandwich[0].mid >= rep.sandwich[0].lower - 1e-6);
  CHECK(rep.sandwich[0].lower >= -1e-6);
  CHECK(rep.sandwich[0].mid == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("monotone_report: rotation violates the off-diagonal condition") {
  auto e = registry_get("sternstern");
  auto tau = TauSequence::explicit_times({2 * kPi, 4 * kPi, 6 * kPi});
  auto sample = sample_I(e.problem, e.law, tau);
  auto b = sample.nominal_bundle;
  auto mult = make_mult(b, Eigen::RowVectorXd::Zero(2), 1.0);
  auto rep = monotone_report(e.problem, b, e.law, mult, sample.table);
  CHECK_FALSE(rep.offdiag_ok);   // dx1'/dx2 = 1 but dx2'/dx1 = -1
  CHECK_FALSE(rep.zero_shift_ok);
  CHECK(rep.gradient_sign_ok);   // dg/dx = (0, 1)
}

TEST_CASE("monotone_report: unbounded gradient integral sets the degenerate flag") {
  auto e = registry_get("linlin", {{"alpha", 0.0}, {"beta", 0.5}});
  auto tau = TauSequence::geometric(5.0, 2.0, 6);
  auto sample = sample_I(e.problem, e.law, tau);
  auto v = classify_limit(sample.table);
  REQUIRE(v.kind == LimitVerdict::Kind::Diverged);
  auto mult = build_multiplier(v, sample.nominal_bundle);
  auto rep = monotone_report(e.problem, sample.nominal_bundle, e.law, mult, sample.table);
  CHECK(rep.gradient_sign_ok);   // dg/dx = 1 - u = 0.5
  CHECK(rep.zero_shift_ok);      // df/dx = u = 0.5 >= 0
  CHECK(rep.degenerate_flag);    // integral grows linearly: 0.5 * t
  CHECK(rep.gradient_integral == doctest::Approx(80.0).epsilon(1e-2));
  CHECK(mult.lambda == 0.0);     // only the degenerate multiplier survives
}
