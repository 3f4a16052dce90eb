#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pmp/problem.hpp"

using namespace pmp;

namespace {

Eigen::VectorXd scal(double v) { return Eigen::VectorXd::Constant(1, v); }

// draw an admissible control for either set variant
Eigen::VectorXd draw_control(const ControlSet& cs, double t, std::mt19937& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (cs.kind == ControlSet::Kind::Finite) {
    auto pts = cs.pts(t);
    return pts[std::uniform_int_distribution<size_t>(0, pts.size() - 1)(rng)];
  }
  Eigen::VectorXd lo = cs.lo(t), hi = cs.hi(t);
  Eigen::VectorXd u(lo.size());
  for (int i = 0; i < lo.size(); ++i) {
    double span = std::min(hi(i) - lo(i), 10.0);  // keep huge caps sane
    u(i) = lo(i) + span * unit(rng);
  }
  return u;
}

}  // namespace

TEST_CASE("registry: names and parameter validation") {
  for (const auto& n : registry_names()) CHECK_NOTHROW(registry_get(n));
  CHECK(registry_names().size() == 4);
  CHECK_THROWS_AS(registry_get("nope"), UnknownExample);
  CHECK_THROWS_AS(registry_get("avav", {{"b", -1.0}}), InvalidParams);
  CHECK_THROWS_AS(registry_get("avav", {{"sigma", 0.0}}), InvalidParams);
  CHECK_THROWS_AS(registry_get("linlin", {{"alpha", 2.0}, {"beta", 1.0}}), InvalidParams);
}

TEST_CASE("registry: candidate laws match the examples") {
  auto seisei = registry_get("seisei");
  CHECK(seisei.law(3.7)(0) == 1.0);

  auto linB = registry_get("linlin", {{"alpha", 2.0}, {"beta", 3.0}});
  CHECK(linB.law(0.0)(0) == 2.0);  // u == alpha when beta >= 1

  auto linA = registry_get("linlin", {{"alpha", 0.0}, {"beta", 0.5}});
  CHECK(linA.law(0.0)(0) == 0.5);  // u == beta when beta < 1

  auto av = registry_get("avav");
  CHECK(av.law(0.0)(0) == doctest::Approx(4.0 / 3.0));
  CHECK(av.known.has_value());
  CHECK((*av.known->I_star)(0) == doctest::Approx(0.5));
}

TEST_CASE("evaluate_dynamics: hand-checked values") {
  auto seisei = registry_get("seisei");
  auto r = evaluate_dynamics(seisei.problem, 0.0, scal(1.0), scal(1.0));
  CHECK(r.dx(0) == doctest::Approx(1.0));
  CHECK(r.reward_rate == doctest::Approx(1.0));

  auto stern = registry_get("sternstern");
  auto r2 = evaluate_dynamics(stern.problem, 0.0,
                              (Eigen::VectorXd(2) << 1.0, 0.0).finished(), scal(0.0));
  CHECK(r2.dx(0) == doctest::Approx(0.0));
  CHECK(r2.dx(1) == doctest::Approx(-1.0));
  CHECK(r2.reward_rate == doctest::Approx(0.0));

  // zero field
  ControlProblem p;
  p.state_dim = 2;
  p.control_dim = 1;
  p.x_init = Eigen::VectorXd::Zero(2);
  p.f = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    return Eigen::VectorXd::Zero(x.size()).eval();
  };
  p.g = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&) { return 0.0; };
  p.control_set = ControlSet::box(scal(0.0), scal(1.0));
  auto r3 = evaluate_dynamics(p, 1.0, (Eigen::VectorXd(2) << 5, -3).finished(), scal(0.5));
  CHECK(r3.dx.norm() == 0.0);
}

TEST_CASE("jacobian_x: hand-checked values") {
  auto seisei = registry_get("seisei");
  auto j = jacobian_x(seisei.problem, 1.0, scal(2.0), scal(0.75));
  CHECK(j.F(0, 0) == doctest::Approx(0.75));
  CHECK(j.G(0) == doctest::Approx(std::exp(-2.0)));

  auto stern = registry_get("sternstern");
  auto j2 = jacobian_x(stern.problem, 0.3, (Eigen::VectorXd(2) << 0.2, 0.1).finished(),
                       scal(0.5));
  CHECK(j2.F(0, 1) == doctest::Approx(1.0));
  CHECK(j2.F(1, 0) == doctest::Approx(-1.0));
  CHECK(j2.G(1) == doctest::Approx(1.0));

  // linear map: exact derivative
  Eigen::MatrixXd M = (Eigen::MatrixXd(2, 2) << 1, 2, 3, 4).finished();
  ControlProblem p;
  p.state_dim = 2;
  p.control_dim = 2;
  p.x_init = Eigen::VectorXd::Zero(2);
  p.f = [M](double, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return (M * x + u).eval();
  };
  p.g = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&) { return 0.0; };
  p.control_set = ControlSet::box(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2));
  auto j3 = jacobian_x(p, 0.0, (Eigen::VectorXd(2) << 1, 1).finished(),
                       Eigen::VectorXd::Zero(2));
  CHECK((j3.F - M).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("analytic vs finite-difference Jacobians, 100 samples per problem") {
  std::mt19937 rng(424242);
  std::uniform_real_distribution<double> tdist(0.0, 10.0);
  std::uniform_real_distribution<double> xdist(0.3, 3.0);
  for (const auto& name : registry_names()) {
    auto entry = registry_get(name);
    ControlProblem& p = entry.problem;
    REQUIRE(p.dfdx);
    REQUIRE(p.dgdx);
    // the same problem with the markers cleared falls back to differences
    ControlProblem fd = p;
    fd.dfdx = nullptr;
    fd.dgdx = nullptr;
    for (int s = 0; s < 100; ++s) {
      double t = tdist(rng);
      Eigen::VectorXd x =
          Eigen::VectorXd::NullaryExpr(p.state_dim, [&](int) { return xdist(rng); });
      Eigen::VectorXd u = draw_control(p.control_set, t, rng);
      Eigen::MatrixXd Fa = p.jac_f(t, x, u), Fn = fd.jac_f(t, x, u);
      Eigen::RowVectorXd Ga = p.jac_g(t, x, u), Gn = fd.jac_g(t, x, u);
      CHECK((Fa - Fn).lpNorm<Eigen::Infinity>() / (1.0 + Fa.lpNorm<Eigen::Infinity>()) <
            1e-5);
      CHECK((Ga - Gn).lpNorm<Eigen::Infinity>() / (1.0 + Ga.lpNorm<Eigen::Infinity>()) <
            1e-5);
    }
  }
}

TEST_CASE("registry determinism: identical inputs give bit-identical values") {
  auto a = registry_get("sternstern", {{"varsigma", 1.25}});
  auto b = registry_get("sternstern", {{"varsigma", 1.25}});
  CHECK(a.problem.x_init == b.problem.x_init);
  for (double t : {0.0, 1.0, 2.5, 7.75}) {
    CHECK(a.law(t) == b.law(t));
    CHECK(a.known->I(t) == b.known->I(t));
    CHECK(a.known->psi(t) == b.known->psi(t));
  }
}

TEST_CASE("piecewise law: right-continuous with left limits") {
  auto law = ControlLaw::piecewise({0.0, 1.0, 2.0}, {scal(10.0), scal(20.0), scal(30.0)});
  CHECK(law(0.0)(0) == 10.0);
  CHECK(law(1.0)(0) == 20.0);          // right-continuous at the knot
  CHECK(law(1.0 - 1e-12)(0) == 10.0);  // left limit
  CHECK(law(2.5)(0) == 30.0);
  auto bp = law.breakpoints(0.0, 3.0);
  REQUIRE(bp.size() == 2);
  CHECK(bp[0] == 1.0);
  CHECK(bp[1] == 2.0);
  CHECK_THROWS_AS(ControlLaw::piecewise({1.0, 0.5}, {scal(1), scal(2)}), InvalidParams);
}

TEST_CASE("control set: projection residual") {
  auto box = ControlSet::box(scal(-1.0), scal(1.0));
  CHECK(box.projection_residual(0.0, scal(0.3)) == 0.0);
  CHECK(box.projection_residual(0.0, scal(1.5)) == doctest::Approx(0.5));
  auto fin = ControlSet::finite({scal(-1.0), scal(1.0)});
  CHECK(fin.projection_residual(0.0, scal(1.0)) == 0.0);
  CHECK(fin.projection_residual(0.0, scal(0.0)) == doctest::Approx(1.0));
  CHECK_THROWS_AS(ControlSet::finite({}), InvalidParams);
  CHECK_THROWS_AS(ControlSet::box(scal(1.0), scal(-1.0)), InvalidParams);
}

TEST_CASE("registry laws are admissible (projection residual 0)") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> tdist(0.0, 20.0);
  for (const auto& name : registry_names()) {
    auto entry = registry_get(name);
    for (int i = 0; i < 25; ++i) {
      double t = tdist(rng);
      CHECK(entry.problem.control_set.projection_residual(t, entry.law(t)) == 0.0);
    }
  }
}

TEST_CASE("tau sequences: validation") {
  auto g = TauSequence::geometric(5.0, 2.0, 6);
  REQUIRE(g.values.size() == 6);
  CHECK(g.values.back() == doctest::Approx(160.0));
  CHECK_THROWS_AS(TauSequence::geometric(5.0, 1.0, 6), InvalidParams);
  CHECK_THROWS_AS(TauSequence::geometric(5.0, 2.0, 2), InvalidParams);
  CHECK_THROWS_AS(TauSequence::explicit_times({1.0, 1.0, 2.0}), InvalidParams);
  CHECK_THROWS_AS(TauSequence::explicit_times({1.0, 2.0}), InvalidParams);
  CHECK_NOTHROW(TauSequence::explicit_times({1.0, 2.0, 3.0}));
}
