#include "pmp/problem.hpp"

#include <algorithm>
#include <cmath>

#include "pmp/expr.hpp"

namespace pmp {

// --------------------------------------------------------------------------
// ControlSet
// --------------------------------------------------------------------------

ControlSet ControlSet::box(Eigen::VectorXd lo, Eigen::VectorXd hi) {
  if (lo.size() != hi.size()) throw InvalidParams("box bounds dimension mismatch");
  for (int i = 0; i < lo.size(); ++i)
    if (lo(i) > hi(i)) throw InvalidParams("box with lo > hi");
  ControlSet s;
  s.kind = Kind::Box;
  s.lo = [lo](double) { return lo; };
  s.hi = [hi](double) { return hi; };
  return s;
}

ControlSet ControlSet::box_fn(std::function<Eigen::VectorXd(double)> lo,
                              std::function<Eigen::VectorXd(double)> hi) {
  ControlSet s;
  s.kind = Kind::Box;
  s.lo = std::move(lo);
  s.hi = std::move(hi);
  return s;
}

ControlSet ControlSet::finite(std::vector<Eigen::VectorXd> points) {
  if (points.empty()) throw InvalidParams("finite control set must be nonempty");
  ControlSet s;
  s.kind = Kind::Finite;
  s.pts = [points](double) { return points; };
  return s;
}

double ControlSet::projection_residual(double t, const Eigen::VectorXd& u) const {
  if (kind == Kind::Box) {
    Eigen::VectorXd p = u.cwiseMax(lo(t)).cwiseMin(hi(t));
    return (u - p).norm();
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts(t)) best = std::min(best, (u - p).norm());
  return best;
}

// --------------------------------------------------------------------------
// ControlLaw
// --------------------------------------------------------------------------

ControlLaw ControlLaw::closed_form(std::function<Eigen::VectorXd(double)> f) {
  ControlLaw l;
  l.fn = std::move(f);
  return l;
}

ControlLaw ControlLaw::constant(Eigen::VectorXd u) {
  return closed_form([u = std::move(u)](double) { return u; });
}

ControlLaw ControlLaw::piecewise(std::vector<double> knots,
                                 std::vector<Eigen::VectorXd> values) {
  if (knots.size() != values.size() || knots.empty())
    throw InvalidParams("piecewise law needs one value per knot");
  if (!std::is_sorted(knots.begin(), knots.end()))
    throw InvalidParams("piecewise knots must be sorted");
  ControlLaw l;
  l.knots = std::move(knots);
  l.values = std::move(values);
  return l;
}

Eigen::VectorXd ControlLaw::operator()(double t) const {
  if (fn) return fn(t);
  // right-continuous: value[i] applies on [knots[i], knots[i+1])
  auto it = std::upper_bound(knots.begin(), knots.end(), t);
  size_t i = it == knots.begin() ? 0 : static_cast<size_t>(it - knots.begin()) - 1;
  return values[i];
}

std::vector<double> ControlLaw::breakpoints(double t0, double t1) const {
  std::vector<double> out;
  for (double k : knots)
    if (k > t0 && k < t1) out.push_back(k);
  return out;
}

// --------------------------------------------------------------------------
// TauSequence
// --------------------------------------------------------------------------

TauSequence TauSequence::geometric(double t0, double ratio, int n) {
  if (t0 <= 0 || ratio <= 1.0 || n < 3)
    throw InvalidParams("geometric tau sequence needs t0>0, ratio>1, n>=3");
  TauSequence s;
  double v = t0;
  for (int i = 0; i < n; ++i) {
    s.values.push_back(v);
    v *= ratio;
  }
  return s;
}

TauSequence TauSequence::explicit_times(std::vector<double> values) {
  if (values.size() < 3) throw InvalidParams("tau sequence needs at least 3 times");
  for (size_t i = 0; i + 1 < values.size(); ++i)
    if (values[i] >= values[i + 1]) throw InvalidParams("tau sequence must strictly increase");
  if (values.front() <= 0) throw InvalidParams("tau times must be positive");
  TauSequence s;
  s.values = std::move(values);
  return s;
}

// --------------------------------------------------------------------------
// ControlProblem
// --------------------------------------------------------------------------

namespace {

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& v, const char* what) {
  if (!v.allFinite()) throw NonFiniteValue(what);
}

}  // namespace

Eigen::MatrixXd ControlProblem::jac_f(double t, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& u) const {
  if (dfdx) {
    Eigen::MatrixXd F = dfdx(t, x, u);
    require_finite(F, "df/dx is not finite");
    return F;
  }
  const double h = std::max(1e-6, 1e-6 * x.norm());
  Eigen::MatrixXd F(state_dim, state_dim);
  Eigen::VectorXd xp = x, xm = x;
  for (int j = 0; j < state_dim; ++j) {
    xp(j) += h;
    xm(j) -= h;
    F.col(j) = (f(t, xp, u) - f(t, xm, u)) / (2 * h);
    xp(j) = x(j);
    xm(j) = x(j);
  }
  require_finite(F, "finite-difference df/dx is not finite");
  return F;
}

Eigen::RowVectorXd ControlProblem::jac_g(double t, const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& u) const {
  if (dgdx) {
    Eigen::RowVectorXd G = dgdx(t, x, u);
    require_finite(G, "dg/dx is not finite");
    return G;
  }
  const double h = std::max(1e-6, 1e-6 * x.norm());
  Eigen::RowVectorXd G(state_dim);
  Eigen::VectorXd xp = x, xm = x;
  for (int j = 0; j < state_dim; ++j) {
    xp(j) += h;
    xm(j) -= h;
    G(j) = (g(t, xp, u) - g(t, xm, u)) / (2 * h);
    xp(j) = x(j);
    xm(j) = x(j);
  }
  require_finite(G, "finite-difference dg/dx is not finite");
  return G;
}

EvalResult evaluate_dynamics(const ControlProblem& p, double t, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u) {
  EvalResult r{p.f(t, x, u), p.g(t, x, u)};
  require_finite(r.dx, "f is not finite");
  if (!std::isfinite(r.reward_rate)) throw NonFiniteValue("g is not finite");
  return r;
}

JacobianResult jacobian_x(const ControlProblem& p, double t, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u) {
  return {p.jac_f(t, x, u), p.jac_g(t, x, u)};
}

// --------------------------------------------------------------------------
// Registry of worked examples
// --------------------------------------------------------------------------

namespace {

double get_param(const std::map<std::string, double>& params, const std::string& key,
                 double fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

Eigen::VectorXd scal(double v) { return Eigen::VectorXd::Constant(1, v); }
Eigen::RowVectorXd rscal(double v) { return Eigen::RowVectorXd::Constant(1, v); }

// dx = u*x, x(0)=1, u in [1/2,1], reward x*exp(-2t).
RegistryEntry make_seisei() {
  ControlProblem p;
  p.state_dim = 1;
  p.control_dim = 1;
  p.x_init = scal(1.0);
  p.f = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return (u(0) * x(0)) * Eigen::VectorXd::Ones(1);
  };
  p.g = [](double t, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    return x(0) * std::exp(-2.0 * t);
  };
  p.dfdx = [](double, const Eigen::VectorXd&, const Eigen::VectorXd& u) {
    return Eigen::MatrixXd::Constant(1, 1, u(0));
  };
  p.dgdx = [](double t, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return rscal(std::exp(-2.0 * t));
  };
  p.control_set = ControlSet::box(scal(0.5), scal(1.0));

  KnownSolution known;
  known.x = [](double t) { return scal(std::exp(t)); };
  known.A = [](double t) { return Eigen::MatrixXd::Constant(1, 1, std::exp(t)); };
  known.I = [](double t) { return rscal(1.0 - std::exp(-t)); };
  known.psi = [](double t) { return rscal(std::exp(-2.0 * t)); };
  known.lambda = 1.0;
  known.I_star = rscal(1.0);

  return {std::move(p), ControlLaw::constant(scal(1.0)), std::move(known)};
}

// dx = y, dy = -x + u, x(0)=(1,0), u in [-1,1], reward y.
RegistryEntry make_sternstern(const std::map<std::string, double>& params) {
  const double varsigma = get_param(params, "varsigma", 0.0);

  ControlProblem p;
  p.state_dim = 2;
  p.control_dim = 1;
  p.x_init = (Eigen::VectorXd(2) << 1.0, 0.0).finished();
  p.f = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return (Eigen::VectorXd(2) << x(1), -x(0) + u(0)).finished();
  };
  p.g = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd&) { return x(1); };
  p.dfdx = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return (Eigen::MatrixXd(2, 2) << 0, 1, -1, 0).finished();
  };
  p.dgdx = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return (Eigen::RowVectorXd(2) << 0, 1).finished();
  };
  p.control_set = ControlSet::box(scal(-1.0), scal(1.0));

  // candidate optimal control for phase varsigma: u(t) = sgn sin(varsigma - t)
  auto law = ControlLaw::closed_form([varsigma](double t) {
    double s = std::sin(varsigma - t);
    return scal(s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0));
  });

  KnownSolution known;
  known.A = [](double t) {
    return (Eigen::MatrixXd(2, 2) << std::cos(t), std::sin(t), -std::sin(t), std::cos(t))
        .finished();
  };
  known.I = [](double t) {
    return (Eigen::RowVectorXd(2) << std::cos(t) - 1.0, std::sin(t)).finished();
  };
  known.psi = [varsigma](double t) {
    return (Eigen::RowVectorXd(2) << std::cos(varsigma - t) - 1.0, std::sin(varsigma - t))
        .finished();
  };
  known.lambda = 1.0;
  known.I_star =
      (Eigen::RowVectorXd(2) << std::cos(varsigma) - 1.0, std::sin(varsigma)).finished();
  // nominal trajectory of the candidate law has no simple closed form; omitted
  known.x = nullptr;

  return {std::move(p), std::move(law), std::move(known)};
}

// Halkin-type: dx = u*x, x(0)=1, reward (1-u)*x, u in [alpha, beta].
RegistryEntry make_linlin(const std::map<std::string, double>& params) {
  const double alpha = get_param(params, "alpha", 0.0);
  const double beta = get_param(params, "beta", 0.5);
  if (alpha > beta) throw InvalidParams("linlin requires alpha <= beta");

  ControlProblem p;
  p.state_dim = 1;
  p.control_dim = 1;
  p.x_init = scal(1.0);
  p.f = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return scal(u(0) * x(0));
  };
  p.g = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return (1.0 - u(0)) * x(0);
  };
  p.dfdx = [](double, const Eigen::VectorXd&, const Eigen::VectorXd& u) {
    return Eigen::MatrixXd::Constant(1, 1, u(0));
  };
  p.dgdx = [](double, const Eigen::VectorXd&, const Eigen::VectorXd& u) {
    return rscal(1.0 - u(0));
  };
  p.control_set = ControlSet::box(scal(alpha), scal(beta));

  // candidate optimal law: u == beta when beta < 1, else u == alpha
  const double c = beta < 1.0 ? beta : alpha;

  KnownSolution known;
  known.x = [c](double t) { return scal(std::exp(c * t)); };
  known.A = [c](double t) { return Eigen::MatrixXd::Constant(1, 1, std::exp(c * t)); };
  known.I = [c](double t) {
    if (c == 0.0) return rscal(t);
    return rscal((1.0 - c) * (std::exp(c * t) - 1.0) / c);
  };
  known.lambda = (c == 1.0) ? 1.0 : 0.0;
  if (c == 1.0) known.I_star = rscal(0.0);

  return {std::move(p), ControlLaw::constant(scal(c)), std::move(known)};
}

// Capital-accumulation model: dx = -nu*x + u, reward g(t) x^sigma - (b/2) h(t) u^2,
// with g(t) = h(t) = (1+t)^(-4/3) by default and u in [0, u_max].
RegistryEntry make_avav(const std::map<std::string, double>& params) {
  const double nu = get_param(params, "nu", 0.0);
  const double sigma = get_param(params, "sigma", 0.5);
  const double b = get_param(params, "b", 0.375);
  const double K0 = get_param(params, "K0", 1.0);
  const double u_max = get_param(params, "u_max", 1e6);
  if (b <= 0) throw InvalidParams("avav requires b > 0");
  if (sigma <= 0 || sigma > 1) throw InvalidParams("avav requires sigma in (0,1]");
  if (K0 <= 0) throw InvalidParams("avav requires K0 > 0");
  if (nu < 0) throw InvalidParams("avav requires nu >= 0");

  auto disc = [](double t) { return std::pow(1.0 + t, -4.0 / 3.0); };

  ControlProblem p;
  p.state_dim = 1;
  p.control_dim = 1;
  p.x_init = scal(K0);
  p.f = [nu](double, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return scal(-nu * x(0) + u(0));
  };
  p.g = [sigma, b, disc](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return disc(t) * std::pow(x(0), sigma) - disc(t) * 0.5 * b * u(0) * u(0);
  };
  p.dfdx = [nu](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Constant(1, 1, -nu);
  };
  p.dgdx = [sigma, disc](double t, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    return rscal(sigma * disc(t) * std::pow(x(0), sigma - 1.0));
  };
  p.control_set = ControlSet::box(scal(0.0), scal(u_max));

  const bool paper_params = nu == 0.0 && sigma == 0.5 && b == 0.375 && K0 == 1.0;

  // candidate law from the model's closed form at the reference parameters
  auto law = ControlLaw::closed_form(
      [](double t) { return scal((4.0 / 3.0) * std::cbrt(1.0 + t)); });

  std::optional<KnownSolution> known;
  if (paper_params) {
    KnownSolution ks;
    ks.x = [](double t) { return scal(std::pow(1.0 + t, 4.0 / 3.0)); };
    ks.A = [](double) { return Eigen::MatrixXd::Constant(1, 1, 1.0); };
    ks.I = [](double t) { return rscal(0.5 * (1.0 - 1.0 / (1.0 + t))); };
    ks.psi = [](double t) { return rscal(0.5 / (1.0 + t)); };
    ks.lambda = 1.0;
    ks.I_star = rscal(0.5);
    known = std::move(ks);
  }

  return {std::move(p), std::move(law), std::move(known)};
}

}  // namespace

std::vector<std::string> registry_names() { return {"seisei", "sternstern", "linlin", "avav"}; }

RegistryEntry registry_get(const std::string& name,
                           const std::map<std::string, double>& params) {
  if (name == "seisei") return make_seisei();
  if (name == "sternstern") return make_sternstern(params);
  if (name == "linlin") return make_linlin(params);
  if (name == "avav") return make_avav(params);
  throw UnknownExample("unknown example '" + name + "'");
}

}  // namespace pmp
