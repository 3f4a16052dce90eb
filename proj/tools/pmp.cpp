#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pmp/bvp.hpp"
#include "pmp/checker.hpp"
#include "pmp/io.hpp"
#include "pmp/ode.hpp"
#include "pmp/shadow.hpp"

namespace fs = std::filesystem;
using namespace pmp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitOscillating = 3;

struct CommonOpts {
  std::string problem_ref;
  std::vector<double> tau;
  double tau_t0 = 5.0, tau_ratio = 2.0;
  int tau_n = 6;
  double ball_radius = 0.01;
  int ball_levels = 3;
  double rel_tol = 1e-8, abs_tol = 1e-10;
  double eps_conv = 1e-4, M_div = 1e6;
  std::string out_dir;
  std::string format = "json";
};

TauSequence make_tau(const CommonOpts& o) {
  if (!o.tau.empty()) return TauSequence::explicit_times(o.tau);
  return TauSequence::geometric(o.tau_t0, o.tau_ratio, o.tau_n);
}

IntegratorConfig make_cfg(const CommonOpts& o) {
  IntegratorConfig cfg;
  cfg.rel_tol = o.rel_tol;
  cfg.abs_tol = o.abs_tol;
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& o, bool with_tau = true) {
  cmd->add_option("problem", o.problem_ref,
                  "builtin:<name>?k=v&... or a JSON problem file")
      ->required();
  if (with_tau) {
    cmd->add_option("--tau", o.tau, "explicit tau values (increasing)")->delimiter(',');
    cmd->add_option("--tau-t0", o.tau_t0, "first tau of the geometric default");
    cmd->add_option("--tau-ratio", o.tau_ratio, "geometric ratio (> 1)");
    cmd->add_option("--tau-n", o.tau_n, "number of geometric tau values");
  }
  cmd->add_option("--rel-tol", o.rel_tol, "integrator relative tolerance");
  cmd->add_option("--abs-tol", o.abs_tol, "integrator absolute tolerance");
  cmd->add_option("--out-dir", o.out_dir, "directory for report files");
  cmd->add_option("--format", o.format, "json|csv|both")
      ->check(CLI::IsMember({"json", "csv", "both"}));
}

void write_file(const std::string& dir, const std::string& name, const std::string& body) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / name, std::ios::binary);
  out << body;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

int cmd_list(bool as_json) {
  struct Row {
    const char* name;
    const char* params;
    const char* summary;
  };
  const std::vector<Row> rows = {
      {"seisei", "-", "scalar bilinear growth, u in [1/2, 1], reward x e^(-2t)"},
      {"sternstern", "varsigma=0", "planar oscillator, bang-bang u in [-1, 1]"},
      {"linlin", "alpha=0, beta=0.5", "scalar linear family, u in [alpha, beta] hull"},
      {"avav", "nu=0, sigma=0.5, b=0.375, K0=1, u_max=1e6",
       "capital accumulation with quadratic investment cost"},
  };
  if (as_json) {
    json arr = json::array();
    for (const auto& r : rows)
      arr.push_back({{"name", r.name}, {"params", r.params}, {"summary", r.summary}});
    std::cout << dump(arr);
  } else {
    for (const auto& r : rows)
      std::cout << r.name << "\t" << r.params << "\t" << r.summary << "\n";
  }
  return kExitOk;
}

int cmd_integrate(const CommonOpts& o, double t_end, const std::vector<double>& xi_in) {
  RegistryEntry entry = resolve_problem(o.problem_ref);
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(entry.problem.state_dim);
  for (size_t i = 0; i < xi_in.size() && i < static_cast<size_t>(xi.size()); ++i)
    xi(static_cast<int>(i)) = xi_in[i];
  TrajectoryBundle b = integrate_bundle(entry.problem, entry.law, xi, t_end, make_cfg(o));
  std::string csv = bundle_csv(b);
  write_file(o.out_dir, "bundle.csv", csv);
  if (o.out_dir.empty()) std::cout << csv;
  return kExitOk;
}

int cmd_shadow(const CommonOpts& o) {
  RegistryEntry entry = resolve_problem(o.problem_ref);
  TauSequence tau = make_tau(o);
  BallSpec ball{o.ball_radius, o.ball_levels};

  SampleResult sampled;
  try {
    sampled = sample_I(entry.problem, entry.law, tau, ball, make_cfg(o));
  } catch (const std::exception& e) {
    std::cerr << "pmp: integration failed for xi = 0 (nominal): " << e.what() << "\n";
    return kExitRuntime;
  }
  for (const auto& row : sampled.table.rows)
    if (!row.ok)
      std::cerr << "pmp: warning: integration failed for xi = ["
                << row.xi.transpose() << "]: " << row.error << "\n";

  LimitVerdict verdict = classify_limit(sampled.table, o.eps_conv, o.M_div);
  std::vector<Multiplier> mults;
  if (verdict.kind == LimitVerdict::Kind::Oscillating) {
    for (const auto& c : verdict.clusters)
      mults.push_back(build_multiplier_for_cluster(c, sampled.nominal_bundle));
  } else {
    mults.push_back(build_multiplier(verdict, sampled.nominal_bundle));
  }

  json out = verdict_to_json(verdict, mults);
  if (o.format != "csv") {
    std::cout << dump(out);
    write_file(o.out_dir, "verdict.json", dump(out));
  }
  if (o.format != "json") write_file(o.out_dir, "evidence.csv", evidence_csv(sampled.table));
  return verdict.kind == LimitVerdict::Kind::Oscillating ? kExitOscillating : kExitOk;
}

int cmd_check(const CommonOpts& o, const std::string& mult_file, bool cone) {
  RegistryEntry entry = resolve_problem(o.problem_ref);
  TauSequence tau = make_tau(o);

  std::ifstream in(mult_file);
  if (!in) throw InvalidParams("cannot open multiplier file '" + mult_file + "'");
  MultiplierSpec spec = multiplier_from_json(json::parse(in));

  auto bundle = std::make_shared<const TrajectoryBundle>(integrate_bundle(
      entry.problem, entry.law, Eigen::VectorXd::Zero(entry.problem.state_dim),
      tau.values.back(), make_cfg(o)));

  Multiplier mult;
  mult.source = spec.lambda == 0.0 ? Multiplier::Source::Degenerate
                                   : Multiplier::Source::Normal;
  mult.lambda = spec.lambda;
  mult.psi = adjoint_via_cauchy(bundle, spec.psi0, spec.lambda);

  PmpReport rep = check_pmp(entry.problem, bundle, entry.law, mult, tau);
  json out = report_to_json(rep);

  if (cone) {
    SampleResult sampled = sample_I(entry.problem, entry.law, tau,
                                    BallSpec{o.ball_radius, o.ball_levels}, make_cfg(o));
    ConeReport cr =
        monotone_report(entry.problem, bundle, entry.law, mult, sampled.table, o.M_div);
    out["cone"] = cone_report_to_json(cr);
  }
  std::cout << dump(out);
  write_file(o.out_dir, "report.json", dump(out));

  if (rep.normalization_defect > 1e-6) {
    std::cerr << "pmp: check failed: normalization defect " << rep.normalization_defect
              << "\n";
    return kExitCheckFailed;
  }
  if (!rep.residuals_ok()) {
    std::cerr << "pmp: check failed: residual thresholds not met\n";
    return kExitCheckFailed;
  }
  // for a normal multiplier, psi A0 = psi0 - I must come close to zero along
  // tau; the degenerate branch keeps ||psi A0|| = 1 by construction, so the
  // gate applies only when lambda > 0
  if (mult.lambda > 0.0 && rep.transversality.partlim1_min > 1e-3) {
    std::cerr << "pmp: check failed: partlim_1 not met (min "
              << rep.transversality.partlim1_min << ")\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

int cmd_bvp(double nu, double sigma, double b, double K0, const std::string& g_src,
            const std::string& h_src, const std::vector<double>& tmaxes,
            const std::vector<double>& bracket, double tol, const CommonOpts& o) {
  ClosedSystem sys = build_avav_system(nu, sigma, b, K0, g_src, h_src);
  SearchBox box;
  box.lo = Eigen::VectorXd::Constant(1, bracket.at(0));
  box.hi = Eigen::VectorXd::Constant(1, bracket.at(1));

  json out;
  ShootResult* primary = nullptr;
  RichardsonResult rich;
  if (tmaxes.size() > 1) {
    rich = shoot_richardson(sys, box, tmaxes, tol, make_cfg(o));
    json runs = json::array();
    for (size_t i = 0; i < rich.runs.size(); ++i) {
      json r = shoot_result_to_json(rich.runs[i]);
      r["T_max"] = rich.horizons[i];
      runs.push_back(r);
    }
    out = {{"schema_version", 1},
           {"runs", runs},
           {"extrapolated_init", to_json(rich.extrapolated)}};
    primary = &rich.runs.back();
  } else {
    double T = tmaxes.empty() ? 200.0 : tmaxes.front();
    rich.runs.push_back(shoot(sys, box, T, tol, make_cfg(o)));
    out = shoot_result_to_json(rich.runs.front());
    out["T_max"] = T;
    primary = &rich.runs.front();
  }
  std::cout << dump(out);
  write_file(o.out_dir, "shoot.json", dump(out));
  write_file(o.out_dir, "solution.csv", solution_csv(primary->solution, sys.names));
  return primary->converged ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tau-vanishing shadow prices for infinite-horizon optimal control"};
  app.require_subcommand(1);

  bool list_json = false;
  auto* list = app.add_subcommand("list", "list builtin problems");
  list->add_flag("--json", list_json, "machine-readable output");

  CommonOpts io_, so_, co_, bo_;
  double t_end = 20.0;
  std::vector<double> xi_in;
  auto* integrate = app.add_subcommand("integrate", "dump a trajectory bundle as CSV");
  add_common(integrate, io_, /*with_tau=*/false);
  integrate->add_option("--t-end", t_end, "integration horizon");
  integrate->add_option("--xi", xi_in, "initial-state perturbation")->delimiter(',');

  auto* shadow = app.add_subcommand("shadow", "classify the I-limit, build multipliers");
  add_common(shadow, so_);
  shadow->add_option("--ball-radius", so_.ball_radius, "xi-ball base radius");
  shadow->add_option("--ball-levels", so_.ball_levels, "number of halving levels");
  shadow->add_option("--eps-conv", so_.eps_conv, "Cauchy-tail tolerance");
  shadow->add_option("--M-div", so_.M_div, "divergence threshold");

  std::string mult_file;
  bool cone = false;
  auto* check = app.add_subcommand("check", "verify a multiplier candidate");
  add_common(check, co_);
  check->add_option("--multiplier", mult_file, "JSON file with {lambda, psi0}")
      ->required();
  check->add_flag("--cone", cone, "also run the monotone-cone report");
  check->add_option("--ball-radius", co_.ball_radius, "xi-ball base radius (cone report)");
  check->add_option("--M-div", co_.M_div, "divergence threshold (cone report)");

  double nu = 0.0, sigma = 0.5, bparam = 0.375, K0 = 1.0, tol = 1e-8;
  std::string g_src = "(1+t)^(-4/3)", h_src = "(1+t)^(-4/3)";
  std::vector<double> tmaxes, bracket = {0.01, 2.0};
  auto* bvp = app.add_subcommand("bvp", "solve the capital-accumulation boundary problem");
  std::string instance;
  bvp->add_option("instance", instance, "only 'avav' is built in")->required();
  bvp->add_option("--nu", nu, "discount shift");
  bvp->add_option("--sigma", sigma, "production exponent, in (0, 1]");
  bvp->add_option("--b", bparam, "investment cost coefficient");
  bvp->add_option("--K0", K0, "initial capital");
  bvp->add_option("--gfun", g_src, "reward weight g(t), DSL expression");
  bvp->add_option("--hfun", h_src, "cost weight h(t), DSL expression");
  bvp->add_option("--Tmax", tmaxes, "horizon(s); several values trigger extrapolation")
      ->delimiter(',');
  bvp->add_option("--bracket", bracket, "search bracket for I(0)")
      ->delimiter(',')
      ->expected(2);
  bvp->add_option("--tol", tol, "shooting tolerance");
  bvp->add_option("--rel-tol", bo_.rel_tol, "integrator relative tolerance");
  bvp->add_option("--abs-tol", bo_.abs_tol, "integrator absolute tolerance");
  bvp->add_option("--out-dir", bo_.out_dir, "directory for report files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) return cmd_list(list_json);
    if (integrate->parsed()) return cmd_integrate(io_, t_end, xi_in);
    if (shadow->parsed()) return cmd_shadow(so_);
    if (check->parsed()) return cmd_check(co_, mult_file, cone);
    if (bvp->parsed()) {
      if (instance != "avav") throw UnknownExample("unknown bvp instance '" + instance + "'");
      return cmd_bvp(nu, sigma, bparam, K0, g_src, h_src, tmaxes, bracket, tol, bo_);
    }
  } catch (const std::exception& e) {
    std::cerr << "pmp: error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
