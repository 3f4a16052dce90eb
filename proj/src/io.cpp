#include "pmp/io.hpp"

#include <fstream>
#include <sstream>

#include "pmp/expr.hpp"

namespace pmp {

json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json to_json(const Eigen::RowVectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

json multiplier_to_json(const Multiplier& m) {
  const char* src = m.source == Multiplier::Source::Normal      ? "normal"
                    : m.source == Multiplier::Source::Degenerate ? "degenerate"
                                                                 : "finite_tau_approx";
  json j = {{"lambda", m.lambda}, {"psi0", to_json(m.psi.psi0)}, {"source", src}};
  if (m.source == Multiplier::Source::FiniteTauApprox) j["approx_index"] = m.approx_index;
  return j;
}

MultiplierSpec multiplier_from_json(const json& j) {
  MultiplierSpec spec;
  spec.lambda = j.at("lambda").get<double>();
  Eigen::VectorXd v = vector_from_json(j.at("psi0"));
  spec.psi0 = v.transpose();
  return spec;
}

json verdict_to_json(const LimitVerdict& v, const std::vector<Multiplier>& multipliers) {
  json j;
  j["schema_version"] = 1;
  j["verdict"] = v.kind_name();
  j["uniformity_ok"] = v.uniformity_ok;
  switch (v.kind) {
    case LimitVerdict::Kind::Converged: j["I_star"] = to_json(v.I_star); break;
    case LimitVerdict::Kind::Diverged: j["iota_star"] = to_json(v.iota_star); break;
    case LimitVerdict::Kind::Oscillating: {
      json cl = json::array();
      for (const auto& c : v.clusters) cl.push_back(to_json(c));
      j["clusters"] = cl;
      break;
    }
  }
  if (!multipliers.empty()) {
    j["lambda"] = multipliers.front().lambda;
    j["psi0"] = to_json(multipliers.front().psi.psi0);
  }
  json ms = json::array();
  for (const auto& m : multipliers) ms.push_back(multiplier_to_json(m));
  j["multipliers"] = ms;
  json ev = json::array();
  for (double e : v.evidence) ev.push_back(e);
  j["evidence_table"] = ev;
  return j;
}

json report_to_json(const PmpReport& rep) {
  const auto& tr = rep.transversality;
  return {{"schema_version", 1},
          {"max_residual", rep.max_residual},
          {"adjoint_residual", rep.adjoint_residual},
          {"state_residual", rep.state_residual},
          {"normalization_defect", rep.normalization_defect},
          {"lem1_check", rep.lem1_check},
          {"transversality",
           {{"trans_norm", tr.trans_norm},
            {"trans_slope", tr.trans_slope},
            {"trans_ok", tr.trans_ok},
            {"partlim_min", tr.partlim_min},
            {"lim_norm", tr.lim_norm},
            {"lim_slope", tr.lim_slope},
            {"lim_ok", tr.lim_ok},
            {"partlim_1_min", tr.partlim1_min}}}};
}

json cone_report_to_json(const ConeReport& rep) {
  json sw = json::array();
  for (const auto& s : rep.sandwich)
    sw.push_back({{"upper", s.upper}, {"mid", s.mid}, {"lower", s.lower}});
  json j = {{"schema_version", 1},
            {"gradient_sign_ok", rep.gradient_sign_ok},
            {"offdiag_ok", rep.offdiag_ok},
            {"zero_shift_ok", rep.zero_shift_ok},
            {"psi_nonneg", rep.psi_nonneg},
            {"sandwich", sw},
            {"shift_bound", rep.shift_bound},
            {"degenerate_flag", rep.degenerate_flag},
            {"gradient_integral", rep.gradient_integral}};
  if (rep.strict_point)
    j["strict_point"] = *rep.strict_point;
  else
    j["strict_point"] = nullptr;
  return j;
}

json shoot_result_to_json(const ShootResult& r) {
  return {{"schema_version", 1},
          {"init_values", to_json(r.init_values)},
          {"terminal_residual", r.terminal_residual},
          {"iterations", r.iterations},
          {"converged", r.converged}};
}

namespace {

void put_num(std::ostream& os, double v) {
  char buf[32];
  snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

}  // namespace

std::string evidence_csv(const SampleTable& table) {
  std::ostringstream os;
  const int m = static_cast<int>(table.nominal().xi.size());
  os << "tau,level";
  for (int j = 0; j < m; ++j) os << ",xi" << j + 1;
  for (int j = 0; j < m; ++j) os << ",I" << j + 1;
  os << ",normI\n";
  for (const auto& row : table.rows) {
    if (!row.ok) continue;
    for (size_t n = 0; n < table.taus.size(); ++n) {
      put_num(os, table.taus[n]);
      os << ',' << row.level;
      for (int j = 0; j < m; ++j) {
        os << ',';
        put_num(os, row.xi(j));
      }
      for (int j = 0; j < m; ++j) {
        os << ',';
        put_num(os, row.I[n](j));
      }
      os << ',';
      put_num(os, row.I[n].norm());
      os << '\n';
    }
  }
  return os.str();
}

std::string bundle_csv(const TrajectoryBundle& b) {
  std::ostringstream os;
  const int m = b.state_dim();
  os << 't';
  for (int j = 0; j < m; ++j) os << ",x" << j + 1;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) os << ",A" << i + 1 << j + 1;
  for (int j = 0; j < m; ++j) os << ",I" << j + 1;
  os << ",J\n";
  for (size_t i = 0; i < b.grid().size(); ++i) {
    int n = static_cast<int>(i);
    put_num(os, b.grid()[i]);
    Eigen::VectorXd x = b.x_node(n);
    for (int j = 0; j < m; ++j) {
      os << ',';
      put_num(os, x(j));
    }
    Eigen::MatrixXd A = b.A_node(n);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) {
        os << ',';
        put_num(os, A(r, c));
      }
    Eigen::RowVectorXd I = b.I_node(n);
    for (int j = 0; j < m; ++j) {
      os << ',';
      put_num(os, I(j));
    }
    os << ',';
    put_num(os, b.J_node(n));
    os << '\n';
  }
  return os.str();
}

std::string solution_csv(const OdeSolution& sol, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << 't';
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (size_t i = 0; i < sol.ts.size(); ++i) {
    put_num(os, sol.ts[i]);
    for (int j = 0; j < sol.ys[i].size(); ++j) {
      os << ',';
      put_num(os, sol.ys[i](j));
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Problem documents
// ---------------------------------------------------------------------------

namespace {

std::vector<ExprPtr> parse_list(const json& j, Dims dims, const std::string& field) {
  if (!j.is_array()) throw InvalidParams("field '" + field + "' must be an array");
  std::vector<ExprPtr> out;
  for (const auto& s : j) out.push_back(parse(s.get<std::string>(), dims));
  return out;
}

// components given as numbers or DSL expressions of t
std::function<Eigen::VectorXd(double)> time_vector(const json& j, int k) {
  if (static_cast<int>(j.size()) != k) throw InvalidParams("control bound length mismatch");
  std::vector<ExprPtr> es;
  for (const auto& c : j)
    es.push_back(c.is_number() ? parse(std::to_string(c.get<double>()), {0, 0})
                               : parse(c.get<std::string>(), {0, 0}));
  return [es, k](double t) {
    EvalEnv env;
    env.t = t;
    Eigen::VectorXd v(k);
    for (int i = 0; i < k; ++i) v(i) = eval(es[static_cast<size_t>(i)], env);
    return v;
  };
}

}  // namespace

RegistryEntry load_problem_json(const json& doc) {
  RegistryEntry entry;
  ControlProblem& p = entry.problem;
  p.state_dim = doc.at("state_dim").get<int>();
  p.control_dim = doc.at("control_dim").get<int>();
  if (p.state_dim <= 0 || p.control_dim <= 0)
    throw InvalidParams("state_dim and control_dim must be positive");
  p.x_init = vector_from_json(doc.at("x_init"));
  if (p.x_init.size() != p.state_dim) throw InvalidParams("x_init length mismatch");

  const Dims dims{p.state_dim, p.control_dim};
  const int m = p.state_dim, k = p.control_dim;

  auto fs = parse_list(doc.at("f"), dims, "f");
  if (static_cast<int>(fs.size()) != m) throw InvalidParams("f needs state_dim components");
  p.f = [fs, m](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    EvalEnv env{t, x, u};
    Eigen::VectorXd v(m);
    for (int i = 0; i < m; ++i) v(i) = eval(fs[static_cast<size_t>(i)], env);
    return v;
  };

  ExprPtr ge = parse(doc.at("g").get<std::string>(), dims);
  p.g = [ge](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return eval(ge, EvalEnv{t, x, u});
  };

  // Jacobians: explicit DSL rows, the "finite-difference" marker, or (by
  // default) forward-mode differentiation of the f/g sources.
  if (!doc.contains("dfdx")) {
    p.dfdx = [fs, m](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
      Eigen::MatrixXd F(m, m);
      for (int i = 0; i < m; ++i)
        F.row(i) = grad_x(fs[static_cast<size_t>(i)], EvalEnv{t, x, u}).dx;
      return F;
    };
  } else if (!(doc["dfdx"].is_string() && doc["dfdx"] == "finite-difference")) {
    std::vector<ExprPtr> rows;
    for (const auto& row : doc["dfdx"])
      for (const auto& cell : row) rows.push_back(parse(cell.get<std::string>(), dims));
    if (static_cast<int>(rows.size()) != m * m)
      throw InvalidParams("dfdx needs an m-by-m array of expressions");
    p.dfdx = [rows, m](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
      EvalEnv env{t, x, u};
      Eigen::MatrixXd F(m, m);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
          F(i, j) = eval(rows[static_cast<size_t>(i * m + j)], env);
      return F;
    };
  }
  if (!doc.contains("dgdx")) {
    p.dgdx = [ge](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
      return grad_x(ge, EvalEnv{t, x, u}).dx;
    };
  } else if (!(doc["dgdx"].is_string() && doc["dgdx"] == "finite-difference")) {
    auto gs = parse_list(doc["dgdx"], dims, "dgdx");
    if (static_cast<int>(gs.size()) != m)
      throw InvalidParams("dgdx needs state_dim components");
    p.dgdx = [gs, m](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
      EvalEnv env{t, x, u};
      Eigen::RowVectorXd G(m);
      for (int i = 0; i < m; ++i) G(i) = eval(gs[static_cast<size_t>(i)], env);
      return G;
    };
  }

  const json& cs = doc.at("control_set");
  std::string kind = cs.at("kind").get<std::string>();
  if (kind == "box") {
    p.control_set = ControlSet::box_fn(time_vector(cs.at("lo"), k),
                                       time_vector(cs.at("hi"), k));
  } else if (kind == "finite") {
    std::vector<Eigen::VectorXd> pts;
    for (const auto& pt : cs.at("points")) pts.push_back(vector_from_json(pt));
    p.control_set = ControlSet::finite(std::move(pts));
  } else {
    throw InvalidParams("control_set.kind must be 'box' or 'finite'");
  }

  if (doc.contains("law")) {
    const json& law = doc["law"];
    if (law.is_array()) {
      entry.law = ControlLaw::closed_form(time_vector(law, k));
    } else {
      std::vector<double> knots = law.at("knots").get<std::vector<double>>();
      std::vector<Eigen::VectorXd> values;
      for (const auto& v : law.at("values")) values.push_back(vector_from_json(v));
      entry.law = ControlLaw::piecewise(std::move(knots), std::move(values));
    }
  }
  return entry;
}

RegistryEntry resolve_problem(const std::string& ref) {
  const std::string prefix = "builtin:";
  if (ref.rfind(prefix, 0) == 0) {
    std::string rest = ref.substr(prefix.size());
    std::string name = rest;
    std::map<std::string, double> params;
    auto q = rest.find('?');
    if (q != std::string::npos) {
      name = rest.substr(0, q);
      std::istringstream qs(rest.substr(q + 1));
      std::string kv;
      while (std::getline(qs, kv, '&')) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw InvalidParams("malformed query parameter '" + kv + "'");
        params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
      }
    }
    return registry_get(name, params);
  }
  std::ifstream in(ref);
  if (!in) throw InvalidParams("cannot open problem file '" + ref + "'");
  json doc = json::parse(in);
  return load_problem_json(doc);
}

}  // namespace pmp
