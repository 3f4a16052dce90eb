#ifndef PMP_IO_HPP
#define PMP_IO_HPP

#include <json.hpp>
#include <string>

#include "pmp/bvp.hpp"
#include "pmp/checker.hpp"
#include "pmp/ode.hpp"
#include "pmp/problem.hpp"
#include "pmp/shadow.hpp"

namespace pmp {

using nlohmann::json;

json to_json(const Eigen::VectorXd& v);
json to_json(const Eigen::RowVectorXd& v);
Eigen::VectorXd vector_from_json(const json& j);

/// {verdict, I_star|iota_star|clusters, lambda, psi0, evidence_table};
/// for oscillating verdicts multipliers carries one entry per cluster.
json verdict_to_json(const LimitVerdict& v, const std::vector<Multiplier>& multipliers);

json report_to_json(const PmpReport& rep);
json cone_report_to_json(const ConeReport& rep);
json shoot_result_to_json(const ShootResult& r);

/// {lambda, psi0, source}; enough to rebuild the path via the Cauchy formula.
json multiplier_to_json(const Multiplier& m);
struct MultiplierSpec {
  double lambda = 1.0;
  Eigen::RowVectorXd psi0;
};
MultiplierSpec multiplier_from_json(const json& j);

/// Header tau,level,xi1..xim,I1..Im,normI; one row per (sample, tau) pair.
std::string evidence_csv(const SampleTable& table);

/// Header t,x1..xm,A11..Amm,I1..Im,J (A row-major).
std::string bundle_csv(const TrajectoryBundle& b);

std::string solution_csv(const OdeSolution& sol, const std::vector<std::string>& names);

/// JSON problem document: {state_dim, control_dim, x_init, f, g,
/// dfdx?, dgdx?, control_set, law?} with DSL sources for the fields.
RegistryEntry load_problem_json(const json& doc);

/// "builtin:<name>?k=v&..." or a path to a JSON problem file.
RegistryEntry resolve_problem(const std::string& ref);

}  // namespace pmp

#endif
