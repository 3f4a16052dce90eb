#ifndef PMP_EXPR_HPP
#define PMP_EXPR_HPP

#include <Eigen/Dense>
#include <memory>
#include <stdexcept>
#include <string>

namespace pmp {

struct Dims {
  int m = 0;  // state dimension
  int k = 0;  // control dimension
};

struct SyntaxError : std::runtime_error {
  int position;  // 0-based byte column
  SyntaxError(int pos, const std::string& msg)
      : std::runtime_error("syntax error at " + std::to_string(pos) + ": " + msg),
        position(pos) {}
};

struct UnknownIdentifier : SyntaxError {
  UnknownIdentifier(int pos, const std::string& name)
      : SyntaxError(pos, "unknown identifier '" + name + "'") {}
};

struct ArityError : SyntaxError {
  ArityError(int pos, const std::string& name, int got, int want)
      : SyntaxError(pos, "'" + name + "' expects " + std::to_string(want) +
                             " argument(s), got " + std::to_string(got)) {}
};

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteValue : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Immutable expression AST over the variables t, x1..xm, u1..uk.
struct Expr {
  enum class Op {
    Const,
    VarT,
    VarX,
    VarU,
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sgn,
    Min,
    Max
  };

  Op op;
  double value = 0.0;  // Const
  int index = 0;       // VarX/VarU, 0-based
  ExprPtr a, b;
};

struct EvalEnv {
  double t = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd u;
};

struct GradResult {
  double value = 0.0;
  Eigen::RowVectorXd dx;  // d/dx1..dxm
  bool nonsmooth = false; // hit a kink of abs/sgn/min/max
};

ExprPtr parse(const std::string& source, Dims dims);
std::string print(const ExprPtr& e);
bool structurally_equal(const ExprPtr& a, const ExprPtr& b);

double eval(const ExprPtr& e, const EvalEnv& env);

/// Forward-mode gradient with respect to the state variables.
/// At kinks of abs/sgn/min/max the right-hand derivative is returned
/// and the nonsmooth flag is set.
GradResult grad_x(const ExprPtr& e, const EvalEnv& env);

}  // namespace pmp

#endif
