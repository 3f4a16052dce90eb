#include "pmp/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <vector>

namespace pmp {

namespace {

using Op = Expr::Op;

ExprPtr make(Op op, ExprPtr a = nullptr, ExprPtr b = nullptr) {
  auto e = std::make_shared<Expr>();
  e->op = op;
  e->a = std::move(a);
  e->b = std::move(b);
  return e;
}

ExprPtr make_const(double v) {
  auto e = std::make_shared<Expr>();
  e->op = Op::Const;
  e->value = v;
  return e;
}

ExprPtr make_var(Op op, int index) {
  auto e = std::make_shared<Expr>();
  e->op = op;
  e->index = index;
  return e;
}

// ---------------------------------------------------------------------------
// Parser.  Grammar (precedence low to high):
//   expr   := term  (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' unary)?                 // right-associative
//   atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
// ---------------------------------------------------------------------------

struct Parser {
  const std::string& src;
  Dims dims;
  size_t pos = 0;

  Parser(const std::string& s, Dims d) : src(s), dims(d) {}

  void skip_ws() {
    while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
  }

  bool eat(char c) {
    skip_ws();
    if (pos < src.size() && src[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos < src.size() ? src[pos] : '\0';
  }

  ExprPtr parse_expr() {
    ExprPtr lhs = parse_term();
    for (;;) {
      if (eat('+')) {
        lhs = make(Op::Add, lhs, parse_term());
      } else if (eat('-')) {
        lhs = make(Op::Sub, lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  ExprPtr parse_term() {
    ExprPtr lhs = parse_unary();
    for (;;) {
      if (eat('*')) {
        lhs = make(Op::Mul, lhs, parse_unary());
      } else if (eat('/')) {
        lhs = make(Op::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  ExprPtr parse_unary() {
    if (eat('-')) return make(Op::Neg, parse_unary());
    return parse_power();
  }

  ExprPtr parse_power() {
    ExprPtr base = parse_atom();
    if (eat('^')) return make(Op::Pow, base, parse_unary());
    return base;
  }

  ExprPtr parse_atom() {
    skip_ws();
    if (pos >= src.size()) throw SyntaxError(static_cast<int>(pos), "unexpected end of input");
    char c = src[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
    if (c == '(') {
      ++pos;
      ExprPtr inner = parse_expr();
      if (!eat(')')) throw SyntaxError(static_cast<int>(pos), "expected ')'");
      return inner;
    }
    throw SyntaxError(static_cast<int>(pos), std::string("unexpected character '") + c + "'");
  }

  ExprPtr parse_number() {
    const char* begin = src.c_str() + pos;
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) throw SyntaxError(static_cast<int>(pos), "malformed number");
    pos += static_cast<size_t>(end - begin);
    return make_const(v);
  }

  ExprPtr parse_ident() {
    size_t start = pos;
    while (pos < src.size() &&
           (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
      ++pos;
    std::string name = src.substr(start, pos - start);

    if (peek() == '(') return parse_call(name, static_cast<int>(start));

    if (name == "t") return make_var(Op::VarT, 0);
    if (name == "pi") return make_const(M_PI);
    if ((name[0] == 'x' || name[0] == 'u' || name[0] == 'z') && name.size() > 1) {
      bool digits = true;
      for (size_t i = 1; i < name.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(name[i]))) digits = false;
      if (digits) {
        int idx = std::stoi(name.substr(1)) - 1;
        // z1..zn aliases x1..xn (used by the generic BVP front end)
        if (name[0] == 'x' || name[0] == 'z') {
          if (idx < 0 || idx >= dims.m)
            throw UnknownIdentifier(static_cast<int>(start), name);
          return make_var(Op::VarX, idx);
        }
        if (idx < 0 || idx >= dims.k)
          throw UnknownIdentifier(static_cast<int>(start), name);
        return make_var(Op::VarU, idx);
      }
    }
    throw UnknownIdentifier(static_cast<int>(start), name);
  }

  ExprPtr parse_call(const std::string& name, int name_pos) {
    eat('(');
    std::vector<ExprPtr> args;
    if (peek() != ')') {
      args.push_back(parse_expr());
      while (eat(',')) args.push_back(parse_expr());
    }
    if (!eat(')')) throw SyntaxError(static_cast<int>(pos), "expected ')'");

    auto unary_fn = [&](Op op) {
      if (args.size() != 1) throw ArityError(name_pos, name, static_cast<int>(args.size()), 1);
      return make(op, args[0]);
    };
    auto binary_fn = [&](Op op) {
      if (args.size() != 2) throw ArityError(name_pos, name, static_cast<int>(args.size()), 2);
      return make(op, args[0], args[1]);
    };

    if (name == "sin") return unary_fn(Op::Sin);
    if (name == "cos") return unary_fn(Op::Cos);
    if (name == "exp") return unary_fn(Op::Exp);
    if (name == "ln") return unary_fn(Op::Ln);
    if (name == "sqrt") return unary_fn(Op::Sqrt);
    if (name == "abs") return unary_fn(Op::Abs);
    if (name == "sgn") return unary_fn(Op::Sgn);
    if (name == "min") return binary_fn(Op::Min);
    if (name == "max") return binary_fn(Op::Max);
    if (name == "pow") return binary_fn(Op::Pow);
    throw UnknownIdentifier(name_pos, name);
  }
};

// ---------------------------------------------------------------------------
// Printing.  Parenthesization follows the grammar's precedence so that
// parse(print(e)) is structurally equal to e.
// ---------------------------------------------------------------------------

int precedence(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub:
      return 1;
    case Op::Mul:
    case Op::Div:
      return 2;
    case Op::Neg:
      return 3;
    case Op::Pow:
      return 4;
    default:
      return 5;  // atoms and function calls
  }
}

void print_rec(const ExprPtr& e, std::string& out);

void print_child(const ExprPtr& child, int parent_prec, bool strict, std::string& out) {
  bool need = precedence(child->op) < parent_prec ||
              (strict && precedence(child->op) == parent_prec);
  if (need) out += '(';
  print_rec(child, out);
  if (need) out += ')';
}

std::string format_const(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void print_rec(const ExprPtr& e, std::string& out) {
  switch (e->op) {
    case Op::Const: {
      if (e->value < 0) {
        out += '(' + format_const(e->value) + ')';
      } else {
        out += format_const(e->value);
      }
      return;
    }
    case Op::VarT:
      out += 't';
      return;
    case Op::VarX:
      out += 'x' + std::to_string(e->index + 1);
      return;
    case Op::VarU:
      out += 'u' + std::to_string(e->index + 1);
      return;
    case Op::Neg:
      out += '-';
      print_child(e->a, precedence(Op::Neg), false, out);
      return;
    case Op::Add:
      print_child(e->a, 1, false, out);
      out += '+';
      print_child(e->b, 1, true, out);
      return;
    case Op::Sub:
      print_child(e->a, 1, false, out);
      out += '-';
      print_child(e->b, 1, true, out);
      return;
    case Op::Mul:
      print_child(e->a, 2, false, out);
      out += '*';
      print_child(e->b, 2, true, out);
      return;
    case Op::Div:
      print_child(e->a, 2, false, out);
      out += '/';
      print_child(e->b, 2, true, out);
      return;
    case Op::Pow:
      print_child(e->a, 5, false, out);  // base must be an atom-level unit
      out += '^';
      print_child(e->b, 3, false, out);  // exponent may be a unary chain
      return;
    case Op::Sin:
    case Op::Cos:
    case Op::Exp:
    case Op::Ln:
    case Op::Sqrt:
    case Op::Abs:
    case Op::Sgn: {
      const char* n = e->op == Op::Sin    ? "sin"
                      : e->op == Op::Cos  ? "cos"
                      : e->op == Op::Exp  ? "exp"
                      : e->op == Op::Ln   ? "ln"
                      : e->op == Op::Sqrt ? "sqrt"
                      : e->op == Op::Abs  ? "abs"
                                          : "sgn";
      out += n;
      out += '(';
      print_rec(e->a, out);
      out += ')';
      return;
    }
    case Op::Min:
    case Op::Max:
      out += e->op == Op::Min ? "min(" : "max(";
      print_rec(e->a, out);
      out += ',';
      print_rec(e->b, out);
      out += ')';
      return;
  }
}

// ---------------------------------------------------------------------------
// Evaluation over a generic scalar (double, or dual for the gradient pass).
// ---------------------------------------------------------------------------

struct Dual {
  double v = 0.0;
  Eigen::RowVectorXd d;
  bool ns = false;  // crossed a kink

  Dual() = default;
  Dual(double value, Eigen::RowVectorXd deriv, bool nonsmooth = false)
      : v(value), d(std::move(deriv)), ns(nonsmooth) {}
};

[[noreturn]] void domain_fail(const char* what) { throw DomainError(what); }

void check_finite(double v) {
  if (!std::isfinite(v)) throw NonFiniteValue("non-finite value in expression evaluation");
}

double eval_num(const ExprPtr& e, const EvalEnv& env) {
  auto bin = [&](double a, double b, Op op) -> double {
    switch (op) {
      case Op::Add: return a + b;
      case Op::Sub: return a - b;
      case Op::Mul: return a * b;
      case Op::Div:
        if (b == 0.0) domain_fail("division by zero");
        return a / b;
      case Op::Min: return std::min(a, b);
      case Op::Max: return std::max(a, b);
      case Op::Pow: {
        if (a < 0.0 && b != std::floor(b)) domain_fail("negative base with non-integer exponent");
        if (a == 0.0 && b < 0.0) domain_fail("zero base with negative exponent");
        return std::pow(a, b);
      }
      default: std::abort();
    }
  };
  switch (e->op) {
    case Op::Const: return e->value;
    case Op::VarT: return env.t;
    case Op::VarX: return env.x(e->index);
    case Op::VarU: return env.u(e->index);
    case Op::Neg: return -eval_num(e->a, env);
    case Op::Sin: return std::sin(eval_num(e->a, env));
    case Op::Cos: return std::cos(eval_num(e->a, env));
    case Op::Exp: {
      double r = std::exp(eval_num(e->a, env));
      check_finite(r);
      return r;
    }
    case Op::Ln: {
      double a = eval_num(e->a, env);
      if (a <= 0.0) domain_fail("ln of non-positive value");
      return std::log(a);
    }
    case Op::Sqrt: {
      double a = eval_num(e->a, env);
      if (a < 0.0) domain_fail("sqrt of negative value");
      return std::sqrt(a);
    }
    case Op::Abs: return std::abs(eval_num(e->a, env));
    case Op::Sgn: {
      double a = eval_num(e->a, env);
      return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
    }
    default: {
      double r = bin(eval_num(e->a, env), eval_num(e->b, env), e->op);
      check_finite(r);
      return r;
    }
  }
}

Dual eval_dual(const ExprPtr& e, const EvalEnv& env, int m) {
  auto zero = [&] { return Eigen::RowVectorXd::Zero(m).eval(); };
  switch (e->op) {
    case Op::Const: return {e->value, zero()};
    case Op::VarT: return {env.t, zero()};
    case Op::VarX: {
      Eigen::RowVectorXd d = zero();
      d(e->index) = 1.0;
      return {env.x(e->index), std::move(d)};
    }
    case Op::VarU: return {env.u(e->index), zero()};
    case Op::Neg: {
      Dual a = eval_dual(e->a, env, m);
      return {-a.v, -a.d, a.ns};
    }
    case Op::Sin: {
      Dual a = eval_dual(e->a, env, m);
      return {std::sin(a.v), std::cos(a.v) * a.d, a.ns};
    }
    case Op::Cos: {
      Dual a = eval_dual(e->a, env, m);
      return {std::cos(a.v), -std::sin(a.v) * a.d, a.ns};
    }
    case Op::Exp: {
      Dual a = eval_dual(e->a, env, m);
      double v = std::exp(a.v);
      check_finite(v);
      return {v, v * a.d, a.ns};
    }
    case Op::Ln: {
      Dual a = eval_dual(e->a, env, m);
      if (a.v <= 0.0) domain_fail("ln of non-positive value");
      return {std::log(a.v), a.d / a.v, a.ns};
    }
    case Op::Sqrt: {
      Dual a = eval_dual(e->a, env, m);
      if (a.v < 0.0) domain_fail("sqrt of negative value");
      double v = std::sqrt(a.v);
      if (a.v == 0.0) {
        // derivative blows up; report right-hand limit as 0-direction kink
        return {0.0, 0.0 * a.d, true};
      }
      return {v, a.d / (2.0 * v), a.ns};
    }
    case Op::Abs: {
      Dual a = eval_dual(e->a, env, m);
      if (a.v > 0.0) return {a.v, a.d, a.ns};
      if (a.v < 0.0) return {-a.v, -a.d, a.ns};
      return {0.0, a.d, true};  // right-hand derivative at the kink
    }
    case Op::Sgn: {
      Dual a = eval_dual(e->a, env, m);
      double v = a.v > 0.0 ? 1.0 : (a.v < 0.0 ? -1.0 : 0.0);
      Eigen::RowVectorXd d = zero();
      return {v, std::move(d), a.ns || a.v == 0.0};
    }
    case Op::Add: {
      Dual a = eval_dual(e->a, env, m), b = eval_dual(e->b, env, m);
      return {a.v + b.v, a.d + b.d, a.ns || b.ns};
    }
    case Op::Sub: {
      Dual a = eval_dual(e->a, env, m), b = eval_dual(e->b, env, m);
      return {a.v - b.v, a.d - b.d, a.ns || b.ns};
    }
    case Op::Mul: {
      Dual a = eval_dual(e->a, env, m), b = eval_dual(e->b, env, m);
      double v = a.v * b.v;
      check_finite(v);
      return {v, a.v * b.d + b.v * a.d, a.ns || b.ns};
    }
    case Op::Div: {
      Dual a = eval_dual(e->a, env, m), b = eval_dual(e->b, env, m);
      if (b.v == 0.0) domain_fail("division by zero");
      double v = a.v / b.v;
      check_finite(v);
      return {v, (a.d - v * b.d) / b.v, a.ns || b.ns};
    }
    case Op::Min:
    case Op::Max: {
      Dual a = eval_dual(e->a, env, m), b = eval_dual(e->b, env, m);
      bool take_a = e->op == Op::Min ? a.v <= b.v : a.v >= b.v;
      Dual r = take_a ? a : b;
      if (a.v == b.v) r.ns = true;
      r.ns = r.ns || a.ns || b.ns;
      return r;
    }
    case Op::Pow: {
      Dual a = eval_dual(e->a, env, m), b = eval_dual(e->b, env, m);
      if (a.v < 0.0 && b.v != std::floor(b.v))
        domain_fail("negative base with non-integer exponent");
      if (a.v == 0.0 && b.v < 0.0) domain_fail("zero base with negative exponent");
      double v = std::pow(a.v, b.v);
      check_finite(v);
      Eigen::RowVectorXd d = zero();
      if (a.v != 0.0) d += b.v * std::pow(a.v, b.v - 1.0) * a.d;
      else if (b.v > 1.0) d.setZero();  // d/da a^b -> 0 as a->0 for b>1
      else if (b.v == 1.0) d += a.d;
      if (b.d.cwiseAbs().sum() != 0.0) {
        if (a.v <= 0.0) domain_fail("variable exponent requires positive base");
        d += std::log(a.v) * v * b.d;
      }
      return {v, std::move(d), a.ns || b.ns};
    }
  }
  std::abort();
}

}  // namespace

ExprPtr parse(const std::string& source, Dims dims) {
  if (source.empty()) throw SyntaxError(0, "empty expression");
  Parser p(source, dims);
  ExprPtr e = p.parse_expr();
  p.skip_ws();
  if (p.pos != source.size())
    throw SyntaxError(static_cast<int>(p.pos), "trailing input");
  return e;
}

std::string print(const ExprPtr& e) {
  std::string out;
  print_rec(e, out);
  return out;
}

bool structurally_equal(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return a == b;
  if (a->op != b->op) return false;
  switch (a->op) {
    case Expr::Op::Const: return a->value == b->value;
    case Expr::Op::VarT: return true;
    case Expr::Op::VarX:
    case Expr::Op::VarU: return a->index == b->index;
    default:
      return structurally_equal(a->a, b->a) && structurally_equal(a->b, b->b);
  }
}

double eval(const ExprPtr& e, const EvalEnv& env) {
  double v = eval_num(e, env);
  check_finite(v);
  return v;
}

GradResult grad_x(const ExprPtr& e, const EvalEnv& env) {
  Dual d = eval_dual(e, env, static_cast<int>(env.x.size()));
  check_finite(d.v);
  for (int i = 0; i < d.d.size(); ++i) check_finite(d.d(i));
  return {d.v, std::move(d.d), d.ns};
}

}  // namespace pmp
