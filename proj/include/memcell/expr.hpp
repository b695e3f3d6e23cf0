#pragma once
// Tiny arithmetic expressions for analytic fields in configs.
//
//   expr    := term (('+'|'-') term)*
//   term    := unary (('*'|'/') unary)*
//   unary   := '-' unary | primary
//   primary := NUMBER | 'x1' | 'x2' | 'x3' | 't' | 'pi'
//            | ('sin'|'cos'|'exp') '(' expr ')' | '(' expr ')'
//
// Parsed once into a stack program; evaluation is allocation-free.

#include <string>
#include <vector>

#include "core.hpp"

namespace memcell {

class Expr {
 public:
  Expr() = default;                       // evaluates to 0
  explicit Expr(const std::string& src);  // throws std::runtime_error on bad syntax

  double eval(double x1, double x2, double x3, double t) const;
  double eval(Vec3 x, double t) const { return eval(x[0], x[1], x[2], t); }
  bool empty() const { return ops_.empty(); }
  const std::string& source() const { return src_; }

 private:
  enum class Op : std::uint8_t { kConst, kX1, kX2, kX3, kT, kAdd, kSub, kMul, kDiv, kNeg, kSin, kCos, kExp };
  std::vector<Op> ops_;
  std::vector<double> consts_;
  std::string src_;
  friend struct ExprParser;
};

// Component-wise vector of expressions, e.g. u0 = [expr, expr, expr].
struct VecExpr {
  Expr c[3];
  Vec3 eval(Vec3 x, double t) const {
    return {c[0].eval(x, t), c[1].eval(x, t), c[2].eval(x, t)};
  }
  bool empty() const { return c[0].empty() && c[1].empty() && c[2].empty(); }
};

}  // namespace memcell
