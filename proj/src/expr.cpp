#include "memcell/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace memcell {

struct ExprParser {
  const std::string& s;
  std::size_t pos = 0;
  Expr& out;

  void skip() {
    while (pos < s.size() && std::isspace((unsigned char)s[pos])) ++pos;
  }
  bool eat(char c) {
    skip();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) {
    throw std::runtime_error("expression error at offset " + std::to_string(pos) + ": " + what +
                             " in \"" + s + "\"");
  }

  void expr() {
    term();
    for (;;) {
      skip();
      if (eat('+')) {
        term();
        out.ops_.push_back(Expr::Op::kAdd);
      } else if (eat('-')) {
        term();
        out.ops_.push_back(Expr::Op::kSub);
      } else
        return;
    }
  }
  void term() {
    unary();
    for (;;) {
      skip();
      if (eat('*')) {
        unary();
        out.ops_.push_back(Expr::Op::kMul);
      } else if (eat('/')) {
        unary();
        out.ops_.push_back(Expr::Op::kDiv);
      } else
        return;
    }
  }
  void unary() {
    skip();
    if (eat('-')) {
      unary();
      out.ops_.push_back(Expr::Op::kNeg);
    } else
      primary();
  }
  void primary() {
    skip();
    if (pos >= s.size()) fail("unexpected end");
    char c = s[pos];
    if (std::isdigit((unsigned char)c) || c == '.') {
      char* end = nullptr;
      double v = std::strtod(s.c_str() + pos, &end);
      if (end == s.c_str() + pos) fail("bad number");
      pos = std::size_t(end - s.c_str());
      out.consts_.push_back(v);
      out.ops_.push_back(Expr::Op::kConst);
      return;
    }
    if (c == '(') {
      ++pos;
      expr();
      if (!eat(')')) fail("missing ')'");
      return;
    }
    if (std::isalpha((unsigned char)c)) {
      std::size_t start = pos;
      while (pos < s.size() && std::isalnum((unsigned char)s[pos])) ++pos;
      std::string name = s.substr(start, pos - start);
      if (name == "x1") out.ops_.push_back(Expr::Op::kX1);
      else if (name == "x2") out.ops_.push_back(Expr::Op::kX2);
      else if (name == "x3") out.ops_.push_back(Expr::Op::kX3);
      else if (name == "t") out.ops_.push_back(Expr::Op::kT);
      else if (name == "pi") {
        out.consts_.push_back(3.14159265358979323846);
        out.ops_.push_back(Expr::Op::kConst);
      } else if (name == "sin" || name == "cos" || name == "exp") {
        if (!eat('(')) fail("expected '(' after " + name);
        expr();
        if (!eat(')')) fail("missing ')'");
        out.ops_.push_back(name == "sin"   ? Expr::Op::kSin
                           : name == "cos" ? Expr::Op::kCos
                                           : Expr::Op::kExp);
      } else
        fail("unknown name '" + name + "'");
      return;
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

Expr::Expr(const std::string& src) : src_(src) {
  ExprParser p{src, 0, *this};
  p.expr();
  p.skip();
  if (p.pos != src.size()) p.fail("trailing input");
}

double Expr::eval(double x1, double x2, double x3, double t) const {
  if (ops_.empty()) return 0.0;
  double stack[64];
  int sp = 0;
  std::size_t ci = 0;
  for (Op op : ops_) {
    switch (op) {
      case Op::kConst: stack[sp++] = consts_[ci++]; break;
      case Op::kX1: stack[sp++] = x1; break;
      case Op::kX2: stack[sp++] = x2; break;
      case Op::kX3: stack[sp++] = x3; break;
      case Op::kT: stack[sp++] = t; break;
      case Op::kAdd: --sp; stack[sp - 1] += stack[sp]; break;
      case Op::kSub: --sp; stack[sp - 1] -= stack[sp]; break;
      case Op::kMul: --sp; stack[sp - 1] *= stack[sp]; break;
      case Op::kDiv: --sp; stack[sp - 1] /= stack[sp]; break;
      case Op::kNeg: stack[sp - 1] = -stack[sp - 1]; break;
      case Op::kSin: stack[sp - 1] = std::sin(stack[sp - 1]); break;
      case Op::kCos: stack[sp - 1] = std::cos(stack[sp - 1]); break;
      case Op::kExp: stack[sp - 1] = std::exp(stack[sp - 1]); break;
    }
    if (sp >= 63) throw std::runtime_error("expression too deep: " + src_);
  }
  return stack[0];
}

}  // namespace memcell
