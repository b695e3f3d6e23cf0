#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "memcell/expr.hpp"

using namespace memcell;

TEST_CASE("arithmetic, precedence and variables") {
  CHECK(Expr("2*3+4*5").eval(0, 0, 0, 0) == doctest::Approx(26.0));
  CHECK(Expr("2*(3+4)*5").eval(0, 0, 0, 0) == doctest::Approx(70.0));
  CHECK(Expr("1-2-3").eval(0, 0, 0, 0) == doctest::Approx(-4.0));
  CHECK(Expr("12/4/3").eval(0, 0, 0, 0) == doctest::Approx(1.0));
  CHECK(Expr("-x1+2").eval(1.5, 0, 0, 0) == doctest::Approx(0.5));
  CHECK(Expr("x1+10*x2+100*x3+1000*t").eval(1, 2, 3, 4) == doctest::Approx(4321.0));
  CHECK(Expr("pi").eval(0, 0, 0, 0) == doctest::Approx(3.14159265358979));
  CHECK(Expr("-2*-3").eval(0, 0, 0, 0) == doctest::Approx(6.0));
}

TEST_CASE("functions compose") {
  double x = 0.37, y = 1.21, t = 0.8;
  CHECK(Expr("sin(pi*x1)*cos(2*x2)+exp(-t)").eval(x, y, 0, t) ==
        doctest::Approx(std::sin(M_PI * x) * std::cos(2 * y) + std::exp(-t)).epsilon(1e-14));
  CHECK(Expr("sin(cos(x1))").eval(x, 0, 0, 0) ==
        doctest::Approx(std::sin(std::cos(x))).epsilon(1e-14));
  CHECK(Expr("exp(0)").eval(0, 0, 0, 0) == doctest::Approx(1.0));
}

TEST_CASE("bad syntax is rejected") {
  CHECK_THROWS_AS(Expr("x4"), std::runtime_error);
  CHECK_THROWS_AS(Expr("sin("), std::runtime_error);
  CHECK_THROWS_AS(Expr("1+*2"), std::runtime_error);
  CHECK_THROWS_AS(Expr("(1+2"), std::runtime_error);
  CHECK_THROWS_AS(Expr("1 2"), std::runtime_error);
  CHECK_THROWS_AS(Expr(""), std::runtime_error);
  CHECK_THROWS_AS(Expr("foo(1)"), std::runtime_error);
}

TEST_CASE("default expression evaluates to zero and reports empty") {
  Expr e;
  CHECK(e.empty());
  CHECK(e.eval(1, 2, 3, 4) == 0.0);
  VecExpr v;
  CHECK(v.empty());
  Vec3 r = v.eval(Vec3{1, 2, 3}, 4);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 0.0);

  VecExpr w;
  w.c[2] = Expr("x1*t");
  CHECK(!w.empty());
  CHECK(w.eval(Vec3{2, 0, 0}, 3)[2] == doctest::Approx(6.0));
}

TEST_CASE("whitespace is tolerated") {
  CHECK(Expr("  1 +  2*sin( pi / 2 ) ").eval(0, 0, 0, 0) == doctest::Approx(3.0));
}
