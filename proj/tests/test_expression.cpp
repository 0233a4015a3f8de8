// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <vector>

#include <doctest.h>

#include "maxrb/common.hpp"
#include "maxrb/expression.hpp"

using namespace maxrb;

namespace
{

double Eval(const std::string &src, std::vector<double> vals = {},
            std::vector<std::string> names = {})
{
  return Expression(src, std::move(names))(vals);
}

}  // namespace

TEST_CASE("arithmetic and precedence")
{
  CHECK(Eval("1 + 2 * 3") == 7.0);
  CHECK(Eval("(1 + 2) * 3") == 9.0);
  CHECK(Eval("8 / 4 / 2") == 1.0);
  CHECK(Eval("2 - 3 - 4") == -5.0);
  CHECK(Eval("2 ^ 3 ^ 2") == 512.0);
  CHECK(Eval("-2 ^ 2") == -4.0);
  CHECK(Eval("--3") == 3.0);
  CHECK(Eval("1.5e2 + .5") == 150.5);
}

TEST_CASE("functions and constants")
{
  const double pi = std::numbers::pi;
  CHECK(Eval("pi") == pi);
  CHECK(Eval("sin(pi / 2)") == doctest::Approx(1.0));
  CHECK(Eval("cos(0) + exp(0) + log(1)") == 2.0);
  CHECK(Eval("sqrt(16) + abs(-2)") == 6.0);
  CHECK(Eval("min(3, 2) + max(3, 2)") == 5.0);
  CHECK(Eval("pow(2, 10)") == 1024.0);
  CHECK(Eval("tanh(0) + tan(0)") == 0.0);
}

TEST_CASE("variables")
{
  const Expression e("1 + mu1 * x - mu2", {"mu1", "mu2", "x"});
  CHECK(e.NumVariables() == 3);
  const std::vector<double> v = {0.3, 0.25, 2.0};
  CHECK(e(v) == doctest::Approx(1.0 + 0.6 - 0.25));
  CHECK(ParameterVariableNames(3) == std::vector<std::string>{"mu1", "mu2", "mu3"});
  CHECK_THROWS_AS(e(std::vector<double>{1.0}), Error);
}

TEST_CASE("parse errors report the offset")
{
  for (const std::string bad : {"1 +", "(1", "foo(2)", "mu3", "1 2", "sin(1, 2)", ""})
  {
    CAPTURE(bad);
    try
    {
      Expression(bad, {"mu1"});
      FAIL("expected a parse error");
    }
    catch (const Error &e)
    {
      CHECK(e.Kind() == ErrorKind::Parse);
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
  }
}
