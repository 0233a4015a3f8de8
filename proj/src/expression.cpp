// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include "maxrb/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include "maxrb/common.hpp"

namespace maxrb
{

struct Expression::Node
{
  enum class Op
  {
    Number,
    Variable,
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Call
  };
  Op op = Op::Number;
  double value = 0.0;
  int index = 0;
  std::string name;
  std::vector<std::shared_ptr<const Node>> args;
};

namespace
{

using NodePtr = std::shared_ptr<const Expression::Node>;
using Op = Expression::Node::Op;

NodePtr MakeNode(Op op, std::vector<NodePtr> args = {})
{
  auto n = std::make_shared<Expression::Node>();
  n->op = op;
  n->args = std::move(args);
  return n;
}

class Parser
{
public:
  Parser(const std::string &src, const std::vector<std::string> &vars) : s_(src), vars_(vars) {}

  NodePtr Parse()
  {
    auto n = ParseSum();
    SkipSpace();
    if (pos_ != s_.size())
    {
      Fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
    }
    return n;
  }

private:
  [[noreturn]] void Fail(const std::string &msg) const
  {
    Throw(ErrorKind::Parse,
          "expression '" + s_ + "': " + msg + " at offset " + std::to_string(pos_));
  }

  void SkipSpace()
  {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
    {
      pos_++;
    }
  }

  bool Accept(char c)
  {
    SkipSpace();
    if (pos_ < s_.size() && s_[pos_] == c)
    {
      pos_++;
      return true;
    }
    return false;
  }

  NodePtr ParseSum()
  {
    auto lhs = ParseProduct();
    while (true)
    {
      if (Accept('+'))
      {
        lhs = MakeNode(Op::Add, {lhs, ParseProduct()});
      }
      else if (Accept('-'))
      {
        lhs = MakeNode(Op::Sub, {lhs, ParseProduct()});
      }
      else
      {
        return lhs;
      }
    }
  }

  NodePtr ParseProduct()
  {
    auto lhs = ParseUnary();
    while (true)
    {
      if (Accept('*'))
      {
        lhs = MakeNode(Op::Mul, {lhs, ParseUnary()});
      }
      else if (Accept('/'))
      {
        lhs = MakeNode(Op::Div, {lhs, ParseUnary()});
      }
      else
      {
        return lhs;
      }
    }
  }

  NodePtr ParseUnary()
  {
    if (Accept('-'))
    {
      return MakeNode(Op::Neg, {ParseUnary()});
    }
    if (Accept('+'))
    {
      return ParseUnary();
    }
    return ParsePower();
  }

  NodePtr ParsePower()
  {
    auto base = ParsePrimary();
    if (Accept('^'))
    {
      return MakeNode(Op::Pow, {base, ParseUnary()});
    }
    return base;
  }

  NodePtr ParsePrimary()
  {
    SkipSpace();
    if (pos_ >= s_.size())
    {
      Fail("unexpected end of input");
    }
    if (Accept('('))
    {
      auto n = ParseSum();
      if (!Accept(')'))
      {
        Fail("missing ')'");
      }
      return n;
    }
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
    {
      const char *begin = s_.c_str() + pos_;
      char *end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin)
      {
        Fail("bad number");
      }
      pos_ += static_cast<std::size_t>(end - begin);
      auto n = std::make_shared<Expression::Node>();
      n->op = Op::Number;
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
    {
      std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      {
        pos_++;
      }
      const std::string id = s_.substr(start, pos_ - start);
      if (Accept('('))
      {
        static const std::vector<std::string> unary = {"sin", "cos",  "tan", "tanh",
                                                       "exp", "log",  "sqrt", "abs"};
        static const std::vector<std::string> binary = {"min", "max", "pow"};
        std::vector<NodePtr> args;
        if (!Accept(')'))
        {
          do
          {
            args.push_back(ParseSum());
          } while (Accept(','));
          if (!Accept(')'))
          {
            Fail("missing ')' after arguments of " + id);
          }
        }
        const bool is_unary = std::find(unary.begin(), unary.end(), id) != unary.end();
        const bool is_binary = std::find(binary.begin(), binary.end(), id) != binary.end();
        if (!is_unary && !is_binary)
        {
          Fail("unknown function '" + id + "'");
        }
        if (args.size() != (is_unary ? 1u : 2u))
        {
          Fail("wrong argument count for '" + id + "'");
        }
        auto n = std::make_shared<Expression::Node>();
        n->op = Op::Call;
        n->name = id;
        n->args = std::move(args);
        return n;
      }
      if (id == "pi")
      {
        auto n = std::make_shared<Expression::Node>();
        n->op = Op::Number;
        n->value = std::numbers::pi;
        return n;
      }
      auto it = std::find(vars_.begin(), vars_.end(), id);
      if (it == vars_.end())
      {
        Fail("unknown variable '" + id + "'");
      }
      auto n = std::make_shared<Expression::Node>();
      n->op = Op::Variable;
      n->index = static_cast<int>(it - vars_.begin());
      n->name = id;
      return n;
    }
    Fail("unexpected character '" + std::string(1, c) + "'");
  }

  const std::string &s_;
  const std::vector<std::string> &vars_;
  std::size_t pos_ = 0;
};

double Eval(const Expression::Node &n, std::span<const double> v)
{
  switch (n.op)
  {
    case Op::Number:
      return n.value;
    case Op::Variable:
      return v[n.index];
    case Op::Neg:
      return -Eval(*n.args[0], v);
    case Op::Add:
      return Eval(*n.args[0], v) + Eval(*n.args[1], v);
    case Op::Sub:
      return Eval(*n.args[0], v) - Eval(*n.args[1], v);
    case Op::Mul:
      return Eval(*n.args[0], v) * Eval(*n.args[1], v);
    case Op::Div:
      return Eval(*n.args[0], v) / Eval(*n.args[1], v);
    case Op::Pow:
      return std::pow(Eval(*n.args[0], v), Eval(*n.args[1], v));
    case Op::Call:
    {
      const double a = Eval(*n.args[0], v);
      if (n.name == "sin") return std::sin(a);
      if (n.name == "cos") return std::cos(a);
      if (n.name == "tan") return std::tan(a);
      if (n.name == "tanh") return std::tanh(a);
      if (n.name == "exp") return std::exp(a);
      if (n.name == "log") return std::log(a);
      if (n.name == "sqrt") return std::sqrt(a);
      if (n.name == "abs") return std::abs(a);
      const double b = Eval(*n.args[1], v);
      if (n.name == "min") return std::min(a, b);
      if (n.name == "max") return std::max(a, b);
      return std::pow(a, b);
    }
  }
  return 0.0;
}

}  // namespace

Expression::Expression(const std::string &source, std::vector<std::string> variables)
  : source_(source), variables_(std::move(variables))
{
  root_ = Parser(source_, variables_).Parse();
}

double Expression::operator()(std::span<const double> values) const
{
  if (!root_)
  {
    Throw(ErrorKind::Configuration, "evaluating an empty expression");
  }
  if (values.size() < variables_.size())
  {
    Throw(ErrorKind::InvalidArgument, "expression '" + source_ + "' needs " +
                                          std::to_string(variables_.size()) + " values");
  }
  return Eval(*root_, values);
}

std::vector<std::string> ParameterVariableNames(int p)
{
  std::vector<std::string> names;
  for (int i = 1; i <= p; i++)
  {
    names.push_back("mu" + std::to_string(i));
  }
  return names;
}

}  // namespace maxrb
