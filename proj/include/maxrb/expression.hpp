// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MAXRB_EXPRESSION_HPP
#define MAXRB_EXPRESSION_HPP

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace maxrb
{

// Compiled arithmetic expression over named variables: + - * / ^, parentheses, pi and the
// functions sin cos tan tanh exp log sqrt abs min max pow.
class Expression
{
public:
  Expression() = default;
  Expression(const std::string &source, std::vector<std::string> variables);

  double operator()(std::span<const double> values) const;

  const std::string &Source() const { return source_; }
  std::size_t NumVariables() const { return variables_.size(); }

  struct Node;

private:
  std::string source_;
  std::vector<std::string> variables_;
  std::shared_ptr<const Node> root_;
};

// "mu1".."mup"
std::vector<std::string> ParameterVariableNames(int p);

}  // namespace maxrb

#endif  // MAXRB_EXPRESSION_HPP
