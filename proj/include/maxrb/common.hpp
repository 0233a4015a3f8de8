// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MAXRB_COMMON_HPP
#define MAXRB_COMMON_HPP

#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace maxrb
{

using Vec3 = Eigen::Vector3d;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// A point of the parameter domain P.
using Parameter = Eigen::VectorXd;

enum class ErrorKind
{
  InvalidArgument,
  Parse,
  Validation,
  Configuration,
  Domain,
  Solver,
  InfSup,
  Convergence,
  Certification,
  Io
};

const char *ToString(ErrorKind kind);

class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind Kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] void Throw(ErrorKind kind, const std::string &what);

// Execution policy for the data-parallel kernels. Serial is the reference path.
enum class Exec
{
  Serial,
  Parallel
};

// Stable textual key of a parameter (exact bytes, hex encoded).
std::string ParameterKey(const Parameter &mu);

std::string FormatParameter(const Parameter &mu);

}  // namespace maxrb

#endif  // MAXRB_COMMON_HPP
