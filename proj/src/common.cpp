// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include "maxrb/common.hpp"

#include <cstring>
#include <sstream>

namespace maxrb
{

const char *ToString(ErrorKind kind)
{
  switch (kind)
  {
    case ErrorKind::InvalidArgument:
      return "invalid-argument";
    case ErrorKind::Parse:
      return "parse";
    case ErrorKind::Validation:
      return "validation";
    case ErrorKind::Configuration:
      return "configuration";
    case ErrorKind::Domain:
      return "domain";
    case ErrorKind::Solver:
      return "solver";
    case ErrorKind::InfSup:
      return "inf-sup";
    case ErrorKind::Convergence:
      return "convergence";
    case ErrorKind::Certification:
      return "certification";
    case ErrorKind::Io:
      return "io";
  }
  return "unknown";
}

void Throw(ErrorKind kind, const std::string &what)
{
  throw Error(kind, what);
}

std::string ParameterKey(const Parameter &mu)
{
  static const char *digits = "0123456789abcdef";
  std::string key;
  key.reserve(static_cast<std::size_t>(mu.size()) * 16);
  for (Eigen::Index i = 0; i < mu.size(); i++)
  {
    unsigned char bytes[sizeof(double)];
    const double v = mu[i];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes)
    {
      key.push_back(digits[b >> 4]);
      key.push_back(digits[b & 0xf]);
    }
  }
  return key;
}

std::string FormatParameter(const Parameter &mu)
{
  std::ostringstream os;
  os.precision(6);
  os << "(";
  for (Eigen::Index i = 0; i < mu.size(); i++)
  {
    os << (i ? ", " : "") << mu[i];
  }
  os << ")";
  return os.str();
}

}  // namespace maxrb
