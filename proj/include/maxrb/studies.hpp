// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MAXRB_STUDIES_HPP
#define MAXRB_STUDIES_HPP

#include <string>
#include <vector>

#include "maxrb/common.hpp"
#include "maxrb/control.hpp"
#include "maxrb/estimator.hpp"
#include "maxrb/problem.hpp"
#include "maxrb/rbm.hpp"
#include "maxrb/truth.hpp"

namespace maxrb
{

// "a,b,c" -> parameter of the given dimension.
Parameter ParseParameterSpec(const std::string &spec, int dim);

// Unit coefficients on the unit cube, one dummy parameter.
Problem UnitCoefficientProblem();

// Smooth field with zero tangential trace on the unit cube and zero divergence:
// E = (sin(pi y) sin(pi z), sin(pi x) sin(pi z), sin(pi x) sin(pi y)), curl curl E = 2 pi^2 E.
Vec3 ManufacturedField(const Vec3 &x);
Vec3 ManufacturedCurl(const Vec3 &x);

struct HStudyRow
{
  int n = 0;
  double h = 0.0;
  int edge_dofs = 0;
  double error = 0.0, l2 = 0.0, curl = 0.0;
};

std::vector<HStudyRow> RunHStudy(const std::vector<int> &ns, int rule_points = 3,
                                 Exec exec = Exec::Parallel);
// Least-squares slope of log(error) against log(h).
double FittedSlope(const std::vector<HStudyRow> &rows);

struct NStudyRow
{
  int N = 0;
  int dim_E = 0, dim_V = 0;
  double kappa = 0.0;
  double max_error = 0.0;
  double max_delta = 0.0;
};

struct NStudyResult
{
  std::vector<NStudyRow> rows;
  // errors[k][i]: control error of stage k at test point i.
  std::vector<std::vector<double>> errors;
  double gamma = 0.0;
};

// For every greedy stage of rb: sup over the test set of ||u_h - u_N|| (against the given truth
// solutions), sup of Delta^ab, and the fill distance of the stage's snapshot set.
NStudyResult RunNStudy(const ReducedBasis &rb, const ConstantsLedger &ledger,
                       const std::vector<Parameter> &test,
                       const std::vector<OcpSolution> &truth_solutions, const OcpOptions &opt,
                       Exec exec);

// Truth solves at every parameter, in input order.
std::vector<OcpSolution> SolveTruthSweep(const TruthModel &truth,
                                         const std::vector<Parameter> &mus,
                                         const OcpOptions &opt, Exec exec);

}  // namespace maxrb

#endif  // MAXRB_STUDIES_HPP
