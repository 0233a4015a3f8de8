// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include "maxrb/studies.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <sstream>

namespace maxrb
{

Parameter ParseParameterSpec(const std::string &spec, int dim)
{
  std::vector<double> vals;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ','))
  {
    try
    {
      std::size_t used = 0;
      vals.push_back(std::stod(item, &used));
      while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used])))
      {
        used++;
      }
      if (used != item.size())
      {
        throw std::invalid_argument(item);
      }
    }
    catch (const std::exception &)
    {
      Throw(ErrorKind::Parse, "bad parameter value '" + item + "' in '" + spec + "'");
    }
  }
  if (static_cast<int>(vals.size()) != dim)
  {
    Throw(ErrorKind::Parse, "parameter '" + spec + "' has " + std::to_string(vals.size()) +
                                " components, expected " + std::to_string(dim));
  }
  return Eigen::Map<const Vector>(vals.data(), dim);
}

Problem UnitCoefficientProblem()
{
  return ParseProblem(R"({
  "parameters": {"lower": [0], "upper": [1], "train_grid": [1]},
  "region_d": null,
  "alpha": 1,
  "control_bounds": {"lower": [-1, -1, -1], "upper": [1, 1, 1]},
  "bounds": {"rho": [0, 0], "eps": [1, 1], "sigma": [1, 1], "e_d": 0, "u_d": 0},
  "terms": {
    "sigma_inv": [{"theta": "1", "L": 0, "gamma": 1, "field": {"constant": 1}}],
    "eps": [{"theta": "1", "L": 0, "gamma": 1, "field": {"constant": 1}}],
    "rho": [], "u_d": [], "e_d": []
  }
})");
}

Vec3 ManufacturedField(const Vec3 &x)
{
  const double pi = std::numbers::pi;
  const double sx = std::sin(pi * x(0)), sy = std::sin(pi * x(1)), sz = std::sin(pi * x(2));
  return {sy * sz, sx * sz, sx * sy};
}

Vec3 ManufacturedCurl(const Vec3 &x)
{
  const double pi = std::numbers::pi;
  const double sx = std::sin(pi * x(0)), sy = std::sin(pi * x(1)), sz = std::sin(pi * x(2));
  const double cx = std::cos(pi * x(0)), cy = std::cos(pi * x(1)), cz = std::cos(pi * x(2));
  // (d_y E_z - d_z E_y, d_z E_x - d_x E_z, d_x E_y - d_y E_x)
  return {pi * sx * (cy - cz), pi * sy * (cz - cx), pi * sz * (cx - cy)};
}

std::vector<HStudyRow> RunHStudy(const std::vector<int> &ns, int rule_points, Exec exec)
{
  if (ns.empty())
  {
    Throw(ErrorKind::InvalidArgument, "h-study needs at least one mesh size");
  }
  const double k = 2.0 * std::numbers::pi * std::numbers::pi;
  std::vector<HStudyRow> rows;
  for (int n : ns)
  {
    const Mesh mesh = GenerateStructuredCube(n, std::nullopt);
    const TruthModel truth(UnitCoefficientProblem(), mesh, exec);
    const Parameter mu = Vector::Constant(1, 0.5);
    const Vector load = AssembleAnalyticLoad(
      truth.GetSpaces(), [&](const Vec3 &x) -> Vec3 { return k * ManufacturedField(x); },
      rule_points);
    const SaddleSolution sol = truth.SolveSaddle(mu, load, Vector::Zero(truth.NumNodeDofs()));
    HStudyRow r;
    r.n = n;
    r.h = mesh.MeshSize();
    r.edge_dofs = truth.NumEdgeDofs();
    r.error = HcurlError(truth.GetSpaces(), sol.x, ManufacturedField, ManufacturedCurl,
                         rule_points, &r.l2, &r.curl);
    rows.push_back(r);
  }
  return rows;
}

double FittedSlope(const std::vector<HStudyRow> &rows)
{
  if (rows.size() < 2)
  {
    Throw(ErrorKind::InvalidArgument, "slope needs at least two rows");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(rows.size());
  for (const auto &r : rows)
  {
    const double x = std::log(r.h), y = std::log(r.error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

namespace
{

template <class F>
void ParallelFor(int n, Exec exec, F &&body)
{
  std::exception_ptr error;
  std::mutex error_mutex;
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (int i = 0; i < n; i++)
  {
    try
    {
      body(i);
    }
    catch (...)
    {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error)
      {
        error = std::current_exception();
      }
    }
  }
  if (error)
  {
    std::rethrow_exception(error);
  }
}

}  // namespace

std::vector<OcpSolution> SolveTruthSweep(const TruthModel &truth,
                                         const std::vector<Parameter> &mus,
                                         const OcpOptions &opt, Exec exec)
{
  std::vector<OcpSolution> out(mus.size());
  ParallelFor(static_cast<int>(mus.size()), exec,
              [&](int i) { out[i] = SolveTruth(truth, mus[i], opt); });
  return out;
}

NStudyResult RunNStudy(const ReducedBasis &rb, const ConstantsLedger &ledger,
                       const std::vector<Parameter> &test,
                       const std::vector<OcpSolution> &truth_solutions, const OcpOptions &opt,
                       Exec exec)
{
  if (test.empty() || test.size() != truth_solutions.size())
  {
    Throw(ErrorKind::InvalidArgument, "n-study needs one truth solution per test parameter");
  }
  if (rb.log.empty())
  {
    Throw(ErrorKind::InvalidArgument, "n-study needs a basis with a greedy log");
  }
  NStudyResult res;
  res.gamma = GammaExponent(rb.Truth().GetProblem().decomp);
  std::vector<Parameter> stage_snapshots;
  for (const auto &step : rb.log)
  {
    stage_snapshots.push_back(step.mu);
    const ReducedBasis stage = rb.Prefix(step.dim_E, step.dim_V);
    std::vector<double> err(test.size()), delta(test.size());
    ParallelFor(static_cast<int>(test.size()), exec,
                [&](int i)
                {
                  const OcpSolution red = SolveReduced(stage, test[i], opt);
                  err[i] = rb.Truth().ControlNorm(truth_solutions[i].u - red.u);
                  delta[i] = Certify(stage, test[i], red, &ledger).delta_ab;
                });
    NStudyRow row;
    row.N = step.iteration;
    row.dim_E = step.dim_E;
    row.dim_V = step.dim_V;
    row.kappa = FillDistance(stage_snapshots, test);
    for (std::size_t i = 0; i < test.size(); i++)
    {
      row.max_error = std::max(row.max_error, err[i]);
      row.max_delta = std::max(row.max_delta, delta[i]);
    }
    res.rows.push_back(row);
    res.errors.push_back(err);
  }
  return res;
}

}  // namespace maxrb
