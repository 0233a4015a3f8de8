// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include "maxrb/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace maxrb
{

ConstantsLedger BuildLedger(const TruthModel &truth, const std::vector<Parameter> &validation)
{
  return BuildConstants(truth.GetProblem(), truth.EstimateStability(validation));
}

Residuals ComputeResiduals(const ReducedBasis &rb, const Parameter &mu, const OcpSolution &red)
{
  const TruthModel &truth = rb.Truth();
  if (red.E.size() != rb.DimE() || red.F.size() != rb.DimE())
  {
    Throw(ErrorKind::InvalidArgument, "reduced solution does not match the basis dimension");
  }
  if (red.u.size() != truth.NumControlDofs())
  {
    Throw(ErrorKind::InvalidArgument, "control vector has wrong length");
  }
  const auto th = truth.Thetas(mu);
  const auto &ops = truth.Ops();
  Residuals res;
  res.RE = Vector::Zero(truth.NumEdgeDofs());
  res.RF = -truth.EdLoad(mu);
  for (int q = 0; q < ops.NumSigma(); q++)
  {
    res.RE -= th.sigma_inv(q) * (rb.AZ()[q] * red.E);
    res.RF -= th.sigma_inv(q) * (rb.AZ()[q] * red.F);
  }
  Vector BE = Vector::Zero(truth.NumNodeDofs());
  Vector BF = Vector::Zero(truth.NumNodeDofs());
  for (int q = 0; q < ops.NumEps(); q++)
  {
    res.RE += th.eps(q) * (ops.MU[q].transpose() * red.u);
    res.RF += th.eps(q) * (rb.MDZ()[q] * red.E);
    BE += th.eps(q) * (rb.BZ()[q] * red.E);
    BF += th.eps(q) * (rb.BZ()[q] * red.F);
  }
  if (truth.NumNodeDofs() > 0)
  {
    res.psiE = truth.SolveWeightedLaplacian(mu, truth.ConstraintRhs(mu) - BE);
    res.psiF = truth.SolveWeightedLaplacian(mu, -BF);
  }
  else
  {
    res.psiE = res.psiF = Vector::Zero(0);
  }
  return res;
}

ErrorCertificate CertificateFromNorms(const ConstantsLedger &ledger, const Parameter &mu,
                                      double dual_E, double dual_F, double grad_psi_E,
                                      double grad_psi_F, double control_norm)
{
  if (!(ledger.coercivity > 0.0))
  {
    Throw(ErrorKind::Configuration, "constants ledger has no coercivity estimate");
  }
  ErrorCertificate c;
  c.mu = mu;
  c.dual_E = dual_E;
  c.dual_F = dual_F;
  c.grad_psi_E = grad_psi_E;
  c.grad_psi_F = grad_psi_F;
  c.rho_E = dual_E + grad_psi_E / ledger.coercivity;
  c.rho_F = dual_F + grad_psi_F / ledger.coercivity;
  c.delta_ab = ledger.ab_E * c.rho_E + ledger.ab_F * c.rho_F;
  c.control_norm = control_norm;
  if (control_norm > 0.0 && 2.0 * c.delta_ab / control_norm <= 1.0)
  {
    c.re_valid = true;
    c.delta_re = 2.0 * c.delta_ab / control_norm;
  }
  c.delta_lower = ledger.delta_lower_E * dual_E + ledger.delta_lower_F * dual_F;
  c.delta_upper = ledger.delta_upper_E * c.rho_E + ledger.delta_upper_F * c.rho_F;
  c.delta_J = ledger.delta_J_E * c.rho_E + ledger.delta_J_F * c.rho_F;
  return c;
}

ErrorCertificate Certify(const ReducedBasis &rb, const Parameter &mu, const OcpSolution &red,
                         const ConstantsLedger *ledger)
{
  if (ledger == nullptr)
  {
    Throw(ErrorKind::Configuration, "certification needs a constants ledger");
  }
  const TruthModel &truth = rb.Truth();
  const Residuals res = ComputeResiduals(rb, mu, red);
  const double dE = truth.KernelDualNorm(mu, res.RE);
  const double dF = truth.KernelDualNorm(mu, res.RF);
  const double pE = res.psiE.size() > 0 ? truth.NormGradNodal(res.psiE) : 0.0;
  const double pF = res.psiF.size() > 0 ? truth.NormGradNodal(res.psiF) : 0.0;
  ErrorCertificate c = CertificateFromNorms(*ledger, mu, dE, dF, pE, pF, truth.ControlNorm(red.u));
  c.reduced_cost = red.cost;
  return c;
}

MeasuredErrors MeasureErrors(const ReducedBasis &rb, const OcpSolution &truth_sol,
                             const OcpSolution &red)
{
  const TruthModel &truth = rb.Truth();
  MeasuredErrors e;
  e.control = truth.ControlNorm(truth_sol.u - red.u);
  e.state = truth.NormX(truth_sol.E - rb.LiftE(red.E));
  e.adjoint = truth.NormX(truth_sol.F - rb.LiftE(red.F));
  e.cost_gap = std::abs(truth_sol.cost - red.cost);
  return e;
}

CostGap ComputeCostGap(const ErrorCertificate &cert, const OcpSolution &red,
                       const OcpSolution *truth_sol)
{
  CostGap g;
  g.delta_J = cert.delta_J;
  if (truth_sol != nullptr)
  {
    g.measured = std::abs(truth_sol->cost - red.cost);
    g.within = *g.measured <= g.delta_J + kRoundoffSlack;
  }
  return g;
}

std::vector<std::string> CheckCertificate(const ErrorCertificate &cert, const MeasuredErrors &err)
{
  std::vector<std::string> v;
  auto fmt = [](double x)
  {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6e", x);
    return std::string(buf);
  };
  const std::string at = " at mu = " + FormatParameter(cert.mu);
  if (err.control > cert.delta_ab + kRoundoffSlack)
  {
    v.push_back("control error " + fmt(err.control) + " > Delta_ab " + fmt(cert.delta_ab) + at);
  }
  if (cert.delta_lower > err.Sum() + kRoundoffSlack)
  {
    v.push_back("lower bound " + fmt(cert.delta_lower) + " > error sum " + fmt(err.Sum()) + at);
  }
  if (err.Sum() > cert.delta_upper + kRoundoffSlack)
  {
    v.push_back("error sum " + fmt(err.Sum()) + " > upper bound " + fmt(cert.delta_upper) + at);
  }
  if (err.cost_gap > cert.delta_J + kRoundoffSlack)
  {
    v.push_back("cost gap " + fmt(err.cost_gap) + " > delta_J " + fmt(cert.delta_J) + at);
  }
  return v;
}

namespace
{

std::string Num(double x)
{
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10e", x);
  return buf;
}

}  // namespace

std::string CertificateCsvHeader(int num_params, bool with_truth)
{
  std::ostringstream os;
  for (int i = 0; i < num_params; i++)
  {
    os << "mu" << i + 1 << ",";
  }
  os << "dual_E,dual_F,grad_psi_E,grad_psi_F,delta_ab,delta_re,delta_lower,delta_upper,delta_J,"
        "flags";
  if (with_truth)
  {
    os << ",err_u,err_E,err_F,cost_gap,effectivity,violations";
  }
  return os.str();
}

std::string CertificateCsvRow(const ErrorCertificate &c, const MeasuredErrors *err)
{
  std::ostringstream os;
  for (double x : c.mu)
  {
    os << Num(x) << ",";
  }
  os << Num(c.dual_E) << "," << Num(c.dual_F) << "," << Num(c.grad_psi_E) << ","
     << Num(c.grad_psi_F) << "," << Num(c.delta_ab) << ","
     << (c.re_valid ? Num(c.delta_re) : std::string("NA")) << "," << Num(c.delta_lower) << ","
     << Num(c.delta_upper) << "," << Num(c.delta_J) << ","
     << (c.re_valid ? "re_valid" : "re_not_applicable");
  if (err != nullptr)
  {
    os << "," << Num(err->control) << "," << Num(err->state) << "," << Num(err->adjoint) << ","
       << Num(err->cost_gap) << ","
       << (err->control > 1e-12 ? Num(c.delta_ab / err->control) : std::string("NA")) << ","
       << CheckCertificate(c, *err).size();
  }
  return os.str();
}

std::string CertificatesJson(const std::vector<ErrorCertificate> &certs,
                             const std::vector<MeasuredErrors> *errs)
{
  nlohmann::ordered_json j;
  j["count"] = certs.size();
  double max_ab = 0.0, max_upper = 0.0, max_J = 0.0;
  for (const auto &c : certs)
  {
    max_ab = std::max(max_ab, c.delta_ab);
    max_upper = std::max(max_upper, c.delta_upper);
    max_J = std::max(max_J, c.delta_J);
  }
  j["max_delta_ab"] = max_ab;
  j["max_delta_upper"] = max_upper;
  j["max_delta_J"] = max_J;
  if (errs != nullptr)
  {
    double max_err = 0.0, min_eff = std::numeric_limits<double>::infinity();
    std::size_t violations = 0;
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < certs.size() && i < errs->size(); i++)
    {
      max_err = std::max(max_err, (*errs)[i].control);
      if ((*errs)[i].control > 1e-12)
      {
        min_eff = std::min(min_eff, certs[i].delta_ab / (*errs)[i].control);
      }
      for (const auto &msg : CheckCertificate(certs[i], (*errs)[i]))
      {
        violations++;
        list.push_back(msg);
      }
    }
    j["max_control_error"] = max_err;
    j["min_effectivity"] = std::isfinite(min_eff) ? nlohmann::ordered_json(min_eff)
                                                  : nlohmann::ordered_json(nullptr);
    j["violations"] = violations;
    j["violation_messages"] = list;
  }
  return j.dump(2);
}

}  // namespace maxrb
