// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MAXRB_ESTIMATOR_HPP
#define MAXRB_ESTIMATOR_HPP

#include <optional>
#include <string>
#include <vector>

#include "maxrb/common.hpp"
#include "maxrb/control.hpp"
#include "maxrb/problem.hpp"
#include "maxrb/rbm.hpp"

namespace maxrb
{

// Absolute slack for comparing measured errors against bounds.
constexpr double kRoundoffSlack = 1e-12;

// Stability estimates over the validation sample turned into the constants ledger.
ConstantsLedger BuildLedger(const TruthModel &truth, const std::vector<Parameter> &validation);

// Dual vectors over E_h of the reduced state and adjoint equations, plus the divergence-defect
// potentials L(mu) psi_E = -r(mu) - B(mu) E_N and L(mu) psi_F = -B(mu) F_N.
struct Residuals
{
  Vector RE, RF;
  Vector psiE, psiF;
};

Residuals ComputeResiduals(const ReducedBasis &rb, const Parameter &mu, const OcpSolution &red);

struct ErrorCertificate
{
  Parameter mu;
  double dual_E = 0.0, dual_F = 0.0;          // ||R||* over ker B(mu)
  double grad_psi_E = 0.0, grad_psi_F = 0.0;  // |psi|_1
  double rho_E = 0.0, rho_F = 0.0;            // dual + |psi|_1 / C
  double delta_ab = 0.0;
  double delta_re = 0.0;
  bool re_valid = false;
  double delta_lower = 0.0, delta_upper = 0.0;
  double delta_J = 0.0;
  double control_norm = 0.0;  // ||u_N||_L2
  double reduced_cost = 0.0;
};

// Bounds from the residual norms alone.
ErrorCertificate CertificateFromNorms(const ConstantsLedger &ledger, const Parameter &mu,
                                      double dual_E, double dual_F, double grad_psi_E,
                                      double grad_psi_F, double control_norm);

// A null ledger raises a configuration error.
ErrorCertificate Certify(const ReducedBasis &rb, const Parameter &mu, const OcpSolution &red,
                         const ConstantsLedger *ledger);

struct MeasuredErrors
{
  double control = 0.0;  // ||u_h - u_N||_L2
  double state = 0.0;    // ||E_h - E_N||_H(curl)
  double adjoint = 0.0;  // ||F_h - F_N||_H(curl)
  double cost_gap = 0.0; // |J_h - J_N|
  double Sum() const { return control + state + adjoint; }
};

MeasuredErrors MeasureErrors(const ReducedBasis &rb, const OcpSolution &truth_sol,
                             const OcpSolution &red);

struct CostGap
{
  double delta_J = 0.0;
  std::optional<double> measured;
  bool within = true;
};

CostGap ComputeCostGap(const ErrorCertificate &cert, const OcpSolution &red,
                       const OcpSolution *truth_sol);

// Violations of the certified inequalities (empty when all hold).
std::vector<std::string> CheckCertificate(const ErrorCertificate &cert, const MeasuredErrors &err);

std::string CertificateCsvHeader(int num_params, bool with_truth);
std::string CertificateCsvRow(const ErrorCertificate &cert, const MeasuredErrors *err);
std::string CertificatesJson(const std::vector<ErrorCertificate> &certs,
                             const std::vector<MeasuredErrors> *errs);

}  // namespace maxrb

#endif  // MAXRB_ESTIMATOR_HPP
