// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>
#include <string>

#include <doctest.h>
#include <json.hpp>

#include "helpers.hpp"
#include "maxrb/estimator.hpp"
#include "maxrb/rbm.hpp"

using namespace maxrb;
using test::Mu;

namespace
{

ConstantsLedger HandLedger()
{
  ConstantsLedger l;
  l.coercivity = 2.0;
  l.ab_E = 20.0;
  l.ab_F = 200.0;
  l.delta_lower_E = 0.25;
  l.delta_lower_F = 0.125;
  l.delta_upper_E = 3.0;
  l.delta_upper_F = 5.0;
  l.delta_J_E = 7.0;
  l.delta_J_F = 11.0;
  return l;
}

ReducedBasis OneSnapshotBasis(const TruthModel &truth, const Parameter &mu)
{
  ReducedBasis rb(truth);
  const OcpSolution sol = SolveTruth(truth, mu, TightOcpOptions());
  std::vector<Vector> es, vs;
  SnapshotVectors(truth, mu, sol, &es, &vs);
  rb.Extend(es, vs);
  rb.snapshots.push_back(mu);
  return rb;
}

int CountColumns(const std::string &line)
{
  int n = 1;
  for (char c : line)
  {
    n += c == ',';
  }
  return n;
}

}  // namespace

TEST_CASE("certificate arithmetic")
{
  const ConstantsLedger l = HandLedger();
  const Parameter mu = Mu(0.3, 0.7);

  SUBCASE("zero residuals")
  {
    const ErrorCertificate c = CertificateFromNorms(l, mu, 0, 0, 0, 0, 1.0);
    CHECK(c.delta_ab == 0.0);
    CHECK(c.delta_lower == 0.0);
    CHECK(c.delta_upper == 0.0);
    CHECK(c.delta_J == 0.0);
    CHECK(c.re_valid);
    CHECK(c.delta_re == 0.0);
  }
  SUBCASE("hand values")
  {
    const ErrorCertificate c = CertificateFromNorms(l, mu, 1e-3, 2e-4, 4e-3, 0.0, 10.0);
    CHECK(c.rho_E == doctest::Approx(1e-3 + 2e-3));
    CHECK(c.rho_F == doctest::Approx(2e-4));
    CHECK(c.delta_ab == doctest::Approx(20 * 3e-3 + 200 * 2e-4));
    CHECK(c.delta_lower == doctest::Approx(0.25e-3 + 0.125 * 2e-4));
    CHECK(c.delta_upper == doctest::Approx(3 * 3e-3 + 5 * 2e-4));
    CHECK(c.delta_J == doctest::Approx(7 * 3e-3 + 11 * 2e-4));
    CHECK(c.re_valid);
    CHECK(c.delta_re == doctest::Approx(2 * 0.1 / 10.0));
  }
  SUBCASE("norm homogeneity")
  {
    const ErrorCertificate a = CertificateFromNorms(l, mu, 1e-3, 3e-4, 2e-3, 5e-4, 1.0);
    const ErrorCertificate b = CertificateFromNorms(l, mu, 2e-3, 6e-4, 4e-3, 1e-3, 1.0);
    CHECK(b.delta_ab == doctest::Approx(2 * a.delta_ab));
    CHECK(b.delta_lower == doctest::Approx(2 * a.delta_lower));
    CHECK(b.delta_upper == doctest::Approx(2 * a.delta_upper));
    CHECK(b.delta_J == doctest::Approx(2 * a.delta_J));
  }
  SUBCASE("relative bound needs a large enough control")
  {
    CHECK_FALSE(CertificateFromNorms(l, mu, 1e-3, 0, 0, 0, 0.0).re_valid);
    CHECK_FALSE(CertificateFromNorms(l, mu, 1e-2, 0, 0, 0, 0.1).re_valid);
    CHECK(CertificateFromNorms(l, mu, 1e-2, 0, 0, 0, 0.4).re_valid);
  }
  SUBCASE("ledger without coercivity")
  {
    ConstantsLedger bad = l;
    bad.coercivity = 0.0;
    try
    {
      CertificateFromNorms(bad, mu, 1, 1, 1, 1, 1);
      FAIL("expected an error");
    }
    catch (const Error &e)
    {
      CHECK(e.Kind() == ErrorKind::Configuration);
    }
  }
}

TEST_CASE("check certificate")
{
  const ErrorCertificate c = CertificateFromNorms(HandLedger(), Mu(0.5, 0.5), 1e-3, 1e-4, 0, 0, 1);
  MeasuredErrors ok;
  ok.control = 0.5 * c.delta_upper;
  ok.state = 0.2 * c.delta_lower;
  ok.adjoint = 0.3 * c.delta_lower;
  ok.cost_gap = 0.1 * c.delta_J;
  CHECK(CheckCertificate(c, ok).empty());

  MeasuredErrors bad = ok;
  bad.control = 2 * c.delta_ab;
  const auto msgs = CheckCertificate(c, bad);
  REQUIRE(msgs.size() == 2);  // above Delta_ab and above the upper bound
  CHECK(msgs[0].find("Delta_ab") != std::string::npos);
  CHECK(msgs[1].find("upper bound") != std::string::npos);

  bad = ok;
  bad.state = bad.adjoint = 0.0;
  bad.control = 0.0;
  CHECK(CheckCertificate(c, bad).size() == 1);  // lower bound above the error sum

  bad = ok;
  bad.cost_gap = 2 * c.delta_J;
  CHECK(CheckCertificate(c, bad).size() == 1);
}

TEST_CASE("missing ledger")
{
  const TruthModel truth = test::BenchmarkTruth(2);
  const ReducedBasis rb = OneSnapshotBasis(truth, Mu(0.5, 0.5));
  const OcpSolution red = SolveReduced(rb, Mu(0.5, 0.5), TightOcpOptions());
  try
  {
    Certify(rb, Mu(0.5, 0.5), red, nullptr);
    FAIL("expected an error");
  }
  catch (const Error &e)
  {
    CHECK(e.Kind() == ErrorKind::Configuration);
  }
}

TEST_CASE("residuals against the assembled operators")
{
  const TruthModel truth = test::BenchmarkTruth(3);
  const ReducedBasis rb = OneSnapshotBasis(truth, Mu(0.2, 0.9));
  for (const Parameter &mu : {Mu(0.7, 0.3), Mu(1.0, 0.1)})
  {
    const OcpSolution red = SolveReduced(rb, mu, TightOcpOptions());
    const Residuals res = ComputeResiduals(rb, mu, red);
    const Vector E = rb.LiftE(red.E), F = rb.LiftE(red.F);
    const SpMat A = truth.AOf(mu), B = truth.BOf(mu);
    const Vector RE = truth.MUOf(mu).transpose() * red.u - A * E;
    const Vector RF = truth.MDOf(mu) * E - truth.EdLoad(mu) - A * F;
    CHECK((res.RE - RE).norm() <= 1e-12 * (1 + RE.norm()));
    CHECK((res.RF - RF).norm() <= 1e-12 * (1 + RF.norm()));
    const SpMat L = B * truth.GetSpaces().G;
    const Vector gE = truth.ConstraintRhs(mu) - B * E;
    const Vector gF = -(B * F);
    CHECK((L * res.psiE - gE).norm() <= 1e-10 * (1 + gE.norm()));
    CHECK((L * res.psiF - gF).norm() <= 1e-10 * (1 + gF.norm()));
  }
}

TEST_CASE("truth state has zero residual over the kernel")
{
  const TruthModel truth = test::BenchmarkTruth(3);
  const Parameter mu = Mu(0.4, 0.6);
  const Vector u = test::RandomVector(truth.NumControlDofs(), 5, 0.5);
  const SaddleSolution s = truth.SolveState(mu, u);
  const Vector load = truth.StateLoad(mu, u);
  const Vector R = load - truth.AOf(mu) * s.x;
  CHECK(truth.KernelDualNorm(mu, R) <= 1e-10 * truth.DualNorm(load));
}

TEST_CASE("certificate at a snapshot parameter")
{
  const TruthModel truth = test::BenchmarkTruth(3);
  const Parameter mu = Mu(0.55, 0.35);
  const ReducedBasis rb = OneSnapshotBasis(truth, mu);
  const ConstantsLedger ledger = BuildLedger(truth, truth.GetProblem().data.domain.Grid({2, 2}));
  const OcpSolution red = SolveReduced(rb, mu, TightOcpOptions());
  const OcpSolution tru = SolveTruth(truth, mu, TightOcpOptions());
  const ErrorCertificate c = Certify(rb, mu, red, &ledger);
  CHECK(c.dual_E <= 1e-8);
  CHECK(c.dual_F <= 1e-8);
  CHECK(c.delta_ab <= 1e-8);
  const CostGap gap = ComputeCostGap(c, red, &tru);
  REQUIRE(gap.measured.has_value());
  CHECK(*gap.measured <= 1e-10);
  CHECK(gap.delta_J <= 1e-6);
  CHECK(gap.within);
  CHECK_FALSE(ComputeCostGap(c, red, nullptr).measured.has_value());
}

TEST_CASE("residual norms bracket the state and adjoint errors")
{
  const TruthModel truth = test::BenchmarkTruth(3);
  const ReducedBasis rb = OneSnapshotBasis(truth, Mu(0.5, 0.5));
  const double sigma_lo = truth.GetProblem().data.sigma_lo;
  for (const Parameter &mu : truth.GetProblem().data.domain.RandomSample(5, 17))
  {
    const OcpSolution red = SolveReduced(rb, mu, TightOcpOptions());
    const Residuals res = ComputeResiduals(rb, mu, red);
    const Vector EN = rb.LiftE(red.E), FN = rb.LiftE(red.F);
    // Exact fields for the reduced control and the reduced state.
    const Vector Eh = truth.SolveState(mu, red.u).x;
    const Vector Fh = truth.SolveAdjoint(mu, EN).x;
    const double eE = truth.NormX(Eh - EN), eF = truth.NormX(Fh - FN);
    const double dE = truth.KernelDualNorm(mu, res.RE), dF = truth.KernelDualNorm(mu, res.RF);
    const double C = truth.EstimateCoercivity(mu) * (1 + 1e-8);
    CAPTURE(FormatParameter(mu));
    CHECK(eE > 1e-8);
    CHECK(sigma_lo * dE <= eE * (1 + 1e-8));
    CHECK(sigma_lo * dF <= eF * (1 + 1e-8));
    CHECK(eE <= C * dE + truth.NormGradNodal(res.psiE) + 1e-12);
    CHECK(eF <= C * dF + truth.NormGradNodal(res.psiF) + 1e-12);
  }
}

TEST_CASE("certified bounds hold on random parameters")
{
  const TruthModel truth = test::BenchmarkTruth(3);
  const auto &dom = truth.GetProblem().data.domain;
  const auto train = dom.Grid({3, 3});
  const ConstantsLedger ledger = BuildLedger(truth, train);
  ReducedBasis rb(truth);
  GreedyOptions opt;
  opt.tol = 1e-12;
  opt.nmax = 2;
  Greedy(rb, ledger, train, opt);

  std::vector<ErrorCertificate> certs;
  std::vector<MeasuredErrors> errs;
  for (const Parameter &mu : dom.RandomSample(4, 2024))
  {
    const OcpSolution red = SolveReduced(rb, mu, TightOcpOptions());
    const OcpSolution tru = SolveTruth(truth, mu, TightOcpOptions());
    const ErrorCertificate c = Certify(rb, mu, red, &ledger);
    const MeasuredErrors e = MeasureErrors(rb, tru, red);
    CAPTURE(FormatParameter(mu));
    CHECK(e.control > 0.0);
    CHECK(CheckCertificate(c, e).empty());
    CHECK(c.delta_ab / e.control >= 1.0);
    certs.push_back(c);
    errs.push_back(e);
  }

  const auto j = nlohmann::json::parse(CertificatesJson(certs, &errs));
  CHECK(j["count"] == 4);
  CHECK(j["violations"] == 0);
  CHECK(j["min_effectivity"].get<double>() >= 1.0);
  const auto j2 = nlohmann::json::parse(CertificatesJson(certs, nullptr));
  CHECK_FALSE(j2.contains("violations"));

  const int base = CountColumns(CertificateCsvHeader(2, false));
  CHECK(base == 12);
  CHECK(CountColumns(CertificateCsvRow(certs[0], nullptr)) == base);
  CHECK(CountColumns(CertificateCsvHeader(2, true)) == base + 6);
  CHECK(CountColumns(CertificateCsvRow(certs[0], &errs[0])) == base + 6);
}

TEST_CASE("csv marks an inapplicable relative bound")
{
  const ErrorCertificate c = CertificateFromNorms(HandLedger(), Mu(0.1, 1.0), 1, 1, 0, 0, 0.0);
  const std::string row = CertificateCsvRow(c, nullptr);
  CHECK(row.find("NA") != std::string::npos);
  CHECK(row.find("re_not_applicable") != std::string::npos);
  CHECK(row.rfind("1.0000000000e-01,1.0000000000e+00,", 0) == 0);
}
