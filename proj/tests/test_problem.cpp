// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <doctest.h>

#include "helpers.hpp"
#include "maxrb/problem.hpp"

using namespace maxrb;
using test::Mu;

namespace
{

const char *kSingleTerm = R"({
  "parameters": {"lower": [0], "upper": [1]},
  "region_d": null,
  "alpha": 1,
  "control_bounds": {"lower": [-1, -1, -1], "upper": [1, 1, 1]},
  "bounds": {"rho": [0, 0], "eps": [1, 1], "sigma": [1, 1], "e_d": 0, "u_d": 0},
  "terms": {
    "sigma_inv": [{"theta": "1", "L": 0, "gamma": 1, "field": {"constant": 1}}],
    "eps": [{"theta": "1", "L": 0, "gamma": 1, "field": {"constant": 1}}],
    "rho": [], "u_d": [], "e_d": []
  }
})";

ErrorKind KindOf(const std::function<void()> &f)
{
  try
  {
    f();
  }
  catch (const Error &e)
  {
    return e.Kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("parameter domain grid and sampling")
{
  const ParameterDomain d(Mu(0.1, 0.0), Mu(1.0, 2.0));
  const auto g = d.Grid({3, 2});
  REQUIRE(g.size() == 6);
  CHECK(g[0] == Mu(0.1, 0.0));
  CHECK(g[1] == Mu(0.55, 0.0));
  CHECK(g[2] == Mu(1.0, 0.0));
  CHECK(g[3] == Mu(0.1, 2.0));
  CHECK(g[5] == Mu(1.0, 2.0));
  const auto one = d.Grid({1, 1});
  REQUIRE(one.size() == 1);
  CHECK(d.Contains(one[0]));

  const auto a = d.RandomSample(50, 2024), b = d.RandomSample(50, 2024);
  const auto c = d.RandomSample(50, 2025);
  CHECK(a == b);
  CHECK(a != c);
  for (const auto &mu : a)
  {
    CHECK(d.Contains(mu));
  }
  CHECK(KindOf([&] { d.Check(Mu(1.5, 0.0)); }) == ErrorKind::Domain);
  try
  {
    d.Check(Mu(0.5, -1.0));
  }
  catch (const Error &e)
  {
    CHECK(std::string(e.what()).find("coordinate 2") != std::string::npos);
  }
}

TEST_CASE("grid spec parsing")
{
  CHECK(ParseGridSpec("9x9", 2) == std::vector<int>{9, 9});
  CHECK(ParseGridSpec("9", 2) == std::vector<int>{9, 9});
  CHECK(ParseGridSpec("3,4", 2) == std::vector<int>{3, 4});
  CHECK_THROWS_AS(ParseGridSpec("3x", 2), Error);
  CHECK_THROWS_AS(ParseGridSpec("3x4x5", 2), Error);
  CHECK_THROWS_AS(ParseGridSpec("0", 2), Error);
  CHECK_THROWS_AS(ParseGridSpec("a", 1), Error);
}

TEST_CASE("evaluate coefficients")
{
  const Problem single = ParseProblem(kSingleTerm);
  for (double m : {0.0, 0.4, 1.0})
  {
    const auto th = EvaluateCoefficients(single.decomp, single.data.domain, Vector::Constant(1, m));
    CHECK(th.sigma_inv.size() == 1);
    CHECK(th.sigma_inv(0) == 1.0);
  }
  const Problem p = CanonicalBenchmark();
  const auto th = EvaluateCoefficients(p.decomp, p.data.domain, Mu(0.3, 0.7));
  CHECK(th.sigma_inv(0) == 1.0);
  CHECK(th.sigma_inv(1) == doctest::Approx(0.3));
  CHECK(th.eps(1) == doctest::Approx(0.7));
  CHECK(th.rho.size() == 0);
  CHECK(KindOf([&] { EvaluateCoefficients(p.decomp, p.data.domain, Mu(0.05, 0.5)); }) ==
        ErrorKind::Domain);
}

TEST_CASE("realized fields stay inside the declared bounds")
{
  const Problem p = CanonicalBenchmark();
  const Mesh mesh = GenerateStructuredCube(4, p.data.d_box);
  const TetFields f = RealizeFields(p.decomp, mesh);
  CHECK_NOTHROW(ValidateCoefficients(p, f, mesh, p.data.domain.Grid({3, 3})));
  CHECK_NOTHROW(ValidateHolderData(p, 10, 3));
  // Sampling oracle: sigma and eps at random (tet, mu) pairs, from the box definitions directly.
  std::mt19937_64 rng(5);
  const auto mus = p.data.domain.RandomSample(20, 9);
  for (const auto &mu : mus)
  {
    const int t = static_cast<int>(rng() % mesh.NumTets());
    const Vec3 c = mesh.TetCentroid(t);
    const double sinv = 1.0 + (c.x() < 0.5 ? mu(0) : 0.0);
    const double eps = 1.0 + (c.z() < 0.5 ? mu(1) : 0.0);
    const auto th = EvaluateCoefficients(p.decomp, p.data.domain, mu);
    CHECK(CombineScalar(f.sigma_inv, th.sigma_inv)(t) == doctest::Approx(sinv));
    CHECK(CombineScalar(f.eps, th.eps)(t) == doctest::Approx(eps));
    CHECK(1.0 / sinv >= p.data.sigma_lo);
    CHECK(1.0 / sinv <= p.data.sigma_hi);
    CHECK(eps >= p.data.eps_lo);
    CHECK(eps <= p.data.eps_hi);
    // E_d vanishes outside D.
    const Matrix ed = CombineVector(f.ed, th.ed);
    if (!mesh.InRegionD(t))
    {
      CHECK(ed.row(t).norm() == 0.0);
    }
    else
    {
      CHECK(ed(t, 0) == doctest::Approx(1.0));
      CHECK(ed(t, 1) == doctest::Approx(0.5 * mu(0)));
    }
  }
  // Tightening a bound makes validation fail.
  Problem bad = p;
  bad.data.eps_hi = 1.5;
  CHECK(KindOf([&] { ValidateCoefficients(bad, f, mesh, mus); }) == ErrorKind::Validation);
  bad = p;
  bad.data.e_d = 0.1;
  CHECK(KindOf([&] { ValidateCoefficients(bad, f, mesh, mus); }) == ErrorKind::Validation);
  bad = p;
  bad.decomp.sigma_inv[1].lipschitz = 0.5;
  CHECK(KindOf([&] { ValidateHolderData(bad, 10, 3); }) == ErrorKind::Validation);
}

TEST_CASE("expression fields")
{
  Problem p = ParseProblem(kSingleTerm);
  p.decomp.eps[0].field.kind = SpatialField::Kind::Expr;
  p.decomp.eps[0].field.expr = {"1 + x"};
  const Mesh mesh = GenerateStructuredCube(2, std::nullopt);
  const TetFields f = RealizeFields(p.decomp, mesh);
  for (int t = 0; t < mesh.NumTets(); t++)
  {
    CHECK(f.eps[0](t) == doctest::Approx(1.0 + mesh.TetCentroid(t).x()));
  }
}

TEST_CASE("problem JSON round trip and errors")
{
  const Problem p = CanonicalBenchmark();
  const std::string j = ProblemToJson(p);
  const Problem q = ParseProblem(j);
  CHECK(ProblemToJson(q) == j);
  CHECK(q.data.domain.Dim() == 2);
  CHECK(q.data.train_grid == std::vector<int>{9, 9});
  CHECK(q.decomp.Count(Field::Ed) == 2);
  REQUIRE(q.data.d_box.has_value());
  CHECK(q.data.d_box->hi == Vec3::Constant(0.5));

  CHECK(KindOf([] { ParseProblem("{"); }) == ErrorKind::Parse);
  CHECK(KindOf([] { ParseProblem("{}"); }) != ErrorKind::Io);
  std::string bad_theta = CanonicalBenchmarkJson();
  bad_theta.replace(bad_theta.find("\"mu1\""), 5, "\"mu9\"");
  CHECK(KindOf([&] { ParseProblem(bad_theta); }) == ErrorKind::Parse);
  CHECK(KindOf([] { LoadProblem("/nonexistent/problem.json"); }) == ErrorKind::Io);
}

TEST_CASE("shipped configs")
{
  const std::string dir = std::string(MAXRB_SOURCE_DIR) + "/configs/";
  CHECK(ProblemToJson(LoadProblem(dir + "benchmark.json")) ==
        ProblemToJson(CanonicalBenchmark()));
  const Problem charge = LoadProblem(dir + "interior_charge.json");
  CHECK(charge.decomp.Count(Field::Rho) == 1);
  CHECK_FALSE(charge.data.d_box.has_value());
}

TEST_CASE("gamma exponent")
{
  Problem p = CanonicalBenchmark();
  CHECK(GammaExponent(p.decomp) == 0.5);
  p.decomp.ud[0].gamma = 0.25;
  CHECK(GammaExponent(p.decomp) == 0.25);
  for (Field f : kAllFields)
  {
    for (auto &t : p.decomp.Terms(f))
    {
      t.gamma = 2.0;
    }
  }
  CHECK(GammaExponent(p.decomp) == 1.0);
  p.decomp.eps[1].gamma.reset();
  CHECK(KindOf([&] { GammaExponent(p.decomp); }) == ErrorKind::Configuration);
}

TEST_CASE("constants ledger formulas")
{
  // Hand-evaluated instance: C = 1, alpha = 0.01, eps in [1, 2], sigma_lo = 0.5.
  Problem p = CanonicalBenchmark();
  p.data.omega_volume = 1.0;
  StabilityEstimates est{1.0, 1.0, 0.1};
  ConstantsLedger L = BuildConstants(p, est);
  CHECK(L.ab_E == doctest::Approx(20.0));
  CHECK(L.ab_F == doctest::Approx(200.0));
  CHECK(L.delta_lower_E == doctest::Approx(0.25));
  CHECK(L.delta_lower_F == doctest::Approx(0.125));
  // stability = max(C eps_hi, C_P (1 + C / sigma_lo) / beta) = max(2, 0.3)
  CHECK(L.stability == doctest::Approx(2.0));
  CHECK(L.C_E == doctest::Approx(2.0 * std::sqrt(0.75)));
  CHECK(L.C_F == doctest::Approx(2.0 * (0.4 + L.C_E)));

  // sigma_lo = 1, C eps_hi = 1 gives 1/2 and 1/2.
  Problem u = p;
  u.data.sigma_lo = 1.0;
  u.data.eps_hi = 1.0;
  L = BuildConstants(u, est);
  CHECK(L.delta_lower_E == doctest::Approx(0.5));
  CHECK(L.delta_lower_F == doctest::Approx(0.5));

  double prev_e = 1e300, prev_f = 1e300;
  for (double a : {1.0, 10.0, 100.0})
  {
    u.data.alpha = a;
    L = BuildConstants(u, est);
    CHECK(L.ab_E < prev_e);
    CHECK(L.ab_F < prev_f);
    prev_e = L.ab_E;
    prev_f = L.ab_F;
  }
  p.data.coercivity_override = 3.0;
  CHECK(BuildConstants(p, est).coercivity == 3.0);
  CHECK(KindOf([&] { BuildConstants(p, StabilityEstimates{0.0, 1.0, 1.0}); }) ==
        ErrorKind::InvalidArgument);
  CHECK(LedgerToJson(L).find("inf_sup") != std::string::npos);
}

TEST_CASE("Hoelder bound")
{
  const Problem p = CanonicalBenchmark();
  const ConstantsLedger L = BuildConstants(p, StabilityEstimates{1.0, 1.0, 0.2});
  CHECK(HolderUpperBound(Mu(0.3, 0.4), Mu(0.3, 0.4), L, p) == 0.0);
  CHECK(HolderUpperBound(Mu(0.3, 0.4), Mu(0.5, 0.9), L, p) > 0.0);

  // Single eps term with |dTheta| = 1, everything else fixed.
  const char *eps_only = R"({
    "parameters": {"lower": [0], "upper": [1]},
    "region_d": null, "alpha": 1,
    "control_bounds": {"lower": [-1, -1, -1], "upper": [1, 1, 1]},
    "bounds": {"rho": [0, 0], "eps": [1, 2], "sigma": [1, 1], "e_d": 0.5, "u_d": 0.5},
    "terms": {
      "sigma_inv": [{"theta": "1", "L": 0, "gamma": 1, "field": {"constant": 1}}],
      "eps": [{"theta": "1 + mu1", "L": 1, "gamma": 1, "field": {"constant": 1}}],
      "rho": [],
      "u_d": [{"theta": "1", "L": 0, "gamma": 1, "field": {"constant": [0.1, 0, 0]}}],
      "e_d": [{"theta": "1", "L": 0, "gamma": 1, "field": {"constant": [0.1, 0, 0]}}]
    }
  })";
  const Problem q = ParseProblem(eps_only);
  const ConstantsLedger Lq = BuildConstants(q, StabilityEstimates{1.5, 1.0, 0.2});
  const double b = HolderUpperBound(Vector::Constant(1, 0.0), Vector::Constant(1, 1.0), Lq, q);
  CHECK(b == doctest::Approx(std::sqrt(Lq.C_eps_half) + std::sqrt(Lq.C_eps_one)));
}

TEST_CASE("fill distance")
{
  std::vector<Parameter> train = {Vector::Constant(1, 0.0), Vector::Constant(1, 1.0)};
  std::vector<Parameter> cand;
  for (int i = 0; i <= 100; i++)
  {
    cand.push_back(Vector::Constant(1, i / 100.0));
  }
  CHECK(FillDistance(train, cand) == doctest::Approx(0.5));
  CHECK(FillDistance(cand, cand) == 0.0);
  CHECK_THROWS_AS(FillDistance({}, cand), Error);

  const ParameterDomain d(Mu(0, 0), Mu(1, 1));
  const auto a = d.RandomSample(15, 1), c = d.RandomSample(40, 2);
  double brute = 0.0;
  for (std::size_t i = 0; i < c.size(); i++)
  {
    double best = 1e300;
    for (std::size_t j = 0; j < a.size(); j++)
    {
      const double dx = c[i](0) - a[j](0), dy = c[i](1) - a[j](1);
      best = std::min(best, std::sqrt(dx * dx + dy * dy));
    }
    brute = std::max(brute, best);
  }
  CHECK(FillDistance(a, c) == doctest::Approx(brute).epsilon(1e-15));
  // Nested sets: adding points never increases kappa.
  std::vector<Parameter> nested;
  double prev = 1e300;
  for (const auto &mu : a)
  {
    nested.push_back(mu);
    const double k = FillDistance(nested, c);
    CHECK(k <= prev);
    prev = k;
  }
}
