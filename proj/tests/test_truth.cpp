// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <doctest.h>

#include "helpers.hpp"
#include "maxrb/studies.hpp"
#include "maxrb/truth.hpp"

using namespace maxrb;
using test::Mu;
using test::RandomVector;

namespace
{

// Unit coefficients, D = [0.25, 0.75]^3, constant E_d, optional rho.
Problem InteriorProblem(bool with_rho)
{
  std::string j = R"({
  "parameters": {"lower": [0], "upper": [1]},
  "region_d": {"lo": [0.25, 0.25, 0.25], "hi": [0.75, 0.75, 0.75]},
  "alpha": 0.1,
  "control_bounds": {"lower": [-1, -1, -1], "upper": [1, 1, 1]},
  "bounds": {"rho": [0, 1], "eps": [1, 1], "sigma": [1, 1], "e_d": 1, "u_d": 1},
  "terms": {
    "sigma_inv": [{"theta": "1", "L": 0, "gamma": 1, "field": {"constant": 1}}],
    "eps": [{"theta": "1", "L": 0, "gamma": 1, "field": {"constant": 1}}],
    "rho": RHO,
    "u_d": [{"theta": "1", "L": 0, "gamma": 1, "field": {"constant": [0.1, 0, 0]}}],
    "e_d": [{"theta": "1", "L": 0, "gamma": 1, "field": {"constant": [1, 0.5, 0]}}]
  }
})";
  const std::string rho =
      with_rho ? R"js([{"theta": "0.5 + 0.5 * mu1", "L": 1, "gamma": 1,
                      "field": {"expr": "x * (1 - x)"}}])js"
               : "[]";
  j.replace(j.find("RHO"), 3, rho);
  return ParseProblem(j);
}

// Dense null-space basis of B (columns).
Matrix KernelBasis(const SpMat &B)
{
  Eigen::FullPivLU<Matrix> lu{Matrix(B)};
  return lu.kernel();
}

double ResidualNorm(const SpMat &A, const SpMat &B, const SaddleSolution &s, const Vector &f)
{
  return (A * s.x + B.transpose() * s.lambda - f).norm();
}

}  // namespace

TEST_CASE("zero data gives zero fields")
{
  const TruthModel truth = test::BenchmarkTruth(2);
  const Parameter mu = Mu(0.4, 0.6);
  const SaddleSolution s = truth.SolveState(mu, Vector::Zero(truth.NumControlDofs()));
  CHECK(s.x.norm() == 0.0);
  CHECK_THROWS_AS(truth.SolveState(mu, Vector::Zero(3)), Error);
  CHECK_THROWS_AS(truth.SolveSaddle(mu, Vector::Zero(2), Vector::Zero(1)), Error);
}

TEST_CASE("state solve satisfies both block equations")
{
  const Problem p = InteriorProblem(true);
  const TruthModel truth(p, GenerateStructuredCube(3, p.data.d_box));
  for (double m : {0.0, 0.7})
  {
    const Parameter mu = Vector::Constant(1, m);
    const Vector u = RandomVector(truth.NumControlDofs(), 1);
    const SaddleSolution s = truth.SolveState(mu, u);
    CHECK(s.primal_residual <= 1e-10);
    CHECK(s.constraint_residual <= 1e-10);
    const SpMat A = truth.AOf(mu), B = truth.BOf(mu);
    const Vector f = truth.MUOf(mu).transpose() * u;
    CHECK(ResidualNorm(A, B, s, f) <= 1e-10 * f.norm());
    // |(eps E, grad phi) + (rho, phi)| for every nodal basis function.
    const Vector div = B * s.x - truth.ConstraintRhs(mu);
    CHECK(div.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(truth.ConstraintRhs(mu).norm() > 0.0);
  }
}

TEST_CASE("saddle solve against a dense bordered oracle")
{
  const TruthModel truth = test::BenchmarkTruth(2);
  const Parameter mu = Mu(0.9, 0.2);
  const Matrix A = Matrix(truth.AOf(mu)), B = Matrix(truth.BOf(mu));
  const int ne = truth.NumEdgeDofs(), nv = truth.NumNodeDofs();
  Matrix K = Matrix::Zero(ne + nv, ne + nv);
  K.topLeftCorner(ne, ne) = A;
  K.topRightCorner(ne, nv) = B.transpose();
  K.bottomLeftCorner(nv, ne) = B;
  const Vector f = RandomVector(ne, 2), g = RandomVector(nv, 3);
  Vector rhs(ne + nv);
  rhs << f, g;
  const Vector sol = K.fullPivLu().solve(rhs);
  const SaddleSolution s = truth.SolveSaddle(mu, f, g);
  CHECK((s.x - sol.head(ne)).norm() <= 1e-10 * sol.head(ne).norm());
  CHECK((s.lambda - sol.tail(nv)).norm() <= 1e-10 * (1.0 + sol.tail(nv).norm()));
}

TEST_CASE("adjoint solve")
{
  const TruthModel truth = test::BenchmarkTruth(3);
  const Parameter mu = Mu(0.3, 0.8);
  const Vector E = truth.SolveState(mu, RandomVector(truth.NumControlDofs(), 4)).x;
  const SaddleSolution F = truth.SolveAdjoint(mu, E);
  CHECK(F.primal_residual <= 1e-10);
  CHECK((truth.BOf(mu) * F.x).cwiseAbs().maxCoeff() < 1e-9);
  const Vector f = truth.MDOf(mu) * E - truth.EdLoad(mu);
  CHECK(ResidualNorm(truth.AOf(mu), truth.BOf(mu), F, f) <= 1e-10 * f.norm());
}

TEST_CASE("adjoint of the tracking target vanishes")
{
  // E_d constant on an interior D: its edge interpolant reproduces it exactly on D.
  const Problem p = InteriorProblem(false);
  const Mesh mesh = GenerateStructuredCube(4, p.data.d_box);
  const TruthModel truth(p, mesh);
  const Parameter mu = Vector::Constant(1, 0.5);
  const Vec3 ed(1.0, 0.5, 0.0);
  Vector E(truth.NumEdgeDofs());
  for (int k = 0; k < truth.NumEdgeDofs(); k++)
  {
    const auto &e = mesh.Edges()[truth.GetSpaces().dof_edge[k]];
    E(k) = ed.dot(mesh.Nodes()[e[1]] - mesh.Nodes()[e[0]]);
  }
  CHECK(std::abs(truth.TrackingCost(mu, E)) <= 1e-14);
  CHECK(truth.SolveAdjoint(mu, E).x.norm() <= 1e-12);
  CHECK(std::abs(truth.Cost(mu, truth.Ud(mu), E)) <= 1e-14);
}

TEST_CASE("adjoint equals the state solve with the tracking data as control")
{
  // D = whole cube, unit coefficients, no charge: F(0) = E(-E_d) with E_d as a P0 control.
  Problem p = InteriorProblem(false);
  p.data.d_box.reset();
  const Mesh mesh = GenerateStructuredCube(3, std::nullopt);
  const TruthModel truth(p, mesh);
  const Parameter mu = Vector::Constant(1, 0.2);
  Vector u(truth.NumControlDofs());
  for (int t = 0; t < truth.NumTets(); t++)
  {
    u.segment<3>(3 * t) = -Vec3(1.0, 0.5, 0.0);
  }
  const Vector F = truth.SolveAdjoint(mu, Vector::Zero(truth.NumEdgeDofs())).x;
  const Vector E = truth.SolveState(mu, u).x;
  CHECK((F - E).norm() <= 1e-12 * E.norm());
}

TEST_CASE("cost of zero fields")
{
  const TruthModel truth = test::BenchmarkTruth(2);
  const double m1 = 0.4, m2 = 0.6;
  const Parameter mu = Mu(m1, m2);
  const double alpha = truth.GetProblem().data.alpha;
  // E_d = (1, mu1/2, 0) on D = [0,0.5]^3 where eps = 1 + mu2; u_d = (0.2, 0, 0) everywhere, eps
  // is 1 + mu2 on the bottom half.
  const double track = 0.5 * (1 + m2) * (1 + 0.25 * m1 * m1) / 8.0;
  const double reg = 0.5 * alpha * 0.04 * (1 + 0.5 * m2);
  const double J = truth.Cost(mu, Vector::Zero(truth.NumControlDofs()),
                              Vector::Zero(truth.NumEdgeDofs()));
  CHECK(J == doctest::Approx(track + reg).epsilon(1e-13));
}

TEST_CASE("Helmholtz decomposition")
{
  const TruthModel truth = test::BenchmarkTruth(3);
  const auto &s = truth.GetSpaces();
  const Vector psi = RandomVector(truth.NumNodeDofs(), 5);
  const HelmholtzSplit g = truth.HelmholtzDecompose(s.G * psi);
  CHECK(g.z1.norm() <= 1e-10 * psi.norm());
  CHECK((g.hz - psi).norm() <= 1e-10 * psi.norm());

  const Vector z = RandomVector(truth.NumEdgeDofs(), 6);
  const HelmholtzSplit h = truth.HelmholtzDecompose(z);
  CHECK((z - h.z1 - s.G * h.hz).norm() <= 1e-14 * z.norm());
  CHECK((s.G.transpose() * (truth.Ops().Medge * h.z1)).norm() < 1e-10);
  CHECK(truth.HelmholtzDecompose(h.z1).hz.norm() <= 1e-10);
  CHECK_FALSE(h.degenerate);
}

TEST_CASE("Riesz representative and dual norms")
{
  const TruthModel truth = test::BenchmarkTruth(2);
  const Matrix X = Matrix(truth.Ops().Xcurl);
  const Vector w = RandomVector(truth.NumEdgeDofs(), 7);
  CHECK((truth.RieszRepresentative(X * w) - w).norm() <= 1e-10 * w.norm());
  CHECK(truth.DualNorm(Vector::Zero(truth.NumEdgeDofs())) == 0.0);

  const Vector f = RandomVector(truth.NumEdgeDofs(), 8);
  const double dense = std::sqrt(f.dot(X.llt().solve(f)));
  const double norm = truth.DualNorm(f);
  CHECK(norm == doctest::Approx(dense).epsilon(1e-10));
  CHECK(truth.DualNorm(2.0 * f) == doctest::Approx(2.0 * norm).epsilon(1e-14));
  // Sampled quotients never exceed the dual norm; the representative attains it.
  double sampled = 0.0;
  for (int k = 0; k < 200; k++)
  {
    const Vector v = RandomVector(truth.NumEdgeDofs(), 1000 + k);
    sampled = std::max(sampled, std::abs(f.dot(v)) / truth.NormX(v));
  }
  const Vector r = truth.RieszRepresentative(f);
  CHECK(sampled <= norm * (1 + 1e-12));
  CHECK(std::abs(f.dot(r)) / truth.NormX(r) == doctest::Approx(norm).epsilon(1e-10));
}

TEST_CASE("kernel dual norm against an explicit kernel basis")
{
  const TruthModel truth = test::BenchmarkTruth(2);
  const Parameter mu = Mu(0.5, 0.9);
  const Matrix N = KernelBasis(truth.BOf(mu));
  CHECK(N.cols() == truth.NumEdgeDofs() - truth.NumNodeDofs());
  const Matrix X = Matrix(truth.Ops().Xcurl);
  const Vector f = RandomVector(truth.NumEdgeDofs(), 9);
  const Vector g = N.transpose() * f;
  const double dense = std::sqrt(g.dot((N.transpose() * X * N).ldlt().solve(g)));
  CHECK(truth.KernelDualNorm(mu, f) == doctest::Approx(dense).epsilon(1e-9));
  CHECK(truth.KernelDualNorm(mu, f) <= truth.DualNorm(f) * (1 + 1e-12));
  // Functionals vanishing on the kernel: B^T y.
  const Vector y = RandomVector(truth.NumNodeDofs(), 10);
  const Vector bt = truth.BOf(mu).transpose() * y;
  CHECK(truth.KernelDualNorm(mu, bt) <= 1e-10 * truth.DualNorm(bt));
}

TEST_CASE("coercivity estimate")
{
  SUBCASE("unit coefficients against a dense kernel eigen-solve")
  {
    const Problem p = test::UnitBenchmark();
    const TruthModel truth(p, GenerateStructuredCube(2, p.data.d_box));
    const Parameter mu = Mu(0.5, 0.5);
    const Matrix N = KernelBasis(truth.BOf(mu));
    const Matrix A = N.transpose() * Matrix(truth.AOf(mu)) * N;
    const Matrix X = N.transpose() * Matrix(truth.Ops().Xcurl) * N;
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(A, X);
    const double oracle = 1.0 / es.eigenvalues()(0);
    const double est = truth.EstimateCoercivity(mu);
    CHECK(est == doctest::Approx(oracle).epsilon(1e-8));
    CHECK(est >= 1.0);
  }
  SUBCASE("benchmark against a dense kernel eigen-solve")
  {
    const TruthModel truth = test::BenchmarkTruth(2);
    for (const auto &mu : {Mu(0.1, 1.0), Mu(1.0, 0.1)})
    {
      const Matrix N = KernelBasis(truth.BOf(mu));
      const Matrix A = N.transpose() * Matrix(truth.AOf(mu)) * N;
      const Matrix X = N.transpose() * Matrix(truth.Ops().Xcurl) * N;
      Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(A, X);
      CHECK(truth.EstimateCoercivity(mu) == doctest::Approx(1.0 / es.eigenvalues()(0)).epsilon(1e-8));
    }
  }
  SUBCASE("doubling sigma doubles the estimate")
  {
    Problem p = test::UnitBenchmark();
    const TruthModel t1(p, GenerateStructuredCube(3, p.data.d_box));
    p.decomp.sigma_inv[0].field.value = Vec3::Constant(0.5);
    const TruthModel t2(p, GenerateStructuredCube(3, p.data.d_box));
    const Parameter mu = Mu(0.5, 0.5);
    CHECK(t2.EstimateCoercivity(mu) == doctest::Approx(2.0 * t1.EstimateCoercivity(mu)).epsilon(1e-7));
  }
}

TEST_CASE("inf-sup and Poincare estimates")
{
  const Problem p = test::UnitBenchmark();
  const TruthModel unit(p, GenerateStructuredCube(3, p.data.d_box));
  // With eps = 1 the supremum is attained at v = grad phi.
  CHECK(unit.EstimateInfSup(Mu(0.5, 0.5)) == doctest::Approx(1.0).epsilon(1e-9));

  const TruthModel truth = test::BenchmarkTruth(2);
  const Parameter mu = Mu(0.2, 0.8);
  const double beta = truth.EstimateInfSup(mu);
  CHECK(beta >= 1.0 - 1e-10);
  CHECK(beta <= 1.8 + 1e-10);
  const Matrix B = Matrix(truth.BOf(mu));
  const Matrix S = B * Matrix(truth.Ops().Xcurl).llt().solve(B.transpose());
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(S, Matrix(truth.Ops().Xgrad));
  CHECK(beta == doctest::Approx(std::sqrt(es.eigenvalues()(0))).epsilon(1e-10));

  // Galerkin eigenvalues bound the continuous one 3 pi^2 from above.
  for (int n : {2, 3, 4})
  {
    const TruthModel t = test::BenchmarkTruth(n);
    const double cp = t.EstimatePoincare();
    CHECK(cp > 0.0);
    CHECK(cp <= 1.0 / (std::sqrt(3.0) * std::numbers::pi));
  }
  const StabilityEstimates est = truth.EstimateStability(truth.GetProblem().data.domain.Grid({2, 2}));
  CHECK(est.coercivity > 0.0);
  CHECK(est.infsup > 0.0);
  CHECK(est.poincare > 0.0);
  const ConstantsLedger L = BuildConstants(truth.GetProblem(), est);
  CHECK(L.C_E > 0.0);
  CHECK(L.C_F > 0.0);
  CHECK(L.ab_E > 0.0);
  CHECK(L.delta_upper_E > L.delta_lower_E);
}

TEST_CASE("state and adjoint stay inside the ledger bounds")
{
  const TruthModel truth = test::BenchmarkTruth(3);
  const auto samples = truth.GetProblem().data.domain.Grid({2, 2});
  const ConstantsLedger L = BuildConstants(truth.GetProblem(), truth.EstimateStability(samples));
  const auto &d = truth.GetProblem().data;
  for (int k = 0; k < 4; k++)
  {
    const Parameter mu = samples[k];
    // Admissible control: clamp of a random vector into the box.
    Vector u = RandomVector(truth.NumControlDofs(), 20 + k);
    for (int i = 0; i < u.size(); i++)
    {
      u(i) = std::clamp(u(i), d.u_lo(i % 3), d.u_hi(i % 3));
    }
    const Vector E = truth.SolveState(mu, u).x;
    CHECK(truth.NormX(E) <= L.C_E);
    const Vector F = truth.SolveAdjoint(mu, E).x;
    CHECK(truth.NormL2Edge(F) <= L.C_F);
  }
}

TEST_CASE("state perturbation bound")
{
  // ||E(u1) - E(u2)||_X <= C(mu) eps_max ||u1 - u2||.
  const TruthModel truth = test::BenchmarkTruth(3);
  for (const auto &mu : {Mu(0.1, 0.1), Mu(1.0, 1.0), Mu(0.3, 0.6)})
  {
    const double C = truth.EstimateCoercivity(mu);
    const double emax = truth.EpsCell(mu).maxCoeff();
    const Vector du = RandomVector(truth.NumControlDofs(), 30);
    const Vector dE = truth.SolveState(mu, du).x - truth.SolveState(mu, Vector::Zero(du.size())).x;
    CHECK(truth.NormX(dE) <= C * emax * truth.ControlNorm(du));
  }
}

TEST_CASE("cache and concurrency")
{
  const TruthModel truth = test::BenchmarkTruth(2);
  truth.ClearCache();
  CHECK(truth.CacheSize() == 0);
  const Vector u = RandomVector(truth.NumControlDofs(), 11);
  std::vector<Vector> out(8);
#pragma omp parallel for
  for (int i = 0; i < 8; i++)
  {
    out[i] = truth.SolveState(Mu(0.1 + 0.1 * (i % 2), 0.5), u).x;
  }
  CHECK(truth.CacheSize() == 2);
  for (int i = 2; i < 8; i++)
  {
    CHECK(out[i] == out[i % 2]);
  }
  CHECK(truth.System(Mu(0.1, 0.5)).get() == truth.System(Mu(0.1, 0.5)).get());
  truth.ClearCache();
  CHECK(truth.CacheSize() == 0);
}

TEST_CASE("analytic load and H(curl) error")
{
  // ||E||^2 + ||curl E||^2 = 3/4 + 3 pi^2 / 2 for the manufactured field.
  const TruthModel truth(UnitCoefficientProblem(), GenerateStructuredCube(3, std::nullopt));
  double l2 = 0.0, curl = 0.0;
  const double err = HcurlError(truth.GetSpaces(), Vector::Zero(truth.NumEdgeDofs()),
                                ManufacturedField, ManufacturedCurl, 6, &l2, &curl);
  const double pi = std::numbers::pi;
  CHECK(err == doctest::Approx(std::sqrt(0.75 + 1.5 * pi * pi)).epsilon(1e-6));
  CHECK(l2 == doctest::Approx(std::sqrt(0.75)).epsilon(1e-6));

  // A constant load is integrated exactly by any rule.
  const Vec3 c(0.3, -0.2, 0.1);
  const Vector a = AssembleAnalyticLoad(truth.GetSpaces(), [&](const Vec3 &) { return c; }, 2);
  Vector u(truth.NumControlDofs());
  for (int t = 0; t < truth.NumTets(); t++)
  {
    u.segment<3>(3 * t) = c;
  }
  CHECK((a - truth.MUOf(Vector::Constant(1, 0.5)).transpose() * u).norm() <= 1e-14);

  // Errors fall under refinement.
  const auto rows = RunHStudy({2, 3, 4});
  CHECK(rows[1].error < rows[0].error);
  CHECK(rows[2].error < rows[1].error);
}

TEST_CASE("VTK output")
{
  const TruthModel truth = test::BenchmarkTruth(2);
  const Vector E = truth.SolveState(Mu(0.5, 0.5), RandomVector(truth.NumControlDofs(), 12)).x;
  const auto dir = test::TempDir("vtk");
  const std::string path = (dir / "f.vtk").string();
  WriteVtk(path, truth.GetMesh(),
           {{"E", EdgeFieldAtCentroids(truth.GetSpaces(), E)},
            {"curlE", EdgeCurlPerTet(truth.GetSpaces(), E)}});
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  CHECK(text.rfind("# vtk DataFile", 0) == 0);
  CHECK(text.find("CELLS 48 240") != std::string::npos);
  CHECK(text.find("VECTORS curlE double") != std::string::npos);
  CHECK_THROWS_AS(WriteVtk(path, truth.GetMesh(), {{"bad", Matrix::Zero(3, 3)}}), Error);
}
