// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MAXRB_TRUTH_HPP
#define MAXRB_TRUTH_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "maxrb/common.hpp"
#include "maxrb/fespace.hpp"
#include "maxrb/mesh.hpp"
#include "maxrb/problem.hpp"

namespace maxrb
{

// Bordered system [[A(mu), B(mu)^T], [B(mu), 0]] with its factorization.
struct SaddleSystem
{
  Parameter mu;
  ThetaValues theta;
  SpMat A, B;
  SpMat K;
  Eigen::SparseLU<SpMat> lu;
};

struct SaddleSolution
{
  Vector x;       // edge dofs
  Vector lambda;  // nodal multiplier
  double primal_residual = 0.0;      // ||A x + B^T lambda - f|| / ||f| + |A||x| + |B^T||lambda|||
  double constraint_residual = 0.0;  // ||B x - g|| / max(||g||, |||B||x|||)
};

struct HelmholtzSplit
{
  Vector z1;  // (z1, grad phi) = 0 for all phi in V_h
  Vector hz;  // nodal potential, z = z1 + G hz
  bool degenerate = false;
};

struct CoercivityOptions
{
  int max_dim = 200;
  double tol = 1e-11;
  std::uint64_t seed = 7;
};

// Finite element truth discretization of one problem on one mesh. Thread-safe for concurrent
// solves at distinct or equal parameters.
class TruthModel
{
public:
  TruthModel(Problem problem, const Mesh &mesh, Exec exec = Exec::Parallel);

  const Problem &GetProblem() const { return problem_; }
  const Mesh &GetMesh() const { return *spaces_.mesh; }
  const Spaces &GetSpaces() const { return spaces_; }
  const OperatorBlocks &Ops() const { return ops_; }
  const TetFields &Fields() const { return fields_; }

  int NumEdgeDofs() const { return spaces_.num_edge_dofs; }
  int NumNodeDofs() const { return spaces_.num_node_dofs; }
  int NumControlDofs() const { return spaces_.num_control_dofs; }
  int NumTets() const { return spaces_.mesh->NumTets(); }

  ThetaValues Thetas(const Parameter &mu) const;

  std::shared_ptr<const SaddleSystem> System(const Parameter &mu) const;

  // Generic solve: A x + B^T lambda = f, B x = g.
  SaddleSolution SolveSaddle(const Parameter &mu, const Vector &f, const Vector &g) const;
  // f = (eps u, Phi), constraint B E = -r(mu).
  SaddleSolution SolveState(const Parameter &mu, const Vector &u) const;
  // f = (eps (E - E_d), Phi)_D, constraint B F = 0.
  SaddleSolution SolveAdjoint(const Parameter &mu, const Vector &E) const;

  // Right-hand sides and data at mu.
  Vector StateLoad(const Parameter &mu, const Vector &u) const;
  Vector AdjointLoad(const Parameter &mu, const Vector &E) const;
  Vector ConstraintRhs(const Parameter &mu) const;  // -r(mu)
  Vector EdLoad(const Parameter &mu) const;         // (eps E_d, Phi)_D
  double EdGram(const Parameter &mu) const;         // (eps E_d, E_d)_D
  Vector Ud(const Parameter &mu) const;             // control vector
  Vector EpsCell(const Parameter &mu) const;        // per tet
  Vector ControlWeights(const Parameter &mu) const; // eps |T| per control dof
  SpMat AOf(const Parameter &mu) const;
  SpMat BOf(const Parameter &mu) const;
  SpMat MDOf(const Parameter &mu) const;
  SpMat MUOf(const Parameter &mu) const;

  // Per-tet average of an edge field (the eps-weighted L2 projection onto U_h).
  Vector CellAverage(const Vector &F) const;

  // 1/2 ||sqrt(eps)(E - E_d)||^2_D.
  double TrackingCost(const Parameter &mu, const Vector &E) const;
  // Full cost J(u, E; mu).
  double Cost(const Parameter &mu, const Vector &u, const Vector &E) const;

  // Unit-weight discrete Helmholtz decomposition.
  HelmholtzSplit HelmholtzDecompose(const Vector &z) const;

  // X_curl r = functional.
  Vector RieszRepresentative(const Vector &functional) const;
  double DualNorm(const Vector &functional) const;
  // Dual norm over the discrete eps(mu)-divergence-free subspace ker B(mu).
  double KernelDualNorm(const Parameter &mu, const Vector &functional) const;

  // Solves L(mu) psi = rhs with L(mu) = sum_q theta_q B_q G.
  Vector SolveWeightedLaplacian(const Parameter &mu, const Vector &rhs) const;

  double NormX(const Vector &v) const;       // H(curl)
  double NormL2Edge(const Vector &v) const;  // L2 of an edge field
  double NormGradNodal(const Vector &psi) const;  // |psi|_H1
  double ControlNorm(const Vector &u) const;  // L2(Omega) of a U_h vector
  double ControlNormEps(const Parameter &mu, const Vector &u) const;

  // 1 / lambda_min of A(mu) v = lambda X_curl v on ker B(mu) (Krylov-Rayleigh-Ritz on the
  // bordered inverse).
  double EstimateCoercivity(const Parameter &mu, const CoercivityOptions &opt = {}) const;
  // inf over phi of sup over v of (eps v, grad phi) / (||v||_X |phi|_1).
  double EstimateInfSup(const Parameter &mu) const;
  // C_P with ||phi||_L2 <= C_P |phi|_1 on V_h.
  double EstimatePoincare() const;
  // Max coercivity / min inf-sup over the samples.
  StabilityEstimates EstimateStability(const std::vector<Parameter> &samples) const;

  std::size_t CacheSize() const;
  void ClearCache() const;

private:
  struct KernelData
  {
    std::vector<Matrix> Y;                // X^-1 B_q^T
    std::vector<std::vector<Matrix>> S;   // B_q X^-1 B_r^T
  };
  const KernelData &Kernel() const;

  Problem problem_;
  Spaces spaces_;
  TetFields fields_;
  OperatorBlocks ops_;
  Eigen::SimplicialLDLT<SpMat> x_chol_;
  Eigen::SimplicialLDLT<SpMat> helm_chol_;
  SpMat helm_rhs_;  // G^T Medge

  mutable std::mutex cache_mutex_;
  mutable std::map<std::string, std::shared_ptr<const SaddleSystem>> cache_;
  mutable std::vector<std::string> cache_order_;
  mutable std::map<std::string, std::shared_ptr<const Eigen::SimplicialLDLT<SpMat>>> lap_cache_;
  mutable std::vector<std::string> lap_order_;
  mutable std::once_flag kernel_once_;
  mutable KernelData kernel_;
  static constexpr std::size_t kMaxCache = 256;
};

// Analytic load (f, Phi) for every interior edge dof, by the given tet rule.
Vector AssembleAnalyticLoad(const Spaces &s, const std::function<Vec3(const Vec3 &)> &f,
                            int rule_points);

// ||E - E_h||_{H(curl)} against analytic E and curl E.
double HcurlError(const Spaces &s, const Vector &x, const std::function<Vec3(const Vec3 &)> &E,
                  const std::function<Vec3(const Vec3 &)> &curlE, int rule_points,
                  double *l2_part = nullptr, double *curl_part = nullptr);

// Legacy VTK unstructured grid with per-cell vector fields.
void WriteVtk(const std::string &path, const Mesh &mesh,
              const std::vector<std::pair<std::string, Matrix>> &cell_vectors);

// Per-tet values at the barycenter (T x 3) of an edge field and its curl.
Matrix EdgeFieldAtCentroids(const Spaces &s, const Vector &x);
Matrix EdgeCurlPerTet(const Spaces &s, const Vector &x);
Matrix ControlToCells(const Vector &u);

}  // namespace maxrb

#endif  // MAXRB_TRUTH_HPP
