// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MAXRB_CONTROL_HPP
#define MAXRB_CONTROL_HPP

#include <limits>
#include <string>
#include <vector>

#include "maxrb/common.hpp"
#include "maxrb/truth.hpp"

namespace maxrb
{

constexpr double kInf = std::numeric_limits<double>::infinity();

// Componentwise median(lo, w, hi) on a 3-per-tet vector.
Vector ClampBox(const Vector &w, const Vec3 &lo, const Vec3 &hi);

struct ProjectionOptions
{
  int max_sweeps = 20000;
  double tol = 1e-11;
  // Exact equality-constrained solve on the Dykstra active set, kept only if it passes the KKT
  // test.
  bool polish = true;
};

struct ProjectionResult
{
  Vector u;
  int sweeps = 0;
  double last_step = 0.0;
  bool converged = false;
  bool polished = false;
};

// The admissible set U_ad(mu) = box and eps(mu)-weighted discrete divergence free, with the
// eps-weighted L2 geometry on U_h. Only reads the truth model (the control is never reduced).
class AdmissibleSet
{
public:
  AdmissibleSet(const TruthModel &truth, const Parameter &mu);
  AdmissibleSet(const TruthModel &truth, const Parameter &mu, const Vec3 &lo, const Vec3 &hi);

  const Parameter &Mu() const { return mu_; }
  const Vec3 &Lower() const { return lo_; }
  const Vec3 &Upper() const { return hi_; }
  const Vector &Weights() const { return w_; }
  int Size() const { return static_cast<int>(w_.size()); }

  Vector Clamp(const Vector &v) const { return ClampBox(v, lo_, hi_); }
  // w - grad psi with (eps grad psi, grad phi) = (eps w, grad phi).
  Vector ProjectDivFree(const Vector &w) const;
  ProjectionResult Project(const Vector &w, const ProjectionOptions &opt = {}) const;

  // (eps v, grad phi_a) for every interior node a.
  Vector Divergence(const Vector &v) const;
  // Euclidean norm of Divergence(v).
  double DivergenceResidual(const Vector &v) const;
  // Largest violation of the box bounds.
  double BoxResidual(const Vector &v) const;

  double Inner(const Vector &a, const Vector &b) const { return a.dot(w_.cwiseProduct(b)); }
  double Norm(const Vector &a) const { return std::sqrt(std::max(0.0, Inner(a, a))); }

private:
  bool Polish(const Vector &w, const Vector &x, Vector *out) const;

  const TruthModel *truth_;
  Parameter mu_;
  Vec3 lo_, hi_;
  Vector w_;  // eps |T| per control dof
};

// Solver interface shared by the truth and the reduced models at one fixed mu. State and adjoint
// coefficient vectors are model specific.
class OcpModel
{
public:
  virtual ~OcpModel() = default;
  virtual const Parameter &Mu() const = 0;
  virtual int NumControlDofs() const = 0;
  virtual Vector SolveState(const Vector &u) const = 0;
  virtual Vector SolveAdjoint(const Vector &E) const = 0;
  // eps-weighted L2 projection of the adjoint onto U_h.
  virtual Vector AdjointToControl(const Vector &F) const = 0;
  virtual double Cost(const Vector &u, const Vector &E) const = 0;
  virtual Vector Ud() const = 0;
  virtual double Alpha() const = 0;
};

class TruthOcpModel : public OcpModel
{
public:
  TruthOcpModel(const TruthModel &truth, const Parameter &mu) : truth_(&truth), mu_(mu) {}
  const Parameter &Mu() const override { return mu_; }
  int NumControlDofs() const override { return truth_->NumControlDofs(); }
  Vector SolveState(const Vector &u) const override { return truth_->SolveState(mu_, u).x; }
  Vector SolveAdjoint(const Vector &E) const override { return truth_->SolveAdjoint(mu_, E).x; }
  Vector AdjointToControl(const Vector &F) const override { return truth_->CellAverage(F); }
  double Cost(const Vector &u, const Vector &E) const override
  {
    return truth_->Cost(mu_, u, E);
  }
  Vector Ud() const override { return truth_->Ud(mu_); }
  double Alpha() const override { return truth_->GetProblem().data.alpha; }

private:
  const TruthModel *truth_;
  Parameter mu_;
};

struct OcpOptions
{
  double tol = 1e-9;
  int max_iter = 500;
  double omega = 0.7;
  double min_omega = 1e-6;
  ProjectionOptions projection;
  bool record_trace = true;
};

struct OcpTraceRow
{
  int iteration;
  double omega;
  double residual;  // ||T(u) - u||_eps
  double cost;
  bool accepted;
};

struct OcpSolution
{
  Parameter mu;
  Vector u, E, F;
  int iterations = 0;
  double increment = 0.0;  // final ||u - P(u_d - F/alpha)||_eps
  double kkt = 0.0;
  double cost = 0.0;
  double omega = 0.0;
  bool projection_converged = true;
  std::vector<OcpTraceRow> trace;
};

// Damped projected fixed point u <- (1 - w) u + w P(u_d - F(u) / alpha).
OcpSolution SolveOcp(const OcpModel &model, const AdmissibleSet &uad, const OcpOptions &opt = {});

// max(0, max over v of (eps (v - u), u_d - F/alpha - u)) over box-vertex and perturbed feasible
// test controls v.
double KktResidual(const OcpModel &model, const AdmissibleSet &uad, const Vector &u,
                   const Vector &F, std::uint64_t seed = 11, int perturbations = 8);

// CSV with header iteration,omega,residual,cost,accepted.
void WriteTrace(const std::string &path, const std::vector<OcpTraceRow> &trace);

}  // namespace maxrb

#endif  // MAXRB_CONTROL_HPP
