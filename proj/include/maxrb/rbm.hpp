// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MAXRB_RBM_HPP
#define MAXRB_RBM_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/LU>

#include "maxrb/common.hpp"
#include "maxrb/control.hpp"
#include "maxrb/problem.hpp"
#include "maxrb/truth.hpp"

namespace maxrb
{

struct GreedyStep
{
  int iteration = 0;
  Parameter mu;             // parameter whose snapshots were added in this iteration
  int dim_E = 0, dim_V = 0;
  double max_delta = 0.0;   // max over the training set after the extension
  Parameter argmax;         // where max_delta is attained
};

// Reduced spaces E_N (X_curl-orthonormal) and V_N (X_grad-orthonormal) with all affine blocks
// projected onto them.
class ReducedBasis
{
public:
  explicit ReducedBasis(const TruthModel &truth);

  const TruthModel &Truth() const { return *truth_; }
  int DimE() const { return static_cast<int>(ZE_.cols()); }
  int DimV() const { return static_cast<int>(ZV_.cols()); }
  const Matrix &ZE() const { return ZE_; }
  const Matrix &ZV() const { return ZV_; }

  // Modified Gram-Schmidt with one reorthogonalization pass; drops vectors whose norm falls
  // below deflation_tol times the original. Returns the number of vectors added to each space.
  std::pair<int, int> Extend(const std::vector<Vector> &e_snapshots,
                             const std::vector<Vector> &v_snapshots);
  // Adds G * (V_N basis) directions to E_N.
  int AddSupremizers();

  Vector LiftE(const Vector &c) const;
  Vector LiftV(const Vector &c) const;

  // Projected blocks.
  const std::vector<Matrix> &Ahat() const { return Ahat_; }
  const std::vector<Matrix> &MDhat() const { return MDhat_; }
  const std::vector<Matrix> &Bhat() const { return Bhat_; }
  const std::vector<Vector> &Rhat() const { return rhat_; }
  const std::vector<std::vector<Vector>> &EdHat() const { return edhat_; }
  // Truth-sized products used online for control coupling and residuals.
  const std::vector<Matrix> &AZ() const { return AZ_; }    // A_q Z_E
  const std::vector<Matrix> &MDZ() const { return MDZ_; }  // MD_q Z_E
  const std::vector<Matrix> &MUZ() const { return MUZ_; }  // MU_q Z_E (control x N)
  const std::vector<Matrix> &BZ() const { return BZ_; }    // B_q Z_E
  const Matrix &CavgZ() const { return CavgZ_; }           // cell average of Z_E

  std::vector<Parameter> snapshots;
  std::vector<GreedyStep> log;
  double deflation_tol = 1e-10;

  // Smallest singular value of Bhat(mu) and smallest eigenvalue of Ahat(mu) on ker Bhat(mu).
  std::pair<double, double> ReducedStability(const Parameter &mu) const;

  // Orthonormality defects max |Z^T X Z - I|.
  double OrthonormalityDefectE() const;
  double OrthonormalityDefectV() const;

  // The basis spanned by the leading dim_E / dim_V columns (an earlier greedy stage).
  ReducedBasis Prefix(int dim_E, int dim_V) const;

  void Save(const std::string &path) const;
  static ReducedBasis Load(const std::string &path, const TruthModel &truth);

private:
  void Refresh(int old_e, int old_v);

  const TruthModel *truth_;
  Matrix ZE_, ZV_;
  Matrix XZE_, XZV_;  // X_curl Z_E, X_grad Z_V
  std::vector<Matrix> Ahat_, MDhat_, Bhat_;
  std::vector<Vector> rhat_;
  std::vector<std::vector<Vector>> edhat_;
  std::vector<Matrix> AZ_, MDZ_, MUZ_, BZ_;
  Matrix CavgZ_;
};

// Reduced state/adjoint solver at one mu. The control stays in U_h.
class ReducedModel : public OcpModel
{
public:
  ReducedModel(const ReducedBasis &rb, const Parameter &mu);

  const Parameter &Mu() const override { return mu_; }
  int NumControlDofs() const override { return static_cast<int>(weights_.size()); }
  Vector SolveState(const Vector &u) const override;
  Vector SolveAdjoint(const Vector &e) const override;
  Vector AdjointToControl(const Vector &f) const override;
  double Cost(const Vector &u, const Vector &e) const override;
  Vector Ud() const override { return ud_; }
  double Alpha() const override { return alpha_; }

  // Reduced divergence defect |Bhat e - g| of the last state solve.
  double ConstraintDefect(const Vector &e, bool adjoint) const;

  const Matrix &A() const { return A_; }
  const Matrix &B() const { return B_; }

private:
  Vector Solve(const Vector &f, const Vector &g) const;

  const ReducedBasis *rb_;
  Parameter mu_;
  Matrix A_, B_, MD_, MU_;
  Vector l_, g_, ud_, weights_;
  double c_ = 0.0, alpha_ = 0.0;
  Eigen::PartialPivLU<Matrix> lu_;
};

// Reduced OCP at mu; E and F hold reduced coefficients.
OcpSolution SolveReduced(const ReducedBasis &rb, const Parameter &mu, const OcpOptions &opt = {});

// Truth OCP at mu.
OcpSolution SolveTruth(const TruthModel &truth, const Parameter &mu, const OcpOptions &opt = {});

// Snapshot sets of one truth OCP solution: E-space {E, F, G H(E), G H(F), G lambda_F} and V-space
// {H(E), H(F), lambda_F}.
void SnapshotVectors(const TruthModel &truth, const Parameter &mu, const OcpSolution &sol,
                     std::vector<Vector> *e_snaps, std::vector<Vector> *v_snaps);

inline OcpOptions TightOcpOptions()
{
  OcpOptions o;
  o.tol = 1e-12;
  return o;
}

struct GreedyOptions
{
  double tol = 1e-6;
  int nmax = 15;
  int start_index = 0;
  // Snapshots and training solves are converged well below the reproduction target.
  OcpOptions truth_ocp = TightOcpOptions();
  OcpOptions reduced_ocp = TightOcpOptions();
  Exec exec = Exec::Parallel;
  // Called after every iteration.
  std::function<void(const GreedyStep &)> on_step;
};

struct GreedyResult
{
  bool converged = false;  // max delta <= tol
};

// Greedy sampling with Delta^ab as the selection estimator.
GreedyResult Greedy(ReducedBasis &rb, const ConstantsLedger &ledger,
                    const std::vector<Parameter> &training, const GreedyOptions &opt);

// Delta^ab at every training parameter for the current basis.
std::vector<double> EstimatorSweep(const ReducedBasis &rb, const ConstantsLedger &ledger,
                                   const std::vector<Parameter> &training,
                                   const OcpOptions &reduced_ocp, Exec exec);

// FNV-1a 64 over the canonical problem JSON and the mesh text.
std::uint64_t ConfigHash(const TruthModel &truth);

}  // namespace maxrb

#endif  // MAXRB_RBM_HPP
