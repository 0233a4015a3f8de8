// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MAXRB_TESTS_ORACLES_HPP
#define MAXRB_TESTS_ORACLES_HPP

#include <algorithm>
#include <cstdint>
#include <utility>

#include "helpers.hpp"
#include "maxrb/control.hpp"

namespace maxrb::test
{

// Optimal control problem with known optimum u_target (admissible). The tracking target is
// E(u_target) - s, so the adjoint F at the optimum is driven by s, and u_d = u_target + F / alpha
// (control part). s is scaled so that max |u_d - u_target| = ud_offset; ud_offset = 0 gives
// u_d = u_target.
class ManufacturedModel : public OcpModel
{
public:
  ManufacturedModel(const TruthModel &truth, const Parameter &mu, Vector u_target, double alpha,
                    double ud_offset = 0.0, std::uint64_t seed = 11)
    : truth_(&truth), mu_(mu), u_target_(std::move(u_target)), alpha_(alpha)
  {
    MD_ = truth.MDOf(mu);
    e_target_ = truth.SolveState(mu, u_target_).x;
    ud_ = u_target_;
    if (ud_offset > 0.0)
    {
      const Vector s = truth.SolveState(mu, RandomVector(u_target_.size(), seed)).x;
      const Vector F = truth.SolveSaddle(mu, MD_ * s, Vector::Zero(truth.NumNodeDofs())).x;
      const Vector shift = truth.CellAverage(F) / alpha_;
      const double scale = ud_offset / shift.cwiseAbs().maxCoeff();
      e_target_ -= scale * s;
      ud_ += scale * shift;
    }
  }
  const Parameter &Mu() const override { return mu_; }
  int NumControlDofs() const override { return truth_->NumControlDofs(); }
  Vector SolveState(const Vector &u) const override { return truth_->SolveState(mu_, u).x; }
  Vector SolveAdjoint(const Vector &E) const override
  {
    return truth_->SolveSaddle(mu_, MD_ * (E - e_target_), Vector::Zero(truth_->NumNodeDofs())).x;
  }
  Vector AdjointToControl(const Vector &F) const override { return truth_->CellAverage(F); }
  double Cost(const Vector &u, const Vector &E) const override
  {
    const Vector de = E - e_target_, du = u - ud_;
    return 0.5 * de.dot(MD_ * de) +
           0.5 * alpha_ * du.dot(truth_->ControlWeights(mu_).cwiseProduct(du));
  }
  Vector Ud() const override { return ud_; }
  double Alpha() const override { return alpha_; }

private:
  const TruthModel *truth_;
  Parameter mu_;
  Vector u_target_, e_target_, ud_;
  SpMat MD_;
  double alpha_;
};

// Projection onto {box} and {one divergence constraint} for a mesh with a single interior node:
// v(psi) = clamp(w - psi g) and the multiplier psi solves the monotone scalar equation
// sum_i W_i g_i v_i(psi) = 0, found by bisection.
inline Vector ScalarDualProjection(const Vector &w, const Vector &W, const Vector &g,
                                   const Vec3 &lo, const Vec3 &hi)
{
  auto v_of = [&](double psi)
  {
    Vector v = w - psi * g;
    for (int i = 0; i < v.size(); i++)
    {
      v(i) = std::min(std::max(v(i), lo(i % 3)), hi(i % 3));
    }
    return v;
  };
  auto h = [&](double psi) { return W.cwiseProduct(g).dot(v_of(psi)); };
  double a = -1.0, b = 1.0;
  while (h(a) < 0.0)
  {
    a *= 2.0;
  }
  while (h(b) > 0.0)
  {
    b *= 2.0;
  }
  for (int k = 0; k < 200; k++)
  {
    const double m = 0.5 * (a + b);
    (h(m) > 0.0 ? a : b) = m;
  }
  return v_of(0.5 * (a + b));
}

inline Vector BoxedDivFree(const AdmissibleSet &uad, std::uint64_t seed, double target_max)
{
  Vector u = uad.ProjectDivFree(RandomVector(uad.Size(), seed));
  return u * (target_max / u.cwiseAbs().maxCoeff());
}

}  // namespace maxrb::test

#endif  // MAXRB_TESTS_ORACLES_HPP
