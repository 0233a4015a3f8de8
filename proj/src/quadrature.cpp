// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include "maxrb/quadrature.hpp"

#include <cmath>
#include <numbers>

namespace maxrb
{

const std::vector<QuadPoint> &SimplexRuleOrder2()
{
  static const std::vector<QuadPoint> rule = []
  {
    const double a = (5.0 + 3.0 * std::sqrt(5.0)) / 20.0;
    const double b = (5.0 - std::sqrt(5.0)) / 20.0;
    std::vector<QuadPoint> r;
    for (int i = 0; i < 4; i++)
    {
      QuadPoint q;
      q.lambda = {b, b, b, b};
      q.lambda[i] = a;
      q.weight = 0.25;
      r.push_back(q);
    }
    return r;
  }();
  return rule;
}

void GaussLegendre01(int k, std::vector<double> &x, std::vector<double> &w)
{
  x.assign(k, 0.0);
  w.assign(k, 0.0);
  for (int i = 0; i < k; i++)
  {
    // Newton on P_k starting from the Chebyshev-like guess.
    double z = std::cos(std::numbers::pi * (i + 0.75) / (k + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; it++)
    {
      double p0 = 1.0, p1 = z;
      for (int j = 2; j <= k; j++)
      {
        const double p2 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      if (k == 1)
      {
        p0 = 1.0;
        p1 = z;
      }
      dp = k * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16)
      {
        break;
      }
    }
    x[i] = 0.5 * (1.0 - z);
    w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
}

std::vector<QuadPoint> ConicalProductRule(int k)
{
  std::vector<double> x, w;
  GaussLegendre01(k, x, w);
  std::vector<QuadPoint> rule;
  // Duffy map (u,v,s) in [0,1]^3 -> reference tet; Jacobian (1-u)^2 (1-v), volume 1/6.
  for (int i = 0; i < k; i++)
  {
    for (int j = 0; j < k; j++)
    {
      for (int l = 0; l < k; l++)
      {
        const double u = x[i], v = x[j], s = x[l];
        const double px = u;
        const double py = (1.0 - u) * v;
        const double pz = (1.0 - u) * (1.0 - v) * s;
        QuadPoint q;
        q.lambda = {1.0 - px - py - pz, px, py, pz};
        q.weight = 6.0 * w[i] * w[j] * w[l] * (1.0 - u) * (1.0 - u) * (1.0 - v);
        rule.push_back(q);
      }
    }
  }
  return rule;
}

}  // namespace maxrb
