// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MAXRB_QUADRATURE_HPP
#define MAXRB_QUADRATURE_HPP

#include <array>
#include <vector>

namespace maxrb
{

// Quadrature point on the reference tet in barycentric coordinates; weights sum to 1 (scale by
// the tet volume).
struct QuadPoint
{
  std::array<double, 4> lambda;
  double weight;
};

// Symmetric 4-point rule, exact for polynomials of degree 2.
const std::vector<QuadPoint> &SimplexRuleOrder2();

// Conical-product (collapsed Gauss-Legendre) rule with k points per direction; exact for
// degree 2k-1 in each collapsed variable, hence for total degree 2k-3 or better.
std::vector<QuadPoint> ConicalProductRule(int k);

// Gauss-Legendre nodes/weights on [0,1].
void GaussLegendre01(int k, std::vector<double> &x, std::vector<double> &w);

}  // namespace maxrb

#endif  // MAXRB_QUADRATURE_HPP
