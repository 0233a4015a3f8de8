// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MAXRB_PROBLEM_HPP
#define MAXRB_PROBLEM_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maxrb/common.hpp"
#include "maxrb/expression.hpp"
#include "maxrb/mesh.hpp"

namespace maxrb
{

class ParameterDomain
{
public:
  ParameterDomain() = default;
  ParameterDomain(Vector lo, Vector hi);

  int Dim() const { return static_cast<int>(lo_.size()); }
  const Vector &Lower() const { return lo_; }
  const Vector &Upper() const { return hi_; }

  bool Contains(const Parameter &mu, double tol = 1e-12) const;

  // Throws a domain error naming the offending coordinate.
  void Check(const Parameter &mu) const;

  // Tensor grid with counts[i] uniformly spaced points per coordinate (endpoints included);
  // coordinate 0 varies fastest.
  std::vector<Parameter> Grid(const std::vector<int> &counts) const;

  // Uniform random sample, deterministic for a fixed seed.
  std::vector<Parameter> RandomSample(int count, std::uint64_t seed) const;

private:
  Vector lo_, hi_;
};

// Parses "9x9", "9" (same count for every coordinate) or "9,9".
std::vector<int> ParseGridSpec(const std::string &spec, int dim);

// mu-independent spatial field. Scalars use value[0].
struct SpatialField
{
  enum class Kind
  {
    Constant,
    Box,
    Expr
  };
  Kind kind = Kind::Constant;
  Vec3 value = Vec3::Zero();  // constant value, or value inside the box (zero outside)
  Box box;
  std::vector<std::string> expr;  // over x, y, z; one entry (scalar) or three (vector)
};

struct AffineTerm
{
  std::string theta_source;
  Expression theta;
  double lipschitz = 0.0;
  std::optional<double> gamma;
  SpatialField field;
};

enum class Field
{
  SigmaInv,
  Eps,
  Rho,
  Ud,
  Ed
};

inline constexpr std::array<Field, 5> kAllFields = {Field::SigmaInv, Field::Eps, Field::Rho,
                                                    Field::Ud, Field::Ed};

const char *ToString(Field f);
bool IsVectorField(Field f);

// Parameter functions Theta_q and the mu-independent spatial fields of sigma^-1, eps, rho, u_d
// and E_d.
struct AffineDecomposition
{
  std::vector<AffineTerm> sigma_inv, eps, rho, ud, ed;

  const std::vector<AffineTerm> &Terms(Field f) const;
  std::vector<AffineTerm> &Terms(Field f);
  int Count(Field f) const { return static_cast<int>(Terms(f).size()); }
};

// Theta_q(mu) for every field.
struct ThetaValues
{
  Vector sigma_inv, eps, rho, ud, ed;

  const Vector &Of(Field f) const;
};

ThetaValues EvaluateCoefficients(const AffineDecomposition &decomp,
                                 const ParameterDomain &domain, const Parameter &mu);

struct ProblemData
{
  ParameterDomain domain;
  std::vector<int> train_grid;
  std::optional<Box> d_box;  // empty: D is the whole domain
  double alpha = 1.0;
  Vec3 u_lo = Vec3::Constant(-1.0), u_hi = Vec3::Constant(1.0);
  double rho_lo = 0.0, rho_hi = 0.0;
  double eps_lo = 1.0, eps_hi = 1.0;
  double sigma_lo = 1.0, sigma_hi = 1.0;
  double e_d = 1.0, u_d = 1.0;
  double omega_volume = 1.0;

  // Optional analytic lower bound for the kernel coercivity; overrides the eigen estimate.
  std::optional<double> coercivity_override;

  double OmegaSqrt() const;
  // |u_bar|: Euclidean norm of the componentwise max(|u_lo|, |u_hi|).
  double ControlBoundNorm() const;
  double RhoBound() const;
};

struct Problem
{
  ProblemData data;
  AffineDecomposition decomp;
};

// Per-tet values of the spatial fields, one entry per affine term. E_d terms vanish outside D.
struct TetFields
{
  std::vector<Vector> sigma_inv, eps, rho;  // length T each
  std::vector<Matrix> ud, ed;               // T x 3 each
};

TetFields RealizeFields(const AffineDecomposition &decomp, const Mesh &mesh);

// Per-tet coefficient at mu: sum_q Theta_q(mu) field_q.
Vector CombineScalar(const std::vector<Vector> &terms, const Vector &theta);
Matrix CombineVector(const std::vector<Matrix> &terms, const Vector &theta);

// Checks the coefficient bounds (pointwise sigma, eps, rho; L2 caps for u_d, E_d) on every
// parameter in samples and the per-term bounds. Throws a validation error describing the first
// violation.
void ValidateCoefficients(const Problem &problem, const TetFields &fields, const Mesh &mesh,
                          const std::vector<Parameter> &samples);

// Spot-checks |Theta_q(mu1) - Theta_q(mu2)| <= L |mu1 - mu2|^gamma on random pairs.
void ValidateHolderData(const Problem &problem, int pairs, std::uint64_t seed);

// Discrete stability estimates feeding the ledger.
struct StabilityEstimates
{
  double coercivity = 0.0;  // C^Omega_sigma: sup over P of 1/lambda_min(A, X_curl) on ker B
  double infsup = 0.0;      // beta: inf over P of the eps-divergence inf-sup constant
  double poincare = 0.0;    // C_P: ||phi||_L2 <= C_P |phi|_H1 on V_h
};

struct ConstantsLedger
{
  double coercivity = 0.0;  // C^Omega_sigma
  double infsup = 0.0;
  double poincare = 0.0;
  double stability = 0.0;  // replaces C^Omega_{eps,sigma}
  double C_E = 0.0, C_F = 0.0;
  double C_sigma_half = 0.0, C_eps_half = 0.0, C_eps_one = 0.0, C_ud_one = 0.0,
         C_Ed_half = 0.0;
  double delta_upper_E = 0.0, delta_upper_F = 0.0;
  double delta_lower_E = 0.0, delta_lower_F = 0.0;
  double delta_J_E = 0.0, delta_J_F = 0.0;
  double ab_E = 0.0, ab_F = 0.0;  // Delta^ab prefactors of ||R_E||*, ||R_F||*
};

ConstantsLedger BuildConstants(const Problem &problem, const StabilityEstimates &est);

std::string LedgerToJson(const ConstantsLedger &ledger);

double HolderUpperBound(const Parameter &mu1, const Parameter &mu2,
                        const ConstantsLedger &ledger, const Problem &problem);

// max over candidates of the distance to the nearest training point.
double FillDistance(const std::vector<Parameter> &training,
                    const std::vector<Parameter> &candidates);

// gamma = 1/2 min(gamma^sigma, gamma^eps, 2 gamma^{u_d}, gamma^{E_d}); per-field exponents are
// the minimum over that field's terms.
double GammaExponent(const AffineDecomposition &decomp);

// Problem file I/O (JSON).
Problem ParseProblem(const std::string &text);
Problem LoadProblem(const std::string &path);
std::string ProblemToJson(const Problem &problem);

// Reference instance on the unit cube, two parameters.
Problem CanonicalBenchmark();
std::string CanonicalBenchmarkJson();

}  // namespace maxrb

#endif  // MAXRB_PROBLEM_HPP
