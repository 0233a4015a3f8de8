// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include "maxrb/problem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

namespace maxrb
{

using json = nlohmann::ordered_json;

ParameterDomain::ParameterDomain(Vector lo, Vector hi) : lo_(std::move(lo)), hi_(std::move(hi))
{
  if (lo_.size() != hi_.size() || lo_.size() == 0)
  {
    Throw(ErrorKind::Configuration, "parameter box needs matching, non-empty bounds");
  }
  for (int i = 0; i < lo_.size(); i++)
  {
    if (!(lo_(i) < hi_(i)))
    {
      Throw(ErrorKind::Configuration,
            "parameter box: lower >= upper for coordinate " + std::to_string(i + 1));
    }
  }
}

bool ParameterDomain::Contains(const Parameter &mu, double tol) const
{
  if (mu.size() != lo_.size())
  {
    return false;
  }
  for (int i = 0; i < mu.size(); i++)
  {
    const double slack = tol * std::max(1.0, hi_(i) - lo_(i));
    if (!(mu(i) >= lo_(i) - slack && mu(i) <= hi_(i) + slack))
    {
      return false;
    }
  }
  return true;
}

void ParameterDomain::Check(const Parameter &mu) const
{
  if (mu.size() != lo_.size())
  {
    Throw(ErrorKind::Domain, "parameter has dimension " + std::to_string(mu.size()) +
                                 ", expected " + std::to_string(lo_.size()));
  }
  if (!Contains(mu))
  {
    for (int i = 0; i < mu.size(); i++)
    {
      if (!(mu(i) >= lo_(i) && mu(i) <= hi_(i)))
      {
        std::ostringstream os;
        os << "parameter " << FormatParameter(mu) << " outside P (coordinate " << i + 1
           << " not in [" << lo_(i) << ", " << hi_(i) << "])";
        Throw(ErrorKind::Domain, os.str());
      }
    }
  }
}

std::vector<Parameter> ParameterDomain::Grid(const std::vector<int> &counts) const
{
  const int p = Dim();
  if (static_cast<int>(counts.size()) != p)
  {
    Throw(ErrorKind::InvalidArgument, "grid spec dimension does not match the parameter box");
  }
  std::size_t total = 1;
  for (int c : counts)
  {
    if (c < 1)
    {
      Throw(ErrorKind::InvalidArgument, "grid counts must be >= 1");
    }
    total *= static_cast<std::size_t>(c);
  }
  std::vector<Parameter> grid;
  grid.reserve(total);
  std::vector<int> idx(p, 0);
  for (std::size_t k = 0; k < total; k++)
  {
    Parameter mu(p);
    for (int i = 0; i < p; i++)
    {
      mu(i) = counts[i] == 1
                  ? 0.5 * (lo_(i) + hi_(i))
                  : lo_(i) + (hi_(i) - lo_(i)) * static_cast<double>(idx[i]) / (counts[i] - 1);
    }
    grid.push_back(mu);
    for (int i = 0; i < p; i++)
    {
      if (++idx[i] < counts[i])
      {
        break;
      }
      idx[i] = 0;
    }
  }
  return grid;
}

std::vector<Parameter> ParameterDomain::RandomSample(int count, std::uint64_t seed) const
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Parameter> out;
  for (int k = 0; k < count; k++)
  {
    Parameter mu(Dim());
    for (int i = 0; i < Dim(); i++)
    {
      mu(i) = lo_(i) + (hi_(i) - lo_(i)) * unit(rng);
    }
    out.push_back(mu);
  }
  return out;
}

std::vector<int> ParseGridSpec(const std::string &spec, int dim)
{
  std::vector<int> counts;
  std::string token;
  for (char c : spec + ",")
  {
    if (c == 'x' || c == 'X' || c == ',')
    {
      if (token.empty())
      {
        Throw(ErrorKind::InvalidArgument, "bad grid spec '" + spec + "'");
      }
      std::size_t used = 0;
      int v = 0;
      try
      {
        v = std::stoi(token, &used);
      }
      catch (const std::exception &)
      {
        used = 0;
      }
      if (used != token.size() || v < 1)
      {
        Throw(ErrorKind::InvalidArgument, "bad grid spec '" + spec + "'");
      }
      counts.push_back(v);
      token.clear();
    }
    else if (c != ' ')
    {
      token += c;
    }
  }
  if (counts.size() == 1 && dim > 1)
  {
    counts.assign(dim, counts[0]);
  }
  if (static_cast<int>(counts.size()) != dim)
  {
    Throw(ErrorKind::InvalidArgument, "grid spec '" + spec + "' does not have " +
                                          std::to_string(dim) + " entries");
  }
  return counts;
}

const char *ToString(Field f)
{
  switch (f)
  {
    case Field::SigmaInv:
      return "sigma_inv";
    case Field::Eps:
      return "eps";
    case Field::Rho:
      return "rho";
    case Field::Ud:
      return "u_d";
    case Field::Ed:
      return "e_d";
  }
  return "?";
}

bool IsVectorField(Field f)
{
  return f == Field::Ud || f == Field::Ed;
}

const std::vector<AffineTerm> &AffineDecomposition::Terms(Field f) const
{
  switch (f)
  {
    case Field::SigmaInv:
      return sigma_inv;
    case Field::Eps:
      return eps;
    case Field::Rho:
      return rho;
    case Field::Ud:
      return ud;
    case Field::Ed:
      return ed;
  }
  return ed;
}

std::vector<AffineTerm> &AffineDecomposition::Terms(Field f)
{
  return const_cast<std::vector<AffineTerm> &>(std::as_const(*this).Terms(f));
}

const Vector &ThetaValues::Of(Field f) const
{
  switch (f)
  {
    case Field::SigmaInv:
      return sigma_inv;
    case Field::Eps:
      return eps;
    case Field::Rho:
      return rho;
    case Field::Ud:
      return ud;
    case Field::Ed:
      return ed;
  }
  return ed;
}

namespace
{

Vector EvalThetas(const std::vector<AffineTerm> &terms, const Parameter &mu)
{
  Vector out(terms.size());
  std::span<const double> values(mu.data(), static_cast<std::size_t>(mu.size()));
  for (std::size_t q = 0; q < terms.size(); q++)
  {
    out(q) = terms[q].theta(values);
  }
  return out;
}

}  // namespace

ThetaValues EvaluateCoefficients(const AffineDecomposition &decomp,
                                 const ParameterDomain &domain, const Parameter &mu)
{
  domain.Check(mu);
  ThetaValues th;
  th.sigma_inv = EvalThetas(decomp.sigma_inv, mu);
  th.eps = EvalThetas(decomp.eps, mu);
  th.rho = EvalThetas(decomp.rho, mu);
  th.ud = EvalThetas(decomp.ud, mu);
  th.ed = EvalThetas(decomp.ed, mu);
  return th;
}

double ProblemData::OmegaSqrt() const
{
  return std::sqrt(omega_volume);
}

double ProblemData::ControlBoundNorm() const
{
  return u_lo.cwiseAbs().cwiseMax(u_hi.cwiseAbs()).norm();
}

double ProblemData::RhoBound() const
{
  return std::max(std::abs(rho_lo), std::abs(rho_hi));
}

namespace
{

bool PointInBox(const Vec3 &x, const Box &b)
{
  return (x.array() >= b.lo.array()).all() && (x.array() <= b.hi.array()).all();
}

// Field value on tet t, sampled at the centroid.
Vec3 EvalField(const SpatialField &f, const Mesh &mesh, int t, int components)
{
  switch (f.kind)
  {
    case SpatialField::Kind::Constant:
      return f.value;
    case SpatialField::Kind::Box:
      return PointInBox(mesh.TetCentroid(t), f.box) ? f.value : Vec3::Zero();
    case SpatialField::Kind::Expr:
    {
      const Vec3 c = mesh.TetCentroid(t);
      const std::vector<std::string> xyz = {"x", "y", "z"};
      Vec3 out = Vec3::Zero();
      for (int k = 0; k < components; k++)
      {
        Expression e(f.expr[k], xyz);
        out(k) = e(std::span<const double>(c.data(), 3));
      }
      return out;
    }
  }
  return Vec3::Zero();
}

}  // namespace

TetFields RealizeFields(const AffineDecomposition &decomp, const Mesh &mesh)
{
  const int T = mesh.NumTets();
  TetFields out;
  auto scalar = [&](const std::vector<AffineTerm> &terms)
  {
    std::vector<Vector> v;
    for (const auto &term : terms)
    {
      Vector f(T);
      for (int t = 0; t < T; t++)
      {
        f(t) = EvalField(term.field, mesh, t, 1)(0);
      }
      v.push_back(f);
    }
    return v;
  };
  auto vector = [&](const std::vector<AffineTerm> &terms, bool only_d)
  {
    std::vector<Matrix> v;
    for (const auto &term : terms)
    {
      Matrix f = Matrix::Zero(T, 3);
      for (int t = 0; t < T; t++)
      {
        if (!only_d || mesh.InRegionD(t))
        {
          f.row(t) = EvalField(term.field, mesh, t, 3).transpose();
        }
      }
      v.push_back(f);
    }
    return v;
  };
  out.sigma_inv = scalar(decomp.sigma_inv);
  out.eps = scalar(decomp.eps);
  out.rho = scalar(decomp.rho);
  out.ud = vector(decomp.ud, false);
  out.ed = vector(decomp.ed, true);
  return out;
}

Vector CombineScalar(const std::vector<Vector> &terms, const Vector &theta)
{
  if (static_cast<int>(terms.size()) != theta.size())
  {
    Throw(ErrorKind::Configuration, "affine term count mismatch");
  }
  if (terms.empty())
  {
    return Vector();
  }
  Vector out = Vector::Zero(terms[0].size());
  for (std::size_t q = 0; q < terms.size(); q++)
  {
    out += theta(q) * terms[q];
  }
  return out;
}

Matrix CombineVector(const std::vector<Matrix> &terms, const Vector &theta)
{
  if (static_cast<int>(terms.size()) != theta.size())
  {
    Throw(ErrorKind::Configuration, "affine term count mismatch");
  }
  if (terms.empty())
  {
    return Matrix();
  }
  Matrix out = Matrix::Zero(terms[0].rows(), terms[0].cols());
  for (std::size_t q = 0; q < terms.size(); q++)
  {
    out += theta(q) * terms[q];
  }
  return out;
}

namespace
{

double L2Norm(const Matrix &f, const Mesh &mesh, bool only_d)
{
  double s = 0.0;
  for (int t = 0; t < mesh.NumTets(); t++)
  {
    if (!only_d || mesh.InRegionD(t))
    {
      s += mesh.TetVolume(t) * f.row(t).squaredNorm();
    }
  }
  return std::sqrt(s);
}

[[noreturn]] void Violation(const std::string &what, const Parameter *mu)
{
  Throw(ErrorKind::Validation,
        what + (mu ? " at mu = " + FormatParameter(*mu) : std::string()));
}

}  // namespace

void ValidateCoefficients(const Problem &problem, const TetFields &fields, const Mesh &mesh,
                          const std::vector<Parameter> &samples)
{
  const auto &d = problem.data;
  const auto &dec = problem.decomp;
  const double tol = 1e-12;
  if (dec.sigma_inv.empty() || dec.eps.empty())
  {
    Throw(ErrorKind::Configuration, "sigma_inv and eps need at least one affine term");
  }
  if (!(d.eps_lo > 0.0) || !(d.sigma_lo > 0.0) || !(d.alpha > 0.0))
  {
    Throw(ErrorKind::Validation, "need eps_lower > 0, sigma_lower > 0 and alpha > 0");
  }
  if (d.eps_lo > d.eps_hi || d.sigma_lo > d.sigma_hi || d.rho_lo > d.rho_hi)
  {
    Throw(ErrorKind::Validation, "coefficient bounds are not ordered");
  }
  if ((d.u_lo.array() > d.u_hi.array()).any())
  {
    Throw(ErrorKind::Validation, "control bounds are not ordered");
  }
  // Per-term bounds used by the Hoelder estimates.
  for (std::size_t q = 0; q < fields.sigma_inv.size(); q++)
  {
    if (fields.sigma_inv[q].cwiseAbs().maxCoeff() > 1.0 / d.sigma_lo + tol)
    {
      Violation("sigma_inv term " + std::to_string(q + 1) + " exceeds 1/sigma_lower", nullptr);
    }
  }
  for (std::size_t q = 0; q < fields.eps.size(); q++)
  {
    if (fields.eps[q].cwiseAbs().maxCoeff() > d.eps_hi + tol)
    {
      Violation("eps term " + std::to_string(q + 1) + " exceeds eps_upper", nullptr);
    }
  }
  for (std::size_t q = 0; q < fields.ud.size(); q++)
  {
    if (L2Norm(fields.ud[q], mesh, false) > d.u_d * (1 + tol))
    {
      Violation("u_d term " + std::to_string(q + 1) + " exceeds the u_d cap", nullptr);
    }
  }
  for (std::size_t q = 0; q < fields.ed.size(); q++)
  {
    if (L2Norm(fields.ed[q], mesh, true) > d.e_d * (1 + tol))
    {
      Violation("E_d term " + std::to_string(q + 1) + " exceeds the e_d cap", nullptr);
    }
  }
  for (const auto &mu : samples)
  {
    const ThetaValues th = EvaluateCoefficients(dec, d.domain, mu);
    const Vector sinv = CombineScalar(fields.sigma_inv, th.sigma_inv);
    const Vector eps = CombineScalar(fields.eps, th.eps);
    for (int t = 0; t < mesh.NumTets(); t++)
    {
      if (!(sinv(t) > 0.0))
      {
        Violation("sigma^-1 <= 0 on tet " + std::to_string(t), &mu);
      }
      const double sigma = 1.0 / sinv(t);
      if (sigma < d.sigma_lo * (1 - tol) || sigma > d.sigma_hi * (1 + tol))
      {
        Violation("sigma = " + std::to_string(sigma) + " outside [sigma_lower, sigma_upper] on tet " +
                      std::to_string(t),
                  &mu);
      }
      if (eps(t) < d.eps_lo * (1 - tol) || eps(t) > d.eps_hi * (1 + tol))
      {
        Violation("eps = " + std::to_string(eps(t)) + " outside [eps_lower, eps_upper] on tet " +
                      std::to_string(t),
                  &mu);
      }
    }
    if (!fields.rho.empty())
    {
      const Vector rho = CombineScalar(fields.rho, th.rho);
      if (rho.minCoeff() < d.rho_lo - tol || rho.maxCoeff() > d.rho_hi + tol)
      {
        Violation("rho outside [rho_lower, rho_upper]", &mu);
      }
    }
    if (!fields.ud.empty() &&
        L2Norm(CombineVector(fields.ud, th.ud), mesh, false) > d.u_d * (1 + tol))
    {
      Violation("||u_d(mu)|| exceeds the u_d cap", &mu);
    }
    if (!fields.ed.empty() &&
        L2Norm(CombineVector(fields.ed, th.ed), mesh, true) > d.e_d * (1 + tol))
    {
      Violation("||E_d(mu)||_D exceeds the e_d cap", &mu);
    }
  }
}

void ValidateHolderData(const Problem &problem, int pairs, std::uint64_t seed)
{
  const auto a = problem.data.domain.RandomSample(pairs, seed);
  const auto b = problem.data.domain.RandomSample(pairs, seed + 1);
  for (Field f : kAllFields)
  {
    const auto &terms = problem.decomp.Terms(f);
    for (std::size_t q = 0; q < terms.size(); q++)
    {
      const double gamma = terms[q].gamma.value_or(1.0);
      for (int k = 0; k < pairs; k++)
      {
        std::span<const double> x(a[k].data(), a[k].size()), y(b[k].data(), b[k].size());
        const double diff = std::abs(terms[q].theta(x) - terms[q].theta(y));
        const double bound = terms[q].lipschitz * std::pow((a[k] - b[k]).norm(), gamma);
        if (diff > bound * (1 + 1e-10) + 1e-14)
        {
          std::ostringstream os;
          os << "declared Hoelder data of " << ToString(f) << " term " << q + 1
             << " violated: |dTheta| = " << diff << " > " << bound << " between "
             << FormatParameter(a[k]) << " and " << FormatParameter(b[k]);
          Throw(ErrorKind::Validation, os.str());
        }
      }
    }
  }
}

ConstantsLedger BuildConstants(const Problem &problem, const StabilityEstimates &est)
{
  if (!(est.coercivity > 0.0) || !(est.infsup > 0.0) || !(est.poincare > 0.0))
  {
    Throw(ErrorKind::InvalidArgument, "stability estimates must be positive");
  }
  const auto &d = problem.data;
  const auto &dec = problem.decomp;
  ConstantsLedger L;
  const double C = d.coercivity_override.value_or(est.coercivity);
  const double e = d.eps_hi, el = d.eps_lo, a = d.alpha;
  const double ub = d.ControlBoundNorm(), om = d.OmegaSqrt();
  L.coercivity = C;
  L.infsup = est.infsup;
  L.poincare = est.poincare;

  const double a0 = 1.0 / C;
  L.stability = std::max(e / a0, est.poincare * (1.0 + (1.0 / d.sigma_lo) / a0) / est.infsup);
  L.C_E = L.stability * om * (d.RhoBound() + ub);
  L.C_F = L.stability * (d.e_d + L.C_E);

  const double ra = 1.0 / std::sqrt(a);
  L.ab_E = C * ra * e / el;
  L.ab_F = C / a * e / el;

  L.delta_upper_E = C * (ra * e / el + (1.0 + C * e) * (C * ra * e * e / el + 1.0));
  L.delta_upper_F = C * (1.0 + e / (a * el) + (1.0 + C * e) * C * e * e / (a * el));
  L.delta_lower_E = d.sigma_lo / std::max(2.0, C * e);
  L.delta_lower_F = d.sigma_lo / std::max(1.0, 2.0 * C * e);

  const double ctrl = ub * om + d.u_d;
  L.delta_J_E = C * e * ((L.C_E + d.e_d) * (C * ra * e * e / el + 1.0) + std::sqrt(a) * e / el * ctrl);
  L.delta_J_F = C * e * e * (C / a * e / el * (L.C_E + d.e_d) + ctrl / el);

  const double CEed = d.e_d + L.C_E;
  L.C_sigma_half = 8.0 * C * L.C_E / a / d.sigma_lo / el * e * CEed;
  L.C_eps_half = 8.0 * (C * e * CEed + L.C_F) / a / el * e * ub * om;
  const double t2 = a * (d.u_d + om * ub) + L.C_F;
  L.C_eps_one = 4.0 * (C * C * e * e * CEed * CEed + t2 * t2) / (a * a) / (el * el) * e * e;
  L.C_ud_one = 4.0 / (el * el) * e * e * d.u_d * d.u_d * static_cast<double>(dec.Count(Field::Ud));
  L.C_Ed_half =
      8.0 * L.C_E / a / el * e * d.e_d * std::sqrt(static_cast<double>(dec.Count(Field::Ed)));
  return L;
}

std::string LedgerToJson(const ConstantsLedger &L)
{
  json j;
  j["C_omega_sigma"] = L.coercivity;
  j["inf_sup"] = L.infsup;
  j["poincare"] = L.poincare;
  j["stability"] = L.stability;
  j["C_E"] = L.C_E;
  j["C_F"] = L.C_F;
  j["C_sigma_half"] = L.C_sigma_half;
  j["C_eps_half"] = L.C_eps_half;
  j["C_eps_one"] = L.C_eps_one;
  j["C_ud_one"] = L.C_ud_one;
  j["C_Ed_half"] = L.C_Ed_half;
  j["delta_upper_E"] = L.delta_upper_E;
  j["delta_upper_F"] = L.delta_upper_F;
  j["delta_lower_E"] = L.delta_lower_E;
  j["delta_lower_F"] = L.delta_lower_F;
  j["delta_J_E"] = L.delta_J_E;
  j["delta_J_F"] = L.delta_J_F;
  j["ab_E"] = L.ab_E;
  j["ab_F"] = L.ab_F;
  return j.dump(2);
}

double HolderUpperBound(const Parameter &mu1, const Parameter &mu2,
                        const ConstantsLedger &ledger, const Problem &problem)
{
  const auto t1 = EvaluateCoefficients(problem.decomp, problem.data.domain, mu1);
  const auto t2 = EvaluateCoefficients(problem.decomp, problem.data.domain, mu2);
  const double s_sigma = (t1.sigma_inv - t2.sigma_inv).cwiseAbs().sum();
  const double s_eps = (t1.eps - t2.eps).cwiseAbs().sum();
  const double s_ud = (t1.ud - t2.ud).squaredNorm();
  const double s_ed = (t1.ed - t2.ed).squaredNorm();
  return std::sqrt(ledger.C_sigma_half) * std::sqrt(s_sigma) +
         std::sqrt(ledger.C_eps_half) * std::sqrt(s_eps) + std::sqrt(ledger.C_eps_one) * s_eps +
         std::sqrt(ledger.C_ud_one) * std::sqrt(s_ud) +
         std::sqrt(ledger.C_Ed_half) * std::pow(s_ed, 0.25);
}

double FillDistance(const std::vector<Parameter> &training,
                    const std::vector<Parameter> &candidates)
{
  if (training.empty() || candidates.empty())
  {
    Throw(ErrorKind::InvalidArgument, "fill distance needs non-empty sets");
  }
  double kappa = 0.0;
  for (const auto &c : candidates)
  {
    double best = std::numeric_limits<double>::infinity();
    for (const auto &t : training)
    {
      best = std::min(best, (c - t).norm());
    }
    kappa = std::max(kappa, best);
  }
  return kappa;
}

double GammaExponent(const AffineDecomposition &decomp)
{
  auto field_gamma = [&](Field f) -> std::optional<double>
  {
    const auto &terms = decomp.Terms(f);
    if (terms.empty())
    {
      return std::nullopt;
    }
    double g = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < terms.size(); q++)
    {
      if (!terms[q].gamma || !(*terms[q].gamma > 0.0))
      {
        Throw(ErrorKind::Configuration, std::string("missing or non-positive Hoelder exponent for ") +
                                            ToString(f) + " term " + std::to_string(q + 1));
      }
      g = std::min(g, *terms[q].gamma);
    }
    return g;
  };
  double g = std::numeric_limits<double>::infinity();
  bool any = false;
  for (auto [f, scale] : {std::pair{Field::SigmaInv, 1.0}, std::pair{Field::Eps, 1.0},
                          std::pair{Field::Ud, 2.0}, std::pair{Field::Ed, 1.0}})
  {
    if (auto v = field_gamma(f))
    {
      g = std::min(g, scale * *v);
      any = true;
    }
  }
  if (!any)
  {
    Throw(ErrorKind::Configuration, "no Hoelder exponents declared");
  }
  return 0.5 * g;
}

// Problem file.

namespace
{

Vec3 ReadVec3(const json &j, const std::string &what)
{
  if (j.is_number())
  {
    return Vec3(j.get<double>(), 0.0, 0.0);
  }
  if (!j.is_array() || j.size() != 3)
  {
    Throw(ErrorKind::Parse, what + ": expected a number or an array of 3 numbers");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Box ReadBox(const json &j, const std::string &what)
{
  if (!j.is_object() || !j.contains("lo") || !j.contains("hi"))
  {
    Throw(ErrorKind::Parse, what + ": box needs 'lo' and 'hi'");
  }
  Box b{ReadVec3(j["lo"], what + ".lo"), ReadVec3(j["hi"], what + ".hi")};
  if ((b.lo.array() >= b.hi.array()).any())
  {
    Throw(ErrorKind::Validation, what + ": box lo must be < hi");
  }
  return b;
}

SpatialField ReadField(const json &j, bool vector, const std::string &what)
{
  SpatialField f;
  auto value = [&](const json &v)
  {
    if (vector)
    {
      if (!v.is_array() || v.size() != 3)
      {
        Throw(ErrorKind::Parse, what + ": vector field needs 3 components");
      }
      return ReadVec3(v, what);
    }
    if (!v.is_number())
    {
      Throw(ErrorKind::Parse, what + ": scalar field needs a number");
    }
    return Vec3(v.get<double>(), 0.0, 0.0);
  };
  if (j.contains("constant"))
  {
    f.kind = SpatialField::Kind::Constant;
    f.value = value(j["constant"]);
  }
  else if (j.contains("box"))
  {
    f.kind = SpatialField::Kind::Box;
    f.box = ReadBox(j["box"], what + ".box");
    if (!j.contains("value"))
    {
      Throw(ErrorKind::Parse, what + ": box field needs 'value'");
    }
    f.value = value(j["value"]);
  }
  else if (j.contains("expr"))
  {
    f.kind = SpatialField::Kind::Expr;
    const auto &e = j["expr"];
    if (vector)
    {
      if (!e.is_array() || e.size() != 3)
      {
        Throw(ErrorKind::Parse, what + ": vector expr needs 3 strings");
      }
      for (const auto &s : e)
      {
        f.expr.push_back(s.get<std::string>());
      }
    }
    else
    {
      f.expr.push_back(e.get<std::string>());
    }
    for (const auto &s : f.expr)
    {
      Expression check(s, {"x", "y", "z"});
    }
  }
  else
  {
    Throw(ErrorKind::Parse, what + ": field needs one of 'constant', 'box', 'expr'");
  }
  return f;
}

json WriteField(const SpatialField &f, bool vector)
{
  auto value = [&](const Vec3 &v) -> json
  {
    if (vector)
    {
      return json::array({v(0), v(1), v(2)});
    }
    return v(0);
  };
  json j;
  switch (f.kind)
  {
    case SpatialField::Kind::Constant:
      j["constant"] = value(f.value);
      break;
    case SpatialField::Kind::Box:
      j["box"] = {{"lo", {f.box.lo(0), f.box.lo(1), f.box.lo(2)}},
                  {"hi", {f.box.hi(0), f.box.hi(1), f.box.hi(2)}}};
      j["value"] = value(f.value);
      break;
    case SpatialField::Kind::Expr:
      if (vector)
      {
        j["expr"] = f.expr;
      }
      else
      {
        j["expr"] = f.expr[0];
      }
      break;
  }
  return j;
}

std::pair<double, double> ReadPair(const json &j, const std::string &what)
{
  if (!j.is_array() || j.size() != 2)
  {
    Throw(ErrorKind::Parse, what + ": expected [lower, upper]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

const json &Require(const json &j, const char *key, const std::string &where)
{
  if (!j.contains(key))
  {
    Throw(ErrorKind::Parse, where + ": missing '" + key + "'");
  }
  return j[key];
}

}  // namespace

Problem ParseProblem(const std::string &text)
{
  json j;
  try
  {
    j = json::parse(text, nullptr, true, true);
  }
  catch (const json::parse_error &e)
  {
    Throw(ErrorKind::Parse, std::string("problem file: ") + e.what());
  }
  Problem p;
  try
  {
    const auto &par = Require(j, "parameters", "problem");
    const auto lo = Require(par, "lower", "parameters").get<std::vector<double>>();
    const auto hi = Require(par, "upper", "parameters").get<std::vector<double>>();
    p.data.domain = ParameterDomain(Eigen::Map<const Vector>(lo.data(), lo.size()),
                                    Eigen::Map<const Vector>(hi.data(), hi.size()));
    const int dim = p.data.domain.Dim();
    if (par.contains("train_grid"))
    {
      const auto &tg = par["train_grid"];
      p.data.train_grid = tg.is_string() ? ParseGridSpec(tg.get<std::string>(), dim)
                                         : tg.get<std::vector<int>>();
      if (static_cast<int>(p.data.train_grid.size()) != dim)
      {
        Throw(ErrorKind::Parse, "parameters.train_grid dimension mismatch");
      }
    }
    if (j.contains("region_d") && !j["region_d"].is_null())
    {
      p.data.d_box = ReadBox(j["region_d"], "region_d");
    }
    p.data.alpha = Require(j, "alpha", "problem").get<double>();
    const auto &cb = Require(j, "control_bounds", "problem");
    p.data.u_lo = ReadVec3(Require(cb, "lower", "control_bounds"), "control_bounds.lower");
    p.data.u_hi = ReadVec3(Require(cb, "upper", "control_bounds"), "control_bounds.upper");
    const auto &b = Require(j, "bounds", "problem");
    std::tie(p.data.rho_lo, p.data.rho_hi) = ReadPair(Require(b, "rho", "bounds"), "bounds.rho");
    std::tie(p.data.eps_lo, p.data.eps_hi) = ReadPair(Require(b, "eps", "bounds"), "bounds.eps");
    std::tie(p.data.sigma_lo, p.data.sigma_hi) =
        ReadPair(Require(b, "sigma", "bounds"), "bounds.sigma");
    p.data.e_d = Require(b, "e_d", "bounds").get<double>();
    p.data.u_d = Require(b, "u_d", "bounds").get<double>();
    if (j.contains("coercivity_override") && !j["coercivity_override"].is_null())
    {
      p.data.coercivity_override = j["coercivity_override"].get<double>();
    }
    const auto &terms = Require(j, "terms", "problem");
    const auto names = ParameterVariableNames(dim);
    for (Field f : kAllFields)
    {
      const char *key = ToString(f);
      if (!terms.contains(key))
      {
        continue;
      }
      int q = 0;
      for (const auto &t : terms[key])
      {
        const std::string where = std::string("terms.") + key + "[" + std::to_string(q++) + "]";
        AffineTerm term;
        const auto &th = Require(t, "theta", where);
        term.theta_source = th.is_number() ? json(th).dump() : th.get<std::string>();
        term.theta = Expression(term.theta_source, names);
        term.lipschitz = t.value("L", 0.0);
        if (t.contains("gamma") && !t["gamma"].is_null())
        {
          term.gamma = t["gamma"].get<double>();
        }
        term.field = ReadField(Require(t, "field", where), IsVectorField(f), where + ".field");
        p.decomp.Terms(f).push_back(std::move(term));
      }
    }
  }
  catch (const json::exception &e)
  {
    Throw(ErrorKind::Parse, std::string("problem file: ") + e.what());
  }
  if (!(p.data.alpha > 0.0))
  {
    Throw(ErrorKind::Validation, "alpha must be > 0");
  }
  if (!(p.data.eps_lo > 0.0) || !(p.data.sigma_lo > 0.0))
  {
    Throw(ErrorKind::Validation, "eps_lower and sigma_lower must be > 0");
  }
  if ((p.data.u_lo.array() > p.data.u_hi.array()).any())
  {
    Throw(ErrorKind::Validation, "control_bounds: lower > upper");
  }
  if (p.decomp.sigma_inv.empty() || p.decomp.eps.empty())
  {
    Throw(ErrorKind::Configuration, "terms.sigma_inv and terms.eps must be non-empty");
  }
  return p;
}

Problem LoadProblem(const std::string &path)
{
  std::ifstream in(path);
  if (!in)
  {
    Throw(ErrorKind::Io, "cannot open problem file " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseProblem(ss.str());
}

std::string ProblemToJson(const Problem &p)
{
  json j;
  const auto &d = p.data;
  std::vector<double> lo(d.domain.Lower().data(), d.domain.Lower().data() + d.domain.Dim());
  std::vector<double> hi(d.domain.Upper().data(), d.domain.Upper().data() + d.domain.Dim());
  j["parameters"]["lower"] = lo;
  j["parameters"]["upper"] = hi;
  if (!d.train_grid.empty())
  {
    j["parameters"]["train_grid"] = d.train_grid;
  }
  if (d.d_box)
  {
    j["region_d"] = {{"lo", {d.d_box->lo(0), d.d_box->lo(1), d.d_box->lo(2)}},
                     {"hi", {d.d_box->hi(0), d.d_box->hi(1), d.d_box->hi(2)}}};
  }
  else
  {
    j["region_d"] = nullptr;
  }
  j["alpha"] = d.alpha;
  j["control_bounds"] = {{"lower", {d.u_lo(0), d.u_lo(1), d.u_lo(2)}},
                         {"upper", {d.u_hi(0), d.u_hi(1), d.u_hi(2)}}};
  j["bounds"] = {{"rho", {d.rho_lo, d.rho_hi}},
                 {"eps", {d.eps_lo, d.eps_hi}},
                 {"sigma", {d.sigma_lo, d.sigma_hi}},
                 {"e_d", d.e_d},
                 {"u_d", d.u_d}};
  if (d.coercivity_override)
  {
    j["coercivity_override"] = *d.coercivity_override;
  }
  for (Field f : kAllFields)
  {
    json arr = json::array();
    for (const auto &t : p.decomp.Terms(f))
    {
      json jt;
      jt["theta"] = t.theta_source;
      jt["L"] = t.lipschitz;
      if (t.gamma)
      {
        jt["gamma"] = *t.gamma;
      }
      jt["field"] = WriteField(t.field, IsVectorField(f));
      arr.push_back(jt);
    }
    j["terms"][ToString(f)] = arr;
  }
  return j.dump(2);
}

std::string CanonicalBenchmarkJson()
{
  return R"({
  "parameters": {"lower": [0.1, 0.1], "upper": [1.0, 1.0], "train_grid": [9, 9]},
  "region_d": {"lo": [0, 0, 0], "hi": [0.5, 0.5, 0.5]},
  "alpha": 0.01,
  "control_bounds": {"lower": [-0.5, -0.5, -0.5], "upper": [0.5, 0.5, 0.5]},
  "bounds": {"rho": [0, 0], "eps": [1, 2], "sigma": [0.5, 1], "e_d": 0.4, "u_d": 0.2},
  "terms": {
    "sigma_inv": [
      {"theta": "1", "L": 0, "gamma": 1, "field": {"constant": 1}},
      {"theta": "mu1", "L": 1, "gamma": 1,
       "field": {"box": {"lo": [0, 0, 0], "hi": [0.5, 1, 1]}, "value": 1}}
    ],
    "eps": [
      {"theta": "1", "L": 0, "gamma": 1, "field": {"constant": 1}},
      {"theta": "mu2", "L": 1, "gamma": 1,
       "field": {"box": {"lo": [0, 0, 0], "hi": [1, 1, 0.5]}, "value": 1}}
    ],
    "rho": [],
    "u_d": [
      {"theta": "1", "L": 0, "gamma": 1, "field": {"constant": [0.2, 0, 0]}}
    ],
    "e_d": [
      {"theta": "1", "L": 0, "gamma": 1, "field": {"constant": [1, 0, 0]}},
      {"theta": "mu1", "L": 1, "gamma": 1, "field": {"constant": [0, 0.5, 0]}}
    ]
  }
})";
}

Problem CanonicalBenchmark()
{
  return ParseProblem(CanonicalBenchmarkJson());
}

}  // namespace maxrb
