// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include "maxrb/control.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <Eigen/SparseCholesky>

namespace maxrb
{

Vector ClampBox(const Vector &w, const Vec3 &lo, const Vec3 &hi)
{
  if (w.size() % 3 != 0)
  {
    Throw(ErrorKind::InvalidArgument, "control vector length is not a multiple of 3");
  }
  for (int c = 0; c < 3; c++)
  {
    if (!(lo(c) <= hi(c)))
    {
      Throw(ErrorKind::InvalidArgument, "control bounds are not ordered");
    }
  }
  Vector out(w.size());
  for (Eigen::Index i = 0; i < w.size(); i++)
  {
    const int c = static_cast<int>(i % 3);
    out(i) = std::min(std::max(w(i), lo(c)), hi(c));
  }
  return out;
}

AdmissibleSet::AdmissibleSet(const TruthModel &truth, const Parameter &mu)
  : AdmissibleSet(truth, mu, truth.GetProblem().data.u_lo, truth.GetProblem().data.u_hi)
{
}

AdmissibleSet::AdmissibleSet(const TruthModel &truth, const Parameter &mu, const Vec3 &lo,
                             const Vec3 &hi)
  : truth_(&truth), mu_(mu), lo_(lo), hi_(hi)
{
  for (int c = 0; c < 3; c++)
  {
    if (!(lo(c) <= hi(c)))
    {
      Throw(ErrorKind::InvalidArgument, "control bounds are not ordered");
    }
  }
  truth.GetProblem().data.domain.Check(mu);
  w_ = truth.ControlWeights(mu);
}

Vector AdmissibleSet::Divergence(const Vector &v) const
{
  return truth_->GetSpaces().Gcell.transpose() * w_.cwiseProduct(v);
}

double AdmissibleSet::DivergenceResidual(const Vector &v) const
{
  return Divergence(v).norm();
}

double AdmissibleSet::BoxResidual(const Vector &v) const
{
  double r = 0.0;
  for (Eigen::Index i = 0; i < v.size(); i++)
  {
    const int c = static_cast<int>(i % 3);
    r = std::max({r, lo_(c) - v(i), v(i) - hi_(c)});
  }
  return r;
}

Vector AdmissibleSet::ProjectDivFree(const Vector &w) const
{
  if (w.size() != Size())
  {
    Throw(ErrorKind::InvalidArgument, "control vector has wrong length");
  }
  if (truth_->NumNodeDofs() == 0)
  {
    return w;
  }
  const Vector psi = truth_->SolveWeightedLaplacian(mu_, Divergence(w));
  return w - truth_->GetSpaces().Gcell * psi;
}

bool AdmissibleSet::Polish(const Vector &w, const Vector &x, Vector *out) const
{
  const SpMat &Gc = truth_->GetSpaces().Gcell;
  const int n = Size();
  Vector mask(n), z(n);
  for (int i = 0; i < n; i++)
  {
    const int c = i % 3;
    const bool active = x(i) == lo_(c) || x(i) == hi_(c);
    mask(i) = active ? 0.0 : 1.0;
    z(i) = active ? x(i) : w(i);
  }
  const SpMat K = Gc.transpose() * (w_.cwiseProduct(mask)).asDiagonal() * Gc;
  const Vector rhs = Gc.transpose() * w_.cwiseProduct(z);
  Eigen::SimplicialLDLT<SpMat> ldlt(K);
  if (ldlt.info() != Eigen::Success)
  {
    return false;
  }
  const Vector psi = ldlt.solve(rhs);
  if (!psi.allFinite() || (K * psi - rhs).norm() > 1e-12 * std::max(1.0, rhs.norm()))
  {
    return false;
  }
  const Vector gpsi = Gc * psi;
  Vector v = z;
  double scale = 1.0;
  for (int i = 0; i < n; i++)
  {
    scale = std::max(scale, std::abs(w(i)));
  }
  const double tol = 1e-10 * scale;
  for (int i = 0; i < n; i++)
  {
    const int c = i % 3;
    if (mask(i) == 1.0)
    {
      v(i) = w(i) - gpsi(i);
      if (v(i) < lo_(c) - tol || v(i) > hi_(c) + tol)
      {
        return false;
      }
    }
    else if (lo_(c) < hi_(c))
    {
      const double s = w(i) - x(i) - gpsi(i);
      if ((x(i) == hi_(c) && s < -tol) || (x(i) == lo_(c) && s > tol))
      {
        return false;
      }
    }
  }
  *out = Clamp(v);
  return true;
}

ProjectionResult AdmissibleSet::Project(const Vector &w, const ProjectionOptions &opt) const
{
  if (w.size() != Size())
  {
    Throw(ErrorKind::InvalidArgument, "control vector has wrong length");
  }
  ProjectionResult res;
  Vector x = w;
  Vector q = Vector::Zero(w.size());
  for (int k = 1; k <= opt.max_sweeps; k++)
  {
    const Vector y = ProjectDivFree(x);
    const Vector xn = Clamp(y + q);
    q += y - xn;
    res.last_step = Norm(xn - x);
    x = xn;
    res.sweeps = k;
    if (res.last_step < opt.tol)
    {
      res.converged = true;
      break;
    }
  }
  res.u = x;
  if (opt.polish && truth_->NumNodeDofs() > 0)
  {
    Vector v;
    if (Polish(w, x, &v))
    {
      res.u = v;
      res.polished = true;
      res.converged = true;
    }
  }
  return res;
}

OcpSolution SolveOcp(const OcpModel &model, const AdmissibleSet &uad, const OcpOptions &opt)
{
  if (model.NumControlDofs() != uad.Size())
  {
    Throw(ErrorKind::InvalidArgument, "model and admissible set sizes differ");
  }
  if (!(opt.omega > 0.0 && opt.omega <= 1.0))
  {
    Throw(ErrorKind::InvalidArgument, "damping must lie in (0, 1]");
  }
  const double alpha = model.Alpha();
  const Vector ud = model.Ud();
  OcpSolution sol;
  sol.mu = model.Mu();

  struct Iterate
  {
    Vector u, E, F, Tu;
    double cost, residual;
  };
  auto evaluate = [&](const Vector &u)
  {
    Iterate it;
    it.u = u;
    it.E = model.SolveState(u);
    it.F = model.SolveAdjoint(it.E);
    it.cost = model.Cost(u, it.E);
    const ProjectionResult p =
      uad.Project(ud - model.AdjointToControl(it.F) / alpha, opt.projection);
    if (!p.converged)
    {
      sol.projection_converged = false;
    }
    it.Tu = p.u;
    it.residual = uad.Norm(it.Tu - u);
    return it;
  };

  const ProjectionResult p0 = uad.Project(ud, opt.projection);
  sol.projection_converged = p0.converged;
  Iterate cur = evaluate(p0.u);
  double omega = opt.omega;
  int iter = 0;
  std::vector<double> history{cur.residual};
  if (opt.record_trace)
  {
    sol.trace.push_back({0, omega, cur.residual, cur.cost, true});
  }
  while (cur.residual > opt.tol)
  {
    if (iter >= opt.max_iter || omega < opt.min_omega)
    {
      std::ostringstream os;
      os << "fixed-point iteration did not converge at mu = " << FormatParameter(sol.mu)
         << " after " << iter << " iterations (omega " << omega << "); increments:";
      const std::size_t first = history.size() > 8 ? history.size() - 8 : 0;
      for (std::size_t i = first; i < history.size(); i++)
      {
        os << " " << history[i];
      }
      os << "; try a smaller damping";
      Throw(ErrorKind::Convergence, os.str());
    }
    iter++;
    Iterate next = evaluate((1.0 - omega) * cur.u + omega * cur.Tu);
    const bool descent = next.cost <= cur.cost + 1e-12 * std::max(1.0, std::abs(cur.cost));
    if (opt.record_trace)
    {
      sol.trace.push_back({iter, omega, next.residual, next.cost, descent});
    }
    if (!descent)
    {
      omega *= 0.5;
      continue;
    }
    if (next.residual > cur.residual)
    {
      omega *= 0.5;
    }
    history.push_back(next.residual);
    cur = std::move(next);
  }
  sol.u = cur.u;
  sol.E = cur.E;
  sol.F = cur.F;
  sol.iterations = iter;
  sol.increment = cur.residual;
  sol.cost = cur.cost;
  sol.omega = omega;
  sol.kkt = KktResidual(model, uad, sol.u, sol.F);
  return sol;
}

double KktResidual(const OcpModel &model, const AdmissibleSet &uad, const Vector &u,
                   const Vector &F, std::uint64_t seed, int perturbations)
{
  const Vector g = model.Ud() - model.AdjointToControl(F) / model.Alpha() - u;
  std::vector<Vector> tests;
  const int n = uad.Size();
  for (int corner = 0; corner < 8; corner++)
  {
    Vec3 c;
    bool finite = true;
    for (int k = 0; k < 3; k++)
    {
      c(k) = (corner >> k) & 1 ? uad.Upper()(k) : uad.Lower()(k);
      finite = finite && std::isfinite(c(k));
    }
    if (!finite)
    {
      continue;
    }
    Vector v(n);
    for (int i = 0; i < n; i++)
    {
      v(i) = c(i % 3);
    }
    tests.push_back(uad.Project(v).u);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const double scale = std::max(1e-3, 0.1 * uad.Norm(u));
  for (int k = 0; k < perturbations; k++)
  {
    Vector r(n);
    for (int i = 0; i < n; i++)
    {
      r(i) = normal(rng);
    }
    r *= scale / std::max(uad.Norm(r), 1e-300);
    tests.push_back(uad.Project(u + r).u);
    tests.push_back(uad.Project(u - r).u);
  }
  double worst = 0.0;
  for (const auto &v : tests)
  {
    worst = std::max(worst, uad.Inner(v - u, g));
  }
  return worst;
}

void WriteTrace(const std::string &path, const std::vector<OcpTraceRow> &trace)
{
  std::ofstream out(path);
  if (!out)
  {
    Throw(ErrorKind::Io, "cannot write " + path);
  }
  out.precision(17);
  out << "iteration,omega,residual,cost,accepted\n";
  for (const auto &r : trace)
  {
    out << r.iteration << "," << r.omega << "," << r.residual << "," << r.cost << ","
        << (r.accepted ? 1 : 0) << "\n";
  }
}

}  // namespace maxrb
