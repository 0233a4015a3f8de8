// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include "maxrb/truth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "maxrb/quadrature.hpp"

namespace maxrb
{

TruthModel::TruthModel(Problem problem, const Mesh &mesh, Exec exec)
  : problem_(std::move(problem))
{
  spaces_ = BuildSpaces(mesh);
  fields_ = RealizeFields(problem_.decomp, mesh);
  ops_ = AssembleBlocks(spaces_, problem_.decomp, fields_, exec);
  problem_.data.omega_volume = mesh.TotalVolume();

  x_chol_.compute(ops_.Xcurl);
  if (x_chol_.info() != Eigen::Success)
  {
    Throw(ErrorKind::Configuration, "H(curl) Gram matrix factorization failed");
  }
  helm_rhs_ = spaces_.G.transpose() * ops_.Medge;
  SpMat L1 = helm_rhs_ * spaces_.G;
  helm_chol_.compute(L1);
  if (helm_chol_.info() != Eigen::Success)
  {
    Throw(ErrorKind::Configuration, "nodal Laplacian factorization failed");
  }
}

ThetaValues TruthModel::Thetas(const Parameter &mu) const
{
  return EvaluateCoefficients(problem_.decomp, problem_.data.domain, mu);
}

std::shared_ptr<const SaddleSystem> TruthModel::System(const Parameter &mu) const
{
  const std::string key = ParameterKey(mu);
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end())
    {
      return it->second;
    }
  }
  auto sys = std::make_shared<SaddleSystem>();
  sys->mu = mu;
  sys->theta = Thetas(mu);
  sys->A = Combine(ops_.A, sys->theta.sigma_inv);
  sys->B = Combine(ops_.B, sys->theta.eps);
  const int ne = NumEdgeDofs(), nv = NumNodeDofs();
  std::vector<Triplet> trip;
  trip.reserve(sys->A.nonZeros() + 2 * sys->B.nonZeros());
  for (int k = 0; k < sys->A.outerSize(); k++)
  {
    for (SpMat::InnerIterator it(sys->A, k); it; ++it)
    {
      trip.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (int k = 0; k < sys->B.outerSize(); k++)
  {
    for (SpMat::InnerIterator it(sys->B, k); it; ++it)
    {
      trip.emplace_back(ne + it.row(), it.col(), it.value());
      trip.emplace_back(it.col(), ne + it.row(), it.value());
    }
  }
  sys->K.resize(ne + nv, ne + nv);
  sys->K.setFromTriplets(trip.begin(), trip.end());
  sys->K.makeCompressed();
  sys->lu.analyzePattern(sys->K);
  sys->lu.factorize(sys->K);
  if (sys->lu.info() != Eigen::Success)
  {
    Throw(ErrorKind::InfSup, "inf-sup failure: bordered system singular at mu = " +
                                 FormatParameter(mu) + " (" + sys->lu.lastErrorMessage() + ")");
  }
  std::lock_guard<std::mutex> lock(cache_mutex_);
  auto [it, inserted] = cache_.emplace(key, sys);
  if (inserted)
  {
    cache_order_.push_back(key);
    if (cache_order_.size() > kMaxCache)
    {
      cache_.erase(cache_order_.front());
      cache_order_.erase(cache_order_.begin());
    }
  }
  return it->second;
}

SaddleSolution TruthModel::SolveSaddle(const Parameter &mu, const Vector &f,
                                       const Vector &g) const
{
  const int ne = NumEdgeDofs(), nv = NumNodeDofs();
  if (f.size() != ne || g.size() != nv)
  {
    Throw(ErrorKind::InvalidArgument, "saddle right-hand side has wrong length");
  }
  auto sys = System(mu);
  Vector rhs(ne + nv);
  rhs << f, g;
  Vector sol = sys->lu.solve(rhs);
  SaddleSolution out;
  out.x = sol.head(ne);
  out.lambda = sol.tail(nv);
  if (!out.x.allFinite() || !out.lambda.allFinite())
  {
    Throw(ErrorKind::InfSup, "inf-sup failure: non-finite saddle solution at mu = " +
                                 FormatParameter(mu));
  }
  const double tiny = std::numeric_limits<double>::min();
  const Vector r1 = sys->A * out.x + sys->B.transpose() * out.lambda - f;
  const Vector r2 = sys->B * out.x - g;
  const SpMat absA = sys->A.cwiseAbs(), absB = sys->B.cwiseAbs();
  const Vector ax = out.x.cwiseAbs(), al = out.lambda.cwiseAbs();
  const double scale1 = std::max({f.norm(), (absA * ax + absB.transpose() * al).norm(), tiny});
  const double scale2 = std::max({g.norm(), (absB * ax).norm(), tiny});
  out.primal_residual = r1.norm() / scale1;
  out.constraint_residual = r2.norm() / scale2;
  if (out.primal_residual > 1e-8 || out.constraint_residual > 1e-8)
  {
    std::ostringstream os;
    os << "inf-sup failure: saddle residuals " << out.primal_residual << ", "
       << out.constraint_residual << " at mu = " << FormatParameter(mu);
    Throw(ErrorKind::InfSup, os.str());
  }
  return out;
}

Vector TruthModel::StateLoad(const Parameter &mu, const Vector &u) const
{
  return MUOf(mu).transpose() * u;
}

Vector TruthModel::AdjointLoad(const Parameter &mu, const Vector &E) const
{
  Vector f = MDOf(mu) * E;
  if (!ops_.ed_load.empty() && ops_.NumEd() > 0)
  {
    f -= EdLoad(mu);
  }
  return f;
}

Vector TruthModel::ConstraintRhs(const Parameter &mu) const
{
  if (ops_.r.empty())
  {
    return Vector::Zero(NumNodeDofs());
  }
  return -Combine(ops_.r, Thetas(mu).rho);
}

Vector TruthModel::EdLoad(const Parameter &mu) const
{
  const auto th = Thetas(mu);
  Vector l = Vector::Zero(NumEdgeDofs());
  for (int q = 0; q < ops_.NumEps(); q++)
  {
    for (int s = 0; s < ops_.NumEd(); s++)
    {
      l += th.eps(q) * th.ed(s) * ops_.ed_load[q][s];
    }
  }
  return l;
}

double TruthModel::EdGram(const Parameter &mu) const
{
  const auto th = Thetas(mu);
  double c = 0.0;
  for (int q = 0; q < ops_.NumEps(); q++)
  {
    if (ops_.NumEd() > 0)
    {
      c += th.eps(q) * th.ed.dot(ops_.ed_gram[q] * th.ed);
    }
  }
  return c;
}

Vector TruthModel::Ud(const Parameter &mu) const
{
  if (ops_.ud.empty())
  {
    return Vector::Zero(NumControlDofs());
  }
  return Combine(ops_.ud, Thetas(mu).ud);
}

Vector TruthModel::EpsCell(const Parameter &mu) const
{
  return Combine(ops_.eps_cell, Thetas(mu).eps);
}

Vector TruthModel::ControlWeights(const Parameter &mu) const
{
  const Vector eps = EpsCell(mu);
  Vector w(NumControlDofs());
  for (int t = 0; t < NumTets(); t++)
  {
    w.segment<3>(3 * t).setConstant(eps(t) * ops_.cell_volume(t));
  }
  return w;
}

SpMat TruthModel::AOf(const Parameter &mu) const
{
  return Combine(ops_.A, Thetas(mu).sigma_inv);
}

SpMat TruthModel::BOf(const Parameter &mu) const
{
  return Combine(ops_.B, Thetas(mu).eps);
}

SpMat TruthModel::MDOf(const Parameter &mu) const
{
  return Combine(ops_.MD, Thetas(mu).eps);
}

SpMat TruthModel::MUOf(const Parameter &mu) const
{
  return Combine(ops_.MU, Thetas(mu).eps);
}

SaddleSolution TruthModel::SolveState(const Parameter &mu, const Vector &u) const
{
  if (u.size() != NumControlDofs())
  {
    Throw(ErrorKind::InvalidArgument, "control vector has wrong length");
  }
  return SolveSaddle(mu, StateLoad(mu, u), ConstraintRhs(mu));
}

SaddleSolution TruthModel::SolveAdjoint(const Parameter &mu, const Vector &E) const
{
  if (E.size() != NumEdgeDofs())
  {
    Throw(ErrorKind::InvalidArgument, "state vector has wrong length");
  }
  return SolveSaddle(mu, AdjointLoad(mu, E), Vector::Zero(NumNodeDofs()));
}

Vector TruthModel::CellAverage(const Vector &F) const
{
  Vector avg = ops_.C0 * F;
  for (int t = 0; t < NumTets(); t++)
  {
    avg.segment<3>(3 * t) /= ops_.cell_volume(t);
  }
  return avg;
}

double TruthModel::TrackingCost(const Parameter &mu, const Vector &E) const
{
  return 0.5 * (E.dot(MDOf(mu) * E) - 2.0 * E.dot(EdLoad(mu)) + EdGram(mu));
}

double TruthModel::Cost(const Parameter &mu, const Vector &u, const Vector &E) const
{
  const Vector du = u - Ud(mu);
  return TrackingCost(mu, E) +
         0.5 * problem_.data.alpha * du.dot(ControlWeights(mu).cwiseProduct(du));
}

HelmholtzSplit TruthModel::HelmholtzDecompose(const Vector &z) const
{
  HelmholtzSplit h;
  if (NumNodeDofs() == 0)
  {
    h.z1 = z;
    h.hz = Vector::Zero(0);
    h.degenerate = true;
    return h;
  }
  h.hz = helm_chol_.solve(helm_rhs_ * z);
  h.z1 = z - spaces_.G * h.hz;
  return h;
}

Vector TruthModel::RieszRepresentative(const Vector &functional) const
{
  return x_chol_.solve(functional);
}

double TruthModel::DualNorm(const Vector &functional) const
{
  const Vector r = RieszRepresentative(functional);
  return std::sqrt(std::max(0.0, r.dot(ops_.Xcurl * r)));
}

const TruthModel::KernelData &TruthModel::Kernel() const
{
  std::call_once(kernel_once_,
                 [this]
                 {
                   for (const auto &B : ops_.B)
                   {
                     kernel_.Y.push_back(x_chol_.solve(Matrix(B.transpose())));
                   }
                   const int q = static_cast<int>(ops_.B.size());
                   kernel_.S.assign(q, std::vector<Matrix>(q));
                   for (int a = 0; a < q; a++)
                   {
                     for (int b = 0; b < q; b++)
                     {
                       kernel_.S[a][b] = ops_.B[a] * kernel_.Y[b];
                     }
                   }
                 });
  return kernel_;
}

double TruthModel::KernelDualNorm(const Parameter &mu, const Vector &functional) const
{
  if (NumNodeDofs() == 0)
  {
    return DualNorm(functional);
  }
  const auto &kd = Kernel();
  const Vector th = Thetas(mu).eps;
  const int q = static_cast<int>(th.size());
  const Vector y = x_chol_.solve(functional);
  Vector by = Vector::Zero(NumNodeDofs());
  Matrix S = Matrix::Zero(NumNodeDofs(), NumNodeDofs());
  for (int a = 0; a < q; a++)
  {
    by += th(a) * (ops_.B[a] * y);
    for (int b = 0; b < q; b++)
    {
      S += th(a) * th(b) * kd.S[a][b];
    }
  }
  const Vector s = S.ldlt().solve(by);
  Vector r = y;
  for (int a = 0; a < q; a++)
  {
    r -= th(a) * (kd.Y[a] * s);
  }
  return std::sqrt(std::max(0.0, r.dot(ops_.Xcurl * r)));
}

Vector TruthModel::SolveWeightedLaplacian(const Parameter &mu, const Vector &rhs) const
{
  const std::string key = ParameterKey(mu);
  std::shared_ptr<const Eigen::SimplicialLDLT<SpMat>> chol;
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = lap_cache_.find(key);
    if (it != lap_cache_.end())
    {
      chol = it->second;
    }
  }
  if (!chol)
  {
    auto c = std::make_shared<Eigen::SimplicialLDLT<SpMat>>();
    c->compute(Combine(ops_.L, Thetas(mu).eps));
    if (c->info() != Eigen::Success)
    {
      Throw(ErrorKind::Solver, "weighted nodal Laplacian singular at mu = " + FormatParameter(mu));
    }
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto [it, inserted] = lap_cache_.emplace(key, c);
    if (inserted)
    {
      lap_order_.push_back(key);
      if (lap_order_.size() > kMaxCache)
      {
        lap_cache_.erase(lap_order_.front());
        lap_order_.erase(lap_order_.begin());
      }
    }
    chol = it->second;
  }
  return chol->solve(rhs);
}

double TruthModel::NormX(const Vector &v) const
{
  return std::sqrt(std::max(0.0, v.dot(ops_.Xcurl * v)));
}

double TruthModel::NormL2Edge(const Vector &v) const
{
  return std::sqrt(std::max(0.0, v.dot(ops_.Medge * v)));
}

double TruthModel::NormGradNodal(const Vector &psi) const
{
  return std::sqrt(std::max(0.0, psi.dot(ops_.Xgrad * psi)));
}

double TruthModel::ControlNorm(const Vector &u) const
{
  double s = 0.0;
  for (int t = 0; t < NumTets(); t++)
  {
    s += ops_.cell_volume(t) * u.segment<3>(3 * t).squaredNorm();
  }
  return std::sqrt(s);
}

double TruthModel::ControlNormEps(const Parameter &mu, const Vector &u) const
{
  return std::sqrt(u.dot(ControlWeights(mu).cwiseProduct(u)));
}

double TruthModel::EstimateCoercivity(const Parameter &mu, const CoercivityOptions &opt) const
{
  auto sys = System(mu);
  const int ne = NumEdgeDofs(), nv = NumNodeDofs();
  const SpMat &X = ops_.Xcurl;
  // X-orthogonal projector onto ker B(mu): v - Y S^-1 B v.
  Matrix Y = Matrix::Zero(ne, nv), S = Matrix::Zero(nv, nv);
  if (nv > 0)
  {
    const auto &kd = Kernel();
    const Vector th = sys->theta.eps;
    for (int a = 0; a < th.size(); a++)
    {
      Y += th(a) * kd.Y[a];
      for (int b = 0; b < th.size(); b++)
      {
        S += th(a) * th(b) * kd.S[a][b];
      }
    }
  }
  const Eigen::LDLT<Matrix> s_ldlt(S);
  auto project = [&](const Vector &v)
  {
    if (nv == 0)
    {
      return v;
    }
    return Vector(v - Y * s_ldlt.solve(sys->B * v));
  };
  // w = A_ker^-1 X v, via the bordered system.
  auto apply = [&](const Vector &v)
  {
    Vector rhs = Vector::Zero(ne + nv);
    rhs.head(ne) = X * v;
    return project(sys->lu.solve(rhs).head(ne));
  };
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal;
  Vector w(ne);
  for (int i = 0; i < ne; i++)
  {
    w(i) = normal(rng);
  }
  w = apply(w);

  const int kernel_dim = ne - nv;
  const int max_dim = std::min(opt.max_dim, kernel_dim);
  Matrix V(ne, 0), AV(ne, 0);
  double prev = std::numeric_limits<double>::infinity(), lambda = prev, change = prev;
  int stable = 0;
  bool converged = false;
  for (int k = 0; k < max_dim; k++)
  {
    const double w0 = std::sqrt(w.dot(X * w));
    for (int pass = 0; pass < 2; pass++)
    {
      if (V.cols() > 0)
      {
        w -= V * (V.transpose() * (X * w));
      }
      w = project(w);
    }
    const double nw = std::sqrt(std::max(0.0, w.dot(X * w)));
    if (!(nw > 1e-12 * w0))
    {
      converged = true;
      break;
    }
    w /= nw;
    V.conservativeResize(ne, V.cols() + 1);
    V.col(V.cols() - 1) = w;
    AV.conservativeResize(ne, AV.cols() + 1);
    AV.col(AV.cols() - 1) = sys->A * w;
    const Matrix H = V.transpose() * AV;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
    lambda = es.eigenvalues()(0);
    change = std::abs(prev - lambda);
    prev = lambda;
    stable = change <= opt.tol * std::abs(lambda) ? stable + 1 : 0;
    if (stable >= 3 || V.cols() == kernel_dim)
    {
      converged = true;
      break;
    }
    w = apply(w);
  }
  if (!converged)
  {
    std::ostringstream os;
    os << "coercivity eigen-solve did not converge in " << max_dim
       << " Krylov steps at mu = " << FormatParameter(mu) << " (last relative change "
       << change / std::abs(lambda) << ")";
    Throw(ErrorKind::Convergence, os.str());
  }
  if (!(lambda > 0.0))
  {
    Throw(ErrorKind::InfSup, "kernel coercivity estimate non-positive at mu = " +
                                 FormatParameter(mu));
  }
  return 1.0 / lambda;
}

double TruthModel::EstimateInfSup(const Parameter &mu) const
{
  const SpMat B = BOf(mu);
  const Matrix Y = x_chol_.solve(Matrix(B.transpose()));
  const Matrix S = B * Y;
  const Matrix Xg = Matrix(ops_.Xgrad);
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()), Xg,
                                                      Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
  {
    Throw(ErrorKind::Convergence, "inf-sup eigen-solve failed");
  }
  const double l = es.eigenvalues()(0);
  if (!(l > 0.0))
  {
    Throw(ErrorKind::InfSup, "inf-sup constant is zero at mu = " + FormatParameter(mu));
  }
  return std::sqrt(l);
}

double TruthModel::EstimatePoincare() const
{
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(Matrix(ops_.Xgrad), Matrix(ops_.Mnode),
                                                      Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
  {
    Throw(ErrorKind::Convergence, "Poincare eigen-solve failed");
  }
  return 1.0 / std::sqrt(es.eigenvalues()(0));
}

StabilityEstimates TruthModel::EstimateStability(const std::vector<Parameter> &samples) const
{
  if (samples.empty())
  {
    Throw(ErrorKind::InvalidArgument, "stability estimate needs at least one sample");
  }
  StabilityEstimates est;
  est.infsup = std::numeric_limits<double>::infinity();
  for (const auto &mu : samples)
  {
    est.coercivity = std::max(est.coercivity, EstimateCoercivity(mu));
    est.infsup = std::min(est.infsup, EstimateInfSup(mu));
  }
  est.poincare = EstimatePoincare();
  return est;
}

std::size_t TruthModel::CacheSize() const
{
  std::lock_guard<std::mutex> lock(cache_mutex_);
  return cache_.size();
}

void TruthModel::ClearCache() const
{
  std::lock_guard<std::mutex> lock(cache_mutex_);
  cache_.clear();
  cache_order_.clear();
  lap_cache_.clear();
  lap_order_.clear();
}

namespace
{

Vec3 PhysicalPoint(const Mesh &mesh, int t, const std::array<double, 4> &lambda)
{
  Vec3 x = Vec3::Zero();
  for (int i = 0; i < 4; i++)
  {
    x += lambda[i] * mesh.Nodes()[mesh.Tets()[t][i]];
  }
  return x;
}

}  // namespace

Vector AssembleAnalyticLoad(const Spaces &s, const std::function<Vec3(const Vec3 &)> &f,
                            int rule_points)
{
  const auto rule = ConicalProductRule(rule_points);
  const Mesh &mesh = *s.mesh;
  Vector load = Vector::Zero(s.num_edge_dofs);
  for (int t = 0; t < mesh.NumTets(); t++)
  {
    for (const auto &qp : rule)
    {
      const Vec3 fx = f(PhysicalPoint(mesh, t, qp.lambda));
      const auto phi = WhitneyValues(s, t, qp.lambda);
      for (int k = 0; k < 6; k++)
      {
        const int d = s.edge_dof[mesh.TetEdges()[t][k].edge];
        if (d >= 0)
        {
          load(d) += s.geom[t].volume * qp.weight * fx.dot(phi[k]);
        }
      }
    }
  }
  return load;
}

double HcurlError(const Spaces &s, const Vector &x, const std::function<Vec3(const Vec3 &)> &E,
                  const std::function<Vec3(const Vec3 &)> &curlE, int rule_points,
                  double *l2_part, double *curl_part)
{
  const auto rule = ConicalProductRule(rule_points);
  const Mesh &mesh = *s.mesh;
  double l2 = 0.0, cc = 0.0;
  for (int t = 0; t < mesh.NumTets(); t++)
  {
    const Vec3 ch = EvalEdgeCurl(s, x, t);
    for (const auto &qp : rule)
    {
      const Vec3 p = PhysicalPoint(mesh, t, qp.lambda);
      const double w = s.geom[t].volume * qp.weight;
      l2 += w * (E(p) - EvalEdgeField(s, x, t, qp.lambda)).squaredNorm();
      cc += w * (curlE(p) - ch).squaredNorm();
    }
  }
  if (l2_part)
  {
    *l2_part = std::sqrt(l2);
  }
  if (curl_part)
  {
    *curl_part = std::sqrt(cc);
  }
  return std::sqrt(l2 + cc);
}

Matrix EdgeFieldAtCentroids(const Spaces &s, const Vector &x)
{
  const int T = s.mesh->NumTets();
  Matrix out(T, 3);
  for (int t = 0; t < T; t++)
  {
    out.row(t) = EvalEdgeField(s, x, t, {0.25, 0.25, 0.25, 0.25}).transpose();
  }
  return out;
}

Matrix EdgeCurlPerTet(const Spaces &s, const Vector &x)
{
  const int T = s.mesh->NumTets();
  Matrix out(T, 3);
  for (int t = 0; t < T; t++)
  {
    out.row(t) = EvalEdgeCurl(s, x, t).transpose();
  }
  return out;
}

Matrix ControlToCells(const Vector &u)
{
  const int T = static_cast<int>(u.size() / 3);
  Matrix out(T, 3);
  for (int t = 0; t < T; t++)
  {
    out.row(t) = u.segment<3>(3 * t).transpose();
  }
  return out;
}

void WriteVtk(const std::string &path, const Mesh &mesh,
              const std::vector<std::pair<std::string, Matrix>> &cell_vectors)
{
  std::ofstream out(path);
  if (!out)
  {
    Throw(ErrorKind::Io, "cannot write " + path);
  }
  out.precision(12);
  out << "# vtk DataFile Version 3.0\nmaxrb fields\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.NumNodes() << " double\n";
  for (const auto &x : mesh.Nodes())
  {
    out << x(0) << " " << x(1) << " " << x(2) << "\n";
  }
  out << "CELLS " << mesh.NumTets() << " " << 5 * mesh.NumTets() << "\n";
  for (const auto &T : mesh.Tets())
  {
    out << "4 " << T[0] << " " << T[1] << " " << T[2] << " " << T[3] << "\n";
  }
  out << "CELL_TYPES " << mesh.NumTets() << "\n";
  for (int t = 0; t < mesh.NumTets(); t++)
  {
    out << "10\n";
  }
  out << "CELL_DATA " << mesh.NumTets() << "\n";
  out << "SCALARS region int 1\nLOOKUP_TABLE default\n";
  for (int t = 0; t < mesh.NumTets(); t++)
  {
    out << mesh.RegionTags()[t] << "\n";
  }
  for (const auto &[name, m] : cell_vectors)
  {
    if (m.rows() != mesh.NumTets() || m.cols() != 3)
    {
      Throw(ErrorKind::InvalidArgument, "VTK field " + name + " has wrong shape");
    }
    out << "VECTORS " << name << " double\n";
    for (int t = 0; t < mesh.NumTets(); t++)
    {
      out << m(t, 0) << " " << m(t, 1) << " " << m(t, 2) << "\n";
    }
  }
}

}  // namespace maxrb
