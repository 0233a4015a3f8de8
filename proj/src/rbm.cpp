// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include "maxrb/rbm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "maxrb/estimator.hpp"

namespace maxrb
{

ReducedBasis::ReducedBasis(const TruthModel &truth) : truth_(&truth)
{
  const auto &ops = truth.Ops();
  ZE_.resize(truth.NumEdgeDofs(), 0);
  ZV_.resize(truth.NumNodeDofs(), 0);
  XZE_ = ZE_;
  XZV_ = ZV_;
  Ahat_.assign(ops.NumSigma(), Matrix(0, 0));
  AZ_.assign(ops.NumSigma(), Matrix(truth.NumEdgeDofs(), 0));
  MDhat_.assign(ops.NumEps(), Matrix(0, 0));
  MDZ_.assign(ops.NumEps(), Matrix(truth.NumEdgeDofs(), 0));
  MUZ_.assign(ops.NumEps(), Matrix(truth.NumControlDofs(), 0));
  BZ_.assign(ops.NumEps(), Matrix(truth.NumNodeDofs(), 0));
  Bhat_.assign(ops.NumEps(), Matrix(0, 0));
  rhat_.assign(ops.NumRho(), Vector(0));
  edhat_.assign(ops.ed_load.size(), std::vector<Vector>(ops.NumEd(), Vector(0)));
  CavgZ_.resize(truth.NumControlDofs(), 0);
}

namespace
{

// Appends the directions of snaps that survive Gram-Schmidt in the X geometry to Z.
int Orthonormalize(const std::vector<Vector> &snaps, const SpMat &X, double deflation_tol,
                   Matrix &Z, Matrix &XZ)
{
  int added = 0;
  for (const auto &s : snaps)
  {
    if (s.size() != Z.rows())
    {
      Throw(ErrorKind::InvalidArgument, "snapshot has wrong length");
    }
    const double n0 = std::sqrt(std::max(0.0, s.dot(X * s)));
    if (!(n0 > 0.0) || !std::isfinite(n0))
    {
      continue;
    }
    Vector v = s;
    for (int pass = 0; pass < 2; pass++)
    {
      for (int j = 0; j < Z.cols(); j++)
      {
        v -= XZ.col(j).dot(v) * Z.col(j);
      }
    }
    const Vector Xv = X * v;
    const double n = std::sqrt(std::max(0.0, v.dot(Xv)));
    if (n < deflation_tol * n0)
    {
      continue;
    }
    Z.conservativeResize(Eigen::NoChange, Z.cols() + 1);
    Z.col(Z.cols() - 1) = v / n;
    XZ.conservativeResize(Eigen::NoChange, XZ.cols() + 1);
    XZ.col(XZ.cols() - 1) = Xv / n;
    added++;
  }
  return added;
}

// P = Z^T Q for a grown Z and Q with the leading old x old block already in P.
void GrowSquare(Matrix &P, const Matrix &Z, const Matrix &Q, int old)
{
  const int n = static_cast<int>(Z.cols());
  Matrix out(n, n);
  out.topLeftCorner(old, old) = P.topLeftCorner(old, old);
  if (n > old)
  {
    out.block(0, old, old, n - old) = Z.leftCols(old).transpose() * Q.rightCols(n - old);
    out.bottomRows(n - old) = Z.rightCols(n - old).transpose() * Q;
  }
  P = std::move(out);
}

void AppendCols(Matrix &M, const Matrix &cols)
{
  const auto old = M.cols();
  M.conservativeResize(Eigen::NoChange, old + cols.cols());
  M.rightCols(cols.cols()) = cols;
}

void AppendRows(Vector &v, const Vector &tail)
{
  const auto old = v.size();
  v.conservativeResize(old + tail.size());
  v.tail(tail.size()) = tail;
}

}  // namespace

void ReducedBasis::Refresh(int old_e, int old_v)
{
  const auto &ops = truth_->Ops();
  const int ne = DimE(), nv = DimV();
  const Matrix Znew = ZE_.rightCols(ne - old_e);
  const Matrix Vnew = ZV_.rightCols(nv - old_v);
  for (int q = 0; q < ops.NumSigma(); q++)
  {
    AppendCols(AZ_[q], ops.A[q] * Znew);
    GrowSquare(Ahat_[q], ZE_, AZ_[q], old_e);
  }
  for (int q = 0; q < ops.NumEps(); q++)
  {
    AppendCols(MDZ_[q], ops.MD[q] * Znew);
    GrowSquare(MDhat_[q], ZE_, MDZ_[q], old_e);
    AppendCols(MUZ_[q], ops.MU[q] * Znew);
    AppendCols(BZ_[q], ops.B[q] * Znew);
    Matrix Bh(nv, ne);
    Bh.topLeftCorner(old_v, old_e) = Bhat_[q].topLeftCorner(old_v, old_e);
    Bh.block(0, old_e, old_v, ne - old_e) = ZV_.leftCols(old_v).transpose() * BZ_[q].rightCols(ne - old_e);
    Bh.bottomRows(nv - old_v) = Vnew.transpose() * BZ_[q];
    Bhat_[q] = std::move(Bh);
    for (std::size_t s = 0; s < ops.ed_load[q].size(); s++)
    {
      AppendRows(edhat_[q][s], Znew.transpose() * ops.ed_load[q][s]);
    }
  }
  for (int q = 0; q < ops.NumRho(); q++)
  {
    AppendRows(rhat_[q], Vnew.transpose() * ops.r[q]);
  }
  Matrix cav(truth_->NumControlDofs(), Znew.cols());
  for (int j = 0; j < Znew.cols(); j++)
  {
    cav.col(j) = truth_->CellAverage(Znew.col(j));
  }
  AppendCols(CavgZ_, cav);
}

std::pair<int, int> ReducedBasis::Extend(const std::vector<Vector> &e_snapshots,
                                         const std::vector<Vector> &v_snapshots)
{
  const int old_e = DimE(), old_v = DimV();
  const auto &ops = truth_->Ops();
  const int ae = Orthonormalize(e_snapshots, ops.Xcurl, deflation_tol, ZE_, XZE_);
  const int av = Orthonormalize(v_snapshots, ops.Xgrad, deflation_tol, ZV_, XZV_);
  Refresh(old_e, old_v);
  return {ae, av};
}

int ReducedBasis::AddSupremizers()
{
  std::vector<Vector> sup;
  for (int j = 0; j < DimV(); j++)
  {
    sup.push_back(truth_->GetSpaces().G * ZV_.col(j));
  }
  return Extend(sup, {}).first;
}

Vector ReducedBasis::LiftE(const Vector &c) const
{
  if (c.size() != DimE())
  {
    Throw(ErrorKind::InvalidArgument, "reduced coefficient vector has wrong length");
  }
  return ZE_ * c;
}

Vector ReducedBasis::LiftV(const Vector &c) const
{
  if (c.size() != DimV())
  {
    Throw(ErrorKind::InvalidArgument, "reduced coefficient vector has wrong length");
  }
  return ZV_ * c;
}

std::pair<double, double> ReducedBasis::ReducedStability(const Parameter &mu) const
{
  const auto th = truth_->Thetas(mu);
  Matrix A = Matrix::Zero(DimE(), DimE());
  for (std::size_t q = 0; q < Ahat_.size(); q++)
  {
    A += th.sigma_inv(q) * Ahat_[q];
  }
  Matrix N;
  double beta = std::numeric_limits<double>::infinity();
  if (DimV() > 0)
  {
    Matrix B = Matrix::Zero(DimV(), DimE());
    for (std::size_t q = 0; q < Bhat_.size(); q++)
    {
      B += th.eps(q) * Bhat_[q];
    }
    if (DimV() > DimE())
    {
      return {0.0, 0.0};
    }
    Eigen::JacobiSVD<Matrix> svd(B, Eigen::ComputeFullV);
    beta = svd.singularValues()(DimV() - 1);
    N = svd.matrixV().rightCols(DimE() - DimV());
  }
  else
  {
    N = Matrix::Identity(DimE(), DimE());
  }
  if (N.cols() == 0)
  {
    return {beta, std::numeric_limits<double>::infinity()};
  }
  const Matrix K = N.transpose() * A * N;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (K + K.transpose()), Eigen::EigenvaluesOnly);
  return {beta, es.eigenvalues()(0)};
}

double ReducedBasis::OrthonormalityDefectE() const
{
  if (DimE() == 0)
  {
    return 0.0;
  }
  return (ZE_.transpose() * (truth_->Ops().Xcurl * ZE_) - Matrix::Identity(DimE(), DimE()))
    .cwiseAbs()
    .maxCoeff();
}

double ReducedBasis::OrthonormalityDefectV() const
{
  if (DimV() == 0)
  {
    return 0.0;
  }
  return (ZV_.transpose() * (truth_->Ops().Xgrad * ZV_) - Matrix::Identity(DimV(), DimV()))
    .cwiseAbs()
    .maxCoeff();
}

ReducedBasis ReducedBasis::Prefix(int dim_E, int dim_V) const
{
  if (dim_E < 0 || dim_E > DimE() || dim_V < 0 || dim_V > DimV())
  {
    Throw(ErrorKind::InvalidArgument, "basis prefix exceeds the basis dimension");
  }
  ReducedBasis rb(*truth_);
  rb.deflation_tol = deflation_tol;
  rb.ZE_ = ZE_.leftCols(dim_E);
  rb.ZV_ = ZV_.leftCols(dim_V);
  rb.XZE_ = XZE_.leftCols(dim_E);
  rb.XZV_ = XZV_.leftCols(dim_V);
  rb.Refresh(0, 0);
  for (const auto &s : log)
  {
    if (s.dim_E <= dim_E && s.dim_V <= dim_V)
    {
      rb.log.push_back(s);
      rb.snapshots.push_back(s.mu);
    }
  }
  return rb;
}

namespace
{

constexpr char kMagic[8] = {'M', 'A', 'X', 'R', 'B', 'A', 'R', '1'};

template <class T>
void Put(std::ostream &out, const T &v)
{
  out.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <class T>
T Get(std::istream &in)
{
  T v;
  in.read(reinterpret_cast<char *>(&v), sizeof(T));
  if (!in)
  {
    Throw(ErrorKind::Io, "truncated reduced basis archive");
  }
  return v;
}

void PutMatrix(std::ostream &out, const Matrix &m)
{
  Put<std::int64_t>(out, m.rows());
  Put<std::int64_t>(out, m.cols());
  out.write(reinterpret_cast<const char *>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Matrix GetMatrix(std::istream &in)
{
  const auto r = Get<std::int64_t>(in);
  const auto c = Get<std::int64_t>(in);
  if (r < 0 || c < 0 || r * c > (std::int64_t{1} << 32))
  {
    Throw(ErrorKind::Io, "corrupt reduced basis archive");
  }
  Matrix m(r, c);
  in.read(reinterpret_cast<char *>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in)
  {
    Throw(ErrorKind::Io, "truncated reduced basis archive");
  }
  return m;
}

void PutParameter(std::ostream &out, const Parameter &mu)
{
  Put<std::int64_t>(out, mu.size());
  for (double x : mu)
  {
    Put(out, x);
  }
}

Parameter GetParameter(std::istream &in)
{
  const auto n = Get<std::int64_t>(in);
  if (n < 0 || n > 1024)
  {
    Throw(ErrorKind::Io, "corrupt reduced basis archive");
  }
  Parameter mu(n);
  for (auto &x : mu)
  {
    x = Get<double>(in);
  }
  return mu;
}

}  // namespace

void ReducedBasis::Save(const std::string &path) const
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
  {
    Throw(ErrorKind::Io, "cannot write " + path);
  }
  out.write(kMagic, sizeof(kMagic));
  Put<std::uint64_t>(out, ConfigHash(*truth_));
  Put(out, deflation_tol);
  PutMatrix(out, ZE_);
  PutMatrix(out, ZV_);
  Put<std::int64_t>(out, static_cast<std::int64_t>(snapshots.size()));
  for (const auto &mu : snapshots)
  {
    PutParameter(out, mu);
  }
  Put<std::int64_t>(out, static_cast<std::int64_t>(log.size()));
  for (const auto &s : log)
  {
    Put<std::int64_t>(out, s.iteration);
    PutParameter(out, s.mu);
    Put<std::int64_t>(out, s.dim_E);
    Put<std::int64_t>(out, s.dim_V);
    Put(out, s.max_delta);
    PutParameter(out, s.argmax);
  }
  if (!out)
  {
    Throw(ErrorKind::Io, "failed writing " + path);
  }
}

ReducedBasis ReducedBasis::Load(const std::string &path, const TruthModel &truth)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    Throw(ErrorKind::Io, "cannot read " + path);
  }
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
  {
    Throw(ErrorKind::Io, path + " is not a reduced basis archive");
  }
  if (Get<std::uint64_t>(in) != ConfigHash(truth))
  {
    Throw(ErrorKind::Configuration,
          path + " was built for a different problem or mesh (config hash mismatch)");
  }
  ReducedBasis rb(truth);
  rb.deflation_tol = Get<double>(in);
  rb.ZE_ = GetMatrix(in);
  rb.ZV_ = GetMatrix(in);
  if (rb.ZE_.rows() != truth.NumEdgeDofs() || rb.ZV_.rows() != truth.NumNodeDofs())
  {
    Throw(ErrorKind::Io, "reduced basis archive dimensions do not match the mesh");
  }
  rb.XZE_ = truth.Ops().Xcurl * rb.ZE_;
  rb.XZV_ = truth.Ops().Xgrad * rb.ZV_;
  rb.Refresh(0, 0);
  const auto ns = Get<std::int64_t>(in);
  for (std::int64_t i = 0; i < ns; i++)
  {
    rb.snapshots.push_back(GetParameter(in));
  }
  const auto nl = Get<std::int64_t>(in);
  for (std::int64_t i = 0; i < nl; i++)
  {
    GreedyStep s;
    s.iteration = static_cast<int>(Get<std::int64_t>(in));
    s.mu = GetParameter(in);
    s.dim_E = static_cast<int>(Get<std::int64_t>(in));
    s.dim_V = static_cast<int>(Get<std::int64_t>(in));
    s.max_delta = Get<double>(in);
    s.argmax = GetParameter(in);
    rb.log.push_back(s);
  }
  return rb;
}

ReducedModel::ReducedModel(const ReducedBasis &rb, const Parameter &mu) : rb_(&rb), mu_(mu)
{
  const TruthModel &truth = rb.Truth();
  const auto th = truth.Thetas(mu);
  const int ne = rb.DimE(), nv = rb.DimV();
  if (ne == 0)
  {
    Throw(ErrorKind::Solver, "reduced inf-sup failure; enrich basis (empty reduced space)");
  }
  A_ = Matrix::Zero(ne, ne);
  for (std::size_t q = 0; q < rb.Ahat().size(); q++)
  {
    A_ += th.sigma_inv(q) * rb.Ahat()[q];
  }
  B_ = Matrix::Zero(nv, ne);
  MD_ = Matrix::Zero(ne, ne);
  MU_ = Matrix::Zero(truth.NumControlDofs(), ne);
  l_ = Vector::Zero(ne);
  for (std::size_t q = 0; q < rb.Bhat().size(); q++)
  {
    B_ += th.eps(q) * rb.Bhat()[q];
    MD_ += th.eps(q) * rb.MDhat()[q];
    MU_ += th.eps(q) * rb.MUZ()[q];
    for (std::size_t s = 0; s < rb.EdHat()[q].size(); s++)
    {
      l_ += th.eps(q) * th.ed(s) * rb.EdHat()[q][s];
    }
  }
  g_ = Vector::Zero(nv);
  for (std::size_t q = 0; q < rb.Rhat().size(); q++)
  {
    g_ -= th.rho(q) * rb.Rhat()[q];
  }
  ud_ = truth.Ud(mu);
  weights_ = truth.ControlWeights(mu);
  c_ = truth.EdGram(mu);
  alpha_ = truth.GetProblem().data.alpha;

  const auto [beta, coer] = rb.ReducedStability(mu);
  if (!(beta > 1e-12) || !(coer > 1e-12))
  {
    std::ostringstream os;
    os << "reduced inf-sup failure; enrich basis (mu = " << FormatParameter(mu)
       << ", beta_N = " << beta << ", kernel coercivity " << coer << ")";
    Throw(ErrorKind::Solver, os.str());
  }
  Matrix K = Matrix::Zero(ne + nv, ne + nv);
  K.topLeftCorner(ne, ne) = A_;
  K.topRightCorner(ne, nv) = B_.transpose();
  K.bottomLeftCorner(nv, ne) = B_;
  lu_.compute(K);
}

Vector ReducedModel::Solve(const Vector &f, const Vector &g) const
{
  const int ne = rb_->DimE(), nv = rb_->DimV();
  Vector rhs(ne + nv);
  rhs << f, g;
  Vector sol = lu_.solve(rhs);
  if (!sol.allFinite())
  {
    Throw(ErrorKind::Solver, "reduced inf-sup failure; enrich basis (non-finite solution)");
  }
  return sol.head(ne);
}

Vector ReducedModel::SolveState(const Vector &u) const
{
  return Solve(MU_.transpose() * u, g_);
}

Vector ReducedModel::SolveAdjoint(const Vector &e) const
{
  return Solve(MD_ * e - l_, Vector::Zero(rb_->DimV()));
}

Vector ReducedModel::AdjointToControl(const Vector &f) const
{
  return rb_->CavgZ() * f;
}

double ReducedModel::Cost(const Vector &u, const Vector &e) const
{
  const Vector du = u - ud_;
  return 0.5 * (e.dot(MD_ * e) - 2.0 * e.dot(l_) + c_) +
         0.5 * alpha_ * du.dot(weights_.cwiseProduct(du));
}

double ReducedModel::ConstraintDefect(const Vector &e, bool adjoint) const
{
  if (rb_->DimV() == 0)
  {
    return 0.0;
  }
  return adjoint ? (B_ * e).norm() : (B_ * e - g_).norm();
}

OcpSolution SolveReduced(const ReducedBasis &rb, const Parameter &mu, const OcpOptions &opt)
{
  const ReducedModel model(rb, mu);
  const AdmissibleSet uad(rb.Truth(), mu);
  return SolveOcp(model, uad, opt);
}

OcpSolution SolveTruth(const TruthModel &truth, const Parameter &mu, const OcpOptions &opt)
{
  const TruthOcpModel model(truth, mu);
  const AdmissibleSet uad(truth, mu);
  return SolveOcp(model, uad, opt);
}

void SnapshotVectors(const TruthModel &truth, const Parameter &mu, const OcpSolution &sol,
                     std::vector<Vector> *e_snaps, std::vector<Vector> *v_snaps)
{
  const SpMat &G = truth.GetSpaces().G;
  const Vector lambdaF = truth.SolveAdjoint(mu, sol.E).lambda;
  const HelmholtzSplit hE = truth.HelmholtzDecompose(sol.E);
  const HelmholtzSplit hF = truth.HelmholtzDecompose(sol.F);
  *e_snaps = {sol.E, sol.F};
  v_snaps->clear();
  if (!hE.degenerate)
  {
    e_snaps->push_back(G * hE.hz);
    e_snaps->push_back(G * hF.hz);
    e_snaps->push_back(G * lambdaF);
    *v_snaps = {hE.hz, hF.hz, lambdaF};
  }
}

std::vector<double> EstimatorSweep(const ReducedBasis &rb, const ConstantsLedger &ledger,
                                   const std::vector<Parameter> &training,
                                   const OcpOptions &reduced_ocp, Exec exec)
{
  const int n = static_cast<int>(training.size());
  std::vector<double> delta(n, 0.0);
  std::exception_ptr error;
  std::mutex error_mutex;
  OcpOptions opt = reduced_ocp;
  opt.record_trace = false;
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (int i = 0; i < n; i++)
  {
    try
    {
      const OcpSolution red = SolveReduced(rb, training[i], opt);
      if (!red.projection_converged)
      {
        Throw(ErrorKind::Convergence,
              "projection not converged at training mu = " + FormatParameter(training[i]));
      }
      delta[i] = Certify(rb, training[i], red, &ledger).delta_ab;
    }
    catch (...)
    {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error)
      {
        error = std::current_exception();
      }
    }
  }
  if (error)
  {
    std::rethrow_exception(error);
  }
  return delta;
}

GreedyResult Greedy(ReducedBasis &rb, const ConstantsLedger &ledger,
                    const std::vector<Parameter> &training, const GreedyOptions &opt)
{
  if (training.empty())
  {
    Throw(ErrorKind::InvalidArgument, "empty training set");
  }
  if (opt.start_index < 0 || opt.start_index >= static_cast<int>(training.size()))
  {
    Throw(ErrorKind::InvalidArgument, "greedy start index out of range");
  }
  if (opt.nmax < 1)
  {
    Throw(ErrorKind::InvalidArgument, "nmax must be at least 1");
  }
  const TruthModel &truth = rb.Truth();
  for (const auto &mu : training)
  {
    truth.GetProblem().data.domain.Check(mu);
  }
  GreedyResult result;
  Parameter mu = training[opt.start_index];
  for (int it = 1;; it++)
  {
    const OcpSolution sol = SolveTruth(truth, mu, opt.truth_ocp);
    if (!sol.projection_converged)
    {
      Throw(ErrorKind::Convergence, "projection not converged at mu = " + FormatParameter(mu));
    }
    std::vector<Vector> es, vs;
    SnapshotVectors(truth, mu, sol, &es, &vs);
    const auto [ae, av] = rb.Extend(es, vs);
    if (ae == 0 && av == 0)
    {
      std::cerr << "warning: snapshots at mu = " << FormatParameter(mu)
                << " add nothing to the basis\n";
    }
    rb.snapshots.push_back(mu);

    bool stable = true;
    for (const auto &m : training)
    {
      const auto [beta, coer] = rb.ReducedStability(m);
      stable = stable && beta > 1e-12 && coer > 1e-12;
    }
    if (!stable && rb.DimV() > 0)
    {
      rb.AddSupremizers();
    }

    const std::vector<double> delta = EstimatorSweep(rb, ledger, training, opt.reduced_ocp, opt.exec);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < delta.size(); i++)
    {
      if (delta[i] > delta[arg])
      {
        arg = i;
      }
    }
    GreedyStep step;
    step.iteration = it;
    step.mu = mu;
    step.dim_E = rb.DimE();
    step.dim_V = rb.DimV();
    step.max_delta = delta[arg];
    step.argmax = training[arg];
    rb.log.push_back(step);
    if (opt.on_step)
    {
      opt.on_step(step);
    }
    if (step.max_delta <= opt.tol)
    {
      result.converged = true;
      break;
    }
    if (it >= opt.nmax)
    {
      break;
    }
    mu = training[arg];
  }
  return result;
}

std::uint64_t ConfigHash(const TruthModel &truth)
{
  const std::string text = ProblemToJson(truth.GetProblem()) + "\n" + FormatMesh(truth.GetMesh());
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text)
  {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace maxrb
