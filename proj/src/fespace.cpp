// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include "maxrb/fespace.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>

#include <unsupported/Eigen/SparseExtra>

#include "maxrb/quadrature.hpp"

namespace maxrb
{

TetGeometry ComputeTetGeometry(const std::array<Vec3, 4> &x)
{
  Eigen::Matrix3d J;
  J.col(0) = x[1] - x[0];
  J.col(1) = x[2] - x[0];
  J.col(2) = x[3] - x[0];
  const Eigen::Matrix3d Jinv = J.inverse();
  TetGeometry g;
  g.volume = J.determinant() / 6.0;
  for (int i = 0; i < 3; i++)
  {
    g.grad_lambda[i + 1] = Jinv.row(i).transpose();
  }
  g.grad_lambda[0] = -(g.grad_lambda[1] + g.grad_lambda[2] + g.grad_lambda[3]);
  return g;
}

Spaces BuildSpaces(const Mesh &mesh, bool allow_trivial)
{
  Spaces s;
  s.mesh = std::make_shared<const Mesh>(mesh);
  const int T = mesh.NumTets();
  s.geom.resize(T);
  for (int t = 0; t < T; t++)
  {
    std::array<Vec3, 4> x;
    for (int i = 0; i < 4; i++)
    {
      x[i] = mesh.Nodes()[mesh.Tets()[t][i]];
    }
    s.geom[t] = ComputeTetGeometry(x);
  }

  s.edge_dof.assign(mesh.NumEdges(), -1);
  for (int e = 0; e < mesh.NumEdges(); e++)
  {
    if (!mesh.BoundaryEdges()[e])
    {
      s.edge_dof[e] = s.num_edge_dofs++;
      s.dof_edge.push_back(e);
    }
  }
  s.node_dof.assign(mesh.NumNodes(), -1);
  for (int v = 0; v < mesh.NumNodes(); v++)
  {
    if (!mesh.BoundaryNodes()[v])
    {
      s.node_dof[v] = s.num_node_dofs++;
      s.dof_node.push_back(v);
    }
  }
  s.num_control_dofs = 3 * T;
  if (!allow_trivial && (s.num_edge_dofs == 0 || s.num_node_dofs == 0))
  {
    Throw(ErrorKind::InvalidArgument,
          "trivial space: mesh has " + std::to_string(s.num_edge_dofs) + " interior edges and " +
              std::to_string(s.num_node_dofs) + " interior nodes");
  }

  std::vector<Triplet> trip;
  for (int k = 0; k < s.num_edge_dofs; k++)
  {
    const auto &e = mesh.Edges()[s.dof_edge[k]];
    if (s.node_dof[e[0]] >= 0)
    {
      trip.emplace_back(k, s.node_dof[e[0]], -1.0);
    }
    if (s.node_dof[e[1]] >= 0)
    {
      trip.emplace_back(k, s.node_dof[e[1]], 1.0);
    }
  }
  s.G.resize(s.num_edge_dofs, s.num_node_dofs);
  s.G.setFromTriplets(trip.begin(), trip.end());

  trip.clear();
  for (int t = 0; t < T; t++)
  {
    for (int i = 0; i < 4; i++)
    {
      const int a = s.node_dof[mesh.Tets()[t][i]];
      if (a < 0)
      {
        continue;
      }
      for (int c = 0; c < 3; c++)
      {
        trip.emplace_back(3 * t + c, a, s.geom[t].grad_lambda[i](c));
      }
    }
  }
  s.Gcell.resize(3 * T, s.num_node_dofs);
  s.Gcell.setFromTriplets(trip.begin(), trip.end());
  return s;
}

std::array<Vec3, 6> WhitneyValues(const Spaces &s, int t, const std::array<double, 4> &lambda)
{
  const auto &g = s.geom[t].grad_lambda;
  const auto &te = s.mesh->TetEdges()[t];
  std::array<Vec3, 6> out;
  for (int k = 0; k < 6; k++)
  {
    const int i = kLocalEdges[k][0], j = kLocalEdges[k][1];
    out[k] = te[k].sign * (lambda[i] * g[j] - lambda[j] * g[i]);
  }
  return out;
}

std::array<Vec3, 6> WhitneyCurls(const Spaces &s, int t)
{
  const auto &g = s.geom[t].grad_lambda;
  const auto &te = s.mesh->TetEdges()[t];
  std::array<Vec3, 6> out;
  for (int k = 0; k < 6; k++)
  {
    const int i = kLocalEdges[k][0], j = kLocalEdges[k][1];
    out[k] = te[k].sign * 2.0 * g[i].cross(g[j]);
  }
  return out;
}

Vec3 EvalEdgeField(const Spaces &s, const Vector &x, int t, const std::array<double, 4> &lambda)
{
  const auto phi = WhitneyValues(s, t, lambda);
  Vec3 v = Vec3::Zero();
  for (int k = 0; k < 6; k++)
  {
    const int d = s.edge_dof[s.mesh->TetEdges()[t][k].edge];
    if (d >= 0)
    {
      v += x(d) * phi[k];
    }
  }
  return v;
}

Vec3 EvalEdgeCurl(const Spaces &s, const Vector &x, int t)
{
  const auto curl = WhitneyCurls(s, t);
  Vec3 v = Vec3::Zero();
  for (int k = 0; k < 6; k++)
  {
    const int d = s.edge_dof[s.mesh->TetEdges()[t][k].edge];
    if (d >= 0)
    {
      v += x(d) * curl[k];
    }
  }
  return v;
}

namespace
{

using Local6 = Eigen::Matrix<double, 6, 6>;
using Local4 = Eigen::Matrix<double, 4, 4>;

std::array<int, 6> EdgeDofs(const Spaces &s, int t)
{
  std::array<int, 6> d;
  for (int k = 0; k < 6; k++)
  {
    d[k] = s.edge_dof[s.mesh->TetEdges()[t][k].edge];
  }
  return d;
}

std::array<int, 4> NodeDofs(const Spaces &s, int t)
{
  std::array<int, 4> d;
  for (int i = 0; i < 4; i++)
  {
    d[i] = s.node_dof[s.mesh->Tets()[t][i]];
  }
  return d;
}

Local6 LocalCurlCurl(const Spaces &s, int t)
{
  const auto c = WhitneyCurls(s, t);
  Local6 K;
  for (int i = 0; i < 6; i++)
  {
    for (int j = 0; j < 6; j++)
    {
      K(i, j) = s.geom[t].volume * c[i].dot(c[j]);
    }
  }
  return K;
}

Local6 LocalEdgeMass(const Spaces &s, int t)
{
  Local6 M = Local6::Zero();
  for (const auto &qp : SimplexRuleOrder2())
  {
    const auto phi = WhitneyValues(s, t, qp.lambda);
    for (int i = 0; i < 6; i++)
    {
      for (int j = 0; j < 6; j++)
      {
        M(i, j) += qp.weight * phi[i].dot(phi[j]);
      }
    }
  }
  // Symmetrize exactly; quadrature accumulation is symmetric up to summation order only.
  M = 0.5 * (M + M.transpose()).eval();
  return s.geom[t].volume * M;
}

Local4 LocalStiffness(const Spaces &s, int t)
{
  const auto &g = s.geom[t].grad_lambda;
  Local4 K;
  for (int i = 0; i < 4; i++)
  {
    for (int j = 0; j < 4; j++)
    {
      K(i, j) = s.geom[t].volume * g[i].dot(g[j]);
    }
  }
  return K;
}

// Element loop with fixed triplet slots per tet, so the parallel and serial paths produce the
// same triplet sequence.
template <int N, class LocalFn, class DofFn>
SpMat AssembleSquare(const Spaces &s, int n, LocalFn local, DofFn dofs, Exec exec)
{
  const int T = s.mesh->NumTets();
  std::vector<Triplet> slots(static_cast<std::size_t>(T) * N * N, Triplet(-1, -1, 0.0));
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (int t = 0; t < T; t++)
  {
    const Eigen::Matrix<double, N, N> K = local(t);
    const auto d = dofs(t);
    std::size_t base = static_cast<std::size_t>(t) * N * N;
    for (int i = 0; i < N; i++)
    {
      for (int j = 0; j < N; j++)
      {
        if (d[i] >= 0 && d[j] >= 0)
        {
          slots[base + i * N + j] = Triplet(d[i], d[j], K(i, j));
        }
      }
    }
  }
  std::vector<Triplet> trip;
  trip.reserve(slots.size());
  for (const auto &tr : slots)
  {
    if (tr.row() >= 0)
    {
      trip.push_back(tr);
    }
  }
  SpMat A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

bool SamePattern(const SpMat &a, const SpMat &b)
{
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.nonZeros() != b.nonZeros())
  {
    return false;
  }
  return std::equal(a.outerIndexPtr(), a.outerIndexPtr() + a.outerSize() + 1,
                    b.outerIndexPtr()) &&
         std::equal(a.innerIndexPtr(), a.innerIndexPtr() + a.nonZeros(), b.innerIndexPtr());
}

}  // namespace

SpMat AssembleCurlCurl(const Spaces &s, const Vector &coef, Exec exec)
{
  return AssembleSquare<6>(
      s, s.num_edge_dofs, [&](int t) -> Local6 { return coef(t) * LocalCurlCurl(s, t); },
      [&](int t) { return EdgeDofs(s, t); }, exec);
}

SpMat AssembleEdgeMass(const Spaces &s, const Vector &coef, Exec exec)
{
  return AssembleSquare<6>(
      s, s.num_edge_dofs, [&](int t) -> Local6 { return coef(t) * LocalEdgeMass(s, t); },
      [&](int t) { return EdgeDofs(s, t); }, exec);
}

SpMat AssembleNodalStiffness(const Spaces &s, const Vector &coef, Exec exec)
{
  return AssembleSquare<4>(
      s, s.num_node_dofs, [&](int t) -> Local4 { return coef(t) * LocalStiffness(s, t); },
      [&](int t) { return NodeDofs(s, t); }, exec);
}

SpMat AssembleNodalMass(const Spaces &s, Exec exec)
{
  return AssembleSquare<4>(
      s, s.num_node_dofs,
      [&](int t) -> Local4
      { return s.geom[t].volume / 20.0 * (Local4::Ones() + Local4::Identity()); },
      [&](int t) { return NodeDofs(s, t); }, exec);
}

SpMat AssembleCellIntegrals(const Spaces &s, Exec exec)
{
  const int T = s.mesh->NumTets();
  std::vector<Triplet> slots(static_cast<std::size_t>(T) * 18, Triplet(-1, -1, 0.0));
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (int t = 0; t < T; t++)
  {
    std::array<Vec3, 6> integral;
    integral.fill(Vec3::Zero());
    for (const auto &qp : SimplexRuleOrder2())
    {
      const auto phi = WhitneyValues(s, t, qp.lambda);
      for (int k = 0; k < 6; k++)
      {
        integral[k] += qp.weight * phi[k];
      }
    }
    const auto d = EdgeDofs(s, t);
    for (int k = 0; k < 6; k++)
    {
      if (d[k] < 0)
      {
        continue;
      }
      for (int c = 0; c < 3; c++)
      {
        slots[static_cast<std::size_t>(t) * 18 + k * 3 + c] =
            Triplet(3 * t + c, d[k], s.geom[t].volume * integral[k](c));
      }
    }
  }
  std::vector<Triplet> trip;
  for (const auto &tr : slots)
  {
    if (tr.row() >= 0)
    {
      trip.push_back(tr);
    }
  }
  SpMat C(3 * T, s.num_edge_dofs);
  C.setFromTriplets(trip.begin(), trip.end());
  return C;
}

SpMat Combine(const std::vector<SpMat> &blocks, const Vector &theta)
{
  if (static_cast<int>(blocks.size()) != theta.size() || blocks.empty())
  {
    Throw(ErrorKind::Configuration, "affine term count mismatch in operator combination");
  }
  bool same = true;
  for (std::size_t q = 1; q < blocks.size() && same; q++)
  {
    same = SamePattern(blocks[0], blocks[q]);
  }
  if (same)
  {
    SpMat out = blocks[0];
    Eigen::Map<Vector> v(out.valuePtr(), out.nonZeros());
    v *= theta(0);
    for (std::size_t q = 1; q < blocks.size(); q++)
    {
      v += theta(q) * Eigen::Map<const Vector>(blocks[q].valuePtr(), blocks[q].nonZeros());
    }
    return out;
  }
  SpMat out = theta(0) * blocks[0];
  for (std::size_t q = 1; q < blocks.size(); q++)
  {
    out += theta(q) * blocks[q];
  }
  return out;
}

Vector Combine(const std::vector<Vector> &vecs, const Vector &theta)
{
  if (static_cast<int>(vecs.size()) != theta.size())
  {
    Throw(ErrorKind::Configuration, "affine term count mismatch in vector combination");
  }
  if (vecs.empty())
  {
    return Vector();
  }
  Vector out = theta(0) * vecs[0];
  for (std::size_t q = 1; q < vecs.size(); q++)
  {
    out += theta(q) * vecs[q];
  }
  return out;
}

OperatorBlocks AssembleBlocks(const Spaces &s, const AffineDecomposition &decomp,
                              const TetFields &fields, Exec exec)
{
  const Mesh &mesh = *s.mesh;
  const int T = mesh.NumTets();
  auto check = [&](Field f, std::size_t n)
  {
    if (static_cast<int>(n) != decomp.Count(f))
    {
      Throw(ErrorKind::Configuration, std::string("term count mismatch for ") + ToString(f) +
                                          ": " + std::to_string(n) + " fields vs " +
                                          std::to_string(decomp.Count(f)) + " Theta functions");
    }
  };
  check(Field::SigmaInv, fields.sigma_inv.size());
  check(Field::Eps, fields.eps.size());
  check(Field::Rho, fields.rho.size());
  check(Field::Ud, fields.ud.size());
  check(Field::Ed, fields.ed.size());
  for (const auto &v : fields.sigma_inv)
  {
    if (v.size() != T)
    {
      Throw(ErrorKind::Configuration, "sigma_inv field length does not match the mesh");
    }
  }
  for (const auto &v : fields.eps)
  {
    if (v.size() != T)
    {
      Throw(ErrorKind::Configuration, "eps field length does not match the mesh");
    }
  }

  OperatorBlocks ops;
  ops.cell_volume.resize(T);
  Vector in_d(T);
  for (int t = 0; t < T; t++)
  {
    ops.cell_volume(t) = s.geom[t].volume;
    in_d(t) = mesh.InRegionD(t) ? 1.0 : 0.0;
  }
  const Vector ones = Vector::Ones(T);

  ops.C0 = AssembleCellIntegrals(s, exec);
  ops.Medge = AssembleEdgeMass(s, ones, exec);
  ops.Xcurl = ops.Medge + AssembleCurlCurl(s, ones, exec);
  ops.Xgrad = AssembleNodalStiffness(s, ones, exec);
  ops.Mnode = AssembleNodalMass(s, exec);
  const SpMat Gt = s.G.transpose();

  for (const auto &coef : fields.sigma_inv)
  {
    ops.A.push_back(AssembleCurlCurl(s, coef, exec));
  }
  for (const auto &coef : fields.eps)
  {
    ops.M.push_back(AssembleEdgeMass(s, coef, exec));
    ops.MD.push_back(AssembleEdgeMass(s, coef.cwiseProduct(in_d), exec));
    SpMat B = Gt * ops.M.back();
    ops.L.push_back(B * s.G);
    ops.B.push_back(std::move(B));
    Vector w(3 * T);
    for (int t = 0; t < T; t++)
    {
      w.segment<3>(3 * t).setConstant(coef(t));
    }
    ops.MU.push_back(w.asDiagonal() * ops.C0);
    ops.eps_cell.push_back(coef);
  }
  for (const auto &coef : fields.rho)
  {
    Vector r = Vector::Zero(s.num_node_dofs);
    for (int t = 0; t < T; t++)
    {
      for (int i = 0; i < 4; i++)
      {
        const int a = s.node_dof[mesh.Tets()[t][i]];
        if (a >= 0)
        {
          r(a) += coef(t) * s.geom[t].volume / 4.0;
        }
      }
    }
    ops.r.push_back(r);
  }
  for (const auto &f : fields.ud)
  {
    Vector u(3 * T);
    for (int t = 0; t < T; t++)
    {
      u.segment<3>(3 * t) = f.row(t).transpose();
    }
    ops.ud.push_back(u);
  }
  const int qe = static_cast<int>(fields.ed.size());
  for (const auto &coef : fields.eps)
  {
    std::vector<Vector> loads;
    Matrix gram = Matrix::Zero(qe, qe);
    for (int a = 0; a < qe; a++)
    {
      Vector w(3 * T);
      for (int t = 0; t < T; t++)
      {
        w.segment<3>(3 * t) = in_d(t) * coef(t) * fields.ed[a].row(t).transpose();
      }
      loads.push_back(ops.C0.transpose() * w);
      for (int b = 0; b < qe; b++)
      {
        double g = 0.0;
        for (int t = 0; t < T; t++)
        {
          g += in_d(t) * coef(t) * s.geom[t].volume * fields.ed[a].row(t).dot(fields.ed[b].row(t));
        }
        gram(a, b) = g;
      }
    }
    ops.ed_load.push_back(std::move(loads));
    ops.ed_gram.push_back(gram);
  }
  return ops;
}

void DumpOperators(const OperatorBlocks &ops, const std::string &dir)
{
  std::filesystem::create_directories(dir);
  auto save = [&](const SpMat &m, const std::string &name)
  {
    if (!Eigen::saveMarket(m, dir + "/" + name + ".mtx"))
    {
      Throw(ErrorKind::Io, "cannot write " + dir + "/" + name + ".mtx");
    }
  };
  for (std::size_t q = 0; q < ops.A.size(); q++)
  {
    save(ops.A[q], "A_" + std::to_string(q));
  }
  for (std::size_t q = 0; q < ops.M.size(); q++)
  {
    save(ops.M[q], "M_" + std::to_string(q));
    save(ops.MD[q], "MD_" + std::to_string(q));
    save(ops.B[q], "B_" + std::to_string(q));
    save(ops.MU[q], "MU_" + std::to_string(q));
  }
  save(ops.Xcurl, "Xcurl");
  save(ops.Xgrad, "Xgrad");
  save(ops.C0, "C0");
  for (std::size_t q = 0; q < ops.r.size(); q++)
  {
    Eigen::saveMarketVector(ops.r[q], dir + "/r_" + std::to_string(q) + ".mtx");
  }
}

}  // namespace maxrb
