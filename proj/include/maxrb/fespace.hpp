// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MAXRB_FESPACE_HPP
#define MAXRB_FESPACE_HPP

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "maxrb/common.hpp"
#include "maxrb/mesh.hpp"
#include "maxrb/problem.hpp"

namespace maxrb
{

// Per-tet geometric data shared by all spaces.
struct TetGeometry
{
  double volume;
  std::array<Vec3, 4> grad_lambda;
};

TetGeometry ComputeTetGeometry(const std::array<Vec3, 4> &x);

// Lowest-order Nedelec space E_h (tangential trace zero), P1 space V_h (zero trace) and the
// piecewise constant vector control space U_h.
struct Spaces
{
  std::shared_ptr<const Mesh> mesh;
  std::vector<TetGeometry> geom;

  int num_edge_dofs = 0;
  std::vector<int> edge_dof;  // -1 on boundary edges
  std::vector<int> dof_edge;

  int num_node_dofs = 0;
  std::vector<int> node_dof;  // -1 on boundary nodes
  std::vector<int> dof_node;

  int num_control_dofs = 0;  // 3 per tet, layout 3t + c

  // Discrete gradient V_h -> E_h: column a holds the +-1 edge coefficients of grad(phi_a).
  SpMat G;
  // Per-tet gradient V_h -> U_h.
  SpMat Gcell;
};

// allow_trivial = false rejects meshes with no interior edge or node ("trivial space").
Spaces BuildSpaces(const Mesh &mesh, bool allow_trivial = false);

// Local Whitney data of tet t: value of the 6 oriented global basis functions (including the
// global sign) at barycentric point lambda, and their constant curls.
std::array<Vec3, 6> WhitneyValues(const Spaces &s, int t, const std::array<double, 4> &lambda);
std::array<Vec3, 6> WhitneyCurls(const Spaces &s, int t);

// Field reconstruction of an edge dof vector at a barycentric point of tet t.
Vec3 EvalEdgeField(const Spaces &s, const Vector &x, int t, const std::array<double, 4> &lambda);
Vec3 EvalEdgeCurl(const Spaces &s, const Vector &x, int t);

// mu-independent operator blocks of the affine decomposition. Edge blocks are restricted to
// interior dofs, nodal blocks to interior nodes.
struct OperatorBlocks
{
  // Indexed by affine term.
  std::vector<SpMat> A;    // curl-curl with sigma^-1_q          (E x E)
  std::vector<SpMat> M;    // eps_q mass on Omega                (E x E)
  std::vector<SpMat> MD;   // eps_q mass on D                    (E x E)
  std::vector<SpMat> B;    // (eps_q Phi, grad phi)              (V x E)
  std::vector<SpMat> L;    // (eps_q grad psi, grad phi) = B_q G (V x V)
  std::vector<SpMat> MU;   // (eps_q u, Phi): f = MU_q^T u       (U x E)
  std::vector<Vector> r;   // (rho_q, phi)                       (V)
  std::vector<Vector> eps_cell;  // eps_q per tet                (T)

  // E_d data: ed_load[q][s] = (eps_q E_d_s, Phi)_D, ed_gram[q](s, s') = (eps_q E_d_s, E_d_s')_D.
  std::vector<std::vector<Vector>> ed_load;
  std::vector<Matrix> ed_gram;
  // u_d terms as control vectors.
  std::vector<Vector> ud;

  SpMat C0;      // integral of each edge function over each tet (U x E)
  SpMat Xcurl;   // H(curl) Gram, unit coefficients
  SpMat Xgrad;   // H1 seminorm Gram on V_h
  SpMat Medge;   // unit L2 mass on E_h
  SpMat Mnode;   // unit L2 mass on V_h
  Vector cell_volume;

  int NumSigma() const { return static_cast<int>(A.size()); }
  int NumEps() const { return static_cast<int>(M.size()); }
  int NumRho() const { return static_cast<int>(r.size()); }
  int NumUd() const { return static_cast<int>(ud.size()); }
  int NumEd() const { return ed_gram.empty() ? 0 : static_cast<int>(ed_gram[0].rows()); }
};

OperatorBlocks AssembleBlocks(const Spaces &spaces, const AffineDecomposition &decomp,
                              const TetFields &fields, Exec exec = Exec::Parallel);

// Single-coefficient assembly helpers (also used by tests and the benchmark).
SpMat AssembleCurlCurl(const Spaces &s, const Vector &coef, Exec exec);
SpMat AssembleEdgeMass(const Spaces &s, const Vector &coef, Exec exec);
SpMat AssembleNodalStiffness(const Spaces &s, const Vector &coef, Exec exec);
SpMat AssembleNodalMass(const Spaces &s, Exec exec);
SpMat AssembleCellIntegrals(const Spaces &s, Exec exec);

// sum_q theta_q blocks_q. Uses a values-only sum when all blocks share one pattern.
SpMat Combine(const std::vector<SpMat> &blocks, const Vector &theta);
Vector Combine(const std::vector<Vector> &vecs, const Vector &theta);

// Writes every block in Matrix Market format into dir.
void DumpOperators(const OperatorBlocks &ops, const std::string &dir);

}  // namespace maxrb

#endif  // MAXRB_FESPACE_HPP
