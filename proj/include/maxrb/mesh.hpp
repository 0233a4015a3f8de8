// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MAXRB_MESH_HPP
#define MAXRB_MESH_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "maxrb/common.hpp"

namespace maxrb
{

// Axis-aligned box [lo, hi].
struct Box
{
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
};

// Local edge k of a tet joins local vertices kLocalEdges[k][0] -> kLocalEdges[k][1].
inline constexpr std::array<std::array<int, 2>, 6> kLocalEdges = {
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

struct TetEdge
{
  int edge;  // global edge index
  int sign;  // +1 when the local direction matches the global low->high direction
};

// Conforming tetrahedral mesh with global edge enumeration. Immutable after construction.
class Mesh
{
public:
  static constexpr int kRegionD = 1;

  // Builds the derived topology (edges, incidence, boundary flags, h) and validates.
  Mesh(std::vector<Vec3> nodes, std::vector<std::array<int, 4>> tets,
       std::vector<int> region_tags);

  const std::vector<Vec3> &Nodes() const { return nodes_; }
  const std::vector<std::array<int, 4>> &Tets() const { return tets_; }
  const std::vector<std::array<int, 2>> &Edges() const { return edges_; }
  const std::vector<std::array<TetEdge, 6>> &TetEdges() const { return tet_edges_; }
  const std::vector<int> &RegionTags() const { return region_tags_; }
  const std::vector<bool> &BoundaryEdges() const { return boundary_edge_; }
  const std::vector<bool> &BoundaryNodes() const { return boundary_node_; }

  int NumNodes() const { return static_cast<int>(nodes_.size()); }
  int NumTets() const { return static_cast<int>(tets_.size()); }
  int NumEdges() const { return static_cast<int>(edges_.size()); }
  int NumFaces() const { return num_faces_; }
  int NumBoundaryFaces() const { return num_boundary_faces_; }

  // Maximum over tets of the longest edge length.
  double MeshSize() const { return h_; }

  double TetVolume(int t) const;
  Vec3 TetCentroid(int t) const;
  bool InRegionD(int t) const { return region_tags_[t] == kRegionD; }
  double TotalVolume() const;

private:
  std::vector<Vec3> nodes_;
  std::vector<std::array<int, 4>> tets_;
  std::vector<int> region_tags_;
  std::vector<std::array<int, 2>> edges_;
  std::vector<std::array<TetEdge, 6>> tet_edges_;
  std::vector<bool> boundary_edge_, boundary_node_;
  int num_faces_ = 0, num_boundary_faces_ = 0;
  double h_ = 0.0;
};

double SignedVolume(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d);

// True when the tet interior and the open box share positive volume.
bool TetIntersectsBox(const std::array<Vec3, 4> &tet, const Box &box);

// Kuhn (6 tets per cube) triangulation of [0,1]^3 with n^3 cubes. Tets intersecting d_box are
// tagged as region D; no box means the whole domain is D.
Mesh GenerateStructuredCube(int n, const std::optional<Box> &d_box);

void WriteMesh(const Mesh &mesh, const std::string &path);
Mesh LoadMesh(const std::string &path);
Mesh ParseMesh(const std::string &text);
std::string FormatMesh(const Mesh &mesh);

}  // namespace maxrb

#endif  // MAXRB_MESH_HPP
