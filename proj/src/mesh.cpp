// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#include "maxrb/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace maxrb
{

double SignedVolume(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d)
{
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

Mesh::Mesh(std::vector<Vec3> nodes, std::vector<std::array<int, 4>> tets,
           std::vector<int> region_tags)
  : nodes_(std::move(nodes)), tets_(std::move(tets)), region_tags_(std::move(region_tags))
{
  const int nv = NumNodes();
  if (tets_.empty())
  {
    Throw(ErrorKind::Validation, "mesh has no tets");
  }
  if (region_tags_.size() != tets_.size())
  {
    Throw(ErrorKind::Validation, "region tag count does not match tet count");
  }
  for (int t = 0; t < NumTets(); t++)
  {
    for (int v : tets_[t])
    {
      if (v < 0 || v >= nv)
      {
        Throw(ErrorKind::Validation, "dangling node index " + std::to_string(v) + ", tet " +
                                         std::to_string(t));
      }
    }
    const auto &T = tets_[t];
    const double vol = SignedVolume(nodes_[T[0]], nodes_[T[1]], nodes_[T[2]], nodes_[T[3]]);
    if (!(vol > 0.0))
    {
      Throw(ErrorKind::Validation,
            (vol < 0.0 ? "negative volume, tet " : "zero volume, tet ") + std::to_string(t));
    }
  }

  // Edges, numbered lexicographically by sorted node pair.
  std::vector<std::array<int, 2>> pairs;
  pairs.reserve(tets_.size() * 6);
  for (const auto &T : tets_)
  {
    for (const auto &le : kLocalEdges)
    {
      int a = T[le[0]], b = T[le[1]];
      pairs.push_back({std::min(a, b), std::max(a, b)});
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  edges_ = std::move(pairs);

  auto edge_index = [this](int a, int b)
  {
    const std::array<int, 2> key = {std::min(a, b), std::max(a, b)};
    auto it = std::lower_bound(edges_.begin(), edges_.end(), key);
    return static_cast<int>(it - edges_.begin());
  };

  tet_edges_.resize(tets_.size());
  h_ = 0.0;
  for (int t = 0; t < NumTets(); t++)
  {
    const auto &T = tets_[t];
    for (int k = 0; k < 6; k++)
    {
      const int a = T[kLocalEdges[k][0]], b = T[kLocalEdges[k][1]];
      tet_edges_[t][k] = {edge_index(a, b), a < b ? 1 : -1};
      h_ = std::max(h_, (nodes_[a] - nodes_[b]).norm());
    }
  }

  // Faces: each interior face shared by exactly two tets, boundary faces by one.
  std::map<std::array<int, 3>, int> face_count;
  for (const auto &T : tets_)
  {
    for (int skip = 0; skip < 4; skip++)
    {
      std::array<int, 3> f;
      int m = 0;
      for (int i = 0; i < 4; i++)
      {
        if (i != skip)
        {
          f[m++] = T[i];
        }
      }
      std::sort(f.begin(), f.end());
      face_count[f]++;
    }
  }
  boundary_edge_.assign(edges_.size(), false);
  boundary_node_.assign(nodes_.size(), false);
  num_faces_ = static_cast<int>(face_count.size());
  num_boundary_faces_ = 0;
  for (const auto &[f, count] : face_count)
  {
    if (count > 2)
    {
      Throw(ErrorKind::Validation, "face (" + std::to_string(f[0]) + "," + std::to_string(f[1]) +
                                       "," + std::to_string(f[2]) + ") shared by " +
                                       std::to_string(count) + " tets");
    }
    if (count == 1)
    {
      num_boundary_faces_++;
      for (int i = 0; i < 3; i++)
      {
        boundary_node_[f[i]] = true;
        boundary_edge_[edge_index(f[i], f[(i + 1) % 3])] = true;
      }
    }
  }
}

double Mesh::TetVolume(int t) const
{
  const auto &T = tets_[t];
  return SignedVolume(nodes_[T[0]], nodes_[T[1]], nodes_[T[2]], nodes_[T[3]]);
}

Vec3 Mesh::TetCentroid(int t) const
{
  const auto &T = tets_[t];
  return 0.25 * (nodes_[T[0]] + nodes_[T[1]] + nodes_[T[2]] + nodes_[T[3]]);
}

double Mesh::TotalVolume() const
{
  double v = 0.0;
  for (int t = 0; t < NumTets(); t++)
  {
    v += TetVolume(t);
  }
  return v;
}

bool TetIntersectsBox(const std::array<Vec3, 4> &tet, const Box &box)
{
  // Separating axis test over box normals, tet face normals and edge cross products. Touching
  // (zero-length overlap) counts as separated, so only positive-volume overlap is reported.
  const std::array<Vec3, 8> corners = {
      Vec3(box.lo.x(), box.lo.y(), box.lo.z()), Vec3(box.hi.x(), box.lo.y(), box.lo.z()),
      Vec3(box.lo.x(), box.hi.y(), box.lo.z()), Vec3(box.hi.x(), box.hi.y(), box.lo.z()),
      Vec3(box.lo.x(), box.lo.y(), box.hi.z()), Vec3(box.hi.x(), box.lo.y(), box.hi.z()),
      Vec3(box.lo.x(), box.hi.y(), box.hi.z()), Vec3(box.hi.x(), box.hi.y(), box.hi.z())};
  std::vector<Vec3> axes = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  for (int skip = 0; skip < 4; skip++)
  {
    std::array<Vec3, 3> f;
    int m = 0;
    for (int i = 0; i < 4; i++)
    {
      if (i != skip)
      {
        f[m++] = tet[i];
      }
    }
    axes.push_back((f[1] - f[0]).cross(f[2] - f[0]));
  }
  for (const auto &le : kLocalEdges)
  {
    const Vec3 e = tet[le[1]] - tet[le[0]];
    for (int d = 0; d < 3; d++)
    {
      axes.push_back(e.cross(Vec3::Unit(d)));
    }
  }
  double scale = (box.hi - box.lo).norm();
  for (const auto &p : tet)
  {
    scale = std::max(scale, p.norm());
  }
  const double tol = 1e-12 * std::max(scale, 1.0);
  for (Vec3 axis : axes)
  {
    const double len = axis.norm();
    if (len < 1e-14)
    {
      continue;
    }
    axis /= len;
    double tmin = 1e300, tmax = -1e300, bmin = 1e300, bmax = -1e300;
    for (const auto &p : tet)
    {
      tmin = std::min(tmin, axis.dot(p));
      tmax = std::max(tmax, axis.dot(p));
    }
    for (const auto &p : corners)
    {
      bmin = std::min(bmin, axis.dot(p));
      bmax = std::max(bmax, axis.dot(p));
    }
    if (std::min(tmax, bmax) - std::max(tmin, bmin) <= tol)
    {
      return false;
    }
  }
  return true;
}

Mesh GenerateStructuredCube(int n, const std::optional<Box> &d_box)
{
  if (n < 1)
  {
    Throw(ErrorKind::InvalidArgument, "structured cube needs n >= 1, got " + std::to_string(n));
  }
  const int m = n + 1;
  auto id = [m](int i, int j, int k) { return i + m * (j + m * k); };
  std::vector<Vec3> nodes;
  nodes.reserve(static_cast<std::size_t>(m) * m * m);
  for (int k = 0; k < m; k++)
  {
    for (int j = 0; j < m; j++)
    {
      for (int i = 0; i < m; i++)
      {
        nodes.emplace_back(double(i) / n, double(j) / n, double(k) / n);
      }
    }
  }
  // Each tet follows a monotone path 000 -> 111 through the cube corners.
  static constexpr std::array<std::array<int, 3>, 6> perms = {
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::vector<std::array<int, 4>> tets;
  tets.reserve(static_cast<std::size_t>(6) * n * n * n);
  for (int k = 0; k < n; k++)
  {
    for (int j = 0; j < n; j++)
    {
      for (int i = 0; i < n; i++)
      {
        for (const auto &p : perms)
        {
          std::array<int, 3> c = {i, j, k};
          std::array<int, 4> T;
          T[0] = id(c[0], c[1], c[2]);
          for (int s = 0; s < 3; s++)
          {
            c[p[s]]++;
            T[s + 1] = id(c[0], c[1], c[2]);
          }
          if (SignedVolume(nodes[T[0]], nodes[T[1]], nodes[T[2]], nodes[T[3]]) < 0.0)
          {
            std::swap(T[2], T[3]);
          }
          tets.push_back(T);
        }
      }
    }
  }
  std::vector<int> tags(tets.size(), 0);
  for (std::size_t t = 0; t < tets.size(); t++)
  {
    if (!d_box)
    {
      tags[t] = Mesh::kRegionD;
      continue;
    }
    const auto &T = tets[t];
    tags[t] = TetIntersectsBox({nodes[T[0]], nodes[T[1]], nodes[T[2]], nodes[T[3]]}, *d_box)
                  ? Mesh::kRegionD
                  : 0;
  }
  return Mesh(std::move(nodes), std::move(tets), std::move(tags));
}

std::string FormatMesh(const Mesh &mesh)
{
  std::ostringstream os;
  os.precision(17);
  os << "nodes " << mesh.NumNodes() << "\n";
  for (const auto &p : mesh.Nodes())
  {
    os << p.x() << " " << p.y() << " " << p.z() << "\n";
  }
  os << "tets " << mesh.NumTets() << "\n";
  for (int t = 0; t < mesh.NumTets(); t++)
  {
    const auto &T = mesh.Tets()[t];
    os << T[0] << " " << T[1] << " " << T[2] << " " << T[3] << " " << mesh.RegionTags()[t]
       << "\n";
  }
  return os.str();
}

void WriteMesh(const Mesh &mesh, const std::string &path)
{
  std::ofstream out(path);
  if (!out)
  {
    Throw(ErrorKind::Io, "cannot open " + path + " for writing");
  }
  out << FormatMesh(mesh);
}

Mesh ParseMesh(const std::string &text)
{
  std::istringstream in(text);
  std::string word;
  long long count = -1;
  auto expect_header = [&](const char *name)
  {
    if (!(in >> word) || word != name || !(in >> count) || count < 0)
    {
      Throw(ErrorKind::Parse, std::string("expected '") + name + " <count>' header");
    }
  };
  expect_header("nodes");
  std::vector<Vec3> nodes(static_cast<std::size_t>(count));
  for (long long i = 0; i < count; i++)
  {
    if (!(in >> nodes[i].x() >> nodes[i].y() >> nodes[i].z()))
    {
      Throw(ErrorKind::Parse, "malformed coordinates, node " + std::to_string(i));
    }
  }
  expect_header("tets");
  std::vector<std::array<int, 4>> tets(static_cast<std::size_t>(count));
  std::vector<int> tags(static_cast<std::size_t>(count));
  for (long long t = 0; t < count; t++)
  {
    auto &T = tets[t];
    if (!(in >> T[0] >> T[1] >> T[2] >> T[3] >> tags[t]))
    {
      Throw(ErrorKind::Parse, "malformed tet line, tet " + std::to_string(t));
    }
  }
  if (in >> word)
  {
    Throw(ErrorKind::Parse, "trailing content after tet block: '" + word + "'");
  }
  return Mesh(std::move(nodes), std::move(tets), std::move(tags));
}

Mesh LoadMesh(const std::string &path)
{
  std::ifstream in(path);
  if (!in)
  {
    Throw(ErrorKind::Io, "cannot open mesh file " + path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseMesh(buffer.str());
}

}  // namespace maxrb
