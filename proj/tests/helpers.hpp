// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MAXRB_TESTS_HELPERS_HPP
#define MAXRB_TESTS_HELPERS_HPP

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "maxrb/common.hpp"
#include "maxrb/mesh.hpp"
#include "maxrb/problem.hpp"
#include "maxrb/truth.hpp"

namespace maxrb::test
{

inline Vector RandomVector(int n, std::uint64_t seed, double scale = 1.0)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-scale, scale);
  Vector v(n);
  for (int i = 0; i < n; i++)
  {
    v(i) = d(rng);
  }
  return v;
}

inline Parameter Mu(double a, double b)
{
  Parameter mu(2);
  mu << a, b;
  return mu;
}

// Canonical benchmark on an n^3 cube.
inline TruthModel BenchmarkTruth(int n, Exec exec = Exec::Parallel)
{
  const Problem p = CanonicalBenchmark();
  return TruthModel(p, GenerateStructuredCube(n, p.data.d_box), exec);
}

// Unit-coefficient variant of the benchmark: same data, sigma = eps = 1.
inline Problem UnitBenchmark()
{
  Problem p = CanonicalBenchmark();
  p.decomp.sigma_inv.resize(1);
  p.decomp.eps.resize(1);
  p.data.eps_lo = p.data.eps_hi = 1.0;
  p.data.sigma_lo = p.data.sigma_hi = 1.0;
  return p;
}

inline std::filesystem::path TempDir(const std::string &name)
{
  auto dir = std::filesystem::temp_directory_path() / ("maxrb_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double MaxAbs(const SpMat &m)
{
  double r = 0.0;
  for (int k = 0; k < m.outerSize(); k++)
  {
    for (SpMat::InnerIterator it(m, k); it; ++it)
    {
      r = std::max(r, std::abs(it.value()));
    }
  }
  return r;
}

}  // namespace maxrb::test

#endif  // MAXRB_TESTS_HELPERS_HPP
