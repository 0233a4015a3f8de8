// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "maxrb/estimator.hpp"
#include "maxrb/fespace.hpp"
#include "maxrb/mesh.hpp"
#include "maxrb/problem.hpp"
#include "maxrb/rbm.hpp"
#include "maxrb/truth.hpp"

using namespace maxrb;

namespace
{

Exec ExecOf(const benchmark::State &state)
{
  return state.range(1) ? Exec::Parallel : Exec::Serial;
}

void BM_CurlCurl(benchmark::State &state)
{
  const Mesh mesh = GenerateStructuredCube(static_cast<int>(state.range(0)), std::nullopt);
  const Spaces s = BuildSpaces(mesh);
  const Vector coef = Vector::Ones(mesh.NumTets());
  for (auto _ : state)
  {
    benchmark::DoNotOptimize(AssembleCurlCurl(s, coef, ExecOf(state)));
  }
  state.counters["edge_dofs"] = s.num_edge_dofs;
}

void BM_AssembleBlocks(benchmark::State &state)
{
  const Problem p = CanonicalBenchmark();
  const Mesh mesh = GenerateStructuredCube(static_cast<int>(state.range(0)), p.data.d_box);
  const Spaces s = BuildSpaces(mesh);
  const TetFields fields = RealizeFields(p.decomp, mesh);
  for (auto _ : state)
  {
    benchmark::DoNotOptimize(AssembleBlocks(s, p.decomp, fields, ExecOf(state)));
  }
}

// Delta^ab over a 5x5 training grid with a two-iteration basis.
void BM_EstimatorSweep(benchmark::State &state)
{
  const Problem p = CanonicalBenchmark();
  const TruthModel truth(p, GenerateStructuredCube(static_cast<int>(state.range(0)), p.data.d_box));
  const auto train = p.data.domain.Grid({5, 5});
  const ConstantsLedger ledger = BuildLedger(truth, p.data.domain.Grid({2, 2}));
  ReducedBasis rb(truth);
  GreedyOptions go;
  go.nmax = 2;
  go.tol = 0.0;
  Greedy(rb, ledger, train, go);
  for (auto _ : state)
  {
    benchmark::DoNotOptimize(EstimatorSweep(rb, ledger, train, go.reduced_ocp, ExecOf(state)));
  }
}

}  // namespace

BENCHMARK(BM_CurlCurl)
  ->ArgNames({"n", "parallel"})
  ->ArgsProduct({{4, 8, 12}, {0, 1}})
  ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AssembleBlocks)
  ->ArgNames({"n", "parallel"})
  ->ArgsProduct({{4, 8}, {0, 1}})
  ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EstimatorSweep)
  ->ArgNames({"n", "parallel"})
  ->ArgsProduct({{3}, {0, 1}})
  ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
