// Copyright the maxrb authors.
// SPDX-License-Identifier: Apache-2.0

// maxrb command-line driver.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "maxrb/control.hpp"
#include "maxrb/estimator.hpp"
#include "maxrb/mesh.hpp"
#include "maxrb/problem.hpp"
#include "maxrb/rbm.hpp"
#include "maxrb/studies.hpp"
#include "maxrb/truth.hpp"

namespace fs = std::filesystem;
using namespace maxrb;

namespace
{

constexpr int kExitUsage = 2;
constexpr int kExitSolver = 3;
constexpr int kExitCertification = 4;

struct Common
{
  std::string problem;
  std::string mesh;
  int n = 4;
  int threads = 0;
  bool serial = false;
  std::string out = ".";
  std::string validation_grid = "3";

  Exec GetExec() const { return serial ? Exec::Serial : Exec::Parallel; }
};

void AddCommon(CLI::App *app, Common &c)
{
  app->add_option("--problem", c.problem, "problem file (JSON); default: canonical benchmark");
  app->add_option("--mesh", c.mesh, "mesh file; default: structured cube with --n");
  app->add_option("--n", c.n, "cells per direction of the structured cube")->check(CLI::Range(1, 64));
  app->add_option("--threads", c.threads, "worker threads (0: OpenMP default)")
    ->check(CLI::NonNegativeNumber);
  app->add_flag("--serial", c.serial, "use the serial reference kernels");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--validation-grid", c.validation_grid,
                  "parameter grid for the stability constants, e.g. 3 or 3x3");
}

Problem GetProblem(const Common &c)
{
  return c.problem.empty() ? CanonicalBenchmark() : LoadProblem(c.problem);
}

Mesh GetMesh(const Common &c, const Problem &p)
{
  return c.mesh.empty() ? GenerateStructuredCube(c.n, p.data.d_box) : LoadMesh(c.mesh);
}

void Setup(const Common &c)
{
  if (c.threads > 0)
  {
    omp_set_num_threads(c.threads);
  }
  fs::create_directories(c.out);
}

std::string OutPath(const Common &c, const std::string &name)
{
  return (fs::path(c.out) / name).string();
}

std::string Num(double x)
{
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10e", x);
  return buf;
}

std::string MuColumns(const Parameter &mu)
{
  std::string s;
  for (double x : mu)
  {
    s += Num(x) + ",";
  }
  return s;
}

std::string MuHeader(int dim)
{
  std::string s;
  for (int i = 0; i < dim; i++)
  {
    s += "mu" + std::to_string(i + 1) + ",";
  }
  return s;
}

void WriteFile(const std::string &path, const std::string &text)
{
  std::ofstream out(path);
  if (!out)
  {
    Throw(ErrorKind::Io, "cannot write " + path);
  }
  out << text;
}

std::vector<Parameter> GetMus(const std::vector<std::string> &specs, const Problem &p)
{
  std::vector<Parameter> mus;
  for (const auto &s : specs)
  {
    mus.push_back(ParseParameterSpec(s, p.data.domain.Dim()));
    p.data.domain.Check(mus.back());
  }
  if (mus.empty())
  {
    mus.push_back(0.5 * (p.data.domain.Lower() + p.data.domain.Upper()));
  }
  return mus;
}

ConstantsLedger MakeLedger(const Common &c, const TruthModel &truth)
{
  const auto &dom = truth.GetProblem().data.domain;
  const auto grid = dom.Grid(ParseGridSpec(c.validation_grid, dom.Dim()));
  std::cerr << "estimating stability constants on " << grid.size() << " parameters\n";
  return BuildLedger(truth, grid);
}

template <class F>
void Sweep(int n, Exec exec, F &&body)
{
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (int i = 0; i < n; i++)
  {
    try
    {
      body(i);
    }
    catch (...)
    {
#pragma omp critical(maxrb_cli_error)
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
}

// mesh-gen ------------------------------------------------------------------------------------

int MeshGen(const Common &c, const std::string &file)
{
  Setup(c);
  const Problem p = GetProblem(c);
  const Mesh mesh = GenerateStructuredCube(c.n, p.data.d_box);
  const std::string path = file.empty() ? OutPath(c, "mesh.txt") : file;
  WriteMesh(mesh, path);
  int in_d = 0;
  for (int t = 0; t < mesh.NumTets(); t++)
  {
    in_d += mesh.InRegionD(t) ? 1 : 0;
  }
  std::cout << "wrote " << path << ": " << mesh.NumNodes() << " nodes, " << mesh.NumTets()
            << " tets, " << mesh.NumEdges() << " edges, " << in_d << " tets in D, h = "
            << mesh.MeshSize() << "\n";
  return 0;
}

// truth-solve ---------------------------------------------------------------------------------

int TruthSolve(const Common &c, const std::vector<std::string> &mu_specs, bool vtk, double tol)
{
  Setup(c);
  const Problem p = GetProblem(c);
  const Mesh mesh = GetMesh(c, p);
  const TruthModel truth(p, mesh, c.GetExec());
  const auto mus = GetMus(mu_specs, p);
  OcpOptions opt;
  opt.tol = tol;
  std::vector<OcpSolution> sols(mus.size());
  std::vector<std::string> rows(mus.size());
  Sweep(static_cast<int>(mus.size()), c.GetExec(),
        [&](int i)
        {
          const auto &mu = mus[i];
          sols[i] = SolveTruth(truth, mu, opt);
          const auto &s = sols[i];
          const auto st = truth.SolveState(mu, s.u);
          const auto ad = truth.SolveAdjoint(mu, s.E);
          const AdmissibleSet uad(truth, mu);
          std::ostringstream os;
          os << i << "," << MuColumns(mu) << Num(s.cost) << "," << s.iterations << ","
             << Num(s.increment) << "," << Num(s.kkt) << "," << Num(st.primal_residual) << ","
             << Num(st.constraint_residual) << "," << Num(ad.primal_residual) << ","
             << Num(ad.constraint_residual) << "," << Num(uad.DivergenceResidual(s.u)) << ","
             << Num(uad.BoxResidual(s.u));
          rows[i] = os.str();
        });
  std::ostringstream csv;
  csv << "index," << MuHeader(p.data.domain.Dim())
      << "J,iterations,increment,kkt,state_residual,state_divergence,adjoint_residual,"
         "adjoint_divergence,control_divergence,control_box\n";
  for (const auto &r : rows)
  {
    csv << r << "\n";
  }
  WriteFile(OutPath(c, "truth_solve.csv"), csv.str());
  if (vtk)
  {
    for (std::size_t i = 0; i < mus.size(); i++)
    {
      const auto &sp = truth.GetSpaces();
      WriteVtk(OutPath(c, "truth_" + std::to_string(i) + ".vtk"), mesh,
               {{"E", EdgeFieldAtCentroids(sp, sols[i].E)},
                {"curlE", EdgeCurlPerTet(sp, sols[i].E)},
                {"F", EdgeFieldAtCentroids(sp, sols[i].F)},
                {"u", ControlToCells(sols[i].u)}});
    }
  }
  std::cout << csv.str();
  return 0;
}

// ocp-solve -----------------------------------------------------------------------------------

int OcpSolve(const Common &c, const std::string &mu_spec, const std::string &rb_path,
             const std::string &trace, OcpOptions opt)
{
  Setup(c);
  const Problem p = GetProblem(c);
  const Mesh mesh = GetMesh(c, p);
  const TruthModel truth(p, mesh, c.GetExec());
  const Parameter mu = GetMus(mu_spec.empty() ? std::vector<std::string>{}
                                               : std::vector<std::string>{mu_spec},
                              p)[0];
  OcpSolution sol;
  std::string model = "truth";
  if (rb_path.empty())
  {
    sol = SolveTruth(truth, mu, opt);
  }
  else
  {
    const ReducedBasis rb = ReducedBasis::Load(rb_path, truth);
    sol = SolveReduced(rb, mu, opt);
    model = "reduced";
  }
  if (!trace.empty())
  {
    WriteTrace(trace, sol.trace);
  }
  nlohmann::ordered_json j;
  j["model"] = model;
  j["mu"] = std::vector<double>(mu.begin(), mu.end());
  j["J"] = sol.cost;
  j["iterations"] = sol.iterations;
  j["increment"] = sol.increment;
  j["kkt"] = sol.kkt;
  j["omega"] = sol.omega;
  j["control_norm"] = truth.ControlNorm(sol.u);
  j["projection_converged"] = sol.projection_converged;
  WriteFile(OutPath(c, "ocp_solve.json"), j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

// greedy --------------------------------------------------------------------------------------

int GreedyCmd(const Common &c, std::string train_grid, double tol, int nmax,
              std::string archive, int start_index)
{
  Setup(c);
  const Problem p = GetProblem(c);
  const Mesh mesh = GetMesh(c, p);
  const TruthModel truth(p, mesh, c.GetExec());
  const auto &dom = p.data.domain;
  const auto train = train_grid.empty() ? dom.Grid(p.data.train_grid)
                                        : dom.Grid(ParseGridSpec(train_grid, dom.Dim()));
  ValidateCoefficients(truth.GetProblem(), truth.Fields(), mesh, train);
  ValidateHolderData(truth.GetProblem(), 20, 1);
  const ConstantsLedger ledger = MakeLedger(c, truth);
  if (archive.empty())
  {
    archive = OutPath(c, "rb.archive");
  }
  ReducedBasis rb(truth);
  GreedyOptions go;
  go.tol = tol;
  go.nmax = nmax;
  go.start_index = start_index;
  go.exec = c.GetExec();
  go.on_step = [](const GreedyStep &s)
  {
    std::cerr << "iteration " << s.iteration << ": mu = " << FormatParameter(s.mu)
              << ", dim E_N = " << s.dim_E << ", dim V_N = " << s.dim_V
              << ", max Delta = " << s.max_delta << "\n";
  };
  const GreedyResult res = Greedy(rb, ledger, train, go);
  rb.Save(archive);
  std::ostringstream log;
  log << "iteration," << MuHeader(dom.Dim()) << "dim_E,dim_V,max_delta";
  for (int i = 0; i < dom.Dim(); i++)
  {
    log << ",argmax_mu" << i + 1;
  }
  log << "\n";
  for (const auto &s : rb.log)
  {
    log << s.iteration << "," << MuColumns(s.mu) << s.dim_E << "," << s.dim_V << ","
        << Num(s.max_delta);
    for (double x : s.argmax)
    {
      log << "," << Num(x);
    }
    log << "\n";
  }
  WriteFile(OutPath(c, "greedy_log.csv"), log.str());
  WriteFile(OutPath(c, "constants.json"), LedgerToJson(ledger) + "\n");
  std::cout << log.str();
  std::cout << (res.converged ? "converged" : "stopped at nmax") << ": "
            << rb.log.size() << " iterations, archive " << archive << "\n";
  return 0;
}

// certify -------------------------------------------------------------------------------------

int CertifyCmd(const Common &c, const std::string &rb_path, const std::string &test_grid,
               int random, std::uint64_t seed, bool snapshots, bool with_truth)
{
  Setup(c);
  const Problem p = GetProblem(c);
  const Mesh mesh = GetMesh(c, p);
  const TruthModel truth(p, mesh, c.GetExec());
  const ReducedBasis rb = ReducedBasis::Load(rb_path, truth);
  const auto &dom = p.data.domain;
  std::vector<Parameter> test;
  if (snapshots)
  {
    test = rb.snapshots;
  }
  else if (!test_grid.empty())
  {
    test = dom.Grid(ParseGridSpec(test_grid, dom.Dim()));
  }
  else
  {
    test = dom.RandomSample(random, seed);
  }
  if (test.empty())
  {
    Throw(ErrorKind::InvalidArgument, "empty test set");
  }
  const ConstantsLedger ledger = MakeLedger(c, truth);
  const GreedyOptions defaults;
  std::vector<ErrorCertificate> certs(test.size());
  std::vector<MeasuredErrors> errs(test.size());
  Sweep(static_cast<int>(test.size()), c.GetExec(),
        [&](int i)
        {
          const OcpSolution red = SolveReduced(rb, test[i], defaults.reduced_ocp);
          certs[i] = Certify(rb, test[i], red, &ledger);
          if (with_truth)
          {
            errs[i] = MeasureErrors(rb, SolveTruth(truth, test[i], defaults.truth_ocp), red);
          }
        });
  std::ostringstream csv;
  csv << CertificateCsvHeader(dom.Dim(), with_truth) << "\n";
  std::size_t violations = 0;
  for (std::size_t i = 0; i < test.size(); i++)
  {
    csv << CertificateCsvRow(certs[i], with_truth ? &errs[i] : nullptr) << "\n";
    if (with_truth)
    {
      for (const auto &msg : CheckCertificate(certs[i], errs[i]))
      {
        std::cerr << "violation: " << msg << "\n";
        violations++;
      }
    }
  }
  WriteFile(OutPath(c, "certificates.csv"), csv.str());
  WriteFile(OutPath(c, "certificates.json"),
            CertificatesJson(certs, with_truth ? &errs : nullptr) + "\n");
  std::cout << csv.str();
  if (violations > 0)
  {
    std::cerr << violations << " certification violations\n";
    return kExitCertification;
  }
  return 0;
}

// h-study -------------------------------------------------------------------------------------

int HStudyCmd(const Common &c, const std::vector<int> &ns, int rule_points)
{
  Setup(c);
  const auto rows = RunHStudy(ns, rule_points, c.GetExec());
  std::ostringstream csv;
  csv << "n,h,edge_dofs,error_hcurl,error_l2,error_curl,rate\n";
  for (std::size_t i = 0; i < rows.size(); i++)
  {
    const auto &r = rows[i];
    csv << r.n << "," << Num(r.h) << "," << r.edge_dofs << "," << Num(r.error) << ","
        << Num(r.l2) << "," << Num(r.curl) << ",";
    if (i > 0)
    {
      csv << Num(std::log(r.error / rows[i - 1].error) / std::log(r.h / rows[i - 1].h));
    }
    else
    {
      csv << "NA";
    }
    csv << "\n";
  }
  const double slope = rows.size() >= 2 ? FittedSlope(rows) : 0.0;
  WriteFile(OutPath(c, "h_study.csv"), csv.str());
  std::cout << csv.str() << "fitted slope " << slope << "\n";
  return 0;
}

// n-study -------------------------------------------------------------------------------------

int NStudyCmd(const Common &c, const std::string &rb_path, std::string train_grid, int nmax,
              int random, std::uint64_t seed, double tol)
{
  Setup(c);
  const Problem p = GetProblem(c);
  const Mesh mesh = GetMesh(c, p);
  const TruthModel truth(p, mesh, c.GetExec());
  const auto &dom = p.data.domain;
  const ConstantsLedger ledger = MakeLedger(c, truth);
  ReducedBasis rb(truth);
  if (!rb_path.empty())
  {
    rb = ReducedBasis::Load(rb_path, truth);
  }
  else
  {
    const auto train = train_grid.empty() ? dom.Grid(p.data.train_grid)
                                          : dom.Grid(ParseGridSpec(train_grid, dom.Dim()));
    GreedyOptions go;
    go.tol = 0.0;
    go.nmax = nmax;
    go.exec = c.GetExec();
    Greedy(rb, ledger, train, go);
  }
  const auto test = dom.RandomSample(random, seed);
  const GreedyOptions defaults;
  const auto truths = SolveTruthSweep(truth, test, defaults.truth_ocp, c.GetExec());
  const NStudyResult res = RunNStudy(rb, ledger, test, truths, defaults.reduced_ocp, c.GetExec());

  std::ostringstream csv;
  csv << "N,dim_E,dim_V,kappa,max_error,max_delta,gamma\n";
  for (const auto &r : res.rows)
  {
    csv << r.N << "," << r.dim_E << "," << r.dim_V << "," << Num(r.kappa) << ","
        << Num(r.max_error) << "," << Num(r.max_delta) << "," << Num(res.gamma) << "\n";
  }
  std::ostringstream scatter;
  scatter << "N,index,kappa,error\n";
  for (std::size_t k = 0; k < res.rows.size(); k++)
  {
    for (std::size_t i = 0; i < test.size(); i++)
    {
      scatter << res.rows[k].N << "," << i << "," << Num(res.rows[k].kappa) << ","
              << Num(res.errors[k][i]) << "\n";
    }
  }
  WriteFile(OutPath(c, "n_study.csv"), csv.str());
  WriteFile(OutPath(c, "n_study_scatter.csv"), scatter.str());
  std::cout << csv.str();
  std::vector<std::string> failures;
  for (std::size_t k = 1; k < res.rows.size(); k++)
  {
    if (res.rows[k].max_error > res.rows[k - 1].max_error)
    {
      failures.push_back("max error increases at N = " + std::to_string(res.rows[k].N));
    }
  }
  if (!res.rows.empty() && res.rows.back().max_error > tol)
  {
    failures.push_back("final max error " + Num(res.rows.back().max_error) + " exceeds " +
                       Num(tol));
  }
  for (const auto &f : failures)
  {
    std::cerr << "n-study: " << f << "\n";
  }
  return failures.empty() ? 0 : kExitCertification;
}

int ExitCodeFor(ErrorKind kind)
{
  switch (kind)
  {
  case ErrorKind::Solver:
  case ErrorKind::InfSup:
  case ErrorKind::Convergence:
    return kExitSolver;
  case ErrorKind::Certification:
    return kExitCertification;
  default:
    return kExitUsage;
  }
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"maxrb: certified reduced basis for Maxwell optimal control"};
  app.require_subcommand(1);

  Common c;
  std::string mesh_file;
  auto *mesh_gen = app.add_subcommand("mesh-gen", "write a structured cube mesh");
  AddCommon(mesh_gen, c);
  mesh_gen->add_option("--file", mesh_file, "mesh output path (default <out>/mesh.txt)");

  std::vector<std::string> mus;
  bool vtk = false;
  double truth_tol = 1e-9;
  auto *truth_solve = app.add_subcommand("truth-solve", "truth optimal control at listed parameters");
  AddCommon(truth_solve, c);
  truth_solve->add_option("--mu", mus, "parameter, comma separated (repeatable)");
  truth_solve->add_flag("--vtk", vtk, "write VTK fields");
  truth_solve->add_option("--tol", truth_tol, "fixed-point tolerance");

  std::string mu_one, rb_path, trace;
  OcpOptions ocp;
  auto *ocp_solve = app.add_subcommand("ocp-solve", "one optimal control solve (truth or reduced)");
  AddCommon(ocp_solve, c);
  ocp_solve->add_option("--mu", mu_one, "parameter, comma separated");
  ocp_solve->add_option("--rb", rb_path, "reduced basis archive (reduced solve)");
  ocp_solve->add_option("--trace", trace, "iteration trace CSV");
  ocp_solve->add_option("--omega", ocp.omega, "initial damping")->check(CLI::Range(1e-6, 1.0));
  ocp_solve->add_option("--tol", ocp.tol, "fixed-point tolerance");
  ocp_solve->add_option("--max-iter", ocp.max_iter, "iteration limit");

  std::string train_grid, archive;
  double greedy_tol = 1e-6;
  int nmax = 15, start_index = 0;
  auto *greedy = app.add_subcommand("greedy", "build the reduced basis");
  AddCommon(greedy, c);
  greedy->add_option("--train-grid", train_grid, "training grid, e.g. 9x9");
  greedy->add_option("--tol", greedy_tol, "estimator tolerance");
  greedy->add_option("--nmax", nmax, "iteration limit")->check(CLI::PositiveNumber);
  greedy->add_option("--archive", archive, "archive path (default <out>/rb.archive)");
  greedy->add_option("--start-index", start_index, "training index of the first parameter");

  std::string test_grid;
  int random = 20;
  std::uint64_t seed = 2024;
  bool with_truth = false, at_snapshots = false;
  auto *certify = app.add_subcommand("certify", "error certificates over a test set");
  AddCommon(certify, c);
  certify->add_option("--rb", rb_path, "reduced basis archive")->required();
  certify->add_option("--test-grid", test_grid, "test grid, e.g. 5x5");
  certify->add_option("--random", random, "number of seeded random test parameters");
  certify->add_option("--seed", seed, "random seed");
  certify->add_flag("--snapshots", at_snapshots, "certify at the snapshot parameters");
  certify->add_flag("--with-truth", with_truth, "compare against truth solves");

  std::vector<int> ns{2, 3, 4, 6};
  int rule_points = 3;
  auto *h_study = app.add_subcommand("h-study", "mesh convergence on a manufactured solution");
  AddCommon(h_study, c);
  h_study->add_option("--ns", ns, "cells per direction")->delimiter(',');
  h_study->add_option("--rule-points", rule_points, "quadrature points per direction");

  int n_random = 50;
  double n_tol = 1e-4;
  auto *n_study = app.add_subcommand("n-study", "error and fill distance against basis size");
  AddCommon(n_study, c);
  n_study->add_option("--rb", rb_path, "reduced basis archive (default: run greedy)");
  n_study->add_option("--train-grid", train_grid, "training grid when running greedy");
  n_study->add_option("--nmax", nmax, "greedy iterations when running greedy");
  n_study->add_option("--random", n_random, "number of seeded random test parameters");
  n_study->add_option("--seed", seed, "random seed");
  n_study->add_option("--tol", n_tol, "required final max error");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError &e)
  {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try
  {
    if (*mesh_gen)
    {
      return MeshGen(c, mesh_file);
    }
    if (*truth_solve)
    {
      return TruthSolve(c, mus, vtk, truth_tol);
    }
    if (*ocp_solve)
    {
      return OcpSolve(c, mu_one, rb_path, trace, ocp);
    }
    if (*greedy)
    {
      return GreedyCmd(c, train_grid, greedy_tol, nmax, archive, start_index);
    }
    if (*certify)
    {
      return CertifyCmd(c, rb_path, test_grid, random, seed, at_snapshots, with_truth);
    }
    if (*h_study)
    {
      return HStudyCmd(c, ns, rule_points);
    }
    if (*n_study)
    {
      return NStudyCmd(c, rb_path, train_grid, nmax, n_random, seed, n_tol);
    }
  }
  catch (const Error &e)
  {
    std::cerr << "error (" << ToString(e.Kind()) << "): " << e.what() << "\n";
    return ExitCodeFor(e.Kind());
  }
  catch (const std::exception &e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitUsage;
}
