#pragma once

#include <vector>

#include "corsma/conic.hpp"

namespace corsma::conic {

enum class SolveStatus { Optimal, PrimalInfeasible, DualInfeasible, MaxIterations, Numerical };

// How exponential rows are reduced to the symmetric cones the core solver
// handles. OuterCuts refines tangent cuts until the exp rows hold, so the
// reported objective of a minimization never exceeds what the cuts allow
// (relaxation from outside). InnerChords is a fixed secant overapproximation
// of exp over the declared bracket (conservative from inside), one solve.
enum class ExpMode { OuterCuts, InnerChords };

struct SolveOptions {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iterations = 200;
  ExpMode exp_mode = ExpMode::OuterCuts;
  int exp_segments = 32;      // chord count for InnerChords, initial grid for OuterCuts
  int max_cut_rounds = 40;
  double cut_tol = 2e-6;      // exp violation tolerance, relative to the bound scale
  bool verbose = false;
};

// Tangent knots per exponential cone, in program order. Passing the same
// carry across repeated solves of structurally identical programs keeps the
// accumulated cuts, which keeps an outer approximation consistent between
// successive convexified problems.
struct ExpCutCarry {
  std::vector<std::vector<double>> knots;
};

struct SolveResult {
  SolveStatus status = SolveStatus::Numerical;
  VecX x;
  double objective = 0.0;  // c'x at the returned point
  VecX s, z;               // slacks and cone duals in the original row layout
  int iterations = 0;
  int cut_rounds = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double exp_violation = 0.0;  // max over exp rows of exp(arg) - bound, scaled
  // MaxIterations is only reported when the best iterate is still accurate
  // (pres and dres below 1e-4, relative gap below 1e-2), so it is usable.
  bool ok() const {
    return status == SolveStatus::Optimal || status == SolveStatus::MaxIterations;
  }
};

SolveResult solve(const ConicProgram& prog, const SolveOptions& opts = {},
                  ExpCutCarry* carry = nullptr);

}  // namespace corsma::conic
