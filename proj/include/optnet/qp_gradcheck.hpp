#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "optnet/pdipm.hpp"
#include "optnet/qp.hpp"
#include "optnet/qp_grad.hpp"

namespace optnet {

/// Settings for reference solves: far tighter than the defaults so that the
/// central path bias stays well below finite-difference resolution.
SolverSettings tight_settings();

/// Solves and then refines z by an exact KKT solve with the detected active
/// set (constraints with λᵢ > sᵢ) treated as equalities. Throws
/// NumericalFailureError if the solve does not reach Solved.
Vector polished_solution(const QPInstance& qp, const SolverSettings& settings = tight_settings());

/// Central differences of ℓ(θ) = cᵀz*(θ) over every parameter entry. Entries
/// of dQ are derivatives along the symmetric direction ½(E_ij + E_ji), which
/// is what assemble_param_grads reports since the objective only sees the
/// symmetric part of Q.
ParamGradients finite_difference_grads(const QPInstance& qp, std::span<const double> c,
                                       double delta = 1e-6,
                                       const SolverSettings& settings = tight_settings());

struct GradComparison {
  double max_error = 0.0;    ///< largest scaled error (see gradient_error)
  std::size_t entries = 0;
  std::size_t failures = 0;
  std::string worst;         ///< "dG[2,1]" style label of the worst entry
};

/// |a − n| / max(|a|, |n|, abs_floor/rel_tol). An entry passes when this is
/// ≤ rel_tol, i.e. when it is within rel_tol relatively or abs_floor
/// absolutely.
double gradient_error(double analytic, double numeric, double rel_tol = 1e-4,
                      double abs_floor = 1e-7);

GradComparison compare_grads(const ParamGradients& analytic, const ParamGradients& numeric,
                             double rel_tol = 1e-4, double abs_floor = 1e-7);

struct GradcheckSuiteResult {
  std::size_t problems = 0;
  std::size_t entries = 0;
  std::size_t failures = 0;
  double max_error = 0.0;
  std::string worst;  ///< "problem 7 dq[3]"
  bool passed() const { return problems > 0 && failures == 0; }
};

/// The seeded suite: `count` random feasible QPs with n ≤ 10, m ≤ 3, p ≤ 8,
/// loss cᵀz* with c standard normal. Problems run `threads` at a time.
GradcheckSuiteResult run_gradcheck_suite(std::size_t count, std::uint64_t seed, int threads = 1,
                                         double delta = 1e-6);

}  // namespace optnet
