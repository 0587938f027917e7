#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "optnet/lu.hpp"
#include "optnet/matrix.hpp"
#include "optnet/qp.hpp"

namespace optnet {

/// How the symmetrized KKT system is factored. `Full` factors the whole
/// (n + 2p + m) matrix. `Reduced` eliminates the slack and inequality dual
/// blocks exactly and factors the (n + m) remainder; both represent the same
/// linear operator.
enum class KktMethod { Full, Reduced };

struct SolverSettings {
  int max_iters = 25;
  double tol_residual = 1e-8;
  double tol_gap = 1e-8;
  double step_fraction = 0.99;
  double regularization_eps = 1e-11;
  KktMethod kkt_method = KktMethod::Full;

  /// Throws std::invalid_argument on out-of-range values.
  void check() const;
};

struct PrimalDualPoint {
  Vector z, s, lambda, nu;
  double mu = 0.0;  ///< sᵀλ / p, zero when p = 0
};

struct Direction {
  Vector dz, ds, dlambda, dnu;
};

/// Factored symmetrized Newton matrix
///
///   [ Q+εI   0        Gᵀ   Aᵀ  ]
///   [ 0      D(λ/s)   I    0   ]
///   [ G      I       −εI   0   ]
///   [ A      0        0   −εI  ]
///
/// i.e. the complementarity row block of the Newton system scaled by D(1/s).
struct KKTFactorization {
  KktMethod method = KktMethod::Full;
  std::size_t n = 0, m = 0, p = 0;
  double eps = 0.0;
  LUFactors factors;
  Vector diag_scaling;  ///< 1/s, the row scaling applied to the complementarity block
  Vector weights;       ///< λ/s
  Matrix G;             ///< kept for the reduced method's back-substitution

  std::size_t dim() const { return n + 2 * p + m; }

  /// Solves K_sym·(dz, ds, dλ, dν) = (r_stat, r_comp, r_ineq, r_eq) with the
  /// stored factors; never refactors.
  Direction solve(std::span<const double> r_stat, std::span<const double> r_comp,
                  std::span<const double> r_ineq, std::span<const double> r_eq) const;
};

/// Explicit K_sym for (s, λ); used by the full method and by tests.
Matrix assemble_ksym(const QPInstance& qp, std::span<const double> s,
                     std::span<const double> lambda, double eps);

/// Computes K_sym·(dz, ds, dλ, dν).
Vector ksym_multiply(const QPInstance& qp, std::span<const double> s,
                     std::span<const double> lambda, double eps, const Direction& d);

KKTFactorization factor_kkt(const QPInstance& qp, std::span<const double> s,
                            std::span<const double> lambda, const SolverSettings& settings);

enum class SolveStatus { Solved, MaxIters, NumericalFailure };

const char* to_string(SolveStatus status);

struct SolveResult {
  PrimalDualPoint point;
  SolveStatus status = SolveStatus::NumericalFailure;
  int iterations = 0;
  KKTResidual residuals;
  /// Factorization at the returned iterate; absent only on NumericalFailure.
  std::optional<KKTFactorization> factorization;
  std::vector<double> mu_history;  ///< μ at the start of each iteration
  std::string message;
};

/// Starting point from the regularized auxiliary system
///   [Q+εI Aᵀ Gᵀ; A −εI 0; G 0 −I]·(z, ν, w) = (−q, b, h),
/// with s = h − Gz and λ = −w, each shifted to a minimum of 1 when it has a
/// nonpositive entry. Throws SingularMatrixError.
PrimalDualPoint initialize(const QPInstance& qp, const SolverSettings& settings = {});

/// Newton direction for the current residuals with no centering.
Direction affine_direction(const QPInstance& qp, const PrimalDualPoint& pt,
                           const KKTFactorization& fact);

/// Centering-plus-corrector direction: right-hand side σμ1 − Δs_aff∘Δλ_aff
/// in the complementarity block and zero elsewhere.
Direction corrector_direction(const QPInstance& qp, const PrimalDualPoint& pt,
                              const KKTFactorization& fact, const Direction& affine,
                              double sigma);

/// min(1, fraction · largest a ≥ 0 keeping s + aΔs ≥ 0 and λ + aΔλ ≥ 0).
double step_size(std::span<const double> s, std::span<const double> lambda,
                 std::span<const double> ds, std::span<const double> dlambda,
                 double fraction);

/// Mehrotra predictor-corrector over one QP. A problem with p = 0 is
/// forwarded to solve_equality_only.
SolveResult solve(const QPInstance& qp, const SolverSettings& settings = {});

/// One regularized linear solve of [Q Aᵀ; A 0](z, ν) = (−q, b).
SolveResult solve_equality_only(const QPInstance& qp, const SolverSettings& settings = {});

/// Solves every instance, `threads` at a time. Each instance is solved by
/// exactly the same code as solve(), so the results match
/// solve_batch_serial bitwise.
std::vector<SolveResult> solve_batch(std::span<const QPInstance> qps,
                                     const SolverSettings& settings, int threads);
std::vector<SolveResult> solve_batch_serial(std::span<const QPInstance> qps,
                                            const SolverSettings& settings);

}  // namespace optnet
