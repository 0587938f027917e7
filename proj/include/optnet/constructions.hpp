#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "optnet/matrix.hpp"
#include "optnet/pdipm.hpp"
#include "optnet/qp.hpp"

namespace optnet {

/// Settings used by the encodings below. Inactive coordinates carry an
/// O(√μ) bias near kinks, so the duality-gap target is much tighter than the
/// solver default.
SolverSettings construction_settings();

/// f(x) = Σᵢ wᵢ·max(aᵢx + bᵢ, 0) with wᵢ ∈ {−1, +1}.
struct PiecewiseLinearSpec {
  std::vector<double> w, a, b;
  std::size_t k() const { return w.size(); }
  /// Throws std::invalid_argument unless k ≥ 1, lengths agree and every
  /// weight is ±1.
  void check() const;
  double evaluate(double x) const;
};

/// min ‖z − (Wx + b)‖² s.t. z ≥ 0, whose solution is max(Wx + b, 0).
QPInstance relu_qp_instance(const Matrix& W, std::span<const double> b,
                            std::span<const double> x);
Vector relu_qp(const Matrix& W, std::span<const double> b, std::span<const double> x,
               const SolverSettings& settings = construction_settings());

/// Over (z, t): min ‖t‖² + (z − wᵀt)² s.t. aᵢx + bᵢ ≤ tᵢ. The optimum has
/// t = max(ax + b, 0) and z = wᵀt.
QPInstance sum_of_max_instance(const PiecewiseLinearSpec& spec, double x);
double sum_of_max_qp(const PiecewiseLinearSpec& spec, double x,
                     const SolverSettings& settings = construction_settings());

/// min z² s.t. aᵢᵀx ≤ z, with the aᵢ as rows of `a`. Equals maxᵢ aᵢᵀx only
/// when that maximum is nonnegative; otherwise the optimum is z = 0.
QPInstance max_of_linear_instance(const Matrix& a, std::span<const double> x);
double max_of_linear_qp(const Matrix& a, std::span<const double> x,
                        const SolverSettings& settings = construction_settings());

struct MaxOfLinearDiagnostic {
  double qp_value = 0.0;
  double direct_value = 0.0;  ///< maxᵢ aᵢᵀx
  bool in_domain = false;     ///< direct_value ≥ 0, where the two agree
};
MaxOfLinearDiagnostic max_of_linear_diagnostic(
    const Matrix& a, std::span<const double> x,
    const SolverSettings& settings = construction_settings());

/// min ‖z − x‖² s.t. z ≥ 0, 1ᵀz = 1.
QPInstance simplex_projection_instance(std::span<const double> x);
Vector simplex_projection_qp(std::span<const double> x,
                             const SolverSettings& settings = construction_settings());

}  // namespace optnet
