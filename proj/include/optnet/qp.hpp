#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "optnet/matrix.hpp"

namespace optnet {

/// minimize ½ zᵀQz + qᵀz  subject to  Az = b, Gz ≤ h.
///
/// An absent equality block is a 0×n matrix A with empty b; likewise for
/// the inequality block. The objective only sees the symmetric part of Q.
struct QPInstance {
  Matrix Q;
  Vector q;
  Matrix A;
  Vector b;
  Matrix G;
  Vector h;

  std::size_t n() const { return q.size(); }
  std::size_t m() const { return b.size(); }
  std::size_t p() const { return h.size(); }

  /// Throws ShapeError if the blocks do not conform.
  void check_shapes() const;

  /// Builds an instance, filling absent blocks with empty matrices of the
  /// right width.
  static QPInstance make(Matrix Q, Vector q, Matrix A = {}, Vector b = {}, Matrix G = {},
                         Vector h = {});
};

/// Which parameters are shared by every instance of a batch (as opposed to
/// varying per example).
struct SharedMask {
  bool Q = false, q = false, A = false, b = false, G = false, h = false;
};

struct QPBatch {
  std::vector<QPInstance> instances;
  SharedMask shared;

  std::size_t size() const { return instances.size(); }
  /// Throws ShapeError when dimensions differ or a shared parameter is not
  /// identical across the batch.
  void check() const;
};

struct ValidationReport {
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
};

inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kPsdTolerance = 1e-8;

/// Reports every violated data invariant: shapes, finiteness, symmetry and
/// positive semidefiniteness of Q, full row rank of A. Never throws.
ValidationReport validate(const QPInstance& qp);

struct KKTResidual {
  Vector r_stat;   ///< Qz + q + Aᵀν + Gᵀλ
  Vector r_eq;     ///< Az − b
  Vector r_comp;   ///< D(λ)(Gz − h)
  Vector r_slack;  ///< Gz + s − h (empty when no slack was supplied)
  double ineq_violation = 0.0;  ///< ‖max(Gz − h, 0)‖∞

  double stat_norm() const { return norm_inf(r_stat); }
  double eq_norm() const { return norm_inf(r_eq); }
  double comp_norm() const { return norm_inf(r_comp); }
  double slack_norm() const { return norm_inf(r_slack); }
};

/// Diagnostic evaluation of the optimality conditions; no sign
/// requirements on s or λ. Pass an empty s to skip the slack residual.
KKTResidual kkt_residuals(const QPInstance& qp, std::span<const double> z,
                          std::span<const double> s, std::span<const double> lambda,
                          std::span<const double> nu);

/// Symmetric part of Q times z.
Vector symmetric_product(const Matrix& Q, std::span<const double> z);

struct GeneratedQP {
  QPInstance qp;
  Vector z0;  ///< strictly feasible point used to build h (and b)
  Vector s0;  ///< h − G z0 > 0
};

/// Q = UᵀU + 1e-3·I with U uniform on [0,1); G standard normal;
/// h = G z0 + s0 with z0 normal and s0 uniform on (0,1]. For m > 0 the
/// equality block is A standard normal and b = A z0. Requires m ≤ n.
GeneratedQP random_feasible_qp(std::size_t n, std::size_t m, std::size_t p, std::uint64_t seed);

}  // namespace optnet
