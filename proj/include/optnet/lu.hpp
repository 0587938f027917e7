#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "optnet/matrix.hpp"

namespace optnet {

class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(std::size_t pivot_index, double pivot_value);
  std::size_t pivot_index() const { return pivot_index_; }
  double pivot_value() const { return pivot_value_; }

 private:
  std::size_t pivot_index_;
  double pivot_value_;
};

/// Packed LU factors of a square matrix with row permutation: P·A = L·U,
/// where L is unit lower triangular and stored below the diagonal of `lu`.
/// `perm[i]` is the row of A that ended up in row i of P·A.
struct LUFactors {
  Matrix lu;
  std::vector<std::size_t> perm;
  int sign = 1;

  std::size_t dim() const { return lu.rows(); }
  Matrix lower() const;
  Matrix upper() const;
  /// Rows of `a` reordered as P·a.
  Matrix permute_rows(const Matrix& a) const;
};

/// A pivot at or below this fraction of the largest entry its row had
/// before elimination is treated as zero.
inline constexpr double kSingularPivotTolerance = 1e-14;

LUFactors lu_factor(Matrix a);
Matrix lu_solve(const LUFactors& f, const Matrix& rhs);
Vector lu_solve(const LUFactors& f, std::span<const double> rhs);
/// Solves Aᵀ x = rhs with the factors of A.
Vector lu_solve_transposed(const LUFactors& f, std::span<const double> rhs);

/// Number of lu_factor calls made so far by the calling thread.
std::uint64_t lu_factor_count();

}  // namespace optnet
