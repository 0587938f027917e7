#include "optnet/lu.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>

namespace optnet {

namespace {

thread_local std::uint64_t factor_calls = 0;

std::string singular_message(std::size_t idx, double value) {
  std::ostringstream os;
  os << "singular matrix: pivot " << idx << " has magnitude " << std::abs(value);
  return os.str();
}

}  // namespace

SingularMatrixError::SingularMatrixError(std::size_t pivot_index, double pivot_value)
    : std::runtime_error(singular_message(pivot_index, pivot_value)),
      pivot_index_(pivot_index),
      pivot_value_(pivot_value) {}

std::uint64_t lu_factor_count() { return factor_calls; }

Matrix LUFactors::lower() const {
  const std::size_t n = dim();
  Matrix l = Matrix::identity(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) l(i, j) = lu(i, j);
  return l;
}

Matrix LUFactors::upper() const {
  const std::size_t n = dim();
  Matrix u(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) u(i, j) = lu(i, j);
  return u;
}

Matrix LUFactors::permute_rows(const Matrix& a) const {
  require_shape(a.rows() == dim(), "permute_rows: row count mismatch");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto src = a.row(perm[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

LUFactors lu_factor(Matrix a) {
  require_shape(a.rows() == a.cols(), "lu_factor: matrix must be square");
  ++factor_calls;
  const std::size_t n = a.rows();
  // Each row carries the magnitude it had on entry; a pivot is zero when it
  // is negligible against the row it came from.
  std::vector<double> row_scale(n);
  for (std::size_t i = 0; i < n; ++i) row_scale[i] = norm_inf(a.row(i));

  LUFactors f;
  f.perm.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.perm[i] = i;

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(a(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::abs(a(i, k));
      if (v > best) {
        best = v;
        piv = i;
      }
    }
    if (best == 0.0 || best <= kSingularPivotTolerance * row_scale[piv])
      throw SingularMatrixError(k, a(piv, k));
    if (piv != k) {
      std::swap_ranges(a.row(k).begin(), a.row(k).end(), a.row(piv).begin());
      std::swap(f.perm[k], f.perm[piv]);
      std::swap(row_scale[k], row_scale[piv]);
      f.sign = -f.sign;
    }
    const double inv = 1.0 / a(k, k);
    const double* rk = a.data() + k * n;
    for (std::size_t i = k + 1; i < n; ++i) {
      double* ri = a.data() + i * n;
      const double l = ri[k] * inv;
      ri[k] = l;
      if (l == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) ri[j] -= l * rk[j];
    }
  }
  f.lu = std::move(a);
  return f;
}

Vector lu_solve(const LUFactors& f, std::span<const double> rhs) {
  const std::size_t n = f.dim();
  require_shape(rhs.size() == n, "lu_solve: rhs length does not match system dimension");
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = rhs[f.perm[i]];
  for (std::size_t i = 0; i < n; ++i) {
    const double* ri = f.lu.data() + i * n;
    double s = x[i];
    for (std::size_t j = 0; j < i; ++j) s -= ri[j] * x[j];
    x[i] = s;
  }
  for (std::size_t i = n; i-- > 0;) {
    const double* ri = f.lu.data() + i * n;
    double s = x[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= ri[j] * x[j];
    x[i] = s / ri[i];
  }
  return x;
}

Matrix lu_solve(const LUFactors& f, const Matrix& rhs) {
  require_shape(rhs.rows() == f.dim(), "lu_solve: rhs rows do not match system dimension");
  Matrix out(rhs.rows(), rhs.cols());
  Vector col(rhs.rows());
  for (std::size_t j = 0; j < rhs.cols(); ++j) {
    for (std::size_t i = 0; i < rhs.rows(); ++i) col[i] = rhs(i, j);
    const Vector x = lu_solve(f, col);
    for (std::size_t i = 0; i < rhs.rows(); ++i) out(i, j) = x[i];
  }
  return out;
}

Vector lu_solve_transposed(const LUFactors& f, std::span<const double> rhs) {
  // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ y = rhs, Lᵀ w = y, then x = Pᵀ w.
  const std::size_t n = f.dim();
  require_shape(rhs.size() == n, "lu_solve_transposed: rhs length mismatch");
  Vector y(rhs.begin(), rhs.end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = y[i];
    for (std::size_t j = 0; j < i; ++j) s -= f.lu(j, i) * y[j];
    y[i] = s / f.lu(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = y[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= f.lu(j, i) * y[j];
    y[i] = s;
  }
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) x[f.perm[i]] = y[i];
  return x;
}

}  // namespace optnet
