#include "optnet/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace optnet {

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require_shape(data_.size() == rows * cols, "Matrix: data length does not match rows*cols");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require_shape(row.size() == c, "Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::column(std::span<const double> v) {
  return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_shape(rows_ == other.rows_ && cols_ == other.cols_, "Matrix +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_shape(rows_ == other.rows_ && cols_ == other.cols_, "Matrix -=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  require_shape(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* bk = b.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_transposed_lhs(const Matrix& a, const Matrix& b) {
  require_shape(a.rows() == b.rows(), "matmul_transposed_lhs: row counts differ");
  Matrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* bk = b.data() + k * n;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* ci = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

Matrix matmul_transposed_rhs(const Matrix& a, const Matrix& b) {
  require_shape(a.cols() == b.cols(), "matmul_transposed_rhs: column counts differ");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(a.row(i), b.row(j));
  return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  require_shape(a.cols() == x.size(), "matvec: dimension mismatch");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
  require_shape(a.rows() == x.size(), "matvec_transposed: dimension mismatch");
  Vector y(a.cols(), 0.0);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    if (x[k] == 0.0) continue;
    axpy(x[k], a.row(k), y);
  }
  return y;
}

Matrix outer(std::span<const double> a, std::span<const double> b) {
  Matrix c(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) c(i, j) = a[i] * b[j];
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_shape(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm_inf(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double norm_inf(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double x : a.row(i)) s += std::abs(x);
    m = std::max(m, s);
  }
  return m;
}

double max_abs(const Matrix& a) { return norm_inf(std::span<const double>(a.values())); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff: shape mismatch");
  return max_abs_diff(std::span<const double>(a.values()), std::span<const double>(b.values()));
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  require_shape(a.size() == b.size(), "max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Vector add(std::span<const double> a, std::span<const double> b) {
  require_shape(a.size() == b.size(), "add: length mismatch");
  Vector c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
  return c;
}

Vector sub(std::span<const double> a, std::span<const double> b) {
  require_shape(a.size() == b.size(), "sub: length mismatch");
  Vector c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
  return c;
}

Vector scale(double s, std::span<const double> v) {
  Vector c(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) c[i] = s * v[i];
  return c;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_shape(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

std::size_t numerical_rank(const Matrix& a, double rel_tol) {
  Matrix w = a;
  const std::size_t r = w.rows(), c = w.cols();
  const double scale_ref = std::max(max_abs(w), 1e-300);
  std::size_t rank = 0;
  for (std::size_t step = 0; step < std::min(r, c); ++step) {
    std::size_t pi = step, pj = step;
    double best = 0.0;
    for (std::size_t i = step; i < r; ++i)
      for (std::size_t j = step; j < c; ++j)
        if (std::abs(w(i, j)) > best) {
          best = std::abs(w(i, j));
          pi = i;
          pj = j;
        }
    if (best <= rel_tol * scale_ref) break;
    if (pi != step)
      for (std::size_t j = 0; j < c; ++j) std::swap(w(step, j), w(pi, j));
    if (pj != step)
      for (std::size_t i = 0; i < r; ++i) std::swap(w(i, step), w(i, pj));
    for (std::size_t i = step + 1; i < r; ++i) {
      const double f = w(i, step) / w(step, step);
      for (std::size_t j = step; j < c; ++j) w(i, j) -= f * w(step, j);
    }
    ++rank;
  }
  return rank;
}

}  // namespace optnet
