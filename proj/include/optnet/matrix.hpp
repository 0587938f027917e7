#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace optnet {

using Vector = std::vector<double>;

class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Dense row-major matrix of doubles. A 0×n or n×0 matrix is legal and
/// is how absent constraint blocks are represented.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }
  std::vector<double>& values() { return data_; }

  Matrix transpose() const;
  bool all_finite() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

// Products keep a fixed i-k-j summation order so results are reproducible
// regardless of where they run.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_transposed_lhs(const Matrix& a, const Matrix& b);  // aᵀ b
Matrix matmul_transposed_rhs(const Matrix& a, const Matrix& b);  // a bᵀ
Vector matvec(const Matrix& a, std::span<const double> x);
Vector matvec_transposed(const Matrix& a, std::span<const double> x);  // aᵀ x
Matrix outer(std::span<const double> a, std::span<const double> b);

double dot(std::span<const double> a, std::span<const double> b);
double norm_inf(std::span<const double> v);
/// Maximum absolute row sum.
double norm_inf(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

Vector add(std::span<const double> a, std::span<const double> b);
Vector sub(std::span<const double> a, std::span<const double> b);
Vector scale(double s, std::span<const double> v);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// Numerical rank by Gaussian elimination with complete pivoting.
std::size_t numerical_rank(const Matrix& a, double rel_tol = 1e-10);

void require_shape(bool ok, const std::string& what);

}  // namespace optnet
