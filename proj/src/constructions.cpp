#include "optnet/constructions.hpp"

#include <algorithm>
#include <stdexcept>

#include "optnet/qp_grad.hpp"

namespace optnet {

SolverSettings construction_settings() {
  SolverSettings s;
  s.tol_residual = 1e-12;
  s.tol_gap = 1e-14;
  s.max_iters = 60;
  return s;
}

namespace {

SolveResult solve_or_throw(const QPInstance& qp, const SolverSettings& settings,
                           const char* what) {
  SolveResult r = solve(qp, settings);
  if (r.status != SolveStatus::Solved)
    throw NumericalFailureError(std::string(what) + ": solver ended with status " +
                                to_string(r.status));
  return r;
}

Matrix negative_identity(std::size_t n) {
  Matrix g = Matrix::identity(n);
  g *= -1.0;
  return g;
}

}  // namespace

void PiecewiseLinearSpec::check() const {
  if (w.empty()) throw std::invalid_argument("piecewise linear spec: k must be at least 1");
  if (a.size() != w.size() || b.size() != w.size())
    throw std::invalid_argument("piecewise linear spec: w, a and b must have length k");
  for (double wi : w)
    if (wi != 1.0 && wi != -1.0)
      throw std::invalid_argument("piecewise linear spec: weights must be +1 or -1");
}

double PiecewiseLinearSpec::evaluate(double x) const {
  double f = 0.0;
  for (std::size_t i = 0; i < k(); ++i) f += w[i] * std::max(a[i] * x + b[i], 0.0);
  return f;
}

QPInstance relu_qp_instance(const Matrix& W, std::span<const double> b,
                            std::span<const double> x) {
  require_shape(W.cols() == x.size() && W.rows() == b.size(), "relu_qp: shape mismatch");
  const std::size_t n = W.rows();
  const Vector v = add(matvec(W, x), b);
  return QPInstance::make(2.0 * Matrix::identity(n), scale(-2.0, v), {}, {},
                          negative_identity(n), Vector(n, 0.0));
}

Vector relu_qp(const Matrix& W, std::span<const double> b, std::span<const double> x,
               const SolverSettings& settings) {
  return solve_or_throw(relu_qp_instance(W, b, x), settings, "relu_qp").point.z;
}

QPInstance sum_of_max_instance(const PiecewiseLinearSpec& spec, double x) {
  spec.check();
  const std::size_t k = spec.k();
  Matrix Q(k + 1, k + 1);
  Q(0, 0) = 2.0;
  for (std::size_t i = 0; i < k; ++i) {
    Q(0, i + 1) = Q(i + 1, 0) = -2.0 * spec.w[i];
    for (std::size_t j = 0; j < k; ++j)
      Q(i + 1, j + 1) = 2.0 * (spec.w[i] * spec.w[j] + (i == j ? 1.0 : 0.0));
  }
  Matrix G(k, k + 1);
  Vector h(k);
  for (std::size_t i = 0; i < k; ++i) {
    G(i, i + 1) = -1.0;
    h[i] = -(spec.a[i] * x + spec.b[i]);
  }
  return QPInstance::make(std::move(Q), Vector(k + 1, 0.0), {}, {}, std::move(G), std::move(h));
}

double sum_of_max_qp(const PiecewiseLinearSpec& spec, double x, const SolverSettings& settings) {
  return solve_or_throw(sum_of_max_instance(spec, x), settings, "sum_of_max_qp").point.z[0];
}

QPInstance max_of_linear_instance(const Matrix& a, std::span<const double> x) {
  require_shape(a.cols() == x.size() && a.rows() > 0, "max_of_linear_qp: shape mismatch");
  const Vector products = matvec(a, x);
  return QPInstance::make(Matrix(1, 1, 2.0), Vector{0.0}, {}, {}, Matrix(a.rows(), 1, -1.0),
                          scale(-1.0, products));
}

double max_of_linear_qp(const Matrix& a, std::span<const double> x,
                        const SolverSettings& settings) {
  return solve_or_throw(max_of_linear_instance(a, x), settings, "max_of_linear_qp").point.z[0];
}

MaxOfLinearDiagnostic max_of_linear_diagnostic(const Matrix& a, std::span<const double> x,
                                               const SolverSettings& settings) {
  MaxOfLinearDiagnostic d;
  d.qp_value = max_of_linear_qp(a, x, settings);
  const Vector products = matvec(a, x);
  d.direct_value = *std::max_element(products.begin(), products.end());
  d.in_domain = d.direct_value >= 0.0;
  return d;
}

QPInstance simplex_projection_instance(std::span<const double> x) {
  const std::size_t n = x.size();
  require_shape(n >= 1, "simplex_projection_qp: need n >= 1");
  return QPInstance::make(2.0 * Matrix::identity(n), scale(-2.0, x), Matrix(1, n, 1.0),
                          Vector{1.0}, negative_identity(n), Vector(n, 0.0));
}

Vector simplex_projection_qp(std::span<const double> x, const SolverSettings& settings) {
  return solve_or_throw(simplex_projection_instance(x), settings, "simplex_projection_qp").point.z;
}

}  // namespace optnet
