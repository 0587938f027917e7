#include "optnet/qp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <utility>

namespace optnet {

void QPInstance::check_shapes() const {
  const std::size_t nn = n();
  require_shape(Q.rows() == nn && Q.cols() == nn, "QPInstance: Q must be n×n");
  require_shape(A.rows() == b.size(), "QPInstance: A must have one row per entry of b");
  require_shape(A.rows() == 0 || A.cols() == nn, "QPInstance: A must have n columns");
  require_shape(G.rows() == h.size(), "QPInstance: G must have one row per entry of h");
  require_shape(G.rows() == 0 || G.cols() == nn, "QPInstance: G must have n columns");
}

QPInstance QPInstance::make(Matrix Q, Vector q, Matrix A, Vector b, Matrix G, Vector h) {
  const std::size_t n = q.size();
  QPInstance qp;
  qp.Q = std::move(Q);
  qp.q = std::move(q);
  qp.A = A.rows() == 0 ? Matrix(0, n) : std::move(A);
  qp.b = std::move(b);
  qp.G = G.rows() == 0 ? Matrix(0, n) : std::move(G);
  qp.h = std::move(h);
  qp.check_shapes();
  return qp;
}

void QPBatch::check() const {
  require_shape(!instances.empty(), "QPBatch: empty batch");
  const auto& first = instances.front();
  first.check_shapes();
  for (const auto& qp : instances) {
    qp.check_shapes();
    require_shape(qp.n() == first.n() && qp.m() == first.m() && qp.p() == first.p(),
                  "QPBatch: instances differ in dimension");
    require_shape(!shared.Q || qp.Q == first.Q, "QPBatch: shared Q differs across batch");
    require_shape(!shared.q || qp.q == first.q, "QPBatch: shared q differs across batch");
    require_shape(!shared.A || qp.A == first.A, "QPBatch: shared A differs across batch");
    require_shape(!shared.b || qp.b == first.b, "QPBatch: shared b differs across batch");
    require_shape(!shared.G || qp.G == first.G, "QPBatch: shared G differs across batch");
    require_shape(!shared.h || qp.h == first.h, "QPBatch: shared h differs across batch");
  }
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Attempted Cholesky of a symmetric matrix; false on a nonpositive pivot.
bool cholesky_succeeds(Matrix a) {
  const std::size_t n = a.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 0.0)) return false;
    const double ljj = std::sqrt(d);
    a(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / ljj;
    }
  }
  return true;
}

}  // namespace

ValidationReport validate(const QPInstance& qp) {
  ValidationReport report;
  try {
    qp.check_shapes();
  } catch (const ShapeError& e) {
    report.issues.emplace_back(std::string("shape: ") + e.what());
    return report;
  }
  if (!qp.Q.all_finite() || !all_finite(qp.q) || !qp.A.all_finite() || !all_finite(qp.b) ||
      !qp.G.all_finite() || !all_finite(qp.h)) {
    report.issues.emplace_back("finiteness: problem data contains NaN or infinity");
    return report;
  }

  const std::size_t n = qp.n();
  const double qnorm = norm_inf(qp.Q);
  double asym = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) asym = std::max(asym, std::abs(qp.Q(i, j) - qp.Q(j, i)));
  if (asym > kSymmetryTolerance * std::max(qnorm, 1.0)) {
    std::ostringstream os;
    os << "symmetry: Q is not symmetric (max |Q - Qᵀ| = " << asym << ")";
    report.issues.push_back(os.str());
  }

  Matrix shifted(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) shifted(i, j) = 0.5 * (qp.Q(i, j) + qp.Q(j, i));
  const double shift = kPsdTolerance * qnorm + 1e-300;
  for (std::size_t i = 0; i < n; ++i) shifted(i, i) += shift;
  if (!cholesky_succeeds(std::move(shifted)))
    report.issues.emplace_back("psd: Q has an eigenvalue below -1e-8·‖Q‖");

  if (qp.m() > 0) {
    const std::size_t rank = numerical_rank(qp.A);
    if (rank < qp.m()) {
      std::ostringstream os;
      os << "rank: A has rank " << rank << " but " << qp.m() << " rows";
      report.issues.push_back(os.str());
    }
  }
  return report;
}

Vector symmetric_product(const Matrix& Q, std::span<const double> z) {
  const std::size_t n = z.size();
  require_shape(Q.rows() == n && Q.cols() == n, "symmetric_product: Q must be n×n");
  Vector y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += 0.5 * (Q(i, j) + Q(j, i)) * z[j];
    y[i] = s;
  }
  return y;
}

KKTResidual kkt_residuals(const QPInstance& qp, std::span<const double> z,
                          std::span<const double> s, std::span<const double> lambda,
                          std::span<const double> nu) {
  qp.check_shapes();
  require_shape(z.size() == qp.n(), "kkt_residuals: z has wrong length");
  require_shape(lambda.size() == qp.p(), "kkt_residuals: lambda has wrong length");
  require_shape(nu.size() == qp.m(), "kkt_residuals: nu has wrong length");
  require_shape(s.empty() || s.size() == qp.p(), "kkt_residuals: s has wrong length");

  KKTResidual r;
  r.r_stat = symmetric_product(qp.Q, z);
  for (std::size_t i = 0; i < qp.n(); ++i) r.r_stat[i] += qp.q[i];
  if (qp.m() > 0) axpy(1.0, matvec_transposed(qp.A, nu), r.r_stat);
  if (qp.p() > 0) axpy(1.0, matvec_transposed(qp.G, lambda), r.r_stat);

  r.r_eq = qp.m() > 0 ? sub(matvec(qp.A, z), qp.b) : Vector{};

  const Vector gz_h = qp.p() > 0 ? sub(matvec(qp.G, z), qp.h) : Vector{};
  r.r_comp.resize(qp.p());
  for (std::size_t i = 0; i < qp.p(); ++i) {
    r.r_comp[i] = lambda[i] * gz_h[i];
    r.ineq_violation = std::max(r.ineq_violation, std::max(gz_h[i], 0.0));
  }
  if (!s.empty()) r.r_slack = add(gz_h, s);
  return r;
}

GeneratedQP random_feasible_qp(std::size_t n, std::size_t m, std::size_t p, std::uint64_t seed) {
  require_shape(n >= 1, "random_feasible_qp: n must be at least 1");
  require_shape(m <= n, "random_feasible_qp: m must not exceed n");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix U(n, n);
  for (double& x : U.values()) x = uniform(rng);
  Matrix Q = matmul_transposed_lhs(U, U);
  for (std::size_t i = 0; i < n; ++i) Q(i, i) += 1e-3;
  // UᵀU is symmetric in exact arithmetic; make it so bitwise.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) Q(i, j) = Q(j, i);

  Vector q(n);
  for (double& x : q) x = normal(rng);

  Matrix G(p, n);
  for (double& x : G.values()) x = normal(rng);
  Vector z0(n);
  for (double& x : z0) x = normal(rng);
  Vector s0(p);
  for (double& x : s0) x = 1.0 - uniform(rng);
  Vector h = add(matvec(G, z0), s0);

  Matrix A(m, n);
  for (double& x : A.values()) x = normal(rng);
  Vector b = matvec(A, z0);

  GeneratedQP out;
  out.qp = QPInstance::make(std::move(Q), std::move(q), std::move(A), std::move(b), std::move(G),
                            std::move(h));
  out.z0 = std::move(z0);
  out.s0 = std::move(s0);
  return out;
}

}  // namespace optnet
