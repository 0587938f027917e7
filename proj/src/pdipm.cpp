#include "optnet/pdipm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "optnet/parallel.hpp"

namespace optnet {

void SolverSettings::check() const {
  if (max_iters < 0) throw std::invalid_argument("max_iters must be nonnegative");
  if (!(tol_residual > 0.0) || !(tol_gap > 0.0))
    throw std::invalid_argument("tolerances must be positive");
  if (!(step_fraction > 0.0 && step_fraction < 1.0))
    throw std::invalid_argument("step_fraction must lie in (0, 1)");
  if (!(regularization_eps >= 0.0)) throw std::invalid_argument("regularization_eps must be >= 0");
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Solved: return "Solved";
    case SolveStatus::MaxIters: return "MaxIters";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
  }
  return "?";
}

namespace {

double sym(const Matrix& Q, std::size_t i, std::size_t j) { return 0.5 * (Q(i, j) + Q(j, i)); }

double duality_gap(std::span<const double> s, std::span<const double> lambda) {
  return s.empty() ? 0.0 : dot(s, lambda) / static_cast<double>(s.size());
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// The (n + m) system left after eliminating ds and dλ:
//   [ Q+εI + Gᵀ D(w′) G   Aᵀ ]
//   [ A                  −εI ]   with w′ = w / (1 + ε w).
Matrix assemble_reduced(const QPInstance& qp, std::span<const double> wprime, double eps) {
  const std::size_t n = qp.n(), m = qp.m(), p = qp.p();
  Matrix H(n + m, n + m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) H(i, j) = sym(qp.Q, i, j);
  for (std::size_t i = 0; i < n; ++i) H(i, i) += eps;
  for (std::size_t k = 0; k < p; ++k) {
    const auto g = qp.G.row(k);
    const double w = wprime[k];
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = w * g[i];
      if (wi == 0.0) continue;
      double* hi = H.data() + i * (n + m);
      for (std::size_t j = i; j < n; ++j) hi[j] += wi * g[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) H(i, j) = H(j, i);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      H(n + r, j) = qp.A(r, j);
      H(j, n + r) = qp.A(r, j);
    }
    H(n + r, n + r) = -eps;
  }
  return H;
}

Vector modified_weights(std::span<const double> w, double eps) {
  Vector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] / (1.0 + eps * w[i]);
  return out;
}

}  // namespace

Matrix assemble_ksym(const QPInstance& qp, std::span<const double> s,
                     std::span<const double> lambda, double eps) {
  const std::size_t n = qp.n(), m = qp.m(), p = qp.p();
  require_shape(s.size() == p && lambda.size() == p, "assemble_ksym: s and lambda must have p entries");
  const std::size_t is = n, il = n + p, in = n + 2 * p;
  Matrix K(n + 2 * p + m, n + 2 * p + m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) K(i, j) = sym(qp.Q, i, j);
    K(i, i) += eps;
  }
  for (std::size_t k = 0; k < p; ++k) {
    K(is + k, is + k) = lambda[k] / s[k];
    K(is + k, il + k) = 1.0;
    K(il + k, is + k) = 1.0;
    K(il + k, il + k) = -eps;
    for (std::size_t j = 0; j < n; ++j) {
      K(il + k, j) = qp.G(k, j);
      K(j, il + k) = qp.G(k, j);
    }
  }
  for (std::size_t r = 0; r < m; ++r) {
    K(in + r, in + r) = -eps;
    for (std::size_t j = 0; j < n; ++j) {
      K(in + r, j) = qp.A(r, j);
      K(j, in + r) = qp.A(r, j);
    }
  }
  return K;
}

Vector ksym_multiply(const QPInstance& qp, std::span<const double> s,
                     std::span<const double> lambda, double eps, const Direction& d) {
  const std::size_t n = qp.n(), m = qp.m(), p = qp.p();
  Vector out(n + 2 * p + m, 0.0);
  Vector top = symmetric_product(qp.Q, d.dz);
  axpy(eps, d.dz, top);
  if (p > 0) axpy(1.0, matvec_transposed(qp.G, d.dlambda), top);
  if (m > 0) axpy(1.0, matvec_transposed(qp.A, d.dnu), top);
  std::copy(top.begin(), top.end(), out.begin());
  const Vector gdz = p > 0 ? matvec(qp.G, d.dz) : Vector{};
  for (std::size_t k = 0; k < p; ++k) {
    out[n + k] = lambda[k] / s[k] * d.ds[k] + d.dlambda[k];
    out[n + p + k] = gdz[k] + d.ds[k] - eps * d.dlambda[k];
  }
  const Vector adz = m > 0 ? matvec(qp.A, d.dz) : Vector{};
  for (std::size_t r = 0; r < m; ++r) out[n + 2 * p + r] = adz[r] - eps * d.dnu[r];
  return out;
}

KKTFactorization factor_kkt(const QPInstance& qp, std::span<const double> s,
                            std::span<const double> lambda, const SolverSettings& settings) {
  KKTFactorization f;
  f.method = settings.kkt_method;
  f.n = qp.n();
  f.m = qp.m();
  f.p = qp.p();
  f.eps = settings.regularization_eps;
  f.diag_scaling.resize(f.p);
  f.weights.resize(f.p);
  for (std::size_t k = 0; k < f.p; ++k) {
    f.diag_scaling[k] = 1.0 / s[k];
    f.weights[k] = lambda[k] / s[k];
  }
  if (f.method == KktMethod::Full || f.p == 0) {
    f.method = KktMethod::Full;
    f.factors = lu_factor(assemble_ksym(qp, s, lambda, f.eps));
  } else {
    f.G = qp.G;
    f.factors = lu_factor(assemble_reduced(qp, modified_weights(f.weights, f.eps), f.eps));
  }
  return f;
}

Direction KKTFactorization::solve(std::span<const double> r_stat, std::span<const double> r_comp,
                                  std::span<const double> r_ineq,
                                  std::span<const double> r_eq) const {
  require_shape(r_stat.size() == n && r_comp.size() == p && r_ineq.size() == p && r_eq.size() == m,
                "KKTFactorization::solve: right-hand side blocks have wrong lengths");
  Direction d;
  if (method == KktMethod::Full) {
    Vector rhs;
    rhs.reserve(dim());
    rhs.insert(rhs.end(), r_stat.begin(), r_stat.end());
    rhs.insert(rhs.end(), r_comp.begin(), r_comp.end());
    rhs.insert(rhs.end(), r_ineq.begin(), r_ineq.end());
    rhs.insert(rhs.end(), r_eq.begin(), r_eq.end());
    const Vector x = lu_solve(factors, rhs);
    const auto it = x.begin();
    d.dz.assign(it, it + static_cast<std::ptrdiff_t>(n));
    d.ds.assign(it + static_cast<std::ptrdiff_t>(n), it + static_cast<std::ptrdiff_t>(n + p));
    d.dlambda.assign(it + static_cast<std::ptrdiff_t>(n + p),
                     it + static_cast<std::ptrdiff_t>(n + 2 * p));
    d.dnu.assign(it + static_cast<std::ptrdiff_t>(n + 2 * p), x.end());
    return d;
  }

  // dλ = w′(G dz − r_ineq) + c·r_comp with c = 1/(1 + εw), and
  // ds = r_ineq − G dz + ε dλ.
  Vector c(p), wprime(p);
  for (std::size_t k = 0; k < p; ++k) {
    c[k] = 1.0 / (1.0 + eps * weights[k]);
    wprime[k] = weights[k] * c[k];
  }
  Vector t(p);
  for (std::size_t k = 0; k < p; ++k) t[k] = c[k] * r_comp[k] - wprime[k] * r_ineq[k];
  Vector rhs(n + m);
  const Vector gt = matvec_transposed(G, t);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = r_stat[i] - gt[i];
  for (std::size_t r = 0; r < m; ++r) rhs[n + r] = r_eq[r];
  const Vector x = lu_solve(factors, rhs);
  d.dz.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
  d.dnu.assign(x.begin() + static_cast<std::ptrdiff_t>(n), x.end());
  const Vector gdz = matvec(G, d.dz);
  d.dlambda.resize(p);
  d.ds.resize(p);
  for (std::size_t k = 0; k < p; ++k) {
    d.dlambda[k] = wprime[k] * (gdz[k] - r_ineq[k]) + c[k] * r_comp[k];
    d.ds[k] = r_ineq[k] - gdz[k] + eps * d.dlambda[k];
  }
  return d;
}

PrimalDualPoint initialize(const QPInstance& qp, const SolverSettings& settings) {
  const std::size_t n = qp.n(), m = qp.m(), p = qp.p();
  const double eps = settings.regularization_eps;
  Matrix K(n + m + p, n + m + p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) K(i, j) = sym(qp.Q, i, j);
    K(i, i) += eps;
  }
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      K(n + r, j) = qp.A(r, j);
      K(j, n + r) = qp.A(r, j);
    }
    K(n + r, n + r) = -eps;
  }
  for (std::size_t k = 0; k < p; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      K(n + m + k, j) = qp.G(k, j);
      K(j, n + m + k) = qp.G(k, j);
    }
    K(n + m + k, n + m + k) = -1.0;
  }
  Vector rhs;
  rhs.reserve(n + m + p);
  for (double v : qp.q) rhs.push_back(-v);
  rhs.insert(rhs.end(), qp.b.begin(), qp.b.end());
  rhs.insert(rhs.end(), qp.h.begin(), qp.h.end());
  const Vector x = lu_solve(lu_factor(std::move(K)), rhs);

  PrimalDualPoint pt;
  pt.z.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
  pt.nu.assign(x.begin() + static_cast<std::ptrdiff_t>(n),
               x.begin() + static_cast<std::ptrdiff_t>(n + m));
  const Vector w(x.begin() + static_cast<std::ptrdiff_t>(n + m), x.end());
  pt.s = p > 0 ? sub(qp.h, matvec(qp.G, pt.z)) : Vector{};
  pt.lambda = scale(-1.0, w);

  auto shift = [](Vector& v) {
    if (v.empty()) return;
    const double lo = *std::min_element(v.begin(), v.end());
    if (lo <= 0.0)
      for (double& x : v) x += 1.0 - lo;
  };
  shift(pt.s);
  shift(pt.lambda);
  pt.mu = duality_gap(pt.s, pt.lambda);
  return pt;
}

Direction affine_direction(const QPInstance& qp, const PrimalDualPoint& pt,
                           const KKTFactorization& fact) {
  const KKTResidual r = kkt_residuals(qp, pt.z, pt.s, pt.lambda, pt.nu);
  // Complementarity row −Sλ scaled by D(1/s) is −λ.
  return fact.solve(scale(-1.0, r.r_stat), scale(-1.0, pt.lambda), scale(-1.0, r.r_slack),
                    scale(-1.0, r.r_eq));
}

Direction corrector_direction(const QPInstance& qp, const PrimalDualPoint& pt,
                              const KKTFactorization& fact, const Direction& affine,
                              double sigma) {
  const std::size_t p = qp.p();
  Vector comp(p);
  for (std::size_t k = 0; k < p; ++k)
    comp[k] = (sigma * pt.mu - affine.ds[k] * affine.dlambda[k]) / pt.s[k];
  return fact.solve(Vector(qp.n(), 0.0), comp, Vector(p, 0.0), Vector(qp.m(), 0.0));
}

double step_size(std::span<const double> s, std::span<const double> lambda,
                 std::span<const double> ds, std::span<const double> dlambda, double fraction) {
  double sup = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.size(); ++i)
    if (ds[i] < 0.0) sup = std::min(sup, -s[i] / ds[i]);
  for (std::size_t i = 0; i < lambda.size(); ++i)
    if (dlambda[i] < 0.0) sup = std::min(sup, -lambda[i] / dlambda[i]);
  return std::min(1.0, fraction * sup);
}

namespace {

bool converged(const KKTResidual& r, double mu, const SolverSettings& st) {
  return r.stat_norm() <= st.tol_residual && r.eq_norm() <= st.tol_residual &&
         r.slack_norm() <= st.tol_residual && mu <= st.tol_gap;
}

SolveResult failure(SolveResult res, std::string why) {
  res.status = SolveStatus::NumericalFailure;
  res.factorization.reset();
  res.message = std::move(why);
  return res;
}

}  // namespace

SolveResult solve_equality_only(const QPInstance& qp, const SolverSettings& settings) {
  settings.check();
  qp.check_shapes();
  require_shape(qp.p() == 0, "solve_equality_only: problem has inequality constraints");
  SolveResult res;
  try {
    KKTFactorization f = factor_kkt(qp, {}, {}, settings);
    Vector neg_q = scale(-1.0, qp.q);
    Direction d = f.solve(neg_q, {}, {}, qp.b);
    res.point.z = std::move(d.dz);
    res.point.nu = std::move(d.dnu);
    res.factorization = std::move(f);
  } catch (const SingularMatrixError& e) {
    return failure(std::move(res), e.what());
  }
  res.point.mu = 0.0;
  res.residuals = kkt_residuals(qp, res.point.z, res.point.s, res.point.lambda, res.point.nu);
  res.iterations = 1;
  if (!all_finite(res.point.z) || !all_finite(res.point.nu))
    return failure(std::move(res), "non-finite solution");
  // The regularized factorization also succeeds on singular systems.
  if (!converged(res.residuals, 0.0, settings))
    return failure(std::move(res), "singular KKT system (unbounded or inconsistent problem)");
  res.status = SolveStatus::Solved;
  return res;
}

SolveResult solve(const QPInstance& qp, const SolverSettings& settings) {
  settings.check();
  qp.check_shapes();
  if (qp.p() == 0) return solve_equality_only(qp, settings);

  SolveResult res;
  PrimalDualPoint& pt = res.point;
  try {
    pt = initialize(qp, settings);
  } catch (const SingularMatrixError& e) {
    return failure(std::move(res), std::string("initialization: ") + e.what());
  }

  const std::size_t p = qp.p();
  try {
    for (int iter = 0;; ++iter) {
      pt.mu = duality_gap(pt.s, pt.lambda);
      res.residuals = kkt_residuals(qp, pt.z, pt.s, pt.lambda, pt.nu);
      res.iterations = iter;
      if (!std::isfinite(pt.mu) || !std::isfinite(res.residuals.stat_norm()))
        return failure(std::move(res), "non-finite iterate");
      if (converged(res.residuals, pt.mu, settings)) {
        res.status = SolveStatus::Solved;
        break;
      }
      if (iter >= settings.max_iters) {
        res.status = SolveStatus::MaxIters;
        break;
      }
      res.mu_history.push_back(pt.mu);

      const KKTFactorization fact = factor_kkt(qp, pt.s, pt.lambda, settings);
      const Direction aff = affine_direction(qp, pt, fact);
      const double alpha_aff = step_size(pt.s, pt.lambda, aff.ds, aff.dlambda, 1.0);
      double mu_aff = 0.0;
      for (std::size_t k = 0; k < p; ++k)
        mu_aff += (pt.s[k] + alpha_aff * aff.ds[k]) * (pt.lambda[k] + alpha_aff * aff.dlambda[k]);
      mu_aff /= static_cast<double>(p);
      const double sigma = std::clamp(std::pow(mu_aff / pt.mu, 3.0), 0.0, 1.0);

      const Direction cc = corrector_direction(qp, pt, fact, aff, sigma);
      Direction step{add(aff.dz, cc.dz), add(aff.ds, cc.ds), add(aff.dlambda, cc.dlambda),
                     add(aff.dnu, cc.dnu)};
      const double alpha = step_size(pt.s, pt.lambda, step.ds, step.dlambda, settings.step_fraction);

      axpy(alpha, step.dz, pt.z);
      axpy(alpha, step.ds, pt.s);
      axpy(alpha, step.dlambda, pt.lambda);
      axpy(alpha, step.dnu, pt.nu);
      const bool interior =
          *std::min_element(pt.s.begin(), pt.s.end()) > 0.0 &&
          *std::min_element(pt.lambda.begin(), pt.lambda.end()) > 0.0;
      if (!interior) return failure(std::move(res), "iterate left the interior");
    }
    res.factorization = factor_kkt(qp, pt.s, pt.lambda, settings);
  } catch (const SingularMatrixError& e) {
    return failure(std::move(res), e.what());
  }
  return res;
}

std::vector<SolveResult> solve_batch(std::span<const QPInstance> qps,
                                     const SolverSettings& settings, int threads) {
  std::vector<SolveResult> out(qps.size());
  parallel_for(qps.size(), threads, [&](std::size_t i) { out[i] = solve(qps[i], settings); });
  return out;
}

std::vector<SolveResult> solve_batch_serial(std::span<const QPInstance> qps,
                                            const SolverSettings& settings) {
  std::vector<SolveResult> out;
  out.reserve(qps.size());
  for (const auto& qp : qps) out.push_back(solve(qp, settings));
  return out;
}

}  // namespace optnet
