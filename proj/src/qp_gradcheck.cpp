#include "optnet/qp_gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "optnet/lu.hpp"
#include "optnet/parallel.hpp"

namespace optnet {

SolverSettings tight_settings() {
  SolverSettings s;
  s.tol_residual = 1e-12;
  s.tol_gap = 1e-13;
  s.max_iters = 60;
  return s;
}

Vector polished_solution(const QPInstance& qp, const SolverSettings& settings) {
  const SolveResult r = solve(qp, settings);
  if (r.status != SolveStatus::Solved)
    throw NumericalFailureError(std::string("polished_solution: solve ended with status ") +
                                to_string(r.status));
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < qp.p(); ++k)
    if (r.point.lambda[k] > r.point.s[k]) active.push_back(k);

  const std::size_t n = qp.n(), m = qp.m(), a = active.size();
  Matrix K(n + m + a, n + m + a);
  Vector rhs(n + m + a, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) K(i, j) = 0.5 * (qp.Q(i, j) + qp.Q(j, i));
    rhs[i] = -qp.q[i];
  }
  for (std::size_t r2 = 0; r2 < m; ++r2) {
    for (std::size_t j = 0; j < n; ++j) K(n + r2, j) = K(j, n + r2) = qp.A(r2, j);
    rhs[n + r2] = qp.b[r2];
  }
  for (std::size_t t = 0; t < a; ++t) {
    for (std::size_t j = 0; j < n; ++j) K(n + m + t, j) = K(j, n + m + t) = qp.G(active[t], j);
    rhs[n + m + t] = qp.h[active[t]];
  }
  try {
    const Vector x = lu_solve(lu_factor(std::move(K)), rhs);
    return Vector(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
  } catch (const SingularMatrixError&) {
    // Dependent active rows: the interior solution is the best available.
    return r.point.z;
  }
}

namespace {

double central_difference(const QPInstance& qp, std::span<const double> c, double delta,
                          const SolverSettings& settings,
                          const std::function<void(QPInstance&, double)>& perturb) {
  QPInstance plus = qp, minus = qp;
  perturb(plus, delta);
  perturb(minus, -delta);
  return (dot(c, polished_solution(plus, settings)) - dot(c, polished_solution(minus, settings))) /
         (2.0 * delta);
}

}  // namespace

ParamGradients finite_difference_grads(const QPInstance& qp, std::span<const double> c,
                                       double delta, const SolverSettings& settings) {
  const std::size_t n = qp.n(), m = qp.m(), p = qp.p();
  require_shape(c.size() == n, "finite_difference_grads: c must have length n");
  ParamGradients g = ParamGradients::zeros(n, m, p);
  auto fd = [&](const std::function<void(QPInstance&, double)>& f) {
    return central_difference(qp, c, delta, settings, f);
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      g.dQ(i, j) = fd([=](QPInstance& x, double d) {
        x.Q(i, j) += d / 2;
        x.Q(j, i) += d / 2;
      });
  for (std::size_t i = 0; i < n; ++i) g.dq[i] = fd([=](QPInstance& x, double d) { x.q[i] += d; });
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j)
      g.dA(r, j) = fd([=](QPInstance& x, double d) { x.A(r, j) += d; });
    g.db[r] = fd([=](QPInstance& x, double d) { x.b[r] += d; });
  }
  for (std::size_t k = 0; k < p; ++k) {
    for (std::size_t j = 0; j < n; ++j)
      g.dG(k, j) = fd([=](QPInstance& x, double d) { x.G(k, j) += d; });
    g.dh[k] = fd([=](QPInstance& x, double d) { x.h[k] += d; });
  }
  return g;
}

double gradient_error(double analytic, double numeric, double rel_tol, double abs_floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), abs_floor / rel_tol});
  return std::abs(analytic - numeric) / scale;
}

GradComparison compare_grads(const ParamGradients& analytic, const ParamGradients& numeric,
                             double rel_tol, double abs_floor) {
  GradComparison out;
  auto visit = [&](const char* name, std::span<const double> a, std::span<const double> b,
                   std::size_t cols) {
    require_shape(a.size() == b.size(), "compare_grads: gradient shapes differ");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double e = gradient_error(a[i], b[i], rel_tol, abs_floor);
      ++out.entries;
      if (!(e <= rel_tol)) ++out.failures;
      if (!(e <= out.max_error)) {
        out.max_error = e;
        std::ostringstream os;
        os << name << '[';
        if (cols > 0) os << i / cols << ',' << i % cols;
        else os << i;
        os << ']';
        out.worst = os.str();
      }
    }
  };
  visit("dQ", analytic.dQ.values(), numeric.dQ.values(), analytic.dQ.cols());
  visit("dq", analytic.dq, numeric.dq, 0);
  visit("dA", analytic.dA.values(), numeric.dA.values(), analytic.dA.cols());
  visit("db", analytic.db, numeric.db, 0);
  visit("dG", analytic.dG.values(), numeric.dG.values(), analytic.dG.cols());
  visit("dh", analytic.dh, numeric.dh, 0);
  return out;
}

GradcheckSuiteResult run_gradcheck_suite(std::size_t count, std::uint64_t seed, int threads,
                                         double delta) {
  std::vector<GradComparison> per(count);
  const SolverSettings settings = tight_settings();
  parallel_for(count, threads, [&](std::size_t i) {
    const std::size_t n = 2 + i % 9;
    const std::size_t m = std::min<std::size_t>(i % 4, n);
    const std::size_t p = 1 + i % 8;
    const std::uint64_t s = seed + i;
    const GeneratedQP g = random_feasible_qp(n, m, p, s);
    std::mt19937_64 rng(s ^ 0x5eedc0ffeeULL);
    std::normal_distribution<double> normal;
    Vector c(n);
    for (auto& x : c) x = normal(rng);

    const SolveResult res = solve(g.qp, settings);
    if (res.status != SolveStatus::Solved)
      throw NumericalFailureError("gradcheck suite: reference solve failed");
    per[i] = compare_grads(qp_backward(res, c), finite_difference_grads(g.qp, c, delta, settings));
  });

  GradcheckSuiteResult out;
  out.problems = count;
  for (std::size_t i = 0; i < count; ++i) {
    out.entries += per[i].entries;
    out.failures += per[i].failures;
    if (per[i].max_error > out.max_error || out.worst.empty()) {
      out.max_error = std::max(out.max_error, per[i].max_error);
      out.worst = "problem " + std::to_string(i) + " " + per[i].worst;
    }
  }
  return out;
}

}  // namespace optnet
