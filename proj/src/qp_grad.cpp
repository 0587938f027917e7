#include "optnet/qp_grad.hpp"

#include <cmath>
#include <sstream>

#include "optnet/lu.hpp"
#include "optnet/parallel.hpp"

namespace optnet {

ParamGradients ParamGradients::zeros(std::size_t n, std::size_t m, std::size_t p) {
  return {Matrix(n, n), Vector(n, 0.0), Matrix(m, n), Vector(m, 0.0), Matrix(p, n), Vector(p, 0.0)};
}

ParamGradients& ParamGradients::operator+=(const ParamGradients& o) {
  dQ += o.dQ;
  axpy(1.0, o.dq, dq);
  dA += o.dA;
  axpy(1.0, o.db, db);
  dG += o.dG;
  axpy(1.0, o.dh, dh);
  return *this;
}

Direction solve_backward_system(const KKTFactorization& fact, std::span<const double> dl_dz) {
  require_shape(dl_dz.size() == fact.n, "backward: seed length must equal n");
  return fact.solve(scale(-1.0, dl_dz), Vector(fact.p, 0.0), Vector(fact.p, 0.0),
                    Vector(fact.m, 0.0));
}

DualSensitivities backward_reuse(const SolveResult& result, std::span<const double> dl_dz) {
  if (!result.factorization)
    throw MissingFactorizationError("backward_reuse: solve result carries no factorization");
  if (result.status != SolveStatus::Solved)
    throw std::invalid_argument(std::string("backward_reuse: solve status is ") +
                                to_string(result.status));
  const Direction u = solve_backward_system(*result.factorization, dl_dz);
  const auto& lambda = result.point.lambda;

  DualSensitivities d;
  d.dz = scale(-1.0, u.dz);
  d.dnu = scale(-1.0, u.dnu);
  d.ds = scale(-1.0, u.ds);
  d.dlambda.resize(lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (!(lambda[i] > 1e-300))
      throw NumericalFailureError("backward_reuse: inequality dual underflowed");
    d.dlambda[i] = -u.dlambda[i] / lambda[i];
  }
  return d;
}

Matrix backward_matrix(const QPInstance& qp, std::span<const double> z,
                       std::span<const double> lambda) {
  const std::size_t n = qp.n(), m = qp.m(), p = qp.p();
  require_shape(z.size() == n && lambda.size() == p, "backward_matrix: point has wrong shape");
  const Vector slack = p > 0 ? sub(matvec(qp.G, z), qp.h) : Vector{};
  Matrix M(n + p + m, n + p + m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) M(i, j) = 0.5 * (qp.Q(i, j) + qp.Q(j, i));
  for (std::size_t k = 0; k < p; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      M(j, n + k) = qp.G(k, j) * lambda[k];
      M(n + k, j) = qp.G(k, j);
    }
    M(n + k, n + k) = slack[k];
  }
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) {
      M(j, n + p + r) = qp.A(r, j);
      M(n + p + r, j) = qp.A(r, j);
    }
  return M;
}

DualSensitivities backward_fresh(const QPInstance& qp, std::span<const double> z,
                                 std::span<const double> lambda, std::span<const double> nu,
                                 std::span<const double> dl_dz, double degeneracy_tol) {
  const std::size_t n = qp.n(), m = qp.m(), p = qp.p();
  require_shape(nu.size() == m && dl_dz.size() == n, "backward_fresh: shape mismatch");
  Matrix M = backward_matrix(qp, z, lambda);
  for (std::size_t k = 0; k < p; ++k) {
    const double margin = std::abs(lambda[k]) + std::abs(M(n + k, n + k));
    if (margin < degeneracy_tol) {
      std::ostringstream os;
      os << "backward_fresh: constraint " << k << " is weakly active (lambda + |Gz-h| = " << margin
         << ")";
      throw DegenerateKKTError(os.str(), k);
    }
  }
  LUFactors f;
  try {
    f = lu_factor(std::move(M));
  } catch (const SingularMatrixError& e) {
    throw DegenerateKKTError(std::string("backward_fresh: ") + e.what(), e.pivot_index());
  }
  Vector rhs(n + p + m, 0.0);
  std::copy(dl_dz.begin(), dl_dz.end(), rhs.begin());
  const Vector x = lu_solve(f, rhs);
  DualSensitivities d;
  d.dz.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
  d.dlambda.assign(x.begin() + static_cast<std::ptrdiff_t>(n),
                   x.begin() + static_cast<std::ptrdiff_t>(n + p));
  d.dnu.assign(x.begin() + static_cast<std::ptrdiff_t>(n + p), x.end());
  return d;
}

ParamGradients assemble_param_grads(std::span<const double> z, std::span<const double> lambda,
                                    std::span<const double> nu, const DualSensitivities& d) {
  const std::size_t n = z.size(), m = nu.size(), p = lambda.size();
  require_shape(d.dz.size() == n && d.dlambda.size() == p && d.dnu.size() == m,
                "assemble_param_grads: sensitivities do not match the point");
  ParamGradients g = ParamGradients::zeros(n, m, p);
  for (std::size_t i = 0; i < n; ++i) {
    g.dq[i] = -d.dz[i];
    for (std::size_t j = 0; j < n; ++j) g.dQ(i, j) = -0.5 * (d.dz[i] * z[j] + z[i] * d.dz[j]);
  }
  for (std::size_t r = 0; r < m; ++r) {
    g.db[r] = d.dnu[r];
    for (std::size_t j = 0; j < n; ++j) g.dA(r, j) = -d.dnu[r] * z[j] - nu[r] * d.dz[j];
  }
  for (std::size_t k = 0; k < p; ++k) {
    const double scaled = lambda[k] * d.dlambda[k];
    g.dh[k] = scaled;
    for (std::size_t j = 0; j < n; ++j) g.dG(k, j) = -scaled * z[j] - lambda[k] * d.dz[j];
  }
  return g;
}

ParamGradients qp_backward(const SolveResult& result, std::span<const double> dl_dz) {
  const auto d = backward_reuse(result, dl_dz);
  return assemble_param_grads(result.point.z, result.point.lambda, result.point.nu, d);
}

Vector grad_wrt_input(const ParamGradients& grads, std::span<const InputDependency> deps,
                      std::size_t input_dim) {
  Vector out(input_dim, 0.0);
  for (const auto& dep : deps) {
    const Vector* g = nullptr;
    switch (dep.target) {
      case QpParam::q: g = &grads.dq; break;
      case QpParam::b: g = &grads.db; break;
      case QpParam::h: g = &grads.dh; break;
      default: throw ContractError("grad_wrt_input: only q, b and h may depend on the input");
    }
    if (dep.jacobian.empty()) {
      if (g->size() != input_dim)
        throw ContractError("grad_wrt_input: identity dependency needs matching lengths");
      axpy(1.0, *g, out);
    } else {
      if (dep.jacobian.rows() != g->size() || dep.jacobian.cols() != input_dim)
        throw ContractError("grad_wrt_input: jacobian shape does not match the declaration");
      axpy(1.0, matvec_transposed(dep.jacobian, *g), out);
    }
  }
  return out;
}

BatchGradients backward_batch(std::span<const SolveResult> results,
                              const std::vector<Vector>& dl_dz, int threads) {
  require_shape(results.size() == dl_dz.size() && !results.empty(),
                "backward_batch: need one seed per result");
  BatchGradients out;
  out.per_example.resize(results.size());
  parallel_for(results.size(), threads,
               [&](std::size_t i) { out.per_example[i] = qp_backward(results[i], dl_dz[i]); });
  out.total = out.per_example.front();
  for (std::size_t i = 1; i < out.per_example.size(); ++i) out.total += out.per_example[i];
  return out;
}

}  // namespace optnet
