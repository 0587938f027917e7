#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "optnet/matrix.hpp"
#include "optnet/pdipm.hpp"
#include "optnet/qp.hpp"

namespace optnet {

class MissingFactorizationError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericalFailureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The differential KKT matrix at the given point is (numerically) singular:
/// a constraint has both λᵢ ≈ 0 and (Gz − h)ᵢ ≈ 0, or elimination hit a
/// zero pivot.
class DegenerateKKTError : public std::runtime_error {
 public:
  DegenerateKKTError(const std::string& what, std::size_t index)
      : std::runtime_error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Solution of the transposed differential system
///
///   [Q  GᵀD(λ)  Aᵀ; G  D(Gz−h)  0; A  0  0] (d_z, d_λ, d_ν) = (∂ℓ/∂z, 0, 0).
///
/// `ds` is only filled by backward_reuse, where it is the slack block of the
/// symmetrized solve; no parameter gradient depends on it.
struct DualSensitivities {
  Vector dz, dlambda, dnu, ds;
};

struct ParamGradients {
  Matrix dQ;
  Vector dq;
  Matrix dA;
  Vector db;
  Matrix dG;
  Vector dh;

  static ParamGradients zeros(std::size_t n, std::size_t m, std::size_t p);
  ParamGradients& operator+=(const ParamGradients& other);
};

/// Raw solve K_sym·(u_z, u_s, u_λ, u_ν) = (−∂ℓ/∂z, 0, 0, 0) against the
/// stored factors. u = −(d_z, d_s, D(λ)d_λ, d_ν).
Direction solve_backward_system(const KKTFactorization& fact, std::span<const double> dl_dz);

/// Sensitivities from the solver's final factorization; performs no new
/// factorization.
DualSensitivities backward_reuse(const SolveResult& result, std::span<const double> dl_dz);

/// The matrix of the transposed differential system at (z, λ).
Matrix backward_matrix(const QPInstance& qp, std::span<const double> z,
                       std::span<const double> lambda);

/// Independent route: factors backward_matrix afresh. Throws
/// DegenerateKKTError when λᵢ + |Gz − h|ᵢ < degeneracy_tol for some i or
/// the factorization finds a zero pivot.
DualSensitivities backward_fresh(const QPInstance& qp, std::span<const double> z,
                                 std::span<const double> lambda, std::span<const double> nu,
                                 std::span<const double> dl_dz, double degeneracy_tol = 1e-6);

/// ∂ℓ/∂q = −d_z, ∂ℓ/∂b = d_ν, ∂ℓ/∂h = D(λ)d_λ, ∂ℓ/∂Q = −½(d_z zᵀ + z d_zᵀ),
/// ∂ℓ/∂A = −d_ν zᵀ − ν d_zᵀ, ∂ℓ/∂G = −D(λ)d_λ zᵀ − λ d_zᵀ.
ParamGradients assemble_param_grads(std::span<const double> z, std::span<const double> lambda,
                                    std::span<const double> nu, const DualSensitivities& d);

/// backward_reuse followed by assemble_param_grads.
ParamGradients qp_backward(const SolveResult& result, std::span<const double> dl_dz);

enum class QpParam { Q, q, A, b, G, h };

/// Declares that a vector parameter is an affine function of the layer
/// input: param = J·x + const. An empty jacobian means the identity.
struct InputDependency {
  QpParam target = QpParam::q;
  Matrix jacobian;
};

/// ∂ℓ/∂x = Σ Jᵀ ∂ℓ/∂param over the declared dependencies. Matrix-valued
/// parameters cannot be declared; that and any shape mismatch raise
/// ContractError.
Vector grad_wrt_input(const ParamGradients& grads, std::span<const InputDependency> deps,
                      std::size_t input_dim);

struct BatchGradients {
  std::vector<ParamGradients> per_example;
  /// Sum over the batch, accumulated in example order.
  ParamGradients total;
};

/// Per-example backward passes run concurrently; the reduction of shared
/// parameters happens afterwards in fixed order.
BatchGradients backward_batch(std::span<const SolveResult> results,
                              const std::vector<Vector>& dl_dz, int threads);

}  // namespace optnet
