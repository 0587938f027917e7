#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "optnet/parameter.hpp"
#include "optnet/pdipm.hpp"
#include "optnet/qp.hpp"
#include "optnet/qp_grad.hpp"

namespace optnet {

/// A QP inside a layer did not reach Solved. Carries the example index.
class LayerSolveError : public std::runtime_error {
 public:
  LayerSolveError(std::size_t index, SolveStatus status, const std::string& detail);
  std::size_t index() const { return index_; }
  SolveStatus status() const { return status_; }

 private:
  std::size_t index_;
  SolveStatus status_;
};

class MissingContextError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// What a QP layer keeps between forward and backward.
struct QpLayerContext : LayerContext {
  QPBatch batch;
  std::vector<SolveResult> results;
};

struct QpSolveOptions {
  SolverSettings settings;
  int threads = 1;
};

/// Solves every instance of the batch and fills ctx; the output rows are the
/// z*. Any status other than Solved raises LayerSolveError for the lowest
/// failing index.
Matrix solve_layer_batch(QPBatch batch, const QpSolveOptions& options, QpLayerContext& ctx);

/// Per-example parameter gradients for the seeds ∂ℓ/∂z* (rows of grad_out),
/// computed concurrently from the retained factorizations.
std::vector<ParamGradients> layer_param_grads(const QpLayerContext& ctx, const Matrix& grad_out,
                                              int threads);

/// log(1 + eˣ) without overflow, and its derivative.
double softplus(double x);
double sigmoid(double x);

/// Learnable QP with guaranteed strict convexity and feasibility:
///   Q = LLᵀ + εI (L lower triangular), b = A z0, h = G z0 + softplus(s0_raw),
/// and q taken from the layer input.
class OptNetLayer : public Layer {
 public:
  OptNetLayer(std::size_t n, std::size_t m, std::size_t p, std::uint64_t seed, double eps = 1e-4);

  Parameter L, A, G, z0, s0_raw;
  double eps;
  QpSolveOptions options;

  std::size_t n() const { return L.value.rows(); }
  std::size_t m() const { return A.value.rows(); }
  std::size_t p() const { return G.value.rows(); }

  Matrix realized_Q() const;
  Vector realized_b() const;
  Vector realized_h() const;
  /// Q, A, b, G, h shared; q is each input row.
  QPBatch realize(const Matrix& inputs) const;
  static std::vector<InputDependency> q_source() { return {InputDependency{QpParam::q, {}}}; }

  Matrix forward(const Matrix& x, std::unique_ptr<LayerContext>& ctx) override;
  Matrix backward(const LayerContext& ctx, const Matrix& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&L, &A, &G, &z0, &s0_raw}; }
  void signature(const LayerContext& ctx, std::vector<std::uint8_t>& out) const override;
  std::string name() const override { return "optnet"; }
};

/// The mini-Sudoku layer: Q = 0.1·I, G = −I, h = 0, q = −input, learnable A
/// and b = A z0 with z0 = exp(log_z0) > 0 strictly feasible.
class SudokuOptNetLayer : public Layer {
 public:
  SudokuOptNetLayer(std::size_t n, std::size_t m, std::uint64_t seed, double q_diag = 0.1);

  Parameter A, log_z0;
  double q_diag;
  QpSolveOptions options;

  std::size_t n() const { return A.value.cols(); }
  std::size_t m() const { return A.value.rows(); }

  Vector realized_b() const;
  QPBatch realize(const Matrix& inputs) const;

  Matrix forward(const Matrix& x, std::unique_ptr<LayerContext>& ctx) override;
  Matrix backward(const LayerContext& ctx, const Matrix& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&A, &log_z0}; }
  void signature(const LayerContext& ctx, std::vector<std::uint8_t>& out) const override;
  std::string name() const override { return "sudoku_optnet"; }
};

/// Active-set pattern (λᵢ > sᵢ) of every example, appended in order.
void active_set_signature(const QpLayerContext& ctx, std::vector<std::uint8_t>& out);

const QpLayerContext& as_qp_context(const LayerContext& ctx);

}  // namespace optnet
