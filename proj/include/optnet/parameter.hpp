#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "optnet/matrix.hpp"

namespace optnet {

/// A learnable tensor and its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
  std::size_t size() const { return value.size(); }
};

/// Whatever a layer saves in forward for use in backward.
struct LayerContext {
  virtual ~LayerContext() = default;
};

/// A differentiable map from a (batch × in) matrix to a (batch × out)
/// matrix. backward() accumulates into the parameters' grads and returns
/// the gradient with respect to the input.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Matrix forward(const Matrix& x, std::unique_ptr<LayerContext>& ctx) = 0;
  virtual Matrix backward(const LayerContext& ctx, const Matrix& grad_out) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  /// Discrete state that, when it changes, marks a point of
  /// nondifferentiability (ReLU sign pattern, QP active set).
  virtual void signature(const LayerContext&, std::vector<std::uint8_t>&) const {}
  virtual std::string name() const = 0;
};

}  // namespace optnet
