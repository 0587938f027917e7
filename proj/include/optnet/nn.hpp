#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "optnet/matrix.hpp"
#include "optnet/parameter.hpp"

namespace optnet {

// Row-batched primitives: x is (batch × in), W is (out × in).
Matrix linear_forward(const Matrix& x, const Matrix& W, std::span<const double> b);
struct LinearGrads {
  Matrix dx, dW;
  Vector db;
};
LinearGrads linear_backward(const Matrix& x, const Matrix& W, const Matrix& grad_out);
Matrix relu_forward(const Matrix& x);
/// Subgradient 0 at x = 0.
Matrix relu_backward(const Matrix& x, const Matrix& grad_out);
/// Mean over all elements of the squared difference.
double mse_loss(const Matrix& pred, const Matrix& target);
Matrix mse_grad(const Matrix& pred, const Matrix& target);

class Linear : public Layer {
 public:
  /// W ~ N(0, 2/in), b = 0.
  Linear(std::size_t in, std::size_t out, std::uint64_t seed);
  Parameter W, b;

  Matrix forward(const Matrix& x, std::unique_ptr<LayerContext>& ctx) override;
  Matrix backward(const LayerContext& ctx, const Matrix& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&W, &b}; }
  std::string name() const override { return "linear"; }
};

class ReLU : public Layer {
 public:
  Matrix forward(const Matrix& x, std::unique_ptr<LayerContext>& ctx) override;
  Matrix backward(const LayerContext& ctx, const Matrix& grad_out) override;
  /// Sign pattern of the input: 1 where x > 0.
  void signature(const LayerContext& ctx, std::vector<std::uint8_t>& out) const override;
  std::string name() const override { return "relu"; }
};

/// Record of one forward computation. Nodes are appended in execution order
/// and backward() walks them in exact reverse, accumulating into parameter
/// grads (never zeroing them).
class Tape {
 public:
  using Var = std::size_t;

  Var input(Matrix x);
  Var apply(Layer& layer, Var x);
  /// Scalar (1×1) node holding mse_loss(value(pred), target).
  Var mse(Var pred, Matrix target);
  /// Scalar sum of two scalar nodes.
  Var add(Var a, Var b);

  const Matrix& value(Var v) const { return nodes_.at(v).value; }
  const Matrix& grad(Var v) const { return nodes_.at(v).grad; }
  double scalar(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node and parameter.
  void backward(Var loss);

  /// Concatenated layer signatures (ReLU patterns, QP active sets).
  std::vector<std::uint8_t> signature() const;

 private:
  enum class Kind { Input, Layer, Mse, Add };
  struct Node {
    Kind kind = Kind::Input;
    Matrix value, grad;
    optnet::Layer* layer = nullptr;
    std::unique_ptr<LayerContext> ctx;
    Var a = 0, b = 0;
    Matrix target;
  };
  std::vector<Node> nodes_;
};

class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <class L, class... Args>
  L& emplace(Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    layers.push_back(std::move(p));
    return ref;
  }

  Tape::Var forward(Tape& tape, Tape::Var x);
  Matrix predict(const Matrix& x);
  std::vector<Parameter*> parameters();
  std::size_t parameter_count();
  void zero_grad();

  std::vector<std::unique_ptr<Layer>> layers;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options = {});

  /// θ ← θ − lr·m̂/(√v̂ + eps) with bias-corrected moments m̂, v̂.
  void step();
  void zero_grad();
  long steps() const { return t_; }
  const AdamOptions& options() const { return options_; }
  AdamOptions& options() { return options_; }

 private:
  std::vector<Parameter*> params_;
  AdamOptions options_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

struct Dataset {
  Matrix inputs, targets;
  std::size_t size() const { return inputs.rows(); }
  Dataset rows(std::span<const std::size_t> idx) const;
};

/// Total error over the rows of a batch (e.g. number of misclassified
/// examples); the harness divides by the example count.
using ErrorMetric = std::function<double(const Matrix& pred, const Matrix& target)>;

/// Rows whose argmax differs from the target's argmax.
double argmax_errors(const Matrix& pred, const Matrix& target);

struct EpochMetrics {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double error = 0.0;
};

struct TrainOptions {
  int epochs = 10;
  std::size_t batch_size = 32;
  AdamOptions adam;
  std::uint64_t seed = 0;
  /// Empty: the error column repeats the loss.
  ErrorMetric error;
  /// Called after each epoch's rows are appended (for progress output).
  std::function<void(const std::vector<EpochMetrics>&)> on_epoch;
};

/// A layer failed during training. Carries the epoch and the dataset row
/// that caused it.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(int epoch, std::size_t example, const std::string& what);
  int epoch() const { return epoch_; }
  std::size_t example() const { return example_; }

 private:
  int epoch_;
  std::size_t example_;
};

/// MSE loss and error of the model on a dataset, evaluated in batches.
EpochMetrics evaluate(Sequential& model, const Dataset& data, const ErrorMetric& error,
                      std::size_t batch_size, int epoch, const std::string& split);

/// Epoch 0 evaluates the untrained model on both splits. Each later epoch
/// shuffles with the seeded generator, takes one Adam step per minibatch and
/// reports the minibatch-averaged train loss and a fresh test evaluation.
std::vector<EpochMetrics> train(Sequential& model, const Dataset& train_set,
                                const Dataset& test_set, const TrainOptions& options);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& rows);

struct GradCheckOptions {
  double delta = 1e-6;
  std::size_t max_coords = 200;
  std::uint64_t seed = 0;
  double rel_tol = 1e-4;
  double abs_floor = 1e-7;
};

struct GradCheckReport {
  double max_error = 0.0;  ///< scaled error as in gradient_error()
  std::size_t checked = 0;
  std::size_t excluded = 0;  ///< coordinates whose perturbation crossed a kink
  std::size_t failures = 0;
  std::string worst;
  bool passed() const { return failures == 0; }
};

/// Central differences of the MSE loss against the tape's gradients. Every
/// parameter coordinate is checked when there are at most max_coords of
/// them, otherwise a seeded random subset of max_coords. A coordinate whose
/// ±δ perturbation changes any layer signature is excluded, not failed.
GradCheckReport grad_check(Sequential& model, const Matrix& x, const Matrix& y,
                           const GradCheckOptions& options = {});

/// Two interleaved half circles with Gaussian noise; targets are one-hot
/// over two classes.
Dataset make_two_moons(std::size_t count, double noise, std::uint64_t seed);

}  // namespace optnet
