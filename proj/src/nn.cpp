#include "optnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "optnet/layer.hpp"
#include "optnet/qp_gradcheck.hpp"

namespace optnet {

Matrix linear_forward(const Matrix& x, const Matrix& W, std::span<const double> b) {
  require_shape(x.cols() == W.cols() && b.size() == W.rows(), "linear: shape mismatch");
  Matrix out = matmul_transposed_rhs(x, W);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[j];
  return out;
}

LinearGrads linear_backward(const Matrix& x, const Matrix& W, const Matrix& grad_out) {
  require_shape(grad_out.rows() == x.rows() && grad_out.cols() == W.rows(),
                "linear backward: gradient shape mismatch");
  LinearGrads g;
  g.dx = matmul(grad_out, W);
  g.dW = matmul_transposed_lhs(grad_out, x);
  g.db.assign(W.rows(), 0.0);
  for (std::size_t i = 0; i < grad_out.rows(); ++i)
    for (std::size_t j = 0; j < grad_out.cols(); ++j) g.db[j] += grad_out(i, j);
  return g;
}

Matrix relu_forward(const Matrix& x) {
  Matrix out = x;
  for (auto& v : out.values()) v = v > 0 ? v : 0.0;
  return out;
}

Matrix relu_backward(const Matrix& x, const Matrix& grad_out) {
  require_shape(x.rows() == grad_out.rows() && x.cols() == grad_out.cols(),
                "relu backward: shape mismatch");
  Matrix g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(x.values()[i] > 0)) g.values()[i] = 0.0;
  return g;
}

double mse_loss(const Matrix& pred, const Matrix& target) {
  require_shape(pred.rows() == target.rows() && pred.cols() == target.cols(),
                "mse: shape mismatch");
  if (pred.size() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.values()[i] - target.values()[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

Matrix mse_grad(const Matrix& pred, const Matrix& target) {
  require_shape(pred.rows() == target.rows() && pred.cols() == target.cols(),
                "mse: shape mismatch");
  Matrix g(pred.rows(), pred.cols());
  const double c = 2.0 / static_cast<double>(std::max<std::size_t>(pred.size(), 1));
  for (std::size_t i = 0; i < g.size(); ++i)
    g.values()[i] = c * (pred.values()[i] - target.values()[i]);
  return g;
}

namespace {

struct SavedInput : LayerContext {
  Matrix x;
};

const Matrix& saved_input(const LayerContext& ctx) {
  const auto* c = dynamic_cast<const SavedInput*>(&ctx);
  if (!c) throw MissingContextError("layer backward: context does not belong to this layer");
  return c->x;
}

}  // namespace

Linear::Linear(std::size_t in, std::size_t out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in)));
  Matrix w(out, in);
  for (auto& v : w.values()) v = normal(rng);
  W = Parameter("W", std::move(w));
  b = Parameter("b", Matrix(out, 1));
}

Matrix Linear::forward(const Matrix& x, std::unique_ptr<LayerContext>& ctx) {
  auto c = std::make_unique<SavedInput>();
  c->x = x;
  ctx = std::move(c);
  return linear_forward(x, W.value, b.value.values());
}

Matrix Linear::backward(const LayerContext& ctx, const Matrix& grad_out) {
  LinearGrads g = linear_backward(saved_input(ctx), W.value, grad_out);
  W.grad += g.dW;
  axpy(1.0, g.db, b.grad.values());
  return std::move(g.dx);
}

Matrix ReLU::forward(const Matrix& x, std::unique_ptr<LayerContext>& ctx) {
  auto c = std::make_unique<SavedInput>();
  c->x = x;
  ctx = std::move(c);
  return relu_forward(x);
}

Matrix ReLU::backward(const LayerContext& ctx, const Matrix& grad_out) {
  return relu_backward(saved_input(ctx), grad_out);
}

void ReLU::signature(const LayerContext& ctx, std::vector<std::uint8_t>& out) const {
  for (double v : saved_input(ctx).values()) out.push_back(v > 0 ? 1 : 0);
}

Tape::Var Tape::input(Matrix x) {
  Node n;
  n.kind = Kind::Input;
  n.value = std::move(x);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Tape::Var Tape::apply(optnet::Layer& layer, Var x) {
  Node n;
  n.kind = Kind::Layer;
  n.layer = &layer;
  n.a = x;
  n.value = layer.forward(nodes_.at(x).value, n.ctx);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Tape::Var Tape::mse(Var pred, Matrix target) {
  Node n;
  n.kind = Kind::Mse;
  n.a = pred;
  n.value = Matrix(1, 1, mse_loss(nodes_.at(pred).value, target));
  n.target = std::move(target);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Tape::Var Tape::add(Var a, Var b) {
  require_shape(nodes_.at(a).value.size() == 1 && nodes_.at(b).value.size() == 1,
                "tape add: operands must be scalars");
  Node n;
  n.kind = Kind::Add;
  n.a = a;
  n.b = b;
  n.value = Matrix(1, 1, nodes_[a].value(0, 0) + nodes_[b].value(0, 0));
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  require_shape(m.size() == 1, "tape: node is not a scalar");
  return m(0, 0);
}

void Tape::backward(Var loss) {
  require_shape(nodes_.at(loss).value.size() == 1, "tape backward: loss must be a scalar");
  for (auto& n : nodes_) n.grad = Matrix(n.value.rows(), n.value.cols());
  nodes_[loss].grad(0, 0) = 1.0;
  for (std::size_t k = loss + 1; k-- > 0;) {
    Node& n = nodes_[k];
    switch (n.kind) {
      case Kind::Input:
        break;
      case Kind::Layer: {
        Matrix dx = n.layer->backward(*n.ctx, n.grad);
        nodes_[n.a].grad += dx;
        break;
      }
      case Kind::Mse: {
        Matrix g = mse_grad(nodes_[n.a].value, n.target);
        g *= n.grad(0, 0);
        nodes_[n.a].grad += g;
        break;
      }
      case Kind::Add:
        nodes_[n.a].grad(0, 0) += n.grad(0, 0);
        nodes_[n.b].grad(0, 0) += n.grad(0, 0);
        break;
    }
  }
}

std::vector<std::uint8_t> Tape::signature() const {
  std::vector<std::uint8_t> out;
  for (const auto& n : nodes_)
    if (n.kind == Kind::Layer) n.layer->signature(*n.ctx, out);
  return out;
}

Tape::Var Sequential::forward(Tape& tape, Tape::Var x) {
  for (auto& l : layers) x = tape.apply(*l, x);
  return x;
}

Matrix Sequential::predict(const Matrix& x) {
  Tape tape;
  return tape.value(forward(tape, tape.input(x)));
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers)
    for (Parameter* p : l->parameters()) out.push_back(p);
  return out;
}

std::size_t Sequential::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->size();
  return n;
}

void Sequential::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& theta = params_[k]->value.values();
    const auto& g = params_[k]->grad.values();
    auto& m = m_[k].values();
    auto& v = v_[k].values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      theta[i] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

Dataset Dataset::rows(std::span<const std::size_t> idx) const {
  Dataset out{Matrix(idx.size(), inputs.cols()), Matrix(idx.size(), targets.cols())};
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(inputs.row(idx[i]).begin(), inputs.row(idx[i]).end(), out.inputs.row(i).begin());
    std::copy(targets.row(idx[i]).begin(), targets.row(idx[i]).end(),
              out.targets.row(i).begin());
  }
  return out;
}

double argmax_errors(const Matrix& pred, const Matrix& target) {
  require_shape(pred.rows() == target.rows() && pred.cols() == target.cols(),
                "argmax_errors: shape mismatch");
  double wrong = 0;
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    auto p = pred.row(i), t = target.row(i);
    if (std::max_element(p.begin(), p.end()) - p.begin() !=
        std::max_element(t.begin(), t.end()) - t.begin())
      wrong += 1;
  }
  return wrong;
}

TrainingError::TrainingError(int epoch, std::size_t example, const std::string& what)
    : std::runtime_error("epoch " + std::to_string(epoch) + ", example " +
                         std::to_string(example) + ": " + what),
      epoch_(epoch),
      example_(example) {}

namespace {

struct BatchOutcome {
  double squared_error = 0.0;  // loss · elements
  double error = 0.0;
};

BatchOutcome batch_outcome(const Matrix& pred, const Matrix& target, const ErrorMetric& error) {
  BatchOutcome o;
  const double loss = mse_loss(pred, target);
  o.squared_error = loss * static_cast<double>(pred.size());
  o.error = error ? error(pred, target) : loss * static_cast<double>(pred.rows());
  return o;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

EpochMetrics evaluate(Sequential& model, const Dataset& data, const ErrorMetric& error,
                      std::size_t batch_size, int epoch, const std::string& split) {
  require_shape(data.size() > 0, "evaluate: dataset is empty");
  const auto idx = iota_indices(data.size());
  double se = 0.0, err = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - start);
    const Dataset b = data.rows(std::span(idx).subspan(start, count));
    Matrix pred;
    try {
      pred = model.predict(b.inputs);
    } catch (const LayerSolveError& e) {
      throw TrainingError(epoch, start + e.index(), e.what());
    }
    const BatchOutcome o = batch_outcome(pred, b.targets, error);
    se += o.squared_error;
    err += o.error;
  }
  const double n = static_cast<double>(data.size());
  return {epoch, split, se / (n * static_cast<double>(data.targets.cols())), err / n};
}

std::vector<EpochMetrics> train(Sequential& model, const Dataset& train_set,
                                const Dataset& test_set, const TrainOptions& options) {
  require_shape(train_set.size() > 0, "train: training set is empty");
  require_shape(options.batch_size > 0, "train: batch size must be positive");
  std::vector<EpochMetrics> history;
  const bool has_test = test_set.size() > 0;
  history.push_back(evaluate(model, train_set, options.error, options.batch_size, 0, "train"));
  if (has_test)
    history.push_back(evaluate(model, test_set, options.error, options.batch_size, 0, "test"));
  if (options.on_epoch) options.on_epoch(history);

  Adam adam(model.parameters(), options.adam);
  std::mt19937_64 rng(options.seed);
  auto order = iota_indices(train_set.size());
  const double n = static_cast<double>(train_set.size());

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double se = 0.0, err = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t count = std::min(options.batch_size, order.size() - start);
      const auto idx = std::span<const std::size_t>(order).subspan(start, count);
      const Dataset b = train_set.rows(idx);
      adam.zero_grad();
      Tape tape;
      try {
        const auto out = model.forward(tape, tape.input(b.inputs));
        const auto loss = tape.mse(out, b.targets);
        tape.backward(loss);
        const BatchOutcome o = batch_outcome(tape.value(out), b.targets, options.error);
        se += o.squared_error;
        err += o.error;
      } catch (const LayerSolveError& e) {
        throw TrainingError(epoch, idx[e.index()], e.what());
      }
      adam.step();
    }
    history.push_back(
        {epoch, "train", se / (n * static_cast<double>(train_set.targets.cols())), err / n});
    if (has_test)
      history.push_back(
          evaluate(model, test_set, options.error, options.batch_size, epoch, "test"));
    if (options.on_epoch) options.on_epoch(history);
  }
  return history;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "epoch,split,loss,error\n" << std::setprecision(17);
  for (const auto& r : rows) out << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.error << '\n';
}

GradCheckReport grad_check(Sequential& model, const Matrix& x, const Matrix& y,
                           const GradCheckOptions& options) {
  const auto params = model.parameters();
  model.zero_grad();
  Tape tape;
  const auto out = model.forward(tape, tape.input(x));
  tape.backward(tape.mse(out, y));
  const auto base_signature = tape.signature();

  struct Coord {
    Parameter* p;
    std::size_t i;
  };
  std::vector<Coord> coords;
  for (Parameter* p : params)
    for (std::size_t i = 0; i < p->size(); ++i) coords.push_back({p, i});
  if (coords.size() > options.max_coords) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coords);
  }

  auto probe = [&](std::vector<std::uint8_t>& sig) {
    Tape t;
    const auto o = model.forward(t, t.input(x));
    sig = t.signature();
    return mse_loss(t.value(o), y);
  };

  GradCheckReport report;
  for (const Coord& c : coords) {
    double& theta = c.p->value.values()[c.i];
    const double saved = theta;
    std::vector<std::uint8_t> sig_plus, sig_minus;
    theta = saved + options.delta;
    const double lp = probe(sig_plus);
    theta = saved - options.delta;
    const double lm = probe(sig_minus);
    theta = saved;
    if (sig_plus != base_signature || sig_minus != base_signature) {
      ++report.excluded;
      continue;
    }
    const double numeric = (lp - lm) / (2.0 * options.delta);
    const double analytic = c.p->grad.values()[c.i];
    const double e = gradient_error(analytic, numeric, options.rel_tol, options.abs_floor);
    ++report.checked;
    if (!(e <= options.rel_tol)) ++report.failures;
    if (!(e <= report.max_error)) {
      report.max_error = e;
      report.worst = c.p->name + "[" + std::to_string(c.i) + "]";
    }
  }
  return report;
}

Dataset make_two_moons(std::size_t count, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, noise);
  Dataset d{Matrix(count, 2), Matrix(count, 2)};
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % 2;
    const double t = angle(rng);
    double px = std::cos(t), py = std::sin(t);
    if (label == 1) {
      px = 1.0 - px;
      py = 0.5 - py;
    }
    d.inputs(i, 0) = px + jitter(rng);
    d.inputs(i, 1) = py + jitter(rng);
    d.targets(i, label) = 1.0;
  }
  return d;
}

}  // namespace optnet
