#include "optnet/layer.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace optnet {

LayerSolveError::LayerSolveError(std::size_t index, SolveStatus status, const std::string& detail)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "QP layer: example " << index << " ended with status " << to_string(status);
        if (!detail.empty()) os << " (" << detail << ")";
        return os.str();
      }()),
      index_(index),
      status_(status) {}

Matrix solve_layer_batch(QPBatch batch, const QpSolveOptions& options, QpLayerContext& ctx) {
  batch.check();
  ctx.results = solve_batch(batch.instances, options.settings, options.threads);
  for (std::size_t i = 0; i < ctx.results.size(); ++i)
    if (ctx.results[i].status != SolveStatus::Solved)
      throw LayerSolveError(i, ctx.results[i].status, ctx.results[i].message);
  const std::size_t n = batch.instances.empty() ? 0 : batch.instances.front().n();
  Matrix out(batch.size(), n);
  for (std::size_t i = 0; i < ctx.results.size(); ++i)
    std::copy(ctx.results[i].point.z.begin(), ctx.results[i].point.z.end(), out.row(i).begin());
  ctx.batch = std::move(batch);
  return out;
}

std::vector<ParamGradients> layer_param_grads(const QpLayerContext& ctx, const Matrix& grad_out,
                                              int threads) {
  if (ctx.results.size() != ctx.batch.size() || ctx.results.empty())
    throw MissingContextError("QP layer backward: forward context is empty");
  require_shape(grad_out.rows() == ctx.results.size(),
                "QP layer backward: gradient batch does not match forward batch");
  std::vector<Vector> seeds(grad_out.rows());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    auto r = grad_out.row(i);
    seeds[i].assign(r.begin(), r.end());
  }
  return backward_batch(ctx.results, seeds, threads).per_example;
}

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const QpLayerContext& as_qp_context(const LayerContext& ctx) {
  const auto* c = dynamic_cast<const QpLayerContext*>(&ctx);
  if (!c) throw MissingContextError("QP layer backward: context was not produced by a QP layer");
  return *c;
}

void active_set_signature(const QpLayerContext& ctx, std::vector<std::uint8_t>& out) {
  for (const auto& r : ctx.results)
    for (std::size_t k = 0; k < r.point.lambda.size(); ++k)
      out.push_back(r.point.lambda[k] > r.point.s[k] ? 1 : 0);
}

namespace {

Matrix lower_triangle(const Matrix& a) {
  Matrix l(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j <= i && j < a.cols(); ++j) l(i, j) = a(i, j);
  return l;
}

ParamGradients sum_grads(const std::vector<ParamGradients>& per) {
  ParamGradients total = per.front();
  for (std::size_t i = 1; i < per.size(); ++i) total += per[i];
  return total;
}

Matrix normal_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale) {
  std::normal_distribution<double> normal;
  Matrix out(rows, cols);
  for (auto& v : out.values()) v = scale * normal(rng);
  return out;
}

}  // namespace

OptNetLayer::OptNetLayer(std::size_t n, std::size_t m, std::size_t p, std::uint64_t seed,
                         double eps_)
    : eps(eps_) {
  require_shape(n > 0 && m <= n, "OptNetLayer: need n > 0 and m <= n");
  if (!(eps > 0)) throw std::invalid_argument("OptNetLayer: eps must be positive");
  std::mt19937_64 rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  Matrix l = normal_matrix(rng, n, n, scale);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) l(i, j) = 0.0;
    l(i, i) = 1.0;
  }
  L = Parameter("L", std::move(l));
  A = Parameter("A", normal_matrix(rng, m, n, scale));
  G = Parameter("G", normal_matrix(rng, p, n, scale));
  z0 = Parameter("z0", normal_matrix(rng, n, 1, 0.1));
  s0_raw = Parameter("s0_raw", Matrix(p, 1, 0.5));
}

Matrix OptNetLayer::realized_Q() const {
  const Matrix l = lower_triangle(L.value);
  Matrix Q = matmul_transposed_rhs(l, l);
  for (std::size_t i = 0; i < n(); ++i) Q(i, i) += eps;
  // Make the product exactly symmetric so validate() sees no roundoff.
  for (std::size_t i = 0; i < n(); ++i)
    for (std::size_t j = 0; j < i; ++j) Q(j, i) = Q(i, j);
  return Q;
}

Vector OptNetLayer::realized_b() const { return matvec(A.value, z0.value.values()); }

Vector OptNetLayer::realized_h() const {
  Vector h = matvec(G.value, z0.value.values());
  const auto& raw = s0_raw.value.values();
  for (std::size_t k = 0; k < h.size(); ++k) h[k] += softplus(raw[k]);
  return h;
}

QPBatch OptNetLayer::realize(const Matrix& inputs) const {
  require_shape(inputs.cols() == n(), "OptNetLayer: input width must equal n");
  QPBatch batch;
  batch.shared = {true, false, true, true, true, true};
  const Matrix Q = realized_Q();
  const Vector b = realized_b(), h = realized_h();
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    auto q = inputs.row(i);
    batch.instances.push_back(
        QPInstance::make(Q, Vector(q.begin(), q.end()), A.value, b, G.value, h));
  }
  return batch;
}

Matrix OptNetLayer::forward(const Matrix& x, std::unique_ptr<LayerContext>& ctx) {
  auto c = std::make_unique<QpLayerContext>();
  Matrix out = solve_layer_batch(realize(x), options, *c);
  ctx = std::move(c);
  return out;
}

Matrix OptNetLayer::backward(const LayerContext& ctx_base, const Matrix& grad_out) {
  const QpLayerContext& ctx = as_qp_context(ctx_base);
  const auto per = layer_param_grads(ctx, grad_out, options.threads);
  const ParamGradients total = sum_grads(per);
  const auto& z0v = z0.value.values();

  Matrix sym = total.dQ;
  sym += total.dQ.transpose();
  L.grad += lower_triangle(matmul(sym, lower_triangle(L.value)));

  // Each gradient is completed before it is added, so repeated backward
  // passes accumulate exactly.
  Matrix dA = total.dA;
  dA += outer(total.db, z0v);
  A.grad += dA;
  Matrix dG = total.dG;
  dG += outer(total.dh, z0v);
  G.grad += dG;

  Vector dz0 = matvec_transposed(A.value, total.db);
  axpy(1.0, matvec_transposed(G.value, total.dh), dz0);
  auto& gz0 = z0.grad.values();
  for (std::size_t j = 0; j < n(); ++j) gz0[j] += dz0[j];

  const auto& raw = s0_raw.value.values();
  auto& graw = s0_raw.grad.values();
  for (std::size_t k = 0; k < p(); ++k) graw[k] += total.dh[k] * sigmoid(raw[k]);

  const auto deps = q_source();
  Matrix dx(grad_out.rows(), n());
  for (std::size_t i = 0; i < per.size(); ++i) {
    const Vector g = grad_wrt_input(per[i], deps, n());
    std::copy(g.begin(), g.end(), dx.row(i).begin());
  }
  return dx;
}

void OptNetLayer::signature(const LayerContext& ctx, std::vector<std::uint8_t>& out) const {
  active_set_signature(as_qp_context(ctx), out);
}

SudokuOptNetLayer::SudokuOptNetLayer(std::size_t n, std::size_t m, std::uint64_t seed,
                                     double q_diag_)
    : q_diag(q_diag_) {
  require_shape(n > 0 && m <= n, "SudokuOptNetLayer: need n > 0 and m <= n");
  std::mt19937_64 rng(seed);
  A = Parameter("A", normal_matrix(rng, m, n, 1.0 / std::sqrt(static_cast<double>(n))));
  log_z0 = Parameter("log_z0", Matrix(n, 1, std::log(0.25)));
  options.settings.kkt_method = KktMethod::Reduced;
}

Vector SudokuOptNetLayer::realized_b() const {
  Vector z(n());
  const auto& lz = log_z0.value.values();
  for (std::size_t j = 0; j < n(); ++j) z[j] = std::exp(lz[j]);
  return matvec(A.value, z);
}

QPBatch SudokuOptNetLayer::realize(const Matrix& inputs) const {
  require_shape(inputs.cols() == n(), "SudokuOptNetLayer: input width must equal n");
  QPBatch batch;
  batch.shared = {true, false, true, true, true, true};
  const Matrix Q = q_diag * Matrix::identity(n());
  Matrix G = Matrix::identity(n());
  G *= -1.0;
  const Vector b = realized_b(), h(n(), 0.0);
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    Vector q(n());
    auto x = inputs.row(i);
    for (std::size_t j = 0; j < n(); ++j) q[j] = -x[j];
    batch.instances.push_back(QPInstance::make(Q, std::move(q), A.value, b, G, h));
  }
  return batch;
}

Matrix SudokuOptNetLayer::forward(const Matrix& x, std::unique_ptr<LayerContext>& ctx) {
  auto c = std::make_unique<QpLayerContext>();
  Matrix out = solve_layer_batch(realize(x), options, *c);
  ctx = std::move(c);
  return out;
}

Matrix SudokuOptNetLayer::backward(const LayerContext& ctx_base, const Matrix& grad_out) {
  const QpLayerContext& ctx = as_qp_context(ctx_base);
  const auto per = layer_param_grads(ctx, grad_out, options.threads);
  const ParamGradients total = sum_grads(per);

  Vector z(n());
  const auto& lz = log_z0.value.values();
  for (std::size_t j = 0; j < n(); ++j) z[j] = std::exp(lz[j]);

  Matrix dA = total.dA;
  dA += outer(total.db, z);
  A.grad += dA;
  const Vector dz = matvec_transposed(A.value, total.db);
  auto& g = log_z0.grad.values();
  for (std::size_t j = 0; j < n(); ++j) g[j] += dz[j] * z[j];

  Matrix dx(grad_out.rows(), n());
  for (std::size_t i = 0; i < per.size(); ++i)
    for (std::size_t j = 0; j < n(); ++j) dx(i, j) = -per[i].dq[j];
  return dx;
}

void SudokuOptNetLayer::signature(const LayerContext& ctx, std::vector<std::uint8_t>& out) const {
  active_set_signature(as_qp_context(ctx), out);
}

}  // namespace optnet
