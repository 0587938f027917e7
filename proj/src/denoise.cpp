#include "optnet/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>

#include "json.hpp"
#include "optnet/checkpoint.hpp"

namespace optnet {

using nlohmann::json;

SignalDataset generate_signals(const SignalConfig& c) {
  require_shape(c.length >= 2 && c.segments >= 1 && c.segments <= c.length,
                "generate_signals: need 1 <= segments <= length");
  if (!(c.noise_sigma >= 0) || !(c.level_max >= 0))
    throw std::invalid_argument("generate_signals: sigma and level range must be nonnegative");
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> level(0.0, c.level_max);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<std::size_t> positions(c.length - 1);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i + 1;

  auto fill = [&](Matrix& clean, Matrix& noisy, std::size_t count) {
    clean = Matrix(count, c.length);
    noisy = Matrix(count, c.length);
    for (std::size_t s = 0; s < count; ++s) {
      std::shuffle(positions.begin(), positions.end(), rng);
      std::vector<std::size_t> cuts(positions.begin(),
                                    positions.begin() + static_cast<std::ptrdiff_t>(c.segments - 1));
      std::sort(cuts.begin(), cuts.end());
      cuts.push_back(c.length);
      std::size_t start = 0;
      for (std::size_t end : cuts) {
        const double v = level(rng);
        for (std::size_t t = start; t < end; ++t) clean(s, t) = v;
        start = end;
      }
      for (std::size_t t = 0; t < c.length; ++t)
        noisy(s, t) = clean(s, t) + c.noise_sigma * noise(rng);
    }
  };
  SignalDataset d;
  d.config = c;
  fill(d.train_clean, d.train_noisy, c.n_train);
  fill(d.test_clean, d.test_noisy, c.n_test);
  return d;
}

void save_signals(const std::filesystem::path& dir, const SignalDataset& d) {
  std::filesystem::create_directories(dir);
  const auto& c = d.config;
  std::vector<double> all;
  for (const Matrix* m : {&d.train_clean, &d.train_noisy, &d.test_clean, &d.test_noisy})
    all.insert(all.end(), m->values().begin(), m->values().end());
  write_raw_doubles(dir / "signals.bin", all);
  json j = {{"format", "optnet-signals"},
            {"version", 1},
            {"dtype", "float64-le"},
            {"data", "signals.bin"},
            {"order", {"train_clean", "train_noisy", "test_clean", "test_noisy"}},
            {"T", c.length},
            {"segments", c.segments},
            {"level_max", c.level_max},
            {"sigma", c.noise_sigma},
            {"n_train", c.n_train},
            {"n_test", c.n_test},
            {"seed", c.seed}};
  std::ofstream out(dir / "signals.json");
  if (!out) throw CheckpointError("cannot write " + (dir / "signals.json").string());
  out << j.dump(2) << '\n';
}

SignalDataset load_signals(const std::filesystem::path& dir) {
  std::ifstream in(dir / "signals.json");
  if (!in) throw CheckpointError("cannot open " + (dir / "signals.json").string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("signals.json: ") + e.what());
  }
  SignalDataset d;
  auto& c = d.config;
  c.length = j.at("T").get<std::size_t>();
  c.segments = j.at("segments").get<std::size_t>();
  c.level_max = j.at("level_max").get<double>();
  c.noise_sigma = j.at("sigma").get<double>();
  c.n_train = j.at("n_train").get<std::size_t>();
  c.n_test = j.at("n_test").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto all = read_raw_doubles(dir / j.at("data").get<std::string>());
  const std::size_t tr = c.n_train * c.length, te = c.n_test * c.length;
  if (all.size() != 2 * tr + 2 * te) throw CheckpointError("signals.bin has the wrong size");
  auto take = [&](std::size_t offset, std::size_t rows) {
    return Matrix(rows, c.length,
                  std::vector<double>(all.begin() + static_cast<std::ptrdiff_t>(offset),
                                      all.begin() + static_cast<std::ptrdiff_t>(offset + rows * c.length)));
  };
  d.train_clean = take(0, c.n_train);
  d.train_noisy = take(tr, c.n_train);
  d.test_clean = take(2 * tr, c.n_test);
  d.test_noisy = take(2 * tr + te, c.n_test);
  return d;
}

Matrix difference_matrix(std::size_t length) {
  require_shape(length >= 2, "difference_matrix: need length >= 2");
  Matrix D(length - 1, length);
  for (std::size_t i = 0; i + 1 < length; ++i) {
    D(i, i) = 1.0;
    D(i, i + 1) = -1.0;
  }
  return D;
}

SolverSettings tv_settings() {
  SolverSettings s;
  s.kkt_method = KktMethod::Reduced;
  s.max_iters = 40;
  return s;
}

QPInstance tv_denoise_instance(std::span<const double> y, const TVConfig& cfg) {
  const std::size_t T = y.size(), r = cfg.D.rows();
  require_shape(cfg.D.cols() == T, "tv_denoise: D must have T columns");
  if (!(cfg.tv_weight >= 0)) throw std::invalid_argument("tv_denoise: tv_weight must be >= 0");
  const std::size_t n = T + r;
  Matrix Q(n, n);
  for (std::size_t i = 0; i < T; ++i) Q(i, i) = 1.0;
  for (std::size_t i = T; i < n; ++i) Q(i, i) = cfg.aux_eps;
  Vector q(n);
  for (std::size_t i = 0; i < T; ++i) q[i] = -y[i];
  for (std::size_t i = T; i < n; ++i) q[i] = cfg.tv_weight;
  Matrix G(2 * r, n);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < T; ++j) {
      G(i, j) = cfg.D(i, j);
      G(r + i, j) = -cfg.D(i, j);
    }
    G(i, T + i) = -1.0;
    G(r + i, T + i) = -1.0;
  }
  return QPInstance::make(std::move(Q), std::move(q), {}, {}, std::move(G), Vector(2 * r, 0.0));
}

Vector tv_denoise_qp(std::span<const double> y, const TVConfig& cfg,
                     const SolverSettings& settings) {
  const SolveResult r = solve(tv_denoise_instance(y, cfg), settings);
  if (r.status != SolveStatus::Solved) throw LayerSolveError(0, r.status, r.message);
  return Vector(r.point.z.begin(), r.point.z.begin() + static_cast<std::ptrdiff_t>(y.size()));
}

Matrix tv_denoise_batch(const Matrix& ys, const TVConfig& cfg, const SolverSettings& settings,
                        int threads) {
  std::vector<QPInstance> qps;
  qps.reserve(ys.rows());
  for (std::size_t i = 0; i < ys.rows(); ++i) qps.push_back(tv_denoise_instance(ys.row(i), cfg));
  const auto results = solve_batch(qps, settings, threads);
  Matrix out(ys.rows(), ys.cols());
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].status != SolveStatus::Solved)
      throw LayerSolveError(i, results[i].status, results[i].message);
    std::copy_n(results[i].point.z.begin(), ys.cols(), out.row(i).begin());
  }
  return out;
}

double mean_squared_error(const Matrix& a, const Matrix& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols() && a.size() > 0,
                "mean_squared_error: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

std::vector<double> default_sweep_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 20; ++i) g.push_back(i);
  for (int i = 25; i <= 100; i += 5) g.push_back(i);
  return g;
}

SweepResult lambda_sweep(const SignalDataset& data, std::span<const double> grid,
                         const SolverSettings& settings, int threads) {
  require_shape(!grid.empty() && data.train_noisy.rows() > 0 && data.test_noisy.rows() > 0,
                "lambda_sweep: need a grid and a nonempty dataset");
  SweepResult out;
  TVConfig cfg{difference_matrix(data.config.length), 0.0};
  for (double w : grid) {
    cfg.tv_weight = w;
    SweepPoint pt{w, 0.0, 0.0};
    pt.train_mse =
        mean_squared_error(tv_denoise_batch(data.train_noisy, cfg, settings, threads), data.train_clean);
    pt.test_mse =
        mean_squared_error(tv_denoise_batch(data.test_noisy, cfg, settings, threads), data.test_clean);
    out.curve.push_back(pt);
  }
  const auto best = std::min_element(out.curve.begin(), out.curve.end(),
                                     [](const SweepPoint& a, const SweepPoint& b) {
                                       return a.test_mse < b.test_mse;
                                     });
  out.best_weight = best->tv_weight;
  out.best_test_mse = best->test_mse;
  return out;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "tv_weight,train_mse,test_mse\n" << std::setprecision(17);
  for (const auto& p : sweep.curve)
    out << p.tv_weight << ',' << p.train_mse << ',' << p.test_mse << '\n';
}

TvLayer::TvLayer(Matrix D_, double tv_weight_, bool learn_weight_)
    : learn_weight(learn_weight_) {
  if (!(tv_weight_ > 0) && learn_weight_)
    throw std::invalid_argument("TvLayer: a learnable weight must start positive");
  if (!(tv_weight_ >= 0)) throw std::invalid_argument("TvLayer: tv_weight must be >= 0");
  D = Parameter("D", std::move(D_));
  log_tv_weight = Parameter("log_tv_weight",
                            Matrix(1, 1, tv_weight_ > 0 ? std::log(tv_weight_) : -INFINITY));
  options.settings = tv_settings();
}

double TvLayer::tv_weight() const { return std::exp(log_tv_weight.value(0, 0)); }

TVConfig TvLayer::config() const { return {D.value, tv_weight(), aux_eps}; }

std::vector<Parameter*> TvLayer::parameters() {
  if (learn_weight) return {&D, &log_tv_weight};
  return {&D};
}

Matrix TvLayer::forward(const Matrix& y, std::unique_ptr<LayerContext>& ctx) {
  require_shape(y.cols() == length(), "TvLayer: input width must equal T");
  const TVConfig cfg = config();
  QPBatch batch;
  batch.shared = {true, false, true, true, true, true};
  for (std::size_t i = 0; i < y.rows(); ++i)
    batch.instances.push_back(tv_denoise_instance(y.row(i), cfg));
  auto c = std::make_unique<QpLayerContext>();
  const Matrix full = solve_layer_batch(std::move(batch), options, *c);
  ctx = std::move(c);
  Matrix out(y.rows(), length());
  for (std::size_t i = 0; i < y.rows(); ++i)
    std::copy_n(full.row(i).begin(), length(), out.row(i).begin());
  return out;
}

Matrix TvLayer::backward(const LayerContext& ctx_base, const Matrix& grad_out) {
  const QpLayerContext& ctx = as_qp_context(ctx_base);
  const std::size_t T = length(), r = D.value.rows();
  require_shape(grad_out.cols() == T, "TvLayer backward: gradient width must equal T");
  Matrix seeds(grad_out.rows(), T + r);
  for (std::size_t i = 0; i < grad_out.rows(); ++i)
    std::copy_n(grad_out.row(i).begin(), T, seeds.row(i).begin());
  const auto per = layer_param_grads(ctx, seeds, options.threads);

  Matrix dx(grad_out.rows(), T);
  for (std::size_t e = 0; e < per.size(); ++e) {
    const ParamGradients& g = per[e];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < T; ++j) D.grad(i, j) += g.dG(i, j) - g.dG(r + i, j);
    if (learn_weight) {
      double s = 0.0;
      for (std::size_t i = T; i < T + r; ++i) s += g.dq[i];
      log_tv_weight.grad(0, 0) += s * tv_weight();
    }
    for (std::size_t j = 0; j < T; ++j) dx(e, j) = -g.dq[j];
  }
  return dx;
}

void TvLayer::signature(const LayerContext& ctx, std::vector<std::uint8_t>& out) const {
  active_set_signature(as_qp_context(ctx), out);
}

Matrix random_difference_init(std::size_t rows, std::size_t length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(length)));
  Matrix D(rows, length);
  for (auto& v : D.values()) v = normal(rng);
  return D;
}

SparsityAudit sparsity_audit(const Matrix& D, double fraction) {
  SparsityAudit a;
  for (std::size_t i = 0; i < D.rows(); ++i) {
    double mx = 0.0;
    for (double v : D.row(i)) mx = std::max(mx, std::abs(v));
    std::size_t count = 0;
    for (double v : D.row(i))
      if (std::abs(v) > fraction * mx) ++count;
    a.per_row.push_back(count);
    a.max_per_row = std::max(a.max_per_row, count);
  }
  return a;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

}  // namespace optnet
