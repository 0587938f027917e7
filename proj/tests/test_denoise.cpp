#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "oracles.hpp"
#include "optnet/denoise.hpp"
#include "optnet/qp_gradcheck.hpp"

using namespace optnet;

namespace {

SignalConfig small_config(double noise, std::uint64_t seed) {
  SignalConfig c;
  c.length = 20;
  c.segments = 3;
  c.noise_sigma = noise;
  c.n_train = 24;
  c.n_test = 8;
  c.seed = seed;
  return c;
}

double layer_loss(TvLayer& layer, const Matrix& y, const Matrix& c) {
  std::unique_ptr<LayerContext> ctx;
  const Matrix z = layer.forward(y, ctx);
  double l = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) l += c.values()[i] * z.values()[i];
  return l;
}

}  // namespace

TEST(DifferenceMatrix, RowsArePlusMinusOnePairs) {
  const Matrix D = difference_matrix(6);
  ASSERT_EQ(D.rows(), 5u);
  ASSERT_EQ(D.cols(), 6u);
  for (std::size_t i = 0; i < 5; ++i) {
    std::size_t nonzeros = 0;
    for (std::size_t j = 0; j < 6; ++j) nonzeros += D(i, j) != 0.0;
    EXPECT_EQ(nonzeros, 2u);
    EXPECT_EQ(D(i, i), 1.0);
    EXPECT_EQ(D(i, i + 1), -1.0);
  }
  const SparsityAudit audit = sparsity_audit(D);
  EXPECT_EQ(audit.max_per_row, 2u);
  for (std::size_t k : audit.per_row) EXPECT_EQ(k, 2u);
}

TEST(TvDenoise, InstanceLayout) {
  const Vector y{1, 2, 3};
  const QPInstance qp = tv_denoise_instance(y, {difference_matrix(3), 0.5});
  EXPECT_EQ(qp.n(), 5u);
  EXPECT_EQ(qp.p(), 4u);
  EXPECT_EQ(qp.q, (Vector{-1, -2, -3, 0.5, 0.5}));
  EXPECT_EQ(qp.Q(3, 3), kTvAuxEps);
  EXPECT_EQ(qp.G(0, 3), -1.0);
  EXPECT_EQ(qp.G(2, 0), -1.0);
  EXPECT_EQ(qp.G(2, 1), 1.0);
}

TEST(TvDenoise, ZeroWeightReturnsInput) {
  const Vector y = oracle::random_vector(12, 3);
  const Vector z = tv_denoise_qp(y, {difference_matrix(12), 0.0});
  EXPECT_LE(max_abs_diff(Vector(z.begin(), z.begin() + 12), y), 1e-6);
}

TEST(TvDenoise, ConstantSignalIsUnchanged) {
  const Vector y(10, 4.0);
  for (double w : {0.5, 5.0, 50.0}) {
    const Vector z = tv_denoise_qp(y, {difference_matrix(10), w});
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(z[i], 4.0, 1e-6);
  }
}

TEST(TvDenoise, LargeWeightGivesTheMean) {
  const Vector y = oracle::random_vector(15, 5);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 15.0;
  const Vector z = tv_denoise_qp(y, {difference_matrix(15), 1e3});
  for (std::size_t i = 0; i < 15; ++i) EXPECT_NEAR(z[i], mean, 1e-4);
}

TEST(TvDenoise, SolutionsSatisfyKkt) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Vector y = oracle::random_vector(20, 100 + seed);
    for (double& v : y) v *= 3.0;
    const QPInstance qp = tv_denoise_instance(y, {difference_matrix(20), 1.0 + seed});
    const SolveResult r = solve(qp, tv_settings());
    ASSERT_EQ(r.status, SolveStatus::Solved);
    const KKTResidual res = kkt_residuals(qp, r.point.z, r.point.s, r.point.lambda, r.point.nu);
    EXPECT_LE(res.stat_norm(), 1e-8);
    EXPECT_LE(res.slack_norm(), 1e-8);
    EXPECT_LE(res.ineq_violation, 1e-8);
    EXPECT_LE(res.comp_norm(), 1e-6);
  }
}

TEST(TvDenoise, BatchMatchesSingleSolves) {
  const SignalDataset data = generate_signals(small_config(1.0, 4));
  const TVConfig cfg{difference_matrix(20), 2.0};
  const Matrix batch = tv_denoise_batch(data.test_noisy, cfg, tv_settings(), 2);
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    const Vector z = tv_denoise_qp(data.test_noisy.row(i), cfg);
    for (std::size_t j = 0; j < 20; ++j) EXPECT_EQ(batch(i, j), z[j]);
  }
}

TEST(Signals, SegmentsAndRoundTrip) {
  const SignalDataset data = generate_signals(small_config(2.0, 9));
  ASSERT_EQ(data.train_clean.rows(), 24u);
  ASSERT_EQ(data.test_noisy.rows(), 8u);
  for (std::size_t i = 0; i < data.train_clean.rows(); ++i) {
    std::size_t changes = 0;
    for (std::size_t t = 1; t < 20; ++t) changes += data.train_clean(i, t) != data.train_clean(i, t - 1);
    EXPECT_EQ(changes, 2u);
    for (std::size_t t = 0; t < 20; ++t) {
      EXPECT_GE(data.train_clean(i, t), 0.0);
      EXPECT_LE(data.train_clean(i, t), 10.0);
    }
  }
  const auto dir = std::filesystem::temp_directory_path() / "optnet_signals_test";
  save_signals(dir, data);
  const SignalDataset back = load_signals(dir);
  EXPECT_EQ(back.train_clean.values(), data.train_clean.values());
  EXPECT_EQ(back.train_noisy.values(), data.train_noisy.values());
  EXPECT_EQ(back.test_clean.values(), data.test_clean.values());
  EXPECT_EQ(back.test_noisy.values(), data.test_noisy.values());
  EXPECT_EQ(back.config.segments, 3u);
  std::filesystem::remove_all(dir);
}

TEST(Signals, SameSeedSameData) {
  const SignalDataset a = generate_signals(small_config(2.0, 1));
  const SignalDataset b = generate_signals(small_config(2.0, 1));
  EXPECT_EQ(a.train_noisy.values(), b.train_noisy.values());
  const SignalDataset c = generate_signals(small_config(2.0, 2));
  EXPECT_NE(a.train_noisy.values(), c.train_noisy.values());
}

TEST(Sweep, NoiselessDataPrefersZeroWeight) {
  const SignalDataset data = generate_signals(small_config(0.0, 6));
  const std::vector<double> grid{0.0, 1.0, 2.0};
  const SweepResult sweep = lambda_sweep(data, grid, tv_settings(), 1);
  ASSERT_EQ(sweep.curve.size(), 3u);
  EXPECT_EQ(sweep.best_weight, 0.0);
  EXPECT_LE(sweep.best_test_mse, 1e-10);
  EXPECT_GT(sweep.curve[2].test_mse, sweep.curve[1].test_mse);
}

TEST(Sweep, DefaultGrid) {
  const auto grid = default_sweep_grid();
  EXPECT_EQ(grid.front(), 0.0);
  EXPECT_EQ(grid[20], 20.0);
  EXPECT_EQ(grid[21], 25.0);
  EXPECT_EQ(grid.back(), 100.0);
  EXPECT_EQ(grid.size(), 37u);
}

TEST(TvLayer, ForwardMatchesBaselineSolver) {
  const SignalDataset data = generate_signals(small_config(2.0, 12));
  TvLayer layer(difference_matrix(20), 3.0);
  layer.options.settings = tv_settings();
  std::unique_ptr<LayerContext> ctx;
  const Matrix z = layer.forward(data.test_noisy, ctx);
  const Matrix base = tv_denoise_batch(data.test_noisy, {difference_matrix(20), 3.0}, tv_settings(), 1);
  EXPECT_LE(max_abs_diff(z.values(), base.values()), 1e-9);
  EXPECT_DOUBLE_EQ(layer.tv_weight(), 3.0);
}

TEST(TvLayer, FiniteDifferencesOnD) {
  const std::size_t T = 8;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    TvLayer layer(difference_matrix(T), 0.7, true);
    layer.options.settings = tight_settings();
    Matrix y(2, T);
    y.values() = oracle::random_vector(2 * T, 20 + seed);
    for (double& v : y.values()) v *= 2.0;
    Matrix c(2, T);
    c.values() = oracle::random_vector(2 * T, 30 + seed);

    std::unique_ptr<LayerContext> ctx;
    layer.forward(y, ctx);
    layer.backward(*ctx, c);

    const double delta = 1e-6;
    auto fd = [&](double& v) {
      const double saved = v;
      v = saved + delta;
      const double up = layer_loss(layer, y, c);
      v = saved - delta;
      const double down = layer_loss(layer, y, c);
      v = saved;
      return (up - down) / (2 * delta);
    };
    for (std::size_t i = 0; i < layer.D.value.size(); ++i) {
      const double n = fd(layer.D.value.values()[i]);
      EXPECT_LE(gradient_error(layer.D.grad.values()[i], n, 1e-4, 1e-6), 1.0)
          << "seed " << seed << " D entry " << i;
    }
    const double n = fd(layer.log_tv_weight.value.values()[0]);
    EXPECT_LE(gradient_error(layer.log_tv_weight.grad.values()[0], n, 1e-4, 1e-6), 1.0);
  }
}

TEST(TvLayer, ZeroLearningRateMatchesBaselineMse) {
  const SignalDataset data = generate_signals(small_config(2.0, 13));
  Sequential model;
  auto& layer = model.emplace<TvLayer>(difference_matrix(20), 2.0);
  layer.options.settings = tv_settings();
  TrainOptions opts;
  opts.epochs = 1;
  opts.batch_size = 8;
  opts.adam.lr = 0.0;
  const auto hist = train(model, data.train(), data.test(), opts);
  const Matrix base = tv_denoise_batch(data.test_noisy, {difference_matrix(20), 2.0}, tv_settings(), 1);
  const double expected = mean_squared_error(base, data.test_clean);
  for (const auto& row : hist) {
    if (row.split == "test") {
      EXPECT_NEAR(row.loss, expected, 1e-12 * expected);
    }
  }
}

TEST(TvLayer, LearningDFromRandomStartReducesLoss) {
  const SignalDataset data = generate_signals(small_config(1.0, 14));
  Sequential model;
  auto& layer = model.emplace<TvLayer>(random_difference_init(19, 20, 3), 1.0);
  layer.options.settings = tv_settings();
  TrainOptions opts;
  opts.epochs = 3;
  opts.batch_size = 8;
  opts.adam.lr = 1e-2;
  const auto hist = train(model, data.train(), data.test(), opts);
  double first = -1, last = -1;
  for (const auto& row : hist)
    if (row.split == "train") {
      if (first < 0) first = row.loss;
      last = row.loss;
    }
  EXPECT_LT(last, first);
}
