#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "optnet/layer.hpp"
#include "optnet/nn.hpp"
#include "optnet/qp_gradcheck.hpp"

using namespace optnet;

namespace {

Sequential mlp(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed) {
  Sequential model;
  model.emplace<Linear>(in, hidden, seed);
  model.emplace<ReLU>();
  model.emplace<Linear>(hidden, out, seed + 1);
  return model;
}

std::vector<Matrix> grads_of(Sequential& model) {
  std::vector<Matrix> out;
  for (Parameter* p : model.parameters()) out.push_back(p->grad);
  return out;
}

Dataset small_regression(std::size_t count, std::uint64_t seed) {
  Dataset d{oracle::random_matrix(count, 3, seed), Matrix(count, 2)};
  for (std::size_t i = 0; i < count; ++i) {
    d.targets(i, 0) = std::sin(d.inputs(i, 0)) + 0.5 * d.inputs(i, 1);
    d.targets(i, 1) = d.inputs(i, 2) * d.inputs(i, 0);
  }
  return d;
}

}  // namespace

TEST(Primitives, ReluAndMseExamples) {
  const Matrix r = relu_forward(Matrix::from_rows({{1, -2}}));
  EXPECT_EQ(r, Matrix::from_rows({{1, 0}}));
  const Matrix x = oracle::random_matrix(3, 4, 1);
  EXPECT_EQ(mse_loss(x, x), 0.0);
  EXPECT_DOUBLE_EQ(mse_loss(Matrix::from_rows({{1, 2}}), Matrix::from_rows({{0, 0}})), 2.5);
  EXPECT_EQ(relu_backward(Matrix::from_rows({{0, 1, -1}}), Matrix::from_rows({{5, 5, 5}})),
            Matrix::from_rows({{0, 5, 0}}));
  EXPECT_THROW(mse_loss(Matrix(2, 2), Matrix(2, 3)), ShapeError);
}

TEST(Primitives, LinearBackwardMatchesFiniteDifferences) {
  const Matrix x = oracle::random_matrix(4, 3, 2), W = oracle::random_matrix(5, 3, 3);
  const Vector b = oracle::random_vector(5, 4);
  const Matrix c = oracle::random_matrix(4, 5, 5);
  auto f = [&](const Matrix& xx, const Matrix& WW, const Vector& bb) {
    const Matrix y = linear_forward(xx, WW, bb);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += c.values()[i] * y.values()[i];
    return s;
  };
  const LinearGrads g = linear_backward(x, W, c);
  const double d = 1e-6;
  for (std::size_t k = 0; k < W.size(); ++k) {
    Matrix up = W, down = W;
    up.values()[k] += d;
    down.values()[k] -= d;
    EXPECT_NEAR(g.dW.values()[k], (f(x, up, b) - f(x, down, b)) / (2 * d), 1e-6);
  }
  for (std::size_t k = 0; k < x.size(); ++k) {
    Matrix up = x, down = x;
    up.values()[k] += d;
    down.values()[k] -= d;
    EXPECT_NEAR(g.dx.values()[k], (f(up, W, b) - f(down, W, b)) / (2 * d), 1e-6);
  }
  for (std::size_t k = 0; k < b.size(); ++k) {
    Vector up = b, down = b;
    up[k] += d;
    down[k] -= d;
    EXPECT_NEAR(g.db[k], (f(x, W, up) - f(x, W, down)) / (2 * d), 1e-6);
  }
}

TEST(Primitives, MseGradientMatchesFiniteDifferences) {
  const Matrix p = oracle::random_matrix(3, 2, 6), t = oracle::random_matrix(3, 2, 7);
  const Matrix g = mse_grad(p, t);
  for (std::size_t k = 0; k < p.size(); ++k) {
    Matrix up = p, down = p;
    up.values()[k] += 1e-6;
    down.values()[k] -= 1e-6;
    EXPECT_NEAR(g.values()[k], (mse_loss(up, t) - mse_loss(down, t)) / 2e-6, 1e-8);
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter p("w", oracle::random_matrix(2, 3, 8));
  const Matrix before = p.value;
  Adam adam({&p});
  for (int i = 0; i < 5; ++i) adam.step();
  EXPECT_EQ(p.value, before);
}

TEST(Adam, SingleStepFromZeroState) {
  Parameter p("w", Matrix::from_rows({{1.0, -2.0, 0.5}}));
  p.grad = Matrix::from_rows({{0.3, -4.0, 1e-9}});
  AdamOptions opts;
  opts.lr = 0.01;
  Adam adam({&p}, opts);
  adam.step();
  // m̂ = g and v̂ = g² after bias correction, so the step is lr·g/(|g| + eps).
  const double g[3] = {0.3, -4.0, 1e-9}, w0[3] = {1.0, -2.0, 0.5};
  for (int k = 0; k < 3; ++k)
    EXPECT_NEAR(p.value(0, k), w0[k] - 0.01 * g[k] / (std::abs(g[k]) + 1e-8), 1e-15);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  Parameter p("w", Matrix(1, 2));
  AdamOptions opts;
  opts.lr = 1e-3;
  Adam adam({&p}, opts);
  double last_step = 0.0;
  for (int i = 0; i < 2000; ++i) {
    p.grad = Matrix::from_rows({{2.5, -0.01}});
    const double before = p.value(0, 0);
    adam.step();
    last_step = before - p.value(0, 0);
  }
  EXPECT_NEAR(last_step, 1e-3, 1e-8);
  EXPECT_NEAR(p.value(0, 1), 2000 * 1e-3, 1e-4);
}

TEST(Tape, BackwardOfSumEqualsSumOfBackwards) {
  Sequential model = mlp(3, 5, 2, 10);
  const Matrix x = oracle::random_matrix(4, 3, 11), y1 = oracle::random_matrix(4, 2, 12),
               y2 = oracle::random_matrix(4, 2, 13);
  auto run = [&](bool first, bool second) {
    model.zero_grad();
    Tape tape;
    const auto out = model.forward(tape, tape.input(x));
    if (first && second) {
      tape.backward(tape.add(tape.mse(out, y1), tape.mse(out, y2)));
    } else {
      tape.backward(tape.mse(out, first ? y1 : y2));
    }
    return grads_of(model);
  };
  const auto g1 = run(true, false), g2 = run(false, true), g12 = run(true, true);
  for (std::size_t i = 0; i < g1.size(); ++i)
    EXPECT_LE(max_abs_diff(g12[i], g1[i] + g2[i]), 1e-12);
}

TEST(Tape, TwoBackwardPassesDoubleGradientsExactly) {
  Sequential model = mlp(3, 4, 2, 14);
  const Matrix x = oracle::random_matrix(5, 3, 15), y = oracle::random_matrix(5, 2, 16);
  model.zero_grad();
  Tape tape;
  const auto loss = tape.mse(model.forward(tape, tape.input(x)), y);
  tape.backward(loss);
  const auto once = grads_of(model);
  tape.backward(loss);
  const auto twice = grads_of(model);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(twice[i], 2.0 * once[i]);
}

TEST(Tape, InputGradientAndScalarValue) {
  Sequential model;
  model.emplace<Linear>(2, 1, 3);
  Tape tape;
  const auto in = tape.input(Matrix::from_rows({{1, 2}}));
  const auto out = model.forward(tape, in);
  const auto loss = tape.mse(out, Matrix::from_rows({{0}}));
  tape.backward(loss);
  const auto& lin = static_cast<Linear&>(*model.layers[0]);
  const double pred = tape.value(out)(0, 0);
  EXPECT_DOUBLE_EQ(tape.scalar(loss), pred * pred);
  EXPECT_DOUBLE_EQ(tape.grad(in)(0, 0), 2 * pred * lin.W.value(0, 0));
  EXPECT_DOUBLE_EQ(tape.grad(in)(0, 1), 2 * pred * lin.W.value(0, 1));
}

TEST(Train, ZeroLearningRateKeepsLossConstant) {
  Sequential model = mlp(3, 6, 2, 20);
  const Dataset train_set = small_regression(16, 21), test_set = small_regression(8, 22);
  TrainOptions opts;
  opts.epochs = 3;
  opts.batch_size = 16;
  opts.adam.lr = 0.0;
  const auto hist = train(model, train_set, test_set, opts);
  double first_test = -1;
  for (const auto& row : hist) {
    if (row.split == "test") {
      if (first_test < 0) first_test = row.loss;
      EXPECT_EQ(row.loss, first_test);
    }
  }
  // A single full batch sees the same rows, only in shuffled order.
  EXPECT_NEAR(hist[0].loss, hist[2].loss, 1e-12 * hist[0].loss);
}

TEST(Train, OverfitsEightSamples) {
  Sequential model = mlp(3, 32, 2, 30);
  const Dataset data = small_regression(8, 31);
  TrainOptions opts;
  opts.epochs = 500;
  opts.batch_size = 8;
  opts.adam.lr = 1e-2;
  const auto hist = train(model, data, data, opts);
  EXPECT_LT(hist.back().loss, 1e-3);
}

TEST(Train, SameSeedGivesIdenticalHistory) {
  auto run = [] {
    Sequential model = mlp(3, 8, 2, 40);
    TrainOptions opts;
    opts.epochs = 5;
    opts.batch_size = 4;
    opts.seed = 9;
    opts.adam.lr = 1e-2;
    return train(model, small_regression(20, 41), small_regression(10, 42), opts);
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].loss, b[i].loss);
    EXPECT_EQ(a[i].error, b[i].error);
    EXPECT_EQ(a[i].split, b[i].split);
  }
}

TEST(Train, SolverFailureReportsExample) {
  Sequential model;
  auto& layer = model.emplace<OptNetLayer>(3, 1, 2, 50);
  layer.options.settings.max_iters = 1;
  TrainOptions opts;
  opts.epochs = 1;
  opts.batch_size = 4;
  const Dataset data{oracle::random_matrix(8, 3, 51), oracle::random_matrix(8, 3, 52)};
  EXPECT_THROW(train(model, data, data, opts), TrainingError);
}

TEST(Train, MetricsCsvHeaderAndRows) {
  const auto path = std::filesystem::temp_directory_path() / "optnet_metrics.csv";
  write_metrics_csv(path, {{0, "train", 0.5, 0.25}, {0, "test", 1.0, 0.0}});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "epoch,split,loss,error");
  EXPECT_EQ(row, "0,train,0.5,0.25");
}

TEST(GradCheck, LinearModelIsExact) {
  Sequential model;
  model.emplace<Linear>(4, 3, 60);
  const GradCheckReport r =
      grad_check(model, oracle::random_matrix(5, 4, 61), oracle::random_matrix(5, 3, 62));
  EXPECT_TRUE(r.passed());
  EXPECT_LE(r.max_error, 1e-7);
  EXPECT_EQ(r.checked, 15u);
  EXPECT_EQ(r.excluded, 0u);
}

TEST(GradCheck, ModelWithOptNetLayer) {
  Sequential model;
  model.emplace<Linear>(3, 4, 70);
  auto& layer = model.emplace<OptNetLayer>(4, 1, 3, 71);
  layer.options.settings = tight_settings();
  model.emplace<Linear>(4, 2, 72);
  const GradCheckReport r =
      grad_check(model, oracle::random_matrix(3, 3, 73), oracle::random_matrix(3, 2, 74));
  EXPECT_TRUE(r.passed()) << r.worst << " " << r.max_error;
  EXPECT_LE(r.max_error, 1e-4);
  EXPECT_GT(r.checked, 0u);
}

TEST(GradCheck, ReluKinkIsExcludedNotFailed) {
  Sequential model = mlp(2, 3, 1, 80);
  auto& first = static_cast<Linear&>(*model.layers[0]);
  // Unit 0 sees a pre-activation of exactly zero for every input.
  first.W.value(0, 0) = first.W.value(0, 1) = 0.0;
  first.b.value(0, 0) = 0.0;
  const GradCheckReport r =
      grad_check(model, oracle::random_matrix(4, 2, 81), oracle::random_matrix(4, 1, 82));
  EXPECT_GT(r.excluded, 0u);
  EXPECT_TRUE(r.passed()) << r.worst;
}

TEST(GradCheck, LargeModelsUseSeededSubset) {
  Sequential model = mlp(20, 30, 5, 90);
  GradCheckOptions opts;
  opts.max_coords = 50;
  const GradCheckReport r =
      grad_check(model, oracle::random_matrix(3, 20, 91), oracle::random_matrix(3, 5, 92), opts);
  EXPECT_EQ(r.checked + r.excluded, 50u);
  EXPECT_TRUE(r.passed());
}

TEST(TwoMoons, ShapesAndLearnability) {
  const Dataset d = make_two_moons(200, 0.1, 5);
  EXPECT_EQ(d.inputs.cols(), 2u);
  EXPECT_EQ(d.targets.cols(), 2u);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.targets(i, 0) + d.targets(i, 1), 1.0);
  Sequential model = mlp(2, 16, 2, 6);
  TrainOptions opts;
  opts.epochs = 60;
  opts.batch_size = 20;
  opts.adam.lr = 1e-2;
  opts.error = argmax_errors;
  const auto hist = train(model, d, make_two_moons(100, 0.1, 7), opts);
  EXPECT_LT(hist.back().error, 0.1);
  EXPECT_LT(hist.back().error, hist[1].error);
}
