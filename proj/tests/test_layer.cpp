#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "optnet/checkpoint.hpp"
#include "optnet/layer.hpp"
#include "optnet/qp_gradcheck.hpp"
#include "optnet/sudoku.hpp"

using namespace optnet;

namespace {

void randomize(std::vector<Parameter*> params, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (Parameter* p : params)
    for (double& v : p->value.values()) v = normal(rng);
}

// The layer as a ReLU: Q ≈ I, q = −x, G = −I, h = 0, no equalities.
OptNetLayer relu_layer(std::size_t n) {
  OptNetLayer layer(n, 0, n, 1, 1e-4);
  layer.L.value = Matrix::identity(n);
  layer.L.value *= std::sqrt(1.0 - layer.eps);
  layer.G.value = -1.0 * Matrix::identity(n);
  layer.z0.value = Matrix(n, 1, 1.0);
  layer.s0_raw.value = Matrix(n, 1, std::log(std::exp(1.0) - 1.0));
  return layer;
}

double loss(OptNetLayer& layer, const Matrix& x, const Matrix& c) {
  std::unique_ptr<LayerContext> ctx;
  const Matrix z = layer.forward(x, ctx);
  double l = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) l += c.values()[i] * z.values()[i];
  return l;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("optnet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Softplus, ValuesAndStability) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(std::log(std::exp(1.0) - 1.0)), 1.0, 1e-15);
  EXPECT_EQ(softplus(1000.0), 1000.0);
  EXPECT_GT(softplus(-800.0), -1.0);
  EXPECT_NEAR(sigmoid(0.0), 0.5, 1e-15);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
}

TEST(OptNetLayer, IdentityCholeskyGivesScaledIdentity) {
  OptNetLayer layer(4, 1, 3, 7);
  layer.L.value = Matrix::identity(4);
  Matrix expected = Matrix::identity(4);
  expected *= 1.0 + 1e-4;
  EXPECT_EQ(layer.realized_Q(), expected);
}

TEST(OptNetLayer, ZeroAnchorAndUnitSlack) {
  OptNetLayer layer(4, 2, 3, 7);
  layer.z0.value = Matrix(4, 1);
  layer.s0_raw.value = Matrix(3, 1, std::log(std::exp(1.0) - 1.0));
  for (double v : layer.realized_b()) EXPECT_EQ(v, 0.0);
  for (double v : layer.realized_h()) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(OptNetLayer, RandomParameterizationsAreValidAndSolvable) {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 7, m = trial % std::min<std::size_t>(n, 3), p = 1 + trial % 6;
    OptNetLayer layer(n, m, p, trial);
    randomize(layer.parameters(), 1000 + trial, 1.0);
    const QPBatch batch = layer.realize(oracle::random_matrix(2, n, trial));
    batch.check();
    for (const auto& qp : batch.instances) {
      ASSERT_TRUE(validate(qp).ok()) << "trial " << trial;
      const Vector slack = sub(qp.h, matvec(qp.G, layer.z0.value.values()));
      for (double s : slack) EXPECT_GT(s, 0.0);
      EXPECT_LE(norm_inf(sub(matvec(qp.A, layer.z0.value.values()), qp.b)), 1e-12);
      EXPECT_EQ(solve(qp).status, SolveStatus::Solved) << "trial " << trial;
    }
    const auto ev = oracle::symmetric_eigenvalues(layer.realized_Q());
    EXPECT_GE(ev.front(), layer.eps - 1e-12);
  }
}

TEST(OptNetLayer, ReluParameterization) {
  OptNetLayer layer = relu_layer(2);
  std::unique_ptr<LayerContext> ctx;
  // q = −x
  const Matrix z = layer.forward(Matrix::from_rows({{-1, 2}}), ctx);
  EXPECT_NEAR(z(0, 0), 1.0, 1e-3);
  EXPECT_NEAR(z(0, 1), 0.0, 1e-6);
}

TEST(OptNetLayer, IdenticalInputsGiveIdenticalOutputs) {
  OptNetLayer layer(5, 2, 4, 3);
  const Matrix row = oracle::random_matrix(1, 5, 4);
  Matrix x(6, 5);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j) x(i, j) = row(0, j);
  layer.options.threads = 3;
  std::unique_ptr<LayerContext> ctx;
  const Matrix z = layer.forward(x, ctx);
  for (std::size_t i = 1; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(z(i, j), z(0, j));
}

TEST(OptNetLayer, ZeroOutputGradientGivesZeroParameterGradients) {
  OptNetLayer layer(4, 1, 3, 5);
  std::unique_ptr<LayerContext> ctx;
  layer.forward(oracle::random_matrix(3, 4, 6), ctx);
  const Matrix dx = layer.backward(*ctx, Matrix(3, 4));
  EXPECT_EQ(max_abs(dx), 0.0);
  for (Parameter* p : layer.parameters()) EXPECT_EQ(max_abs(p->grad), 0.0) << p->name;
}

TEST(OptNetLayer, InputGradientIsNegativeDz) {
  OptNetLayer layer(5, 2, 4, 9);
  std::unique_ptr<LayerContext> ctx;
  layer.forward(oracle::random_matrix(3, 5, 10), ctx);
  const Matrix seeds = oracle::random_matrix(3, 5, 11);
  const Matrix dx = layer.backward(*ctx, seeds);
  const auto& qctx = as_qp_context(*ctx);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto row = seeds.row(i);
    const DualSensitivities d = backward_reuse(qctx.results[i], Vector(row.begin(), row.end()));
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(dx(i, j), -d.dz[j]);
  }
}

TEST(OptNetLayer, FiniteDifferencesOnEveryRawParameter) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const std::size_t n = 3 + seed, m = 1 + seed % 2, p = 2 + seed;
    OptNetLayer layer(n, m, p, 50 + seed);
    layer.options.settings = tight_settings();
    const Matrix x = oracle::random_matrix(2, n, 60 + seed), c = oracle::random_matrix(2, n, 70 + seed);
    std::unique_ptr<LayerContext> ctx;
    layer.forward(x, ctx);
    for (Parameter* prm : layer.parameters()) prm->zero_grad();
    layer.backward(*ctx, c);
    const double delta = 1e-6;
    for (Parameter* prm : layer.parameters()) {
      for (std::size_t k = 0; k < prm->size(); ++k) {
        // Only the lower triangle of L is a parameter.
        if (prm == &layer.L && k % n > k / n) continue;
        double& v = prm->value.values()[k];
        const double orig = v;
        v = orig + delta;
        const double up = loss(layer, x, c);
        v = orig - delta;
        const double down = loss(layer, x, c);
        v = orig;
        const double fd = (up - down) / (2 * delta);
        EXPECT_LE(gradient_error(prm->grad.values()[k], fd, 1e-4, 1e-6), 1e-4)
            << prm->name << "[" << k << "] analytic " << prm->grad.values()[k] << " fd " << fd;
      }
    }
  }
}

TEST(OptNetLayer, GradientsAccumulateAndStayLowerTriangular) {
  OptNetLayer layer(4, 1, 3, 12);
  std::unique_ptr<LayerContext> ctx;
  layer.forward(oracle::random_matrix(2, 4, 13), ctx);
  const Matrix seeds = oracle::random_matrix(2, 4, 14);
  layer.backward(*ctx, seeds);
  const Matrix once = layer.A.grad;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) EXPECT_EQ(layer.L.grad(i, j), 0.0);
  layer.backward(*ctx, seeds);
  Matrix twice = once;
  twice *= 2.0;
  EXPECT_EQ(layer.A.grad, twice);
}

TEST(OptNetLayer, SolverFailureCarriesExampleIndex) {
  OptNetLayer layer(4, 1, 3, 15);
  layer.options.settings.max_iters = 1;
  std::unique_ptr<LayerContext> ctx;
  try {
    layer.forward(oracle::random_matrix(3, 4, 16), ctx);
    FAIL() << "expected LayerSolveError";
  } catch (const LayerSolveError& e) {
    EXPECT_EQ(e.index(), 0u);
    EXPECT_EQ(e.status(), SolveStatus::MaxIters);
  }
}

TEST(OptNetLayer, MissingContextIsReported) {
  OptNetLayer layer(3, 0, 2, 17);
  LayerContext plain;
  EXPECT_THROW(layer.backward(plain, Matrix(1, 3)), MissingContextError);
  QpLayerContext empty;
  EXPECT_THROW(layer.backward(empty, Matrix(1, 3)), MissingContextError);
}

TEST(SudokuLayer, TrueConstraintsReproduceSolvedBoard) {
  const Matrix rows = independent_rows(sudoku_constraint_matrix());
  ASSERT_EQ(rows.rows(), 40u);
  SudokuOptNetLayer layer(64, rows.rows(), 3);
  layer.A.value = rows;
  layer.log_z0.value = Matrix(64, 1, std::log(0.25));
  for (double v : layer.realized_b()) EXPECT_NEAR(v, 1.0, 1e-12);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const SudokuBoard board = random_solved_board(rng);
    const Vector x = one_hot(board);
    std::unique_ptr<LayerContext> ctx;
    const Matrix z = layer.forward(Matrix(1, 64, x), ctx);
    EXPECT_EQ(decode_argmax(z.row(0)), board);
  }
}

TEST(SudokuLayer, FiniteDifferencesOnRawParameters) {
  SudokuOptNetLayer layer(8, 3, 21);
  layer.options.settings = tight_settings();
  const Matrix x = oracle::random_matrix(2, 8, 22), c = oracle::random_matrix(2, 8, 23);
  std::unique_ptr<LayerContext> ctx;
  layer.forward(x, ctx);
  const Matrix dx = layer.backward(*ctx, c);
  auto eval = [&] {
    std::unique_ptr<LayerContext> k;
    const Matrix z = layer.forward(x, k);
    double l = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) l += c.values()[i] * z.values()[i];
    return l;
  };
  const double delta = 1e-6;
  for (Parameter* prm : layer.parameters())
    for (std::size_t k = 0; k < prm->size(); ++k) {
      double& v = prm->value.values()[k];
      const double orig = v;
      v = orig + delta;
      const double up = eval();
      v = orig - delta;
      const double down = eval();
      v = orig;
      EXPECT_LE(gradient_error(prm->grad.values()[k], (up - down) / (2 * delta), 1e-4, 1e-6), 1e-4)
          << prm->name << "[" << k << "]";
    }
  EXPECT_EQ(dx.rows(), 2u);
}

TEST(Checkpoint, RoundTripRestoresValuesExactly) {
  const auto dir = temp_dir("ckpt");
  OptNetLayer a(4, 1, 3, 30), b(4, 1, 3, 31);
  auto pa = a.parameters(), pb = b.parameters();
  save_checkpoint(dir / "layer.json", pa, {{"eps", a.eps}});
  const auto meta = load_checkpoint(dir / "layer.json", pb);
  EXPECT_EQ(meta.at("eps").get<double>(), 1e-4);
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
  EXPECT_EQ(std::filesystem::file_size(dir / "layer.bin"),
            8u * (16 + 4 + 12 + 4 + 3));
}

TEST(Checkpoint, ShapeOrNameMismatchIsRejected) {
  const auto dir = temp_dir("ckpt_bad");
  OptNetLayer a(4, 1, 3, 30), wrong(5, 1, 3, 31);
  auto pa = a.parameters(), pw = wrong.parameters();
  save_checkpoint(dir / "layer.json", pa);
  EXPECT_THROW(load_checkpoint(dir / "layer.json", pw), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "missing.json", pa), CheckpointError);
}

TEST(Checkpoint, RawDoublesAreLittleEndian) {
  const auto dir = temp_dir("raw");
  write_raw_doubles(dir / "x.bin", Vector{1.0, -2.5});
  std::ifstream in(dir / "x.bin", std::ios::binary);
  unsigned char bytes[16];
  in.read(reinterpret_cast<char*>(bytes), 16);
  // 1.0 = 0x3FF0000000000000
  EXPECT_EQ(bytes[7], 0x3F);
  EXPECT_EQ(bytes[6], 0xF0);
  EXPECT_EQ(bytes[0], 0x00);
  EXPECT_EQ(read_raw_doubles(dir / "x.bin"), (Vector{1.0, -2.5}));
}
