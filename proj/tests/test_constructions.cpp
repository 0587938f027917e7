#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "optnet/constructions.hpp"
#include "optnet/qp_grad.hpp"

using namespace optnet;

namespace {

Vector direct_relu(const Matrix& W, const Vector& b, const Vector& x) {
  Vector out(W.rows());
  for (std::size_t i = 0; i < W.rows(); ++i) {
    double v = b[i];
    for (std::size_t j = 0; j < W.cols(); ++j) v += W(i, j) * x[j];
    out[i] = std::max(v, 0.0);
  }
  return out;
}

PiecewiseLinearSpec random_spec(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> k_dist(1, 6), coin(0, 1);
  std::normal_distribution<double> normal;
  PiecewiseLinearSpec spec;
  const int k = k_dist(rng);
  for (int i = 0; i < k; ++i) {
    spec.w.push_back(coin(rng) ? 1.0 : -1.0);
    spec.a.push_back(normal(rng));
    spec.b.push_back(normal(rng));
  }
  return spec;
}

}  // namespace

TEST(ReluQp, Examples) {
  const Matrix I = Matrix::identity(2);
  const Vector z = relu_qp(I, Vector{1, -2}, Vector{0, 0});
  EXPECT_NEAR(z[0], 1.0, 1e-6);
  EXPECT_NEAR(z[1], 0.0, 1e-6);
  const Vector zero = relu_qp(I, Vector{0, 0}, Vector{0, 0});
  EXPECT_NEAR(zero[0], 0.0, 1e-6);
  EXPECT_NEAR(zero[1], 0.0, 1e-6);
}

TEST(ReluQp, MatchesDirectReluOnRandomInstances) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Matrix W = oracle::random_matrix(5, 5, seed);
    const Vector b = oracle::random_vector(5, 1000 + seed), x = oracle::random_vector(5, 2000 + seed);
    worst = std::max(worst, max_abs_diff(relu_qp(W, b, x), direct_relu(W, b, x)));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(ReluQp, GradientWrtBiasIsIndicatorAwayFromKinks) {
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix W = oracle::random_matrix(4, 3, 50 + seed);
    const Vector b = oracle::random_vector(4, 60 + seed), x = oracle::random_vector(3, 70 + seed);
    const QPInstance qp = relu_qp_instance(W, b, x);
    const SolveResult r = solve(qp, construction_settings());
    ASSERT_EQ(r.status, SolveStatus::Solved);
    const Vector pre = add(matvec(W, x), b);
    for (std::size_t i = 0; i < 4; ++i) {
      if (std::abs(pre[i]) < 1e-3) continue;
      // ℓ = zᵢ; q = −2(Wx + b) so ∂ℓ/∂bᵢ = −2·∂ℓ/∂qᵢ.
      Vector seedv(4, 0.0);
      seedv[i] = 1.0;
      const ParamGradients g = qp_backward(r, seedv);
      EXPECT_NEAR(-2.0 * g.dq[i], pre[i] > 0 ? 1.0 : 0.0, 1e-4);
      ++checked;
    }
  }
  EXPECT_GT(checked, 60u);
}

TEST(SumOfMax, Examples) {
  const PiecewiseLinearSpec single{{1.0}, {1.0}, {0.0}};
  EXPECT_NEAR(sum_of_max_qp(single, 2.0), 2.0, 1e-6);
  EXPECT_NEAR(sum_of_max_qp(single, -3.0), 0.0, 1e-6);
  EXPECT_THROW((PiecewiseLinearSpec{{0.5}, {1.0}, {0.0}}.check()), std::invalid_argument);
  EXPECT_THROW((PiecewiseLinearSpec{{}, {}, {}}.check()), std::invalid_argument);
}

TEST(SumOfMax, MatchesDirectEvaluationOnGrid) {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  std::size_t instances = 0;
  for (int s = 0; s < 10; ++s) {
    const PiecewiseLinearSpec spec = random_spec(rng);
    for (int g = 0; g <= 10; ++g) {
      const double x = -5.0 + g;
      double direct = 0.0;
      for (std::size_t i = 0; i < spec.k(); ++i) direct += spec.w[i] * std::max(spec.a[i] * x + spec.b[i], 0.0);
      worst = std::max(worst, std::abs(sum_of_max_qp(spec, x) - direct));
      ++instances;
    }
  }
  EXPECT_GE(instances, 100u);
  EXPECT_LE(worst, 1e-6);
}

TEST(MaxOfLinear, Examples) {
  // Rows chosen so the products at x = (1, 1) are 1, 2 and 3.
  const Matrix a = Matrix::from_rows({{1, 0}, {1, 1}, {2, 1}});
  EXPECT_NEAR(max_of_linear_qp(a, Vector{1, 1}), 3.0, 1e-6);
  const Matrix tie = Matrix::from_rows({{0.5, 0.25}, {0.25, 0.5}, {0.75, 0.0}});
  EXPECT_NEAR(max_of_linear_qp(tie, Vector{1, 1}), 0.75, 1e-6);
}

TEST(MaxOfLinear, MatchesOnDomainAndDiagnosesOutside) {
  std::size_t inside = 0, outside = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    const Matrix a = oracle::random_matrix(3, 4, 300 + seed);
    const Vector x = oracle::random_vector(4, 400 + seed);
    const MaxOfLinearDiagnostic d = max_of_linear_diagnostic(a, x);
    const Vector ax = matvec(a, x);
    EXPECT_DOUBLE_EQ(d.direct_value, *std::max_element(ax.begin(), ax.end()));
    if (d.in_domain) {
      worst = std::max(worst, std::abs(d.qp_value - d.direct_value));
      ++inside;
    } else {
      EXPECT_NEAR(d.qp_value, 0.0, 1e-6);
      ++outside;
    }
  }
  EXPECT_GE(inside, 100u);
  EXPECT_GT(outside, 0u);
  EXPECT_LE(worst, 1e-6);
}

TEST(SimplexProjection, Examples) {
  const Vector third = simplex_projection_qp(Vector{0.3, 0.3, 0.3});
  for (double v : third) EXPECT_NEAR(v, 1.0 / 3.0, 1e-6);
  const Vector corner = simplex_projection_qp(Vector{2, 0});
  EXPECT_NEAR(corner[0], 1.0, 1e-6);
  EXPECT_NEAR(corner[1], 0.0, 1e-6);
}

TEST(SimplexProjection, SortOracleAgreesOnHandCases) {
  EXPECT_EQ(oracle::simplex_projection({2, 0}), (Vector{1, 0}));
  const Vector p = oracle::simplex_projection({0.5, 0.5, 0.5});
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(SimplexProjection, MatchesSortBasedOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> n_dist(1, 10);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = n_dist(rng);
    Vector x = oracle::random_vector(n, 500 + trial);
    for (double& v : x) v *= 2.0;
    worst = std::max(worst, max_abs_diff(simplex_projection_qp(x), oracle::simplex_projection(x)));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(ConstructionSettings, TightGapIsReached) {
  const SolverSettings st = construction_settings();
  std::size_t solved = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Matrix W = oracle::random_matrix(5, 5, seed);
    const SolveResult r = solve(relu_qp_instance(W, oracle::random_vector(5, seed + 1),
                                                 oracle::random_vector(5, seed + 2)),
                                st);
    if (r.status == SolveStatus::Solved) ++solved;
  }
  EXPECT_EQ(solved, 50u);
}
