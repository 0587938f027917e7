#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "optnet/layer.hpp"
#include "optnet/matrix.hpp"
#include "optnet/nn.hpp"
#include "optnet/pdipm.hpp"
#include "optnet/qp.hpp"

namespace optnet {

struct SignalConfig {
  std::size_t length = 100;      ///< T
  std::size_t segments = 10;     ///< constant pieces per signal
  double level_max = 10.0;       ///< levels uniform on [0, level_max]
  double noise_sigma = 2.0;
  std::size_t n_train = 400;
  std::size_t n_test = 100;
  std::uint64_t seed = 0;
};

/// Rows are signals.
struct SignalDataset {
  SignalConfig config;
  Matrix train_clean, train_noisy, test_clean, test_noisy;

  Dataset train() const { return {train_noisy, train_clean}; }
  Dataset test() const { return {test_noisy, test_clean}; }
};

/// Each signal has `segments` pieces split at distinct breakpoints drawn
/// uniformly from the T − 1 interior positions.
SignalDataset generate_signals(const SignalConfig& config);

/// `dir/signals.json` plus `dir/signals.bin` (train clean, train noisy, test
/// clean, test noisy, each row-major).
void save_signals(const std::filesystem::path& dir, const SignalDataset& data);
SignalDataset load_signals(const std::filesystem::path& dir);

/// (T − 1) × T with rows eᵢ − eᵢ₊₁.
Matrix difference_matrix(std::size_t length);

/// Regularization on the auxiliary t block, which the objective otherwise
/// leaves without curvature.
inline constexpr double kTvAuxEps = 1e-8;

struct TVConfig {
  Matrix D;
  double tv_weight = 0.0;
  double aux_eps = kTvAuxEps;
};

/// Solver settings for the lifted problem (reduced KKT factorization).
SolverSettings tv_settings();

/// Over x = (z, t): min ½‖y − z‖² + tv_weight·1ᵀt s.t. −t ≤ Dz ≤ t, i.e.
/// Q = diag(I, aux_eps·I), q = (−y, tv_weight·1), G = [D −I; −D −I], h = 0.
QPInstance tv_denoise_instance(std::span<const double> y, const TVConfig& cfg);
Vector tv_denoise_qp(std::span<const double> y, const TVConfig& cfg,
                     const SolverSettings& settings = tv_settings());
/// Denoises every row; throws LayerSolveError with the failing row.
Matrix tv_denoise_batch(const Matrix& ys, const TVConfig& cfg, const SolverSettings& settings,
                        int threads);

/// Mean over all elements of (a − b)².
double mean_squared_error(const Matrix& a, const Matrix& b);

struct SweepPoint {
  double tv_weight = 0.0;
  double train_mse = 0.0;
  double test_mse = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> curve;
  double best_weight = 0.0;  ///< argmin of test MSE over the grid
  double best_test_mse = 0.0;
};

/// 0, 1, 2, …, 20 then 25, 30, …, 100.
std::vector<double> default_sweep_grid();

SweepResult lambda_sweep(const SignalDataset& data, std::span<const double> grid,
                         const SolverSettings& settings, int threads);

/// header tv_weight,train_mse,test_mse
void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep);

/// OptNet layer over the lifted TV problem with a learnable D and,
/// optionally, a learnable weight parameterized as exp(log_tv_weight).
class TvLayer : public Layer {
 public:
  TvLayer(Matrix D, double tv_weight, bool learn_weight = false);

  Parameter D;
  Parameter log_tv_weight;
  bool learn_weight;
  double aux_eps = kTvAuxEps;
  QpSolveOptions options;

  std::size_t length() const { return D.value.cols(); }
  double tv_weight() const;
  TVConfig config() const;

  Matrix forward(const Matrix& y, std::unique_ptr<LayerContext>& ctx) override;
  Matrix backward(const LayerContext& ctx, const Matrix& grad_out) override;
  std::vector<Parameter*> parameters() override;
  void signature(const LayerContext& ctx, std::vector<std::uint8_t>& out) const override;
  std::string name() const override { return "tv_optnet"; }
};

/// Random N(0, 1/T) entries, the starting point for learning D from scratch.
Matrix random_difference_init(std::size_t rows, std::size_t length, std::uint64_t seed);

struct SparsityAudit {
  std::vector<std::size_t> per_row;  ///< entries above `fraction` of the row max
  std::size_t max_per_row = 0;
};
SparsityAudit sparsity_audit(const Matrix& D, double fraction = 0.1);

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

}  // namespace optnet
