#include "optnet/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "optnet/checkpoint.hpp"
#include "optnet/denoise.hpp"
#include "optnet/layer.hpp"
#include "optnet/nn.hpp"
#include "optnet/pdipm.hpp"
#include "optnet/qp_gradcheck.hpp"
#include "optnet/qp_json.hpp"
#include "optnet/sudoku.hpp"

namespace optnet {

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 1;
constexpr int kExitNumerical = 2;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_vector(std::span<const double> v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

struct Globals {
  std::uint64_t seed = 0;
  double tol = 1e-8;
  int max_iter = 25;
  std::string out = ".";
  int threads = 1;

  SolverSettings settings(SolverSettings base = {}) const {
    base.tol_residual = tol;
    base.tol_gap = tol;
    base.max_iters = max_iter;
    base.check();
    return base;
  }
  fs::path out_dir() const {
    fs::create_directories(out);
    return out;
  }
};

void print_metrics(std::ostream& out, const std::vector<EpochMetrics>& rows, std::size_t from) {
  for (std::size_t i = from; i < rows.size(); ++i)
    out << "epoch " << rows[i].epoch << ' ' << rows[i].split << " loss " << fmt(rows[i].loss)
        << " error " << fmt(rows[i].error) << '\n';
}

// ---- solve ----------------------------------------------------------------

int run_solve(const Globals& g, const std::string& path, std::ostream& out) {
  const auto qps = read_qp_file(path);
  const auto results = solve_batch(qps, g.settings(), g.threads);
  bool failed = false;
  const bool many = qps.size() != 1;
  if (many) out << "[\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const SolveResult& r = results[i];
    const KKTResidual res = kkt_residuals(qps[i], r.point.z, r.point.s, r.point.lambda, r.point.nu);
    failed |= r.status == SolveStatus::NumericalFailure;
    out << "{\n"
        << "  \"status\": \"" << to_string(r.status) << "\",\n"
        << "  \"iterations\": " << r.iterations << ",\n"
        << "  \"z\": " << fmt_vector(r.point.z) << ",\n"
        << "  \"s\": " << fmt_vector(r.point.s) << ",\n"
        << "  \"lambda\": " << fmt_vector(r.point.lambda) << ",\n"
        << "  \"nu\": " << fmt_vector(r.point.nu) << ",\n"
        << "  \"mu\": " << fmt(r.point.mu) << ",\n"
        << "  \"residuals\": {\"stationarity\": " << fmt(res.stat_norm())
        << ", \"equality\": " << fmt(res.eq_norm()) << ", \"complementarity\": "
        << fmt(res.comp_norm()) << ", \"slack\": " << fmt(res.slack_norm())
        << ", \"inequality_violation\": " << fmt(res.ineq_violation) << "}\n"
        << "}" << (many && i + 1 < results.size() ? "," : "") << '\n';
  }
  if (many) out << "]\n";
  return failed ? kExitNumerical : kExitOk;
}

// ---- gradcheck ------------------------------------------------------------

int run_gradcheck(const Globals& g, std::size_t count, double delta, std::ostream& out) {
  const GradcheckSuiteResult r = run_gradcheck_suite(count, g.seed, g.threads, delta);
  out << "problems " << r.problems << '\n'
      << "entries " << r.entries << '\n'
      << "failures " << r.failures << '\n'
      << "max_rel_err " << fmt(r.max_error) << '\n'
      << "worst " << r.worst << '\n'
      << (r.passed() ? "PASS" : "FAIL") << '\n';
  return r.passed() ? kExitOk : kExitBadInput;
}

// ---- bench ----------------------------------------------------------------

bool same_point(const SolveResult& a, const SolveResult& b) {
  return a.status == b.status && a.iterations == b.iterations && a.point.z == b.point.z &&
         a.point.s == b.point.s && a.point.lambda == b.point.lambda && a.point.nu == b.point.nu;
}

int run_bench(const Globals& g, std::size_t n, std::size_t m, std::size_t p,
              const std::vector<std::size_t>& batches, int repeats, std::ostream& out,
              std::ostream& err) {
  const SolverSettings settings = g.settings();
  std::ostringstream csv;
  csv << "batch,n,m,p,threads,sequential_seconds,batched_seconds,speedup\n";
  for (std::size_t batch : batches) {
    std::vector<QPInstance> qps;
    for (std::size_t i = 0; i < batch; ++i)
      qps.push_back(random_feasible_qp(n, m, p, g.seed + i).qp);
    const auto serial = solve_batch_serial(qps, settings);
    const auto parallel = solve_batch(qps, settings, g.threads);
    for (std::size_t i = 0; i < batch; ++i)
      if (!same_point(serial[i], parallel[i])) {
        err << "bench: batched and sequential solutions differ at batch " << batch << ", instance "
            << i << '\n';
        return kExitBadInput;
      }
    double best_seq = 1e300, best_par = 1e300;
    for (int r = 0; r < repeats; ++r) {
      auto t0 = std::chrono::steady_clock::now();
      (void)solve_batch_serial(qps, settings);
      auto t1 = std::chrono::steady_clock::now();
      (void)solve_batch(qps, settings, g.threads);
      auto t2 = std::chrono::steady_clock::now();
      best_seq = std::min(best_seq, std::chrono::duration<double>(t1 - t0).count());
      best_par = std::min(best_par, std::chrono::duration<double>(t2 - t1).count());
    }
    csv << batch << ',' << n << ',' << m << ',' << p << ',' << g.threads << ',' << fmt(best_seq)
        << ',' << fmt(best_par) << ',' << fmt(best_seq / best_par) << '\n';
  }
  out << csv.str();
  std::ofstream f(g.out_dir() / "bench.csv");
  f << csv.str();
  return kExitOk;
}

// ---- denoise --------------------------------------------------------------

struct DenoiseArgs {
  std::string data;
  SignalConfig signals;
  std::vector<double> grid = default_sweep_grid();
  int epochs = 20;
  double lr = 1e-4;
  std::size_t batch = 10;
  double tv_weight = -1.0;  // negative: choose by sweep
  bool learn_weight = false;
  std::size_t rows = 0;  // learned-D row count, 0 means T − 1
};

SignalDataset denoise_data(const Globals& g, const DenoiseArgs& a, std::ostream& out) {
  if (!a.data.empty()) return load_signals(a.data);
  SignalConfig c = a.signals;
  c.seed = g.seed;
  SignalDataset d = generate_signals(c);
  save_signals(g.out_dir(), d);
  out << "dataset T " << c.length << " train " << c.n_train << " test " << c.n_test << " sigma "
      << fmt(c.noise_sigma) << " seed " << c.seed << '\n';
  return d;
}

SolverSettings denoise_settings(const Globals& g) {
  SolverSettings s = tv_settings();
  s.tol_residual = g.tol;
  s.tol_gap = g.tol;
  s.max_iters = std::max(g.max_iter, s.max_iters);
  return s;
}

SweepResult denoise_sweep(const Globals& g, const SignalDataset& d, const DenoiseArgs& a,
                          std::ostream& out) {
  const SweepResult sweep = lambda_sweep(d, a.grid, denoise_settings(g), g.threads);
  write_sweep_csv(g.out_dir() / "denoise_sweep.csv", sweep);
  out << "tv_baseline best_tv_weight " << fmt(sweep.best_weight) << " test_mse "
      << fmt(sweep.best_test_mse) << '\n';
  return sweep;
}

void write_curve(const fs::path& path, const std::vector<EpochMetrics>& rows) {
  std::ofstream f(path);
  f << "epoch,train_mse,test_mse\n";
  for (std::size_t i = 0; i + 1 < rows.size(); i += 2)
    f << rows[i].epoch << ',' << fmt(rows[i].loss) << ',' << fmt(rows[i + 1].loss) << '\n';
}

int run_denoise_train(const Globals& g, const DenoiseArgs& a, bool finetune, std::ostream& out) {
  const SignalDataset d = denoise_data(g, a, out);
  const std::size_t T = d.config.length;
  double weight = a.tv_weight;
  double baseline = -1.0;
  if (finetune && weight < 0) {
    const SweepResult sweep = denoise_sweep(g, d, a, out);
    weight = sweep.best_weight;
    baseline = sweep.best_test_mse;
  }
  if (weight < 0) weight = 4.0;
  if (finetune && weight == 0.0 && a.learn_weight)
    throw std::invalid_argument("denoise finetune: cannot learn a weight that starts at 0");

  Matrix D = finetune ? difference_matrix(T)
                      : random_difference_init(a.rows ? a.rows : T - 1, T, g.seed + 1);
  Sequential model;
  auto& layer = model.emplace<TvLayer>(std::move(D), weight, a.learn_weight);
  layer.options.settings = denoise_settings(g);
  layer.options.threads = g.threads;

  TrainOptions opt;
  opt.epochs = a.epochs;
  opt.batch_size = a.batch;
  opt.adam.lr = a.lr;
  opt.seed = g.seed;
  std::size_t printed = 0;
  opt.on_epoch = [&](const std::vector<EpochMetrics>& rows) {
    print_metrics(out, rows, printed);
    printed = rows.size();
    out.flush();
  };
  const std::string tag = finetune ? "denoise_finetune" : "denoise_train";
  const auto history = train(model, d.train(), d.test(), opt);
  const fs::path dir = g.out_dir();
  write_metrics_csv(dir / (tag + "_metrics.csv"), history);
  write_curve(dir / (tag + "_curve.csv"), history);
  write_matrix_csv(dir / (tag + "_D.csv"), layer.D.value);
  const auto params = model.parameters();
  save_checkpoint(dir / (tag + ".json"), params,
                  {{"model", "tv_optnet"}, {"T", T}, {"tv_weight", layer.tv_weight()},
                   {"learn_weight", a.learn_weight}});

  const double final_test = history.back().loss;
  const SparsityAudit audit = sparsity_audit(layer.D.value);
  out << "tv_weight " << fmt(layer.tv_weight()) << '\n'
      << "final_test_mse " << fmt(final_test) << '\n'
      << "sparsity_max_entries_per_row " << audit.max_per_row << '\n';
  if (baseline >= 0)
    out << "improvement_over_tv " << fmt((baseline - final_test) / baseline) << '\n';
  return kExitOk;
}

// ---- sudoku ---------------------------------------------------------------

struct SudokuArgs {
  std::string data;
  std::size_t n_train = 1000, n_test = 200, givens = 8;
  bool full_scale = false;
  std::string model = "both";
  int epochs = 20;
  double lr = 1e-2;
  double fc_lr = 1e-2;
  std::size_t batch = 10;
  std::size_t constraints = 40;
  std::size_t hidden = 256;
  std::string checkpoint;
};

SudokuDataset sudoku_data(const Globals& g, const SudokuArgs& a, std::ostream& out) {
  if (!a.data.empty()) return load_sudoku_dataset(a.data);
  const std::size_t tr = a.full_scale ? 9000 : a.n_train, te = a.full_scale ? 1000 : a.n_test;
  SudokuDataset d = generate_sudoku_dataset(tr, te, a.givens, g.seed);
  save_sudoku_dataset(g.out_dir(), d);
  out << "dataset train " << tr << " test " << te << " givens " << a.givens << " seed " << g.seed
      << '\n';
  return d;
}

Sequential sudoku_model(const Globals& g, const std::string& kind, const SudokuArgs& a) {
  if (kind == "optnet") {
    Sequential m = make_sudoku_optnet(a.constraints, g.seed + 11, g.threads);
    auto& layer = dynamic_cast<SudokuOptNetLayer&>(*m.layers.front());
    SolverSettings s = g.settings(layer.options.settings);
    layer.options.settings = s;
    return m;
  }
  if (kind == "fc") return make_sudoku_fc(a.hidden, g.seed + 11);
  throw std::invalid_argument("unknown sudoku model '" + kind + "' (expected optnet or fc)");
}

int run_sudoku_gen(const Globals& g, const SudokuArgs& a, std::ostream& out) {
  const SudokuDataset d = sudoku_data(g, SudokuArgs{a}, out);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < d.train_puzzles.size(); ++i)
    bad += !(d.train_solutions[i].complete() && d.train_solutions[i].valid());
  for (std::size_t i = 0; i < d.test_puzzles.size(); ++i)
    bad += !(d.test_solutions[i].complete() && d.test_solutions[i].valid());
  out << "invalid_pairs " << bad << '\n';
  return bad == 0 ? kExitOk : kExitBadInput;
}

int run_sudoku_train(const Globals& g, const SudokuArgs& a, std::ostream& out) {
  const SudokuDataset d = sudoku_data(g, a, out);
  std::vector<std::string> kinds;
  if (a.model == "both") kinds = {"optnet", "fc"};
  else kinds = {a.model};
  const Dataset train_set = d.train(), test_set = d.test();
  for (const auto& kind : kinds) {
    Sequential model = sudoku_model(g, kind, a);
    TrainOptions opt;
    opt.epochs = a.epochs;
    opt.batch_size = a.batch;
    opt.adam.lr = kind == "optnet" ? a.lr : a.fc_lr;
    opt.seed = g.seed;
    opt.error = board_errors;
    std::size_t printed = 0;
    out << "model " << kind << (kind == "fc" ? " (fully connected baseline)" : "") << '\n';
    opt.on_epoch = [&](const std::vector<EpochMetrics>& rows) {
      print_metrics(out, rows, printed);
      printed = rows.size();
      out.flush();
    };
    const auto history = train(model, train_set, test_set, opt);
    const fs::path dir = g.out_dir();
    write_metrics_csv(dir / ("sudoku_" + kind + "_metrics.csv"), history);
    const auto params = model.parameters();
    save_checkpoint(dir / ("sudoku_" + kind + ".json"), params,
                    {{"model", kind}, {"constraints", a.constraints}, {"hidden", a.hidden}});
    if (kind == "optnet") {
      const auto& layer = dynamic_cast<SudokuOptNetLayer&>(*model.layers.front());
      out << "learned_A_rank " << numerical_rank(layer.A.value, 1e-6) << '\n';
    }
  }
  return kExitOk;
}

int run_sudoku_eval(const Globals& g, const SudokuArgs& a, std::ostream& out) {
  if (a.checkpoint.empty()) throw std::invalid_argument("sudoku eval: --checkpoint is required");
  const SudokuDataset d = sudoku_data(g, a, out);
  std::ifstream in(a.checkpoint);
  if (!in) throw CheckpointError("cannot open " + a.checkpoint);
  const auto meta = nlohmann::json::parse(in).at("meta");
  SudokuArgs b = a;
  b.constraints = meta.value("constraints", a.constraints);
  b.hidden = meta.value("hidden", a.hidden);
  Sequential model = sudoku_model(g, meta.at("model").get<std::string>(), b);
  const auto params = model.parameters();
  load_checkpoint(a.checkpoint, params);
  const EpochMetrics m = evaluate(model, d.test(), board_errors, a.batch, 0, "test");
  out << "model " << meta.at("model").get<std::string>() << '\n'
      << "test_mse " << fmt(m.loss) << '\n'
      << "test_board_error " << fmt(m.error) << '\n';
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentiable QP layers: solver, gradient checks, benchmarks and experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--tol", g.tol, "Residual and duality-gap tolerance")->capture_default_str();
  app.add_option("--max-iter", g.max_iter, "Interior-point iteration limit")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "Batch-level parallelism")->capture_default_str();

  std::function<int()> action;

  std::string qp_path;
  auto* solve_cmd = app.add_subcommand("solve", "Solve the QP(s) in a JSON file");
  solve_cmd->add_option("file", qp_path, "QP JSON file")->required();
  solve_cmd->callback([&] { action = [&] { return run_solve(g, qp_path, out); }; });

  std::size_t gc_count = 50;
  double gc_delta = 1e-6;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of QP gradients");
  gc_cmd->add_option("--count", gc_count, "Number of random QPs")->capture_default_str();
  gc_cmd->add_option("--delta", gc_delta, "Central-difference step")->capture_default_str();
  gc_cmd->callback([&] { action = [&] { return run_gradcheck(g, gc_count, gc_delta, out); }; });

  std::size_t bn = 50, bm = 0, bp = 50;
  std::vector<std::size_t> batches = {1, 16, 32, 64, 128};
  int repeats = 3;
  auto* bench_cmd = app.add_subcommand("bench", "Batched vs sequential solve timing (CSV)");
  bench_cmd->add_option("--n", bn, "Variables")->capture_default_str();
  bench_cmd->add_option("--m", bm, "Equality constraints")->capture_default_str();
  bench_cmd->add_option("--p", bp, "Inequality constraints")->capture_default_str();
  bench_cmd->add_option("--batch", batches, "Batch sizes")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--repeats", repeats, "Timing repeats (best kept)")->capture_default_str();
  bench_cmd->callback(
      [&] { action = [&] { return run_bench(g, bn, bm, bp, batches, repeats, out, err); }; });

  DenoiseArgs da;
  auto* den = app.add_subcommand("denoise", "Total-variation denoising experiments");
  den->require_subcommand(1);
  den->fallthrough();
  den->add_option("--data", da.data, "Load the dataset from this directory");
  den->add_option("--T", da.signals.length, "Signal length")->capture_default_str();
  den->add_option("--segments", da.signals.segments, "Pieces per signal")->capture_default_str();
  den->add_option("--sigma", da.signals.noise_sigma, "Noise standard deviation")
      ->capture_default_str();
  den->add_option("--n-train", da.signals.n_train, "Training signals")->capture_default_str();
  den->add_option("--n-test", da.signals.n_test, "Test signals")->capture_default_str();
  den->add_option("--grid", da.grid, "Sweep grid for the TV weight")->delimiter(',');
  auto* sweep_cmd = den->add_subcommand("sweep", "TV baseline over a grid of weights");
  sweep_cmd->callback([&] {
    action = [&] {
      const SignalDataset d = denoise_data(g, da, out);
      const SweepResult s = denoise_sweep(g, d, da, out);
      for (const auto& p : s.curve)
        out << "tv_weight " << fmt(p.tv_weight) << " train_mse " << fmt(p.train_mse)
            << " test_mse " << fmt(p.test_mse) << '\n';
      return kExitOk;
    };
  });
  for (bool finetune : {false, true}) {
    auto* cmd = den->add_subcommand(finetune ? "finetune" : "train",
                                    finetune ? "Learn D starting from the differencing matrix"
                                             : "Learn D from a random start");
    cmd->add_option("--epochs", da.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--lr", da.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--batch", da.batch, "Minibatch size")->capture_default_str();
    cmd->add_option("--tv-weight", da.tv_weight,
                    finetune ? "Fixed TV weight (default: best from a sweep)"
                             : "TV weight (default 4)");
    cmd->add_flag("--learn-weight", da.learn_weight, "Also learn the TV weight");
    if (!finetune) cmd->add_option("--rows", da.rows, "Rows of the learned D (default T-1)");
    cmd->callback([&, finetune] {
      action = [&, finetune] { return run_denoise_train(g, da, finetune, out); };
    });
  }

  SudokuArgs sa;
  auto* sud = app.add_subcommand("sudoku", "Mini-Sudoku experiments");
  sud->require_subcommand(1);
  sud->fallthrough();
  sud->add_option("--data", sa.data, "Load the dataset from this directory");
  sud->add_option("--n-train", sa.n_train, "Training puzzles")->capture_default_str();
  sud->add_option("--n-test", sa.n_test, "Test puzzles")->capture_default_str();
  sud->add_option("--givens", sa.givens, "Givens per puzzle")->capture_default_str();
  sud->add_flag("--full-scale", sa.full_scale, "Generate 9000 train / 1000 test puzzles");
  sud->add_option("--batch", sa.batch, "Minibatch size")->capture_default_str();
  auto* gen_cmd = sud->add_subcommand("gen", "Generate and save a dataset");
  gen_cmd->callback([&] { action = [&] { return run_sudoku_gen(g, sa, out); }; });
  auto* st_cmd = sud->add_subcommand("train", "Train the OptNet model and/or the FC baseline");
  st_cmd->add_option("--model", sa.model, "optnet, fc or both")->capture_default_str();
  st_cmd->add_option("--epochs", sa.epochs, "Training epochs")->capture_default_str();
  st_cmd->add_option("--lr", sa.lr, "Adam learning rate for the OptNet model")
      ->capture_default_str();
  st_cmd->add_option("--fc-lr", sa.fc_lr, "Adam learning rate for the FC baseline")
      ->capture_default_str();
  st_cmd->add_option("--constraints", sa.constraints, "Learnable equality rows")
      ->capture_default_str();
  st_cmd->add_option("--hidden", sa.hidden, "FC hidden width")->capture_default_str();
  st_cmd->callback([&] { action = [&] { return run_sudoku_train(g, sa, out); }; });
  auto* ev_cmd = sud->add_subcommand("eval", "Evaluate a saved model on the test split");
  ev_cmd->add_option("--checkpoint", sa.checkpoint, "Checkpoint manifest")->required();
  ev_cmd->callback([&] { action = [&] { return run_sudoku_eval(g, sa, out); }; });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return e.get_exit_code() == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (g.threads < 1) throw std::invalid_argument("--threads must be at least 1");
    return action ? action() : kExitBadInput;
  } catch (const LayerSolveError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const NumericalFailureError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadInput;
  }
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace optnet
