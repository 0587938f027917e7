#include "optnet/sudoku.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "optnet/checkpoint.hpp"
#include "optnet/layer.hpp"

namespace optnet {

using nlohmann::json;

namespace {

std::size_t block_of(std::size_t r, std::size_t c) { return (r / 2) * 2 + c / 2; }

bool can_place(const SudokuBoard& b, std::size_t cell, int v) {
  const std::size_t r = cell / 4, c = cell % 4;
  for (std::size_t k = 0; k < 4; ++k) {
    if (k != c && b.at(r, k) == v) return false;
    if (k != r && b.at(k, c) == v) return false;
  }
  const std::size_t br = (r / 2) * 2, bc = (c / 2) * 2;
  for (std::size_t i = br; i < br + 2; ++i)
    for (std::size_t j = bc; j < bc + 2; ++j)
      if ((i != r || j != c) && b.at(i, j) == v) return false;
  return true;
}

/// Calls visit(board) for each completion in search order until it
/// returns false.
template <class Order, class Visit>
bool search(SudokuBoard& b, std::size_t from, Order&& order, Visit&& visit) {
  std::size_t cell = from;
  while (cell < 16 && b.cells[cell] != 0) ++cell;
  if (cell == 16) return visit(b);
  for (int v : order()) {
    if (!can_place(b, cell, v)) continue;
    b.cells[cell] = v;
    if (!search(b, cell + 1, order, visit)) {
      b.cells[cell] = 0;
      return false;
    }
    b.cells[cell] = 0;
  }
  return true;
}

std::array<int, 4> in_order() { return {1, 2, 3, 4}; }

}  // namespace

SudokuBoard SudokuBoard::from_rows(const std::array<std::string, 4>& rows) {
  SudokuBoard b;
  for (std::size_t r = 0; r < 4; ++r) {
    if (rows[r].size() != 4) throw std::invalid_argument("sudoku rows must have 4 characters");
    for (std::size_t c = 0; c < 4; ++c) {
      const char ch = rows[r][c];
      if (ch >= '1' && ch <= '4') b.at(r, c) = ch - '0';
      else if (ch == '0' || ch == '.' || ch == '_' || ch == ' ') b.at(r, c) = 0;
      else throw std::invalid_argument(std::string("bad sudoku character '") + ch + "'");
    }
  }
  return b;
}

std::array<std::string, 4> SudokuBoard::rows() const {
  std::array<std::string, 4> out;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      out[r].push_back(at(r, c) == 0 ? '.' : static_cast<char>('0' + at(r, c)));
  return out;
}

bool SudokuBoard::valid() const {
  for (std::size_t i = 0; i < 16; ++i) {
    const int v = cells[i];
    if (v < 0 || v > 4) return false;
    if (v != 0 && !can_place(*this, i, v)) return false;
  }
  return true;
}

bool SudokuBoard::complete() const {
  return std::none_of(cells.begin(), cells.end(), [](int v) { return v == 0; });
}

std::size_t SudokuBoard::givens() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](int v) { return v != 0; }));
}

SudokuBoard solve_sudoku_backtrack(const SudokuBoard& board) {
  if (!board.valid()) throw UnsatisfiableError("sudoku: board violates the rules");
  SudokuBoard work = board, found;
  bool ok = false;
  search(work, 0, in_order, [&](const SudokuBoard& b) {
    found = b;
    ok = true;
    return false;
  });
  if (!ok) throw UnsatisfiableError("sudoku: board has no completion");
  return found;
}

std::size_t count_solutions(const SudokuBoard& board, std::size_t limit) {
  if (!board.valid()) return 0;
  SudokuBoard work = board;
  std::size_t count = 0;
  search(work, 0, in_order, [&](const SudokuBoard&) { return ++count < limit; });
  return count;
}

SudokuBoard random_solved_board(std::mt19937_64& rng) {
  SudokuBoard work, found;
  auto shuffled = [&] {
    std::array<int, 4> v = {1, 2, 3, 4};
    std::shuffle(v.begin(), v.end(), rng);
    return v;
  };
  search(work, 0, shuffled, [&](const SudokuBoard& b) {
    found = b;
    return false;
  });
  return found;
}

Vector one_hot(const SudokuBoard& board) {
  Vector z(64, 0.0);
  for (std::size_t i = 0; i < 16; ++i)
    if (board.cells[i] > 0) z[i * 4 + static_cast<std::size_t>(board.cells[i] - 1)] = 1.0;
  return z;
}

SudokuBoard decode_argmax(std::span<const double> z) {
  require_shape(z.size() == 64, "decode_argmax: need 64 entries");
  SudokuBoard b;
  for (std::size_t i = 0; i < 16; ++i) {
    std::size_t best = 0;
    for (std::size_t v = 1; v < 4; ++v)
      if (z[i * 4 + v] > z[i * 4 + best]) best = v;
    b.cells[i] = static_cast<int>(best) + 1;
  }
  return b;
}

Dataset encode_pairs(const std::vector<SudokuBoard>& puzzles,
                     const std::vector<SudokuBoard>& solutions) {
  require_shape(puzzles.size() == solutions.size(), "encode_pairs: count mismatch");
  Dataset d{Matrix(puzzles.size(), 64), Matrix(puzzles.size(), 64)};
  for (std::size_t i = 0; i < puzzles.size(); ++i) {
    const Vector p = one_hot(puzzles[i]), s = one_hot(solutions[i]);
    std::copy(p.begin(), p.end(), d.inputs.row(i).begin());
    std::copy(s.begin(), s.end(), d.targets.row(i).begin());
  }
  return d;
}

Dataset SudokuDataset::train() const { return encode_pairs(train_puzzles, train_solutions); }
Dataset SudokuDataset::test() const { return encode_pairs(test_puzzles, test_solutions); }

SudokuDataset generate_sudoku_dataset(std::size_t n_train, std::size_t n_test,
                                      std::size_t n_givens, std::uint64_t seed) {
  if (n_givens < 4 || n_givens > 16)
    throw std::invalid_argument("generate_sudoku_dataset: n_givens must be in [4, 16]");
  SudokuDataset d;
  d.n_givens = n_givens;
  d.seed = seed;
  std::mt19937_64 rng(seed);
  std::array<std::size_t, 16> positions;
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  auto make = [&](std::vector<SudokuBoard>& puzzles, std::vector<SudokuBoard>& solutions,
                  std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const SudokuBoard solution = random_solved_board(rng);
      std::shuffle(positions.begin(), positions.end(), rng);
      SudokuBoard puzzle = solution;
      for (std::size_t k = n_givens; k < 16; ++k) puzzle.cells[positions[k]] = 0;
      puzzles.push_back(puzzle);
      solutions.push_back(solution);
    }
  };
  make(d.train_puzzles, d.train_solutions, n_train);
  make(d.test_puzzles, d.test_solutions, n_test);
  return d;
}

void save_sudoku_dataset(const std::filesystem::path& dir, const SudokuDataset& d) {
  std::filesystem::create_directories(dir);
  std::vector<double> all;
  for (const auto* boards :
       {&d.train_puzzles, &d.train_solutions, &d.test_puzzles, &d.test_solutions})
    for (const auto& b : *boards)
      for (int v : b.cells) all.push_back(v);
  write_raw_doubles(dir / "sudoku.bin", all);
  json j = {{"format", "optnet-sudoku"},
            {"version", 1},
            {"dtype", "float64-le"},
            {"data", "sudoku.bin"},
            {"order", {"train_puzzles", "train_solutions", "test_puzzles", "test_solutions"}},
            {"cells_per_board", 16},
            {"n_train", d.train_puzzles.size()},
            {"n_test", d.test_puzzles.size()},
            {"n_givens", d.n_givens},
            {"seed", d.seed}};
  std::ofstream out(dir / "sudoku.json");
  if (!out) throw CheckpointError("cannot write " + (dir / "sudoku.json").string());
  out << j.dump(2) << '\n';
}

SudokuDataset load_sudoku_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "sudoku.json");
  if (!in) throw CheckpointError("cannot open " + (dir / "sudoku.json").string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("sudoku.json: ") + e.what());
  }
  SudokuDataset d;
  d.n_givens = j.at("n_givens").get<std::size_t>();
  d.seed = j.at("seed").get<std::uint64_t>();
  const auto n_train = j.at("n_train").get<std::size_t>();
  const auto n_test = j.at("n_test").get<std::size_t>();
  const auto all = read_raw_doubles(dir / j.at("data").get<std::string>());
  if (all.size() != 32 * (n_train + n_test)) throw CheckpointError("sudoku.bin has the wrong size");
  std::size_t pos = 0;
  auto take = [&](std::vector<SudokuBoard>& out, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      SudokuBoard b;
      for (auto& v : b.cells) v = static_cast<int>(all[pos++]);
      if (!b.valid()) throw CheckpointError("sudoku.bin holds an invalid board");
      out.push_back(b);
    }
  };
  take(d.train_puzzles, n_train);
  take(d.train_solutions, n_train);
  take(d.test_puzzles, n_test);
  take(d.test_solutions, n_test);
  return d;
}

double board_errors(const Matrix& pred, const Matrix& target) {
  require_shape(pred.rows() == target.rows() && pred.cols() == 64 && target.cols() == 64,
                "board_errors: need 64 columns");
  double wrong = 0;
  for (std::size_t i = 0; i < pred.rows(); ++i)
    if (!(decode_argmax(pred.row(i)) == decode_argmax(target.row(i)))) wrong += 1;
  return wrong;
}

Matrix sudoku_constraint_matrix() {
  Matrix A(64, 64);
  auto idx = [](std::size_t r, std::size_t c, std::size_t v) { return (r * 4 + c) * 4 + v; };
  std::size_t row = 0;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c, ++row)
      for (std::size_t v = 0; v < 4; ++v) A(row, idx(r, c, v)) = 1.0;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t v = 0; v < 4; ++v, ++row)
      for (std::size_t c = 0; c < 4; ++c) A(row, idx(r, c, v)) = 1.0;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t v = 0; v < 4; ++v, ++row)
      for (std::size_t r = 0; r < 4; ++r) A(row, idx(r, c, v)) = 1.0;
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t v = 0; v < 4; ++v, ++row)
      for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c)
          if (block_of(r, c) == b) A(row, idx(r, c, v)) = 1.0;
  return A;
}

Matrix independent_rows(const Matrix& a, double rel_tol) {
  std::vector<std::size_t> keep;
  Matrix current(0, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::vector<double> data = current.values();
    data.insert(data.end(), a.row(i).begin(), a.row(i).end());
    Matrix trial(keep.size() + 1, a.cols(), std::move(data));
    if (numerical_rank(trial, rel_tol) == keep.size() + 1) {
      keep.push_back(i);
      current = std::move(trial);
    }
  }
  return current;
}

Sequential make_sudoku_optnet(std::size_t constraints, std::uint64_t seed, int threads) {
  Sequential model;
  auto& layer = model.emplace<SudokuOptNetLayer>(64, constraints, seed);
  layer.options.threads = threads;
  return model;
}

Sequential make_sudoku_fc(std::size_t hidden, std::uint64_t seed) {
  Sequential model;
  model.emplace<Linear>(64, hidden, seed);
  model.emplace<ReLU>();
  model.emplace<Linear>(hidden, hidden, seed + 1);
  model.emplace<ReLU>();
  model.emplace<Linear>(hidden, 64, seed + 2);
  return model;
}

}  // namespace optnet
