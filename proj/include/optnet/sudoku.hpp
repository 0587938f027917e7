#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "optnet/matrix.hpp"
#include "optnet/nn.hpp"

namespace optnet {

/// 4×4 mini-Sudoku; 0 is a blank. Blocks are the four 2×2 quadrants.
struct SudokuBoard {
  std::array<int, 16> cells{};

  int at(std::size_t r, std::size_t c) const { return cells[r * 4 + c]; }
  int& at(std::size_t r, std::size_t c) { return cells[r * 4 + c]; }

  /// Four strings of four characters; '0', '.', '_' or ' ' mean blank.
  static SudokuBoard from_rows(const std::array<std::string, 4>& rows);
  std::array<std::string, 4> rows() const;

  /// Values in range and no repeated nonblank value in a row, column or block.
  bool valid() const;
  bool complete() const;
  std::size_t givens() const;

  friend bool operator==(const SudokuBoard&, const SudokuBoard&) = default;
};

class UnsatisfiableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fills blanks in row-major order trying 1..4 in turn; the first
/// completion found. Throws UnsatisfiableError for boards with no completion
/// (including invalid ones).
SudokuBoard solve_sudoku_backtrack(const SudokuBoard& board);

/// Number of completions, stopping once `limit` is reached.
std::size_t count_solutions(const SudokuBoard& board, std::size_t limit = 2);

/// A uniformly shuffled backtracking search from the empty board.
SudokuBoard random_solved_board(std::mt19937_64& rng);

/// 64 entries, index (4r + c)·4 + (v − 1); blanks encode as all zeros.
Vector one_hot(const SudokuBoard& board);
/// Each cell takes the value whose entry is largest (ties go to the
/// smaller value).
SudokuBoard decode_argmax(std::span<const double> z);

struct SudokuDataset {
  std::size_t n_givens = 8;
  std::uint64_t seed = 0;
  std::vector<SudokuBoard> train_puzzles, train_solutions, test_puzzles, test_solutions;

  Dataset train() const;
  Dataset test() const;
};

/// Each pair: a random solved board with all but n_givens cells blanked
/// (positions chosen uniformly). n_givens must lie in [4, 16].
SudokuDataset generate_sudoku_dataset(std::size_t n_train, std::size_t n_test,
                                      std::size_t n_givens, std::uint64_t seed);

/// `dir/sudoku.json` plus `dir/sudoku.bin` (train puzzles, train solutions,
/// test puzzles, test solutions; 16 cells each as doubles).
void save_sudoku_dataset(const std::filesystem::path& dir, const SudokuDataset& data);
SudokuDataset load_sudoku_dataset(const std::filesystem::path& dir);

Dataset encode_pairs(const std::vector<SudokuBoard>& puzzles,
                     const std::vector<SudokuBoard>& solutions);

/// Number of rows whose decoded board differs from the decoded target in
/// any cell.
double board_errors(const Matrix& pred, const Matrix& target);

/// The 64 linear equalities satisfied by the one-hot encoding of every
/// solved board: each cell holds one value, and each value appears once per
/// row, column and block. Right-hand side all ones.
Matrix sudoku_constraint_matrix();

/// A maximal linearly independent subset of the rows, chosen greedily in
/// order.
Matrix independent_rows(const Matrix& a, double rel_tol = 1e-10);

/// OptNet model: one SudokuOptNetLayer with `constraints` learnable rows.
Sequential make_sudoku_optnet(std::size_t constraints, std::uint64_t seed, int threads = 1);
/// The fully connected baseline: 64 → hidden → hidden → 64 with ReLUs.
Sequential make_sudoku_fc(std::size_t hidden, std::uint64_t seed);

}  // namespace optnet
