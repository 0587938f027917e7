#pragma once

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

#include "optnet/matrix.hpp"
#include "optnet/parallel.hpp"

namespace optnet {

/// A stack of equally shaped matrices stored contiguously, batch axis
/// outermost.
class BatchMatrix {
 public:
  BatchMatrix() = default;
  BatchMatrix(std::size_t batch, std::size_t rows, std::size_t cols)
      : batch_(batch), rows_(rows), cols_(cols), data_(batch * rows * cols, 0.0) {
    require_shape(batch >= 1, "BatchMatrix: batch must be at least 1");
  }

  static BatchMatrix stack(const std::vector<Matrix>& slices) {
    require_shape(!slices.empty(), "BatchMatrix::stack: empty batch");
    BatchMatrix out(slices.size(), slices[0].rows(), slices[0].cols());
    for (std::size_t b = 0; b < slices.size(); ++b) out.set(b, slices[b]);
    return out;
  }

  std::size_t batch() const { return batch_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  Matrix slice(std::size_t b) const {
    const std::size_t stride = rows_ * cols_;
    return Matrix(rows_, cols_,
                  std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(b * stride),
                                      data_.begin() + static_cast<std::ptrdiff_t>((b + 1) * stride)));
  }

  void set(std::size_t b, const Matrix& m) {
    require_shape(m.rows() == rows_ && m.cols() == cols_, "BatchMatrix::set: slice shape mismatch");
    std::copy(m.values().begin(), m.values().end(),
              data_.begin() + static_cast<std::ptrdiff_t>(b * rows_ * cols_));
  }

  const std::vector<double>& values() const { return data_; }

  friend bool operator==(const BatchMatrix&, const BatchMatrix&) = default;

 private:
  std::size_t batch_ = 0, rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

namespace detail {
inline BatchMatrix pack(const std::vector<Matrix>& out) {
  for (const auto& m : out)
    require_shape(m.rows() == out[0].rows() && m.cols() == out[0].cols(),
                  "batch_map: op produced slices of differing shape");
  return BatchMatrix::stack(out);
}
}  // namespace detail

/// Applies op to every slice. Per-slice arithmetic never depends on the
/// thread count, so results are bitwise identical to batch_map_serial.
template <class Op>
BatchMatrix batch_map(Op op, const BatchMatrix& xs, int threads) {
  std::vector<Matrix> out(xs.batch());
  parallel_for(xs.batch(), threads, [&](std::size_t b) { out[b] = op(xs.slice(b)); });
  return detail::pack(out);
}

template <class Op>
BatchMatrix batch_map(Op op, const BatchMatrix& xs, const BatchMatrix& ys, int threads) {
  require_shape(xs.batch() == ys.batch(), "batch_map: batch sizes differ");
  std::vector<Matrix> out(xs.batch());
  parallel_for(xs.batch(), threads,
               [&](std::size_t b) { out[b] = op(xs.slice(b), ys.slice(b)); });
  return detail::pack(out);
}

template <class Op>
BatchMatrix batch_map_serial(Op op, const BatchMatrix& xs) {
  std::vector<Matrix> out(xs.batch());
  for (std::size_t b = 0; b < xs.batch(); ++b) out[b] = op(xs.slice(b));
  return detail::pack(out);
}

template <class Op>
BatchMatrix batch_map_serial(Op op, const BatchMatrix& xs, const BatchMatrix& ys) {
  require_shape(xs.batch() == ys.batch(), "batch_map: batch sizes differ");
  std::vector<Matrix> out(xs.batch());
  for (std::size_t b = 0; b < xs.batch(); ++b) out[b] = op(xs.slice(b), ys.slice(b));
  return detail::pack(out);
}

}  // namespace optnet
