#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace wbary {

/// Extents of a dense C-order tensor (last axis fastest).
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

/// Banded 1-D linear map applied along one tensor axis. Row r stores
/// `width` coefficients for columns first[r] .. first[r] + width - 1.
struct AxisOperator {
  int rows = 0;
  int cols = 0;
  int width = 0;
  std::vector<int> first;
  std::vector<double> values;  // rows * width

  /// Compresses a dense row-major matrix to its minimal per-row band.
  static AxisOperator from_dense(int rows, int cols, std::span<const double> dense);

  [[nodiscard]] double at(int r, int c) const;
  [[nodiscard]] std::vector<double> to_dense() const;
  [[nodiscard]] AxisOperator transposed() const;
  [[nodiscard]] std::vector<double> diagonal() const;
};

/// out = op applied along `axis` of `in` (shape `shape`). The output shape
/// is `shape` with shape[axis] replaced by op.rows. When `accumulate` is
/// set the result is added to `out`, which must already be sized.
void apply_along_axis(const AxisOperator& op, std::span<const double> in, const Shape& shape,
                      std::size_t axis, std::vector<double>& out, bool accumulate = false);

/// Applies one operator per axis (nullptr = identity) and returns the
/// result together with its shape.
struct TensorResult {
  std::vector<double> data;
  Shape shape;
};
TensorResult apply_tensor_product(std::span<const AxisOperator* const> ops, std::span<const double> in,
                                  const Shape& shape);

}  // namespace wbary
