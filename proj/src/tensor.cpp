#include "wbary/tensor.hpp"

#include <algorithm>
#include <stdexcept>

#include "wbary/errors.hpp"

namespace wbary {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

AxisOperator AxisOperator::from_dense(int rows, int cols, std::span<const double> dense) {
  if (dense.size() != static_cast<std::size_t>(rows) * cols) {
    throw ShapeError("AxisOperator::from_dense: size mismatch");
  }
  AxisOperator op;
  op.rows = rows;
  op.cols = cols;
  op.first.assign(rows, 0);
  std::vector<int> last(rows, -1);
  int width = 1;
  for (int r = 0; r < rows; ++r) {
    int lo = cols;
    int hi = -1;
    for (int c = 0; c < cols; ++c) {
      if (dense[static_cast<std::size_t>(r) * cols + c] != 0.0) {
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
    }
    if (hi < 0) lo = hi = 0;
    op.first[r] = lo;
    last[r] = hi;
    width = std::max(width, hi - lo + 1);
  }
  width = std::min(width, std::max(cols, 1));
  op.width = width;
  op.values.assign(static_cast<std::size_t>(rows) * width, 0.0);
  for (int r = 0; r < rows; ++r) {
    op.first[r] = std::clamp(op.first[r], 0, std::max(cols - width, 0));
    for (int w = 0; w < width; ++w) {
      const int c = op.first[r] + w;
      if (c < cols) op.values[static_cast<std::size_t>(r) * width + w] = dense[static_cast<std::size_t>(r) * cols + c];
    }
  }
  return op;
}

double AxisOperator::at(int r, int c) const {
  const int w = c - first[r];
  if (w < 0 || w >= width) return 0.0;
  return values[static_cast<std::size_t>(r) * width + w];
}

std::vector<double> AxisOperator::to_dense() const {
  std::vector<double> dense(static_cast<std::size_t>(rows) * cols, 0.0);
  for (int r = 0; r < rows; ++r) {
    for (int w = 0; w < width; ++w) {
      const int c = first[r] + w;
      if (c < cols) dense[static_cast<std::size_t>(r) * cols + c] = values[static_cast<std::size_t>(r) * width + w];
    }
  }
  return dense;
}

AxisOperator AxisOperator::transposed() const {
  const auto dense = to_dense();
  std::vector<double> t(dense.size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) t[static_cast<std::size_t>(c) * rows + r] = dense[static_cast<std::size_t>(r) * cols + c];
  }
  return from_dense(cols, rows, t);
}

std::vector<double> AxisOperator::diagonal() const {
  std::vector<double> d(std::min(rows, cols));
  for (int i = 0; i < static_cast<int>(d.size()); ++i) d[i] = at(i, i);
  return d;
}

void apply_along_axis(const AxisOperator& op, std::span<const double> in, const Shape& shape,
                      std::size_t axis, std::vector<double>& out, bool accumulate) {
  if (axis >= shape.size() || shape[axis] != static_cast<std::size_t>(op.cols) || in.size() != shape_size(shape)) {
    throw ShapeError("apply_along_axis: operator does not match tensor axis");
  }
  std::size_t outer = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= shape[a];
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < shape.size(); ++a) inner *= shape[a];
  const std::size_t n_in = shape[axis];
  const std::size_t n_out = static_cast<std::size_t>(op.rows);
  const std::size_t out_size = outer * n_out * inner;
  if (accumulate) {
    if (out.size() != out_size) throw ShapeError("apply_along_axis: accumulate target has wrong size");
  } else {
    out.assign(out_size, 0.0);
  }
  const int width = op.width;
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = in.data() + o * n_in * inner;
    double* dst = out.data() + o * n_out * inner;
    for (std::size_t r = 0; r < n_out; ++r) {
      double* drow = dst + r * inner;
      const double* coeff = op.values.data() + r * width;
      const std::size_t c0 = static_cast<std::size_t>(op.first[r]);
      for (int w = 0; w < width; ++w) {
        const double a = coeff[w];
        if (a == 0.0) continue;
        const double* srow = src + (c0 + w) * inner;
        for (std::size_t i = 0; i < inner; ++i) drow[i] += a * srow[i];
      }
    }
  }
}

TensorResult apply_tensor_product(std::span<const AxisOperator* const> ops, std::span<const double> in,
                                  const Shape& shape) {
  if (ops.size() != shape.size()) throw ShapeError("apply_tensor_product: one operator per axis required");
  TensorResult cur{std::vector<double>(in.begin(), in.end()), shape};
  std::vector<double> next;
  for (std::size_t a = 0; a < ops.size(); ++a) {
    if (ops[a] == nullptr) continue;
    apply_along_axis(*ops[a], cur.data, cur.shape, a, next);
    cur.data.swap(next);
    cur.shape[a] = static_cast<std::size_t>(ops[a]->rows);
  }
  return cur;
}

}  // namespace wbary
