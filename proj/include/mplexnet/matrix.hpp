#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "mplexnet/error.hpp"

namespace mplexnet {

/// Plain row-major matrix of reals for data tables (no gradient tracking).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) throw DimensionError("matrix buffer does not match its shape");
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  /// Rows selected by index, in the given order.
  Matrix select_rows(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= rows) throw DimensionError("row index out of range");
      std::copy_n(data.data() + idx[i] * cols, cols, out.data.data() + i * cols);
    }
    return out;
  }

  bool operator==(const Matrix&) const = default;
};

/// [A | B | ...] column-wise concatenation; all parts need equal row counts.
inline Matrix hconcat(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows != parts[0].rows) throw DimensionError("hconcat: row counts differ");
    cols += p.cols;
  }
  Matrix out(parts[0].rows, cols);
  for (std::size_t r = 0; r < out.rows; ++r) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      std::copy_n(p.data.data() + r * p.cols, p.cols, out.data.data() + r * cols + off);
      off += p.cols;
    }
  }
  return out;
}

}  // namespace mplexnet
