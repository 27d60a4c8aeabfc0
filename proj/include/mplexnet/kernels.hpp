#pragma once

// Dense and sparse numeric kernels used by the autograd engine and the graph
// algebra. Every kernel has a serial reference path and an OpenMP path. Both
// paths accumulate each output element in the same order, so their results are
// bit-identical regardless of thread count.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mplexnet/error.hpp"

namespace mplexnet::kernels {

enum class Exec { serial, parallel };

/// Execution policy used when callers do not pass one explicitly.
Exec default_exec();
void set_default_exec(Exec exec);

template <class T>
struct Triplet {
  std::size_t row;
  std::size_t col;
  T value;
};

/// Compressed sparse row matrix with sorted, unique column indices per row.
template <class T>
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col_idx;
  std::vector<T> values;

  std::size_t nnz() const { return col_idx.size(); }

  std::span<const std::uint32_t> row_cols(std::size_t r) const {
    return {col_idx.data() + row_ptr[r], row_ptr[r + 1] - row_ptr[r]};
  }
  std::span<const T> row_values(std::size_t r) const {
    return {values.data() + row_ptr[r], row_ptr[r + 1] - row_ptr[r]};
  }

  T at(std::size_t r, std::size_t c) const {
    auto cs = row_cols(r);
    auto it = std::lower_bound(cs.begin(), cs.end(), static_cast<std::uint32_t>(c));
    if (it == cs.end() || *it != c) return T{};
    return values[row_ptr[r] + static_cast<std::size_t>(it - cs.begin())];
  }

  std::vector<T> to_dense() const {
    std::vector<T> out(rows * cols, T{});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e) out[r * cols + col_idx[e]] = values[e];
    return out;
  }

  bool operator==(const CsrMatrix&) const = default;

  /// Builds a matrix from unordered triplets; duplicate coordinates are summed
  /// and explicit zeros are dropped.
  static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet<T>> trips) {
    for (const auto& t : trips)
      if (t.row >= rows || t.col >= cols) throw DimensionError("triplet outside matrix bounds");
    std::sort(trips.begin(), trips.end(), [](const Triplet<T>& a, const Triplet<T>& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    CsrMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.row_ptr.assign(rows + 1, 0);
    for (std::size_t i = 0; i < trips.size();) {
      std::size_t j = i;
      T sum{};
      while (j < trips.size() && trips[j].row == trips[i].row && trips[j].col == trips[i].col) sum += trips[j++].value;
      if (sum != T{}) {
        m.col_idx.push_back(static_cast<std::uint32_t>(trips[i].col));
        m.values.push_back(sum);
        ++m.row_ptr[trips[i].row + 1];
      }
      i = j;
    }
    for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
    return m;
  }

  static CsrMatrix from_dense(std::size_t rows, std::size_t cols, std::span<const T> dense) {
    if (dense.size() != rows * cols) throw DimensionError("dense buffer size does not match shape");
    CsrMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.row_ptr.assign(rows + 1, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (dense[r * cols + c] != T{}) {
          m.col_idx.push_back(static_cast<std::uint32_t>(c));
          m.values.push_back(dense[r * cols + c]);
        }
      }
      m.row_ptr[r + 1] = m.col_idx.size();
    }
    return m;
  }

  CsrMatrix transpose() const {
    CsrMatrix t;
    t.rows = cols;
    t.cols = rows;
    t.row_ptr.assign(cols + 1, 0);
    for (auto c : col_idx) ++t.row_ptr[c + 1];
    for (std::size_t c = 0; c < cols; ++c) t.row_ptr[c + 1] += t.row_ptr[c];
    t.col_idx.resize(nnz());
    t.values.resize(nnz());
    std::vector<std::size_t> fill(t.row_ptr.begin(), t.row_ptr.end() - 1);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e) {
        auto dst = fill[col_idx[e]]++;
        t.col_idx[dst] = static_cast<std::uint32_t>(r);
        t.values[dst] = values[e];
      }
    }
    return t;
  }

  template <class U>
  CsrMatrix<U> cast() const {
    CsrMatrix<U> out;
    out.rows = rows;
    out.cols = cols;
    out.row_ptr = row_ptr;
    out.col_idx = col_idx;
    out.values.assign(values.begin(), values.end());
    return out;
  }
};

/// Sparse-sparse product (Gustavson row merge). Output rows keep sorted columns.
template <class T>
CsrMatrix<T> spgemm(const CsrMatrix<T>& a, const CsrMatrix<T>& b) {
  if (a.cols != b.rows) throw DimensionError("spgemm: inner dimensions differ");
  CsrMatrix<T> c;
  c.rows = a.rows;
  c.cols = b.cols;
  c.row_ptr.assign(a.rows + 1, 0);
  std::vector<T> acc(b.cols, T{});
  std::vector<char> used(b.cols, 0);
  std::vector<std::uint32_t> touched;
  for (std::size_t r = 0; r < a.rows; ++r) {
    touched.clear();
    for (std::size_t e = a.row_ptr[r]; e < a.row_ptr[r + 1]; ++e) {
      const auto k = a.col_idx[e];
      const T av = a.values[e];
      for (std::size_t f = b.row_ptr[k]; f < b.row_ptr[k + 1]; ++f) {
        const auto col = b.col_idx[f];
        if (!used[col]) {
          used[col] = 1;
          touched.push_back(col);
        }
        acc[col] += av * b.values[f];
      }
    }
    std::sort(touched.begin(), touched.end());
    for (auto col : touched) {
      if (acc[col] != T{}) {
        c.col_idx.push_back(col);
        c.values.push_back(acc[col]);
      }
      acc[col] = T{};
      used[col] = 0;
    }
    c.row_ptr[r + 1] = c.col_idx.size();
  }
  return c;
}

// Row-major dense kernels. Shapes: a[n x k], b[k x m], g[n x m].

/// c = a * b (c is overwritten).
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
            std::size_t k, std::size_t m, Exec exec = default_exec());

/// out[k x m] += a^T * g
void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> out, std::size_t n,
                     std::size_t k, std::size_t m, Exec exec = default_exec());

/// out[n x k] += g * b^T
void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> out, std::size_t n,
                     std::size_t k, std::size_t m, Exec exec = default_exec());

/// out[rows x d] = s * h where h is [s.cols x d] (out is overwritten).
void spmm(const CsrMatrix<double>& s, std::span<const double> h, std::size_t d, std::span<double> out,
          Exec exec = default_exec());

/// out[s.cols x d] += s^T * g. The parallel path needs the transpose, passed in
/// so repeated backward calls do not rebuild it.
void spmm_t_acc(const CsrMatrix<double>& s, const CsrMatrix<double>* s_transposed, std::span<const double> g,
                std::size_t d, std::span<double> out, Exec exec = default_exec());

}  // namespace mplexnet::kernels
