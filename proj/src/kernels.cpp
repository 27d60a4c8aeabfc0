#include "mplexnet/kernels.hpp"

#include <atomic>

namespace mplexnet::kernels {

namespace {

std::atomic<Exec> g_default_exec{Exec::parallel};

// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;


void check(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

Exec default_exec() { return g_default_exec.load(std::memory_order_relaxed); }
void set_default_exec(Exec exec) { g_default_exec.store(exec, std::memory_order_relaxed); }

namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 8;
constexpr std::size_t kDepthChunk = 128;
constexpr std::size_t kStrip = 32;

// c[0..4, 0..8) += a[0..4, p0..p1) * b[p0..p1, 0..8), accumulated in registers.
inline void mm_tile(const double* a, std::size_t k, const double* b, std::size_t m, double* c, std::size_t p0,
                    std::size_t p1) {
  double acc[kTileRows][kTileCols];
  for (std::size_t r = 0; r < kTileRows; ++r)
    for (std::size_t j = 0; j < kTileCols; ++j) acc[r][j] = c[r * m + j];
  for (std::size_t p = p0; p < p1; ++p) {
    const double* brow = b + p * m;
    for (std::size_t r = 0; r < kTileRows; ++r) {
      const double av = a[r * k + p];
      for (std::size_t j = 0; j < kTileCols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < kTileRows; ++r)
    for (std::size_t j = 0; j < kTileCols; ++j) c[r * m + j] = acc[r][j];
}

inline void mm_edge(const double* a, std::size_t k, const double* b, std::size_t m, double* c, std::size_t p0,
                    std::size_t p1, std::size_t nr, std::size_t nc) {
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t p = p0; p < p1; ++p) {
      const double av = a[r * k + p];
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < nc; ++j) c[r * m + j] += av * brow[j];
    }
}

template <class F>
void for_tasks(std::size_t tasks, bool parallel, F&& run) {
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::size_t t = 0; t < tasks; ++t) run(t);
  } else {
    for (std::size_t t = 0; t < tasks; ++t) run(t);
  }
}

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
            std::size_t k, std::size_t m, Exec exec) {
  check(a.size() == n * k && b.size() == k * m && c.size() == n * m, "matmul: buffer sizes do not match shape");
  // Work unit: a strip of columns of c. Depth is walked in chunks so the
  // strip of b stays in cache; every element accumulates over k in
  // ascending order.
  const std::size_t strips = (m + kStrip - 1) / kStrip;
  for_tasks(strips, exec == Exec::parallel && n * k * m >= kParallelWork, [&](std::size_t s) {
    const std::size_t c0 = s * kStrip;
    const std::size_t c1 = std::min(m, c0 + kStrip);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = c0; j < c1; ++j) c[r * m + j] = 0.0;
    for (std::size_t p0 = 0; p0 < k; p0 += kDepthChunk) {
      const std::size_t p1 = std::min(k, p0 + kDepthChunk);
      for (std::size_t r = 0; r < n; r += kTileRows) {
        const std::size_t nr = std::min(kTileRows, n - r);
        for (std::size_t j = c0; j < c1; j += kTileCols) {
          const std::size_t nc = std::min(kTileCols, c1 - j);
          const double* ap = a.data() + r * k;
          const double* bp = b.data() + j;
          double* cp = c.data() + r * m + j;
          if (nr == kTileRows && nc == kTileCols) mm_tile(ap, k, bp, m, cp, p0, p1);
          else mm_edge(ap, k, bp, m, cp, p0, p1, nr, nc);
        }
      }
    }
  });
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> out, std::size_t n,
                     std::size_t k, std::size_t m, Exec exec) {
  check(a.size() == n * k && g.size() == n * m && out.size() == k * m,
        "matmul_at_b: buffer sizes do not match shape");
  constexpr std::size_t tp = 4, tj = 8;
  const std::size_t tasks = (k + tp - 1) / tp;
  for_tasks(tasks, exec == Exec::parallel && n * k * m >= kParallelWork, [&](std::size_t t) {
    const std::size_t p0 = t * tp;
    const std::size_t np = std::min(tp, k - p0);
    for (std::size_t j0 = 0; j0 < m; j0 += tj) {
      const std::size_t nj = std::min(tj, m - j0);
      if (np == tp && nj == tj) {
        double acc[tp][tj];
        for (std::size_t p = 0; p < tp; ++p)
          for (std::size_t j = 0; j < tj; ++j) acc[p][j] = out[(p0 + p) * m + j0 + j];
        for (std::size_t r = 0; r < n; ++r) {
          const double* grow = g.data() + r * m + j0;
          for (std::size_t p = 0; p < tp; ++p) {
            const double av = a[r * k + p0 + p];
            for (std::size_t j = 0; j < tj; ++j) acc[p][j] += av * grow[j];
          }
        }
        for (std::size_t p = 0; p < tp; ++p)
          for (std::size_t j = 0; j < tj; ++j) out[(p0 + p) * m + j0 + j] = acc[p][j];
      } else {
        for (std::size_t p = p0; p < p0 + np; ++p)
          for (std::size_t r = 0; r < n; ++r) {
            const double av = a[r * k + p];
            for (std::size_t j = j0; j < j0 + nj; ++j) out[p * m + j] += av * g[r * m + j];
          }
      }
    }
  });
}

void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> out, std::size_t n,
                     std::size_t k, std::size_t m, Exec exec) {
  check(g.size() == n * m && b.size() == k * m && out.size() == n * k,
        "matmul_a_bt: buffer sizes do not match shape");
  constexpr std::size_t tr = 4, tp = 4;
  const std::size_t tasks = (k + tp - 1) / tp;
  for_tasks(tasks, exec == Exec::parallel && n * k * m >= kParallelWork, [&](std::size_t t) {
    const std::size_t p0 = t * tp;
    const std::size_t np = std::min(tp, k - p0);
    for (std::size_t r0 = 0; r0 < n; r0 += tr) {
      const std::size_t nr = std::min(tr, n - r0);
      if (np == tp && nr == tr) {
        double acc[tr][tp] = {};
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t r = 0; r < tr; ++r) {
            const double gv = g[(r0 + r) * m + j];
            for (std::size_t p = 0; p < tp; ++p) acc[r][p] += gv * b[(p0 + p) * m + j];
          }
        for (std::size_t r = 0; r < tr; ++r)
          for (std::size_t p = 0; p < tp; ++p) out[(r0 + r) * k + p0 + p] += acc[r][p];
      } else {
        for (std::size_t r = r0; r < r0 + nr; ++r)
          for (std::size_t p = p0; p < p0 + np; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += g[r * m + j] * b[p * m + j];
            out[r * k + p] += s;
          }
      }
    }
  });
}

void spmm(const CsrMatrix<double>& s, std::span<const double> h, std::size_t d, std::span<double> out, Exec exec) {
  check(h.size() == s.cols * d && out.size() == s.rows * d, "spmm: buffer sizes do not match shape");
  auto run = [&](std::size_t r) {
    double* orow = out.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) orow[j] = 0.0;
    for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e) {
      const double w = s.values[e];
      const double* hrow = h.data() + static_cast<std::size_t>(s.col_idx[e]) * d;
      for (std::size_t j = 0; j < d; ++j) orow[j] += w * hrow[j];
    }
  };
  if (exec == Exec::parallel && s.nnz() * d >= kParallelWork) {
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < s.rows; ++r) run(r);
  } else {
    for (std::size_t r = 0; r < s.rows; ++r) run(r);
  }
}

void spmm_t_acc(const CsrMatrix<double>& s, const CsrMatrix<double>* s_transposed, std::span<const double> g,
                std::size_t d, std::span<double> out, Exec exec) {
  check(g.size() == s.rows * d && out.size() == s.cols * d, "spmm_t: buffer sizes do not match shape");
  if (exec == Exec::parallel && s_transposed != nullptr && s.nnz() * d >= kParallelWork) {
    const auto& t = *s_transposed;
    // Transposed rows list source rows in ascending order, which is the order
    // the serial scatter visits them.
#pragma omp parallel for schedule(static)
    for (std::size_t c = 0; c < t.rows; ++c) {
      double* orow = out.data() + c * d;
      for (std::size_t e = t.row_ptr[c]; e < t.row_ptr[c + 1]; ++e) {
        const double w = t.values[e];
        const double* grow = g.data() + static_cast<std::size_t>(t.col_idx[e]) * d;
        for (std::size_t j = 0; j < d; ++j) orow[j] += w * grow[j];
      }
    }
    return;
  }
  for (std::size_t r = 0; r < s.rows; ++r) {
    const double* grow = g.data() + r * d;
    for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e) {
      const double w = s.values[e];
      double* orow = out.data() + static_cast<std::size_t>(s.col_idx[e]) * d;
      for (std::size_t j = 0; j < d; ++j) orow[j] += w * grow[j];
    }
  }
}

}  // namespace mplexnet::kernels
