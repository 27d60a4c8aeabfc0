// Serial reference vs OpenMP kernels on the shapes that dominate training:
// the flattened multiplex readout (batch x 25344 -> 100) and supra-walk
// aggregation at P=396, K=32.

#include <benchmark/benchmark.h>

#include <random>

#include "mplexnet/kernels.hpp"

using namespace mplexnet::kernels;

namespace {

std::vector<double> rand_vec(std::size_t n) {
  std::mt19937_64 rng(n);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

void BM_ReadoutForward(benchmark::State& st) {
  const std::size_t n = 32, k = 25344, m = 100;
  auto a = rand_vec(n * k), b = rand_vec(k * m);
  std::vector<double> c(n * m);
  for (auto _ : st) {
    matmul(a, b, c, n, k, m, exec_of(st));
    benchmark::DoNotOptimize(c.data());
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * n * k * m));
}

void BM_ReadoutWeightGrad(benchmark::State& st) {
  const std::size_t n = 32, k = 25344, m = 100;
  auto a = rand_vec(n * k), g = rand_vec(n * m);
  std::vector<double> out(k * m);
  for (auto _ : st) {
    matmul_at_b_acc(a, g, out, n, k, m, exec_of(st));
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * n * k * m));
}

void BM_ReadoutInputGrad(benchmark::State& st) {
  const std::size_t n = 32, k = 25344, m = 100;
  auto g = rand_vec(n * m), b = rand_vec(k * m);
  std::vector<double> out(n * k);
  for (auto _ : st) {
    matmul_a_bt_acc(g, b, out, n, k, m, exec_of(st));
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * n * k * m));
}

CsrMatrix<double> supra_walk_like(std::size_t p, std::size_t planes, std::size_t s) {
  // Each plane holds a complete graph on s nodes; the Type I walk row of an
  // active supra-node reaches every copy of its in-plane neighbours.
  std::vector<Triplet<double>> t;
  for (std::size_t k = 0; k < planes; ++k)
    for (std::size_t a = 0; a < s; ++a)
      for (std::size_t b = 0; b < s; ++b)
        if (a != b)
          for (std::size_t k2 = 0; k2 < planes; ++k2)
            t.push_back({k * p + (k * 7 + a) % p, k2 * p + (k * 7 + b) % p, 1.0});
  return CsrMatrix<double>::from_triplets(p * planes, p * planes, t);
}

void BM_SupraSpmm(benchmark::State& st) {
  auto s = supra_walk_like(396, 32, 4);
  auto h = rand_vec(s.cols * 2);
  std::vector<double> out(s.rows * 2);
  for (auto _ : st) {
    spmm(s, h, 2, out, exec_of(st));
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_DenseGcnSpmm(benchmark::State& st) {
  std::vector<double> dense(396 * 396, 1.0 / 396.0);
  auto s = CsrMatrix<double>::from_dense(396, 396, dense);
  auto h = rand_vec(396 * 2);
  std::vector<double> out(396 * 2);
  for (auto _ : st) {
    spmm(s, h, 2, out, exec_of(st));
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_ReadoutForward)->Arg(0)->Arg(1)->ArgName("parallel");
BENCHMARK(BM_ReadoutInputGrad)->Arg(0)->Arg(1)->ArgName("parallel");
BENCHMARK(BM_ReadoutWeightGrad)->Arg(0)->Arg(1)->ArgName("parallel");
BENCHMARK(BM_SupraSpmm)->Arg(0)->Arg(1)->ArgName("parallel");
BENCHMARK(BM_DenseGcnSpmm)->Arg(0)->Arg(1)->ArgName("parallel");

BENCHMARK_MAIN();
