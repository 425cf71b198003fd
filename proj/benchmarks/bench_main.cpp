#include <benchmark/benchmark.h>

#include "visita/visita.hpp"

using namespace visita;

namespace {

Matrix random_normal(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = random_normal(n, n, rng), b = random_normal(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_Attention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const AttentionInput in{random_normal(n, 16, rng), random_normal(n, 16, rng), random_normal(n, 16, rng)};
  for (auto _ : state) benchmark::DoNotOptimize(scaled_dot_attention(in));
}
BENCHMARK(BM_Attention)->Arg(16)->Arg(64);

void BM_TransformerBlock(benchmark::State& state) {
  Rng rng(3);
  const TransformerBlockParams p = TransformerBlockParams::init(64, 4, 128, rng);
  const Matrix x = random_normal(64, 64, rng);
  for (auto _ : state) benchmark::DoNotOptimize(transformer_block(x, p));
}
BENCHMARK(BM_TransformerBlock);

std::vector<Vector> random_points(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<Vector> xs(n, Vector(d));
  for (auto& x : xs)
    for (double& v : x) v = rng.normal();
  return xs;
}

void BM_Gram(benchmark::State& state) {
  Rng rng(4);
  const auto xs = random_points(static_cast<std::size_t>(state.range(0)), 16, rng);
  for (auto _ : state) benchmark::DoNotOptimize(gram_matrix(KernelSpec::rbf(0.5), xs));
}
BENCHMARK(BM_Gram)->Arg(64)->Arg(200);

void BM_Smo(benchmark::State& state) {
  Rng rng(5);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto xs = random_points(n, 4, rng);
  std::vector<int> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = xs[i][0] * xs[i][1] > 0 ? 1 : -1;
  const GramMatrix g = gram_matrix(KernelSpec::rbf(0.5), xs);
  for (auto _ : state) benchmark::DoNotOptimize(solve_smo(g, ys, 1.0));
}
BENCHMARK(BM_Smo)->Arg(64)->Arg(200);

}  // namespace
BENCHMARK_MAIN();
