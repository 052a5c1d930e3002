#include <benchmark/benchmark.h>

#include "npvae/matrix.hpp"
#include "npvae/nonparametric.hpp"
#include "npvae/rng.hpp"

using namespace npvae;

namespace {

Matrix uniform_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = uniform_matrix(rng, 128, n), b = uniform_matrix(rng, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 128 * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(512);

static void BM_KernelWeights(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Matrix x = uniform_matrix(rng, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kernel_weights(x, KernelParams{}));
}
BENCHMARK(BM_KernelWeights)->Arg(32)->Arg(128)->Arg(512);

// One full forward/backward of the np-VAE objective at MNIST width.
static void BM_NpVaeLossStep(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const std::size_t z_dims[] = {784, hidden, hidden, 4};
  const std::size_t x_dims[] = {784, hidden, hidden, 2};
  const std::size_t d_dims[] = {2, hidden, hidden, 784};
  const auto z_enc = glorot_init(rng, z_dims, Activation::identity);
  const auto x_enc = glorot_init(rng, x_dims, Activation::identity);
  const auto dec = glorot_init(rng, d_dims, Activation::sigmoid);
  Matrix y(128, 784);
  for (double& v : y.values()) v = rng.uniform();
  for (auto _ : state) {
    Rng eps(4);
    benchmark::DoNotOptimize(npvae_loss(z_enc, x_enc, dec, KernelParams{}, y, eps, {}, 1.0));
  }
}
BENCHMARK(BM_NpVaeLossStep)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
