#include <benchmark/benchmark.h>

#include <memory>

#include "sphcnn/hrtf_data.hpp"
#include "sphcnn/network.hpp"
#include "sphcnn/rng.hpp"
#include "sphcnn/sphconv.hpp"

using namespace sphcnn;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

void BM_FibonacciGrid(benchmark::State& state) {
  const int points = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fibonacci_grid(points));
  }
}
BENCHMARK(BM_FibonacciGrid)->Arg(480)->Arg(20000);

void BM_BuildShMatrix(benchmark::State& state) {
  const SphericalGrid grid = fibonacci_grid(480);
  const int order = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_sh_matrix(grid, order));
  }
}
BENCHMARK(BM_BuildShMatrix)->Arg(8)->Arg(16);

void BM_SolverConstruct(benchmark::State& state) {
  const SphericalGrid grid = fibonacci_grid(480);
  const int order = static_cast<int>(state.range(0));
  for (auto _ : state) {
    ShSolver solver(grid, order);
    benchmark::DoNotOptimize(solver.condition());
  }
}
BENCHMARK(BM_SolverConstruct)->Arg(8)->Arg(16);

void BM_ShtApply(benchmark::State& state) {
  const SphericalGrid grid = fibonacci_grid(480);
  const ShSolver solver(grid, 16);
  Rng rng(1);
  const Matrix field = random_matrix(480, 93, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solver.sht(field));
  }
}
BENCHMARK(BM_ShtApply);

void BM_ConvLayerForward(benchmark::State& state) {
  Rng rng(2);
  const int order = 16;
  const int channels = 93;
  const ShCoefficients a{random_matrix(sh_count(order), channels, rng), order};
  ZonalKernelBank bank = zero_kernel_bank(order, channels, channels, true);
  for (auto& w : bank.weights) w = random_matrix(channels, channels, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv_layer_forward(a, bank));
  }
}
BENCHMARK(BM_ConvLayerForward);

struct ModelFixture {
  std::shared_ptr<SphericalGrid> sparse =
      std::make_shared<SphericalGrid>(fibonacci_grid(120));
  std::shared_ptr<SphericalGrid> dense =
      std::make_shared<SphericalGrid>(fibonacci_grid(480));
  BasisCache cache;
  ModelParams params;
  ModelWorkspace ws;
  Matrix input;

  ModelFixture() {
    ModelConfig config;
    config.n_map_in = 8;
    config.n_conv = 16;
    config.n_map_out = 16;
    config.channels = 24;
    config.seed = 3;
    params = init_model(config, sparse, dense);
    ws = make_workspace(params, cache);
    Rng rng(4);
    input = random_matrix(120, 24, rng);
  }
};

void BM_ModelForward(benchmark::State& state) {
  static ModelFixture fx;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model_forward(fx.input, fx.params, fx.ws));
  }
}
BENCHMARK(BM_ModelForward);

void BM_ModelForwardBackward(benchmark::State& state) {
  static ModelFixture fx;
  Rng rng(5);
  const Matrix target = random_matrix(480, 24, rng);
  for (auto _ : state) {
    ForwardCache cache;
    const Matrix out = model_forward(fx.input, fx.params, fx.ws, &cache);
    benchmark::DoNotOptimize(
        model_backward(fx.params, fx.ws, cache, lsd_grad(target, out)));
  }
}
BENCHMARK(BM_ModelForwardBackward);

void BM_RotateZ(benchmark::State& state) {
  BasisCache cache;
  const SphericalGrid grid = fibonacci_grid(162);
  const ShBasisMatrix basis = build_sh_matrix(grid, 8);
  Rng rng(6);
  const Matrix field = basis.values * random_matrix(sh_count(8), 1, rng);
  double angle = 0.1;
  for (auto _ : state) {
    angle += 0.01;
    benchmark::DoNotOptimize(rotate_z(field, grid, 8, angle, cache));
  }
}
BENCHMARK(BM_RotateZ);

}  // namespace

BENCHMARK_MAIN();
