#include <benchmark/benchmark.h>

#include <random>

#include "smoothcert/certify.hpp"
#include "smoothcert/patching.hpp"
#include "smoothcert/stats.hpp"

using namespace smoothcert;

namespace {

LinearClassifier random_model(const Shape& shape, std::size_t classes) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.1);
  std::vector<std::vector<double>> w(classes, std::vector<double>(shape.elements()));
  for (auto& row : w) {
    for (auto& v : row) v = g(rng);
  }
  return LinearClassifier(shape, w, std::vector<double>(classes, 0.0));
}

}  // namespace

static void BM_GaussianNoise(benchmark::State& state) {
  const Shape shape{3, 32, 32};
  const NoiseSpec spec{0.25, 7};
  std::uint64_t j = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_noise(spec, SampleKey{0, 0, j++}, shape));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(shape.elements()));
}
BENCHMARK(BM_GaussianNoise);

static void BM_LowerConfBound(benchmark::State& state) {
  const auto n = static_cast<std::uint64_t>(state.range(0));
  std::uint64_t k = n / 2;
  for (auto _ : state) {
    benchmark::DoNotOptimize(stats::lower_conf_bound({0.001, n, k}));
    k = k + 1 > n ? n / 2 : k + 1;
  }
}
BENCHMARK(BM_LowerConfBound)->Arg(100)->Arg(100000);

static void BM_NormalQuantile(benchmark::State& state) {
  double p = 0.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(stats::normal_quantile(p));
    p = p > 0.999 ? 0.5 : p + 1e-4;
  }
}
BENCHMARK(BM_NormalQuantile);

static void BM_DensePatches(benchmark::State& state) {
  const auto x = InputTensor::filled(Shape{3, 32, 32}, 0.5f);
  const PatchSpec spec;
  for (auto _ : state) benchmark::DoNotOptimize(sample_patches(x, spec));
}
BENCHMARK(BM_DensePatches);

static void BM_CertifyStandard(benchmark::State& state) {
  const Shape shape{3, 32, 32};
  const auto model = random_model(shape, 10);
  const auto x = InputTensor::filled(shape, 0.5f);
  CertifyConfig cfg;
  cfg.n0 = 100;
  cfg.n = 2000;
  for (auto _ : state) benchmark::DoNotOptimize(certify(model, x, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.n0 + cfg.n));
}
BENCHMARK(BM_CertifyStandard)->Unit(benchmark::kMillisecond);

static void BM_CertifySmoothMax(benchmark::State& state) {
  const Shape patch{3, 32, 32};
  const auto model = random_model(patch, 10);
  const auto x = InputTensor::filled(Shape{3, 32, 32}, 0.5f);
  CertifyConfig cfg;
  cfg.n0 = 20;
  cfg.n = 200;
  cfg.aggregation = Aggregation::max;
  cfg.patch = PatchSpec{};
  for (auto _ : state) benchmark::DoNotOptimize(certify(model, x, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>((cfg.n0 + cfg.n) * 25));
}
BENCHMARK(BM_CertifySmoothMax)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
