// Microbenchmarks for the hot paths: codeword assignment, probe-graph edge
// weights, one predictor step, a denoiser forward pass, and SSIM.
#include <benchmark/benchmark.h>

#include "sparsediff/denoiser.hpp"
#include "sparsediff/diffusion.hpp"
#include "sparsediff/metrics.hpp"
#include "sparsediff/predictor.hpp"
#include "sparsediff/rng.hpp"
#include "sparsediff/tensor.hpp"
#include "sparsediff/topology.hpp"
#include "sparsediff/vq.hpp"

namespace {

using namespace sparsediff;

Tensor randn(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.vec()) v = rng.normal();
  return t;
}

Tensor smooth_window(int64_t l, int64_t C, int64_t n, Rng& rng) {
  Tensor w({l, C, n, n});
  double px = rng.uniform(0.5, 2.0), py = rng.uniform(0.5, 2.0);
  for (int64_t t = 0; t < l; ++t)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
          w[((t * C + c) * n + i) * n + j] =
              0.5 + 0.4 * std::sin(px * i + 0.1 * t) * std::cos(py * j);
  return w;
}

void BM_Quantize(benchmark::State& state) {
  const int64_t n = state.range(0), K = 64, d = 32;
  Rng rng(1);
  Tensor latents = randn({n * n, d}, rng);
  vq::Codebook cb;
  cb.codewords = ad::param(randn({K, d}, rng));
  cb.usage_counts.assign(K, 0);
  for (auto _ : state) {
    auto a = vq::quantize(latents, cb, n, n);
    benchmark::DoNotOptimize(a.indices.data());
  }
}
BENCHMARK(BM_Quantize)->Arg(32)->Arg(64);

void BM_EdgeWeights(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng rng(2);
  vq::VQAssignment a;
  a.h = n;
  a.w = n;
  a.indices.resize(static_cast<size_t>(n * n));
  for (auto& idx : a.indices) idx = static_cast<int32_t>(rng.uniform_int(0, 15));
  a.hit_set = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  auto regions = topology::governing_regions(a);
  for (auto _ : state) {
    Tensor w = topology::edge_weights(regions);
    benchmark::DoNotOptimize(w.vec().data());
  }
}
BENCHMARK(BM_EdgeWeights)->Arg(32)->Arg(64);

void BM_PredictStep(benchmark::State& state) {
  const int64_t k = state.range(0), l = 10, C = 2;
  Rng rng(3);
  predictor::GrandConfig cfg;
  predictor::GrandModel model = predictor::make_grand_model(l, C, cfg, rng);
  topology::ProbeGraph g;
  g.probe_states = randn({k, l, C}, rng);
  g.edge_weights = Tensor({k, k}, 1.0 / static_cast<double>(k));
  for (int64_t i = 0; i < k; ++i) g.probe_coords.emplace_back(i, i);
  for (auto _ : state) {
    Tensor out = predictor::predict_step(model, g);
    benchmark::DoNotOptimize(out.vec().data());
  }
}
BENCHMARK(BM_PredictStep)->Arg(16)->Arg(64);

void BM_DenoiserInfer(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng rng(4);
  diffusion::DenoiserConfig cfg;
  cfg.data_channels = 2;
  diffusion::Denoiser den = diffusion::make_denoiser(cfg, rng);
  Tensor x = randn({1, 2, n, n}, rng);
  for (auto _ : state) {
    Tensor out = den.infer(x, 5);
    benchmark::DoNotOptimize(out.vec().data());
  }
}
BENCHMARK(BM_DenoiserInfer)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng rng(5);
  Tensor a = smooth_window(1, 1, n, rng);
  Tensor b = a;
  for (auto& v : b.vec()) v += 0.01 * rng.normal();
  Tensor fa({1, n, n}), fb({1, n, n});
  fa.vec() = a.vec();
  fb.vec() = b.vec();
  for (auto _ : state) {
    double s = metrics::ssim(fa, fb);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
