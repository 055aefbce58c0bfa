#include <benchmark/benchmark.h>

#include "spamri/consistency.hpp"
#include "spamri/encoding.hpp"
#include "spamri/evalbench.hpp"
#include "spamri/fft.hpp"
#include "spamri/masks.hpp"
#include "spamri/sampler.hpp"
#include "spamri/tiny_unet.hpp"

namespace {

using namespace spamri;

void BM_Fft2c(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ComplexGrid x = gen_phantom(n, n, 1).image;
  for (auto _ : state) benchmark::DoNotOptimize(fft2c(x));
}
BENCHMARK(BM_Fft2c)->Arg(64)->Arg(128)->Arg(256);

void BM_ForwardAdjoint(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const EncodingOperator op(gen_gaussian_mask(n, n, 4.0, 8, 1), gen_coil_maps(4, n, n, 1));
  const ComplexGrid x = gen_phantom(n, n, 1).image;
  for (auto _ : state) benchmark::DoNotOptimize(op.adjoint(op.forward(x)));
}
BENCHMARK(BM_ForwardAdjoint)->Arg(64)->Arg(128);

void BM_TinyDenoiserEps(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const TinyDenoiserWeights w = init_tiny_denoiser(TinyDenoiserConfig{}, 1);
  const PseudoRealStack x = to_pseudo_real(gen_phantom(n, n, 1).image);
  for (auto _ : state) benchmark::DoNotOptimize(tiny_denoiser_eps(w, x, 1000));
}
BENCHMARK(BM_TinyDenoiserEps)->Arg(64)->Arg(128);

void BM_TrainStep(benchmark::State& state) {
  const TinyDenoiserWeights w = init_tiny_denoiser(TinyDenoiserConfig{}, 1);
  TinyDenoiserWeights grad(w.config());
  const PseudoRealStack x = to_pseudo_real(gen_phantom(64, 64, 1).image);
  const PseudoRealStack target = to_pseudo_real(gen_phantom(64, 64, 2).image);
  for (auto _ : state) benchmark::DoNotOptimize(tiny_denoiser_loss_grad(w, x, 1000, target, grad));
}
BENCHMARK(BM_TrainStep);

void BM_BackprojectAdaptive(benchmark::State& state) {
  const EncodingOperator op(gen_gaussian_mask(64, 64, 4.0, 8, 1), gen_coil_maps(4, 64, 64, 1));
  const KSpaceData y = op.forward(gen_phantom(64, 64, 1).image);
  const ComplexGrid x0 = gen_phantom(64, 64, 2).image;
  const FrequencyWeights w;
  for (auto _ : state) benchmark::DoNotOptimize(backproject_adaptive(x0, y, op, w, ConsistencyState{}));
}
BENCHMARK(BM_BackprojectAdaptive);

// Whole reconstruction with a short plan; per-step cost is this divided by
// the NFE.
void BM_SpaSample(benchmark::State& state) {
  const NoiseSchedule s = cosine_schedule(4000);
  const EncodingOperator op(gen_gaussian_mask(64, 64, 4.0, 8, 1), gen_coil_maps(4, 64, 64, 1));
  const KSpaceData y = op.forward(gen_phantom(64, 64, 1).image);
  const TinyDenoiser den(init_tiny_denoiser(TinyDenoiserConfig{}, 1));
  ReconConfig cfg;
  cfg.reverse_steps = 20;
  cfg.inversion_steps = 5;
  for (auto _ : state) benchmark::DoNotOptimize(spa_mri_sample(y, op, den, s, cfg));
  state.counters["nfe"] = 25;
}
BENCHMARK(BM_SpaSample)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
