#include <benchmark/benchmark.h>

#include "semrecon/autodiff.hpp"
#include "semrecon/losses.hpp"
#include "semrecon/rng.hpp"
#include "semrecon/softras.hpp"
#include "semrecon/synth.hpp"

using namespace semrecon;

namespace {

RasterConfig raster(int size) {
  RasterConfig r;
  r.height = r.width = size;
  return r;
}

Camera bench_camera() {
  Camera c;
  c.scale = 0.6;
  c.quat = quat_from_axis_angle(Vec3(1, 1, 0).normalized(), 0.4);
  return c;
}

// Args: image size, sphere subdivisions.
void BM_RenderSilhouette(benchmark::State& state) {
  const Mesh mesh = make_sphere(static_cast<int>(state.range(1)));
  const RasterConfig rc = raster(static_cast<int>(state.range(0)));
  const Camera cam = bench_camera();
  for (auto _ : state) benchmark::DoNotOptimize(render_silhouette(mesh, cam, rc));
  state.SetItemsProcessed(state.iterations() * rc.height * rc.width);
}
BENCHMARK(BM_RenderSilhouette)->Args({32, 1})->Args({64, 2})->Args({128, 2})->Unit(benchmark::kMicrosecond);

void BM_RenderPartProbs(benchmark::State& state) {
  const Mesh mesh = make_sphere(2);
  const UVMapping mapping = build_uv_mapping(mesh, 32, 32);
  Rng rng(1);
  Grid canonical(32, 32, 4);
  for (double& v : canonical.data()) v = rng.uniform();
  const RasterConfig rc = raster(static_cast<int>(state.range(0)));
  const Camera cam = bench_camera();
  for (auto _ : state) benchmark::DoNotOptimize(render_part_probs(mesh, cam, canonical, mapping, rc));
}
BENCHMARK(BM_RenderPartProbs)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

// Args: image size, template subdivisions.
void BM_ObjectiveGradient(benchmark::State& state) {
  RasterConfig rc = raster(static_cast<int>(state.range(0)));
  const auto scene = make_gradcheck_scene(1, rc, static_cast<int>(state.range(1)), 32);
  for (auto _ : state) {
    ParamVector g;
    benchmark::DoNotOptimize(scene->objective.evaluate(scene->params, &g));
  }
}
BENCHMARK(BM_ObjectiveGradient)->Args({16, 1})->Args({64, 2})->Unit(benchmark::kMillisecond);

void BM_Chamfer(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  std::vector<Vec2> x(n), y(n), g(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
    y[i] = Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
  }
  for (auto _ : state) benchmark::DoNotOptimize(chamfer(x, y, g));
}
BENCHMARK(BM_Chamfer)->Arg(64)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
