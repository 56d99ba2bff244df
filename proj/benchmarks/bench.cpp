#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "prism/autodiff.hpp"
#include "prism/fast_marching.hpp"
#include "prism/nets.hpp"
#include "prism/recipes.hpp"
#include "prism/sketch.hpp"

using namespace prism;

namespace {

SdfGrid3 sphere_field(int n) {
    SdfGrid3 g(n);
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double dx = (x + 0.5) / n - 0.5, dy = (y + 0.5) / n - 0.5, dz = (z + 0.5) / n - 0.5;
                g.at(x, y, z) = float(std::sqrt(dx * dx + dy * dy + dz * dz) - 0.3);
            }
    return g;
}

void bm_fast_march_64(benchmark::State& state) {
    SdfGrid3 g = sphere_field(64);
    for (auto _ : state) benchmark::DoNotOptimize(fast_march_reinit(g));
}
BENCHMARK(bm_fast_march_64)->Unit(benchmark::kMillisecond);

void bm_conv3d_forward(benchmark::State& state) {
    ad::Graph g;
    std::mt19937_64 rng(0);
    int x = g.input({1, 64, 64, 64});
    int h = nets::build_voxel_encoder(g, x, 0.25, rng);
    (void)h;
    ad::Tensor in({1, 64, 64, 64});
    std::normal_distribution<double> d;
    for (auto& v : in.v) v = d(rng);
    ad::Context ctx;
    for (auto _ : state) {
        ad::evaluate(g, {{x, in}}, ctx);
        benchmark::DoNotOptimize(ctx.val.back());
    }
}
BENCHMARK(bm_conv3d_forward)->Unit(benchmark::kMillisecond);

void bm_compositor(benchmark::State& state) {
    auto rs = recipes::builtin_recipes();
    const auto& rec = rs[4];  // two orthogonal parts
    std::mt19937_64 rng(1);
    std::normal_distribution<double> d;
    std::vector<SdfGrid3> parts;
    for (size_t i = 0; i < rec.steps.size(); ++i) {
        SdfGrid2 p(nets::kEnvelopeLen);
        for (auto& v : p.v) v = float(d(rng));
        recipes::Envelope s(nets::kEnvelopeLen), e(nets::kEnvelopeLen);
        for (auto& v : s) v = float(d(rng));
        for (auto& v : e) v = float(d(rng));
        parts.push_back(recipes::extrude_part_values(p, s, e, rec.steps[i].axis));
    }
    for (auto _ : state) benchmark::DoNotOptimize(recipes::compose_values(rec, parts));
}
BENCHMARK(bm_compositor)->Unit(benchmark::kMicrosecond);

void bm_rasterize_128(benchmark::State& state) {
    const auto& t = sketch::template_by_name("rounded_rect");
    auto inst = sketch::instantiate(t, {0.6, 0.4, 0.1});
    for (auto _ : state) benchmark::DoNotOptimize(sketch::rasterize(inst.loops, 128));
}
BENCHMARK(bm_rasterize_128)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
