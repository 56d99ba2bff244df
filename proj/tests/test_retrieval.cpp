#include <cmath>
#include <cstdio>
#include <random>

#include "doctest.h"
#include "prism/fast_marching.hpp"
#include "prism/nets.hpp"
#include "prism/retrieval.hpp"
#include "prism/sketch.hpp"

using namespace prism;
using namespace prism::retrieval;

namespace {

std::map<std::string, ad::Tensor> random_encoder_weights(double scale, uint64_t seed) {
    ad::Graph g;
    std::mt19937_64 rng(seed);
    int x = g.input({1, nets::kProfileRes, nets::kProfileRes});
    nets::build_encoder2d(g, x, scale, rng);
    return g.named_params();
}

}  // namespace

TEST_CASE("extract_loops separates components and holes") {
    BinaryGrid2 m(32);
    // solid square with a hole, plus a separate blob
    for (int y = 4; y < 20; ++y)
        for (int x = 4; x < 20; ++x) m.at(x, y) = 1;
    for (int y = 9; y < 14; ++y)
        for (int x = 9; x < 14; ++x) m.at(x, y) = 0;
    for (int y = 24; y < 29; ++y)
        for (int x = 24; x < 29; ++x) m.at(x, y) = 1;
    auto comps = extract_loops(m);
    REQUIRE(comps.size() == 2);
    int with_hole = comps[0].inners.size() == 1 ? 0 : 1;
    REQUIRE(comps[size_t(with_hole)].inners.size() == 1);
    CHECK(comps[size_t(1 - with_hole)].inners.empty());
    // the hole mask is exactly the cut-out square
    const BinaryGrid2& hole = comps[size_t(with_hole)].inners[0];
    int count = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if (hole.at(x, y)) {
                ++count;
                CHECK((x >= 9 && x < 14 && y >= 9 && y < 14));
            }
    CHECK(count == 25);
}

TEST_CASE("crop_square round trips coordinates within half a pixel") {
    BinaryGrid2 m(128);
    for (int y = 30; y < 50; ++y)
        for (int x = 20; x < 60; ++x) m.at(x, y) = 1;
    CropResult crop = crop_square(m);
    CHECK(crop.mask.n == 128);
    CHECK(crop.sdf.n == 128);
    // centroid of the crop mapped through the transform lands on the source centroid
    double cx = 0, cy = 0, n = 0;
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x)
            if (crop.mask.at(x, y)) {
                cx += (x + 0.5) / 128.0;
                cy += (y + 0.5) / 128.0;
                ++n;
            }
    REQUIRE(n > 0);
    cx /= n;
    cy /= n;
    double wx = crop.transform.offset_x + crop.transform.scale * cx;
    double wy = crop.transform.offset_y + crop.transform.scale * cy;
    CHECK(std::abs(wx - 40.0 / 128.0) <= 0.5 / 128.0);
    CHECK(std::abs(wy - 40.0 / 128.0) <= 0.5 / 128.0);
    // the square window keeps the aspect ratio: content fills ~1/1.2 of the long side
    CHECK(crop.transform.scale == doctest::Approx(40.0 / 128.0 * 1.2).epsilon(0.1));
}

TEST_CASE("nearest is exact and breaks ties toward the lowest index") {
    EmbeddingIndex idx;
    idx.ids = {"a", "b", "c"};
    idx.embeddings = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};
    auto [i, d] = nearest(idx, {1.0, 0.0});
    CHECK(i == 0);
    CHECK(d == 0.0);
    auto [j, dj] = nearest(idx, {0.0, 0.9});
    CHECK(j == 1);
}

TEST_CASE("index save/load round trip") {
    EmbeddingIndex idx;
    idx.checkpoint_checksum = "00ff";
    std::mt19937_64 rng(1);
    std::normal_distribution<double> d;
    for (int k = 0; k < 5; ++k) {
        idx.ids.push_back("v" + std::to_string(k));
        std::vector<double> e(nets::kEmbed2d);
        for (auto& x : e) x = d(rng);
        idx.embeddings.push_back(e);
    }
    save_index(idx, "/tmp/prism_test.pidx", "/tmp/prism_test.json");
    auto back = load_index("/tmp/prism_test.pidx", "/tmp/prism_test.json");
    CHECK(back.ids == idx.ids);
    CHECK(back.checkpoint_checksum == "00ff");
    REQUIRE(back.embeddings.size() == 5);
    for (size_t k = 0; k < 5; ++k)
        for (size_t c = 0; c < size_t(nets::kEmbed2d); ++c)
            CHECK(back.embeddings[k][c] == doctest::Approx(float(idx.embeddings[k][c])));
    std::remove("/tmp/prism_test.pidx");
    std::remove("/tmp/prism_test.json");
}

TEST_CASE("self retrieval with any encoder has distance zero") {
    auto weights = random_encoder_weights(0.125, 3);
    ProfileEncoder enc(weights, 0.125);
    EmbeddingIndex idx;
    std::vector<sketch::SketchVariation> vars;
    int k = 0;
    for (const auto& name : {"rectangle", "slot", "hexagon"}) {
        const auto& t = sketch::template_by_name(name);
        auto inst = sketch::instantiate(t, t.seed_params());
        REQUIRE(inst.ok());
        vars.push_back({t.name, t.seed_params(), inst.loops, sketch::wl_hash(inst.loops)});
        idx.ids.push_back("v" + std::to_string(k++));
        idx.embeddings.push_back(
            enc.embed(sdf_from_binary(sketch::rasterize(inst.loops, nets::kProfileRes))));
    }
    for (size_t i = 0; i < vars.size(); ++i) {
        auto z = enc.embed(sdf_from_binary(sketch::rasterize(vars[i].loops, nets::kProfileRes)));
        auto [j, d] = nearest(idx, z);
        CHECK(j == int(i));
        CHECK(d == 0.0);
    }
}

TEST_CASE("fit_parameters recovers a rectangle placement") {
    const auto& t = sketch::template_by_name("rectangle");
    // target: rectangle 0.6 x 0.3 scaled 0.7 and shifted
    auto inst = sketch::instantiate(t, {0.6, 0.3});
    REQUIRE(inst.ok());
    sketch::Loop placed = sketch::transform_loop(inst.loops[0], 0.7, 0.1, -0.05);
    BinaryGrid2 target = sketch::rasterize({placed}, 128);
    // init off by a few percent in every coordinate
    auto fit = fit_parameters(t, {0.55, 0.33}, 0.13, -0.02, 0.65, target);
    CHECK(fit.iou >= 0.98);
    CHECK(fit.iterations > 0);
    CHECK(sketch::rasterize(fit.loops(), 128).n == 128);
}

TEST_CASE("fitting a circle to a hexagon approaches the analytic optimum") {
    const auto& hex = sketch::template_by_name("hexagon");
    auto inst = sketch::instantiate(hex, {0.35});
    REQUIRE(inst.ok());
    BinaryGrid2 target = sketch::rasterize(inst.loops, 128);
    const auto& circle = sketch::template_by_name("circle");
    // transforms scale about the origin: keep the circle centered on (0.5, 0.5)
    double s0 = std::sqrt(3.0) * 0.35 / 0.25 / 2.0;
    auto fit = fit_parameters(circle, {}, 0.5 * (1 - s0), 0.5 * (1 - s0), s0, target);
    // brute-force oracle over the circle radius (circle template radius is 0.25*scale)
    double best = 0;
    auto c = sketch::instantiate(circle, {});
    for (double s = 1.0; s < 1.7; s += 0.005) {
        BinaryGrid2 m = sketch::rasterize(
            {sketch::transform_loop(c.loops[0], s, 0.5 * (1 - s), 0.5 * (1 - s))}, 128);
        best = std::max(best, iou(m, target));
    }
    CHECK(best > 0.85);  // hexagon-in-circle overlap tops out near 0.9
    CHECK(best < 0.95);
    CHECK(fit.iou >= best - 0.02);
}

TEST_CASE("retrieve_and_fit reproduces a translated template from its own index") {
    auto weights = random_encoder_weights(0.125, 9);
    ProfileEncoder enc(weights, 0.125);
    std::vector<sketch::SketchVariation> vars;
    EmbeddingIndex idx;
    int k = 0;
    for (const auto& name : {"rectangle", "slot"}) {
        const auto& t = sketch::template_by_name(name);
        for (const auto& v : sketch::flood_variations(t, t.seed_params(), 5)) {
            vars.push_back(v);
            idx.ids.push_back("v" + std::to_string(k++));
            idx.embeddings.push_back(
                enc.embed(sdf_from_binary(sketch::rasterize(v.loops, nets::kProfileRes))));
        }
    }
    sketch::Loop placed = sketch::transform_loop(vars[0].loops[0], 0.8, 0.05, 0.02);
    BinaryGrid2 target = sketch::rasterize({placed}, 128);
    auto fit = retrieve_and_fit(idx, vars, enc, target);
    CHECK(fit.iou >= 0.95);
}
