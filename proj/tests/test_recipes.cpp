#include <cmath>
#include <random>

#include "doctest.h"
#include "prism/nets.hpp"
#include "prism/recipes.hpp"

using namespace prism;
using namespace prism::recipes;

TEST_CASE("builtin recipes carry the catalogued priors") {
    auto rs = builtin_recipes();
    REQUIRE(rs.size() == 5);
    CHECK(rs[0].id == "single");
    CHECK(rs[0].prior == doctest::Approx(56.7));
    CHECK(rs[4].id == "orthogonal_cut");
    CHECK(rs[4].steps[1].axis == Axis::X);
    CHECK(rs[4].steps[1].boolean == Boolean::Subtract);
    CHECK(rs[1].steps[1].start_ref.own == false);
    CHECK(rs[1].steps[1].start_ref.plane == Plane::End);
}

TEST_CASE("recipe json round trip") {
    for (const auto& r : builtin_recipes()) {
        auto back = recipe_from_json(recipe_to_json(r));
        CHECK(back.id == r.id);
        CHECK(back.prior == r.prior);
        REQUIRE(back.steps.size() == r.steps.size());
        for (size_t i = 0; i < r.steps.size(); ++i) {
            CHECK(back.steps[i].axis == r.steps[i].axis);
            CHECK(back.steps[i].boolean == r.steps[i].boolean);
            CHECK(back.steps[i].start_ref.own == r.steps[i].start_ref.own);
            CHECK(back.steps[i].end_ref.own == r.steps[i].end_ref.own);
            CHECK(back.steps[i].start_ref.step == r.steps[i].start_ref.step);
            CHECK(back.steps[i].end_ref.plane == r.steps[i].end_ref.plane);
        }
    }
}

TEST_CASE("validate rejects forward plane references") {
    ExtrusionRecipe bad{"bad", 1.0,
                        {Step{Axis::Z, Boolean::Union, {false, 1, Plane::End}, {}},
                         Step{Axis::Z, Boolean::Union, {}, {}}}};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("graph compositor equals the value compositor") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> dist(0.0, 2.0);
    auto rs = builtin_recipes();
    for (const auto& r : rs) {
        // random logits per step
        std::vector<SdfGrid2> profiles;
        std::vector<Envelope> starts, ends;
        for (size_t i = 0; i < r.steps.size(); ++i) {
            SdfGrid2 p(nets::kEnvelopeLen);
            for (auto& v : p.v) v = float(dist(rng));
            profiles.push_back(p);
            Envelope s(nets::kEnvelopeLen), e(nets::kEnvelopeLen);
            for (auto& v : s) v = float(dist(rng));
            for (auto& v : e) v = float(dist(rng));
            starts.push_back(s);
            ends.push_back(e);
        }
        std::vector<SdfGrid3> parts;
        for (size_t i = 0; i < r.steps.size(); ++i)
            parts.push_back(extrude_part_values(profiles[i], starts[i], ends[i], r.steps[i].axis));
        SdfGrid3 want = compose_values(r, parts);

        ad::Graph g;
        std::vector<int> gparts;
        for (size_t i = 0; i < r.steps.size(); ++i) {
            int p = g.input({nets::kEnvelopeLen, nets::kEnvelopeLen});
            int s = g.input({nets::kEnvelopeLen});
            int e = g.input({nets::kEnvelopeLen});
            gparts.push_back(extrude_part(g, p, s, e, r.steps[i].axis));
        }
        int phi = compose(g, r, gparts);
        std::map<int, ad::Tensor> feeds;
        for (size_t i = 0; i < r.steps.size(); ++i) {
            ad::Tensor tp({nets::kEnvelopeLen, nets::kEnvelopeLen});
            for (size_t k = 0; k < tp.count(); ++k) tp.v[k] = profiles[i].v[k];
            ad::Tensor ts({nets::kEnvelopeLen}), te({nets::kEnvelopeLen});
            for (int k = 0; k < nets::kEnvelopeLen; ++k) {
                ts.v[size_t(k)] = starts[i][size_t(k)];
                te.v[size_t(k)] = ends[i][size_t(k)];
            }
            feeds[g.node(gparts[i]).inputs[0]] = tp;  // profile input id ordering
        }
        // feed by walking the graph's input nodes in creation order instead
        feeds.clear();
        int which = 0;
        for (int id = 0; id < g.size(); ++id) {
            if (g.node(id).op != ad::Op::Input) continue;
            size_t step = size_t(which / 3);
            int slot = which % 3;
            if (slot == 0) {
                ad::Tensor tp({nets::kEnvelopeLen, nets::kEnvelopeLen});
                for (size_t k = 0; k < tp.count(); ++k) tp.v[k] = profiles[step].v[k];
                feeds[id] = tp;
            } else {
                ad::Tensor tv({nets::kEnvelopeLen});
                const Envelope& src = slot == 1 ? starts[step] : ends[step];
                for (int k = 0; k < nets::kEnvelopeLen; ++k) tv.v[size_t(k)] = src[size_t(k)];
                feeds[id] = tv;
            }
            ++which;
        }
        ad::Context ctx;
        ad::evaluate(g, feeds, ctx);
        const auto& got = ctx.val[size_t(phi)];
        REQUIRE(got.count() == want.count());
        for (size_t k = 0; k < want.count(); ++k)
            CHECK(got.v[k] == doctest::Approx(double(want.v[k])).epsilon(1e-6));
    }
}

TEST_CASE("decode_model emits shared planes as exact negations or copies") {
    std::mt19937_64 rng(3);
    auto rs = builtin_recipes();
    for (const auto& r : rs) {
        ad::Graph g;
        int z = g.input({nets::kEmbed3d});
        auto out = decode_model(g, z, r, 0.25, rng);
        REQUIRE(out.profiles.size() == r.steps.size());
        ad::Tensor zt({nets::kEmbed3d});
        std::mt19937_64 zrng(17);
        std::normal_distribution<double> dist(0.0, 1.0);
        for (auto& v : zt.v) v = dist(zrng);
        ad::Context ctx;
        ad::evaluate(g, {{z, zt}}, ctx);
        CHECK(ctx.val[size_t(out.phi)].shape ==
              std::vector<int>{nets::kVoxelRes, nets::kVoxelRes, nets::kVoxelRes});
        for (size_t i = 0; i < r.steps.size(); ++i) {
            CHECK(ctx.val[size_t(out.profiles[i])].shape ==
                  std::vector<int>{nets::kProfileRes, nets::kProfileRes});
            CHECK(ctx.val[size_t(out.starts[i])].count() == size_t(nets::kEnvelopeLen));
            CHECK(out.start_decoded[i] == r.steps[i].start_ref.own);
            CHECK(out.end_decoded[i] == r.steps[i].end_ref.own);
            if (!r.steps[i].start_ref.own) {
                const auto& ref = r.steps[i].start_ref;
                int src = ref.plane == Plane::Start ? out.starts[size_t(ref.step)]
                                                    : out.ends[size_t(ref.step)];
                for (int k = 0; k < nets::kEnvelopeLen; ++k) {
                    double want = ctx.val[size_t(src)].v[size_t(k)];
                    if (ref.plane == Plane::End) want = -want;
                    // bit-identical sharing, not approximate
                    CHECK(ctx.val[size_t(out.starts[i])].v[size_t(k)] == want);
                }
            }
            if (!r.steps[i].end_ref.own) {
                const auto& ref = r.steps[i].end_ref;
                int src = ref.plane == Plane::End ? out.ends[size_t(ref.step)]
                                                  : out.starts[size_t(ref.step)];
                for (int k = 0; k < nets::kEnvelopeLen; ++k) {
                    double want = ctx.val[size_t(src)].v[size_t(k)];
                    if (ref.plane == Plane::Start) want = -want;
                    CHECK(ctx.val[size_t(out.ends[i])].v[size_t(k)] == want);
                }
            }
        }
    }
}

TEST_CASE("downsample graph twin equals the value twin") {
    SdfGrid2 p(nets::kProfileRes);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : p.v) v = float(dist(rng));
    SdfGrid2 want = nets::downsample_profile_values(p);
    ad::Graph g;
    int x = g.input({nets::kProfileRes, nets::kProfileRes});
    int y = nets::build_downsample_profile(g, x);
    ad::Tensor xt({nets::kProfileRes, nets::kProfileRes});
    for (size_t k = 0; k < xt.count(); ++k) xt.v[k] = p.v[k];
    ad::Context ctx;
    ad::evaluate(g, {{x, xt}}, ctx);
    REQUIRE(ctx.val[size_t(y)].count() == want.count());
    for (size_t k = 0; k < want.count(); ++k)
        CHECK(ctx.val[size_t(y)].v[k] == doctest::Approx(double(want.v[k])).epsilon(1e-6));
}
