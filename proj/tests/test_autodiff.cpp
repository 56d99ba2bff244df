#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "prism/autodiff.hpp"
#include "prism/checkpoint.hpp"

using namespace prism::ad;

namespace {

Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double s = 1.0) {
    std::normal_distribution<double> d(0.0, s);
    Tensor t(std::move(shape));
    for (auto& x : t.v) x = d(rng);
    return t;
}

}  // namespace

TEST_CASE("linear layer forward matches by hand") {
    Graph g;
    int x = g.input({2});
    int w = g.param("w", Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
    int b = g.param("b", Tensor({3}, {0.5, -0.5, 1.0}));
    int y = g.linear(x, w, b);
    Context ctx;
    evaluate(g, {{x, Tensor({2}, {1.0, -1.0})}}, ctx);
    CHECK(ctx.val[size_t(y)].v[0] == doctest::Approx(1 - 2 + 0.5));
    CHECK(ctx.val[size_t(y)].v[1] == doctest::Approx(3 - 4 - 0.5));
    CHECK(ctx.val[size_t(y)].v[2] == doctest::Approx(5 - 6 + 1.0));
}

TEST_CASE("bce_with_logits uses the overflow-safe form") {
    Graph g;
    int x = g.input({3});
    int t = g.input({3});
    int l = g.bce_with_logits(x, t);
    Context ctx;
    evaluate(g, {{x, Tensor({3}, {0.0, 50.0, -50.0})}, {t, Tensor({3}, {1.0, 1.0, 0.0})}}, ctx);
    // targets matched with saturated logits contribute ~0; the first term is ln 2
    CHECK(ctx.val[size_t(l)].v[0] == doctest::Approx(std::log(2.0) / 3.0).epsilon(1e-9));
}

TEST_CASE("per-op gradient checks") {
    std::mt19937_64 rng(7);
    auto check = [&](Graph& g, const std::map<int, Tensor>& feeds, int loss) {
        auto rep = grad_check(g, feeds, loss, 1e-4, 4, rng);
        for (const auto& e : rep.entries) INFO(e.name, " rel err ", e.max_rel_err);
        CHECK(rep.pass);
    };

    SUBCASE("linear") {
        Graph g;
        int x = g.input({5});
        int w = g.param("w", randn({4, 5}, rng));
        int b = g.param("b", randn({4}, rng));
        check(g, {{x, randn({5}, rng)}}, g.mean(g.relu(g.linear(x, w, b))));
    }
    SUBCASE("conv2d") {
        Graph g;
        int x = g.input({2, 8, 8});
        int w = g.param("w", randn({3, 2, 4, 4}, rng, 0.3));
        int b = g.param("b", randn({3}, rng));
        check(g, {{x, randn({2, 8, 8}, rng)}}, g.mean(g.leaky_relu(g.conv2d(x, w, b, 4, 2, 1), 0.2)));
    }
    SUBCASE("conv3d") {
        Graph g;
        int x = g.input({1, 6, 6, 6});
        int w = g.param("w", randn({2, 1, 4, 4, 4}, rng, 0.3));
        int b = g.param("b", randn({2}, rng));
        check(g, {{x, randn({1, 6, 6, 6}, rng)}}, g.mean(g.conv3d(x, w, b, 4, 2, 1)));
    }
    SUBCASE("conv_transpose2d") {
        Graph g;
        int x = g.input({2, 5, 5});
        int w = g.param("w", randn({2, 3, 4, 4}, rng, 0.3));
        int b = g.param("b", randn({3}, rng));
        check(g, {{x, randn({2, 5, 5}, rng)}}, g.mean(g.conv_transpose2d(x, w, b, 4, 2, 1)));
    }
    SUBCASE("conv_transpose1d") {
        Graph g;
        int x = g.input({2, 6});
        int w = g.param("w", randn({2, 3, 4}, rng, 0.3));
        int b = g.param("b", randn({3}, rng));
        check(g, {{x, randn({2, 6}, rng)}}, g.mean(g.conv_transpose1d(x, w, b, 4, 2, 1)));
    }
    SUBCASE("min max neg add replicate split reshape transpose") {
        Graph g;
        int a = g.param("a", randn({3, 4}, rng));
        int b = g.param("b", randn({3, 4}, rng));
        int m = g.elementwise_min(a, g.negate(b));
        int n = g.elementwise_max(m, g.add(a, b));
        int r = g.replicate_along_axis(g.reshape(n, {12}), 0, 2);  // [2,12]
        int s = g.split(r, 2, 1);
        check(g, {}, g.mean(g.transpose2d(g.reshape(s, {3, 4}))));
    }
    SUBCASE("bce_with_logits") {
        Graph g;
        int x = g.param("x", randn({6}, rng));
        Tensor t({6});
        for (size_t i = 0; i < 6; ++i) t.v[i] = i % 2;
        check(g, {}, g.bce_with_logits(x, g.constant(t)));
    }
}

TEST_CASE("min routes gradient to the first argument on ties") {
    Graph g;
    int a = g.param("a", Tensor({1}, {2.0}));
    int b = g.param("b", Tensor({1}, {2.0}));
    int l = g.mean(g.elementwise_min(a, b));
    Context ctx;
    evaluate(g, {}, ctx);
    backward(g, l, ctx);
    CHECK(ctx.grad[size_t(a)].v[0] == 1.0);
    CHECK(ctx.grad[size_t(b)].v[0] == 0.0);
}

TEST_CASE("load_params throws on missing names and ignores extras") {
    Graph g;
    g.param("w", Tensor({2}, {1.0, 2.0}));
    std::map<std::string, Tensor> ok{{"w", Tensor({2}, {3.0, 4.0})},
                                     {"unused", Tensor({1}, {0.0})}};
    g.load_params(ok);
    CHECK(g.value(g.find_param("w")).v[0] == 3.0);
    std::map<std::string, Tensor> missing{{"other", Tensor({1}, {0.0})}};
    CHECK_THROWS_AS(g.load_params(missing), std::exception);
}

TEST_CASE("checkpoint round trip preserves shapes and f32 values") {
    std::map<std::string, Tensor> params{
        {"a.w", Tensor({2, 3}, {1, 2, 3, 4, 5, 6})},
        {"b", Tensor({1}, {0.125})},
    };
    std::string path = "/tmp/prism_test_ckpt.prck";
    save_checkpoint(path, params);
    auto back = load_checkpoint(path);
    REQUIRE(back.size() == 2);
    CHECK(back.at("a.w").shape == std::vector<int>{2, 3});
    CHECK(back.at("a.w").v == params.at("a.w").v);
    CHECK(back.at("b").v[0] == 0.125);
    std::remove(path.c_str());
}
