#include <cstdio>
#include <set>

#include "doctest.h"
#include "prism/grid.hpp"
#include "prism/rotation24.hpp"

using namespace prism;

TEST_CASE("grid indexing is x-fastest") {
    SdfGrid3 g(4);
    g.at(1, 2, 3) = 7.f;
    CHECK(g.v[1 + 4 * (2 + 4 * 3)] == 7.f);
    SdfGrid2 h(4);
    h.at(3, 1) = 5.f;
    CHECK(h.v[3 + 4 * 1] == 5.f);
}

TEST_CASE("threshold and iou") {
    SdfGrid3 g(2, 1.f);
    g.at(0, 0, 0) = -1.f;
    g.at(1, 0, 0) = -0.5f;
    BinaryGrid3 m = threshold(g);
    CHECK(m.at(0, 0, 0) == 1);
    CHECK(m.at(1, 0, 0) == 1);
    CHECK(m.at(0, 1, 0) == 0);

    BinaryGrid3 a(2), b(2);
    a.at(0, 0, 0) = 1;
    a.at(1, 0, 0) = 1;
    b.at(1, 0, 0) = 1;
    b.at(0, 1, 0) = 1;
    CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
    CHECK(iou(BinaryGrid3(2), BinaryGrid3(2)) == 1.0);  // both empty
}

TEST_CASE("vsdf round trip") {
    SdfGrid3 g(6);
    for (size_t i = 0; i < g.count(); ++i) g.v[i] = float(i) * 0.25f - 3.f;
    std::string path = "/tmp/prism_test_grid.vsdf";
    save_vsdf(path, g);
    CHECK(vsdf_rank(path) == 3);
    SdfGrid3 back;
    REQUIRE(load_vsdf(path, back));
    CHECK(back.n == 6);
    CHECK(back.v == g.v);
    std::remove(path.c_str());
}

TEST_CASE("rotation group has 24 distinct proper elements") {
    const auto& G = Rotation24::group();
    REQUIRE(G.size() == 24);
    CHECK(G[0] == Rotation24::identity());
    std::set<std::pair<std::array<int, 3>, std::array<int, 3>>> seen;
    for (const auto& r : G) {
        CHECK(r.determinant() == 1);
        seen.insert({r.axis, r.sign});
        // group closure under inverse
        CHECK(r.compose(r.inverse()) == Rotation24::identity());
    }
    CHECK(seen.size() == 24);
}

TEST_CASE("rot90 generators act as documented") {
    std::array<int, 3> p{1, 2, 3};
    auto q = Rotation24::rot90_x().apply(p);
    CHECK(q == std::array<int, 3>{1, -3, 2});
    q = Rotation24::rot90_y().apply(p);
    CHECK(q == std::array<int, 3>{3, 2, -1});
    q = Rotation24::rot90_z().apply(p);
    CHECK(q == std::array<int, 3>{-2, 1, 3});
}

TEST_CASE("rotate_grid matches pointwise index map") {
    BinaryGrid3 g(4);
    g.at(1, 0, 0) = 1;
    g.at(2, 3, 1) = 1;
    for (const auto& r : Rotation24::group()) {
        BinaryGrid3 out = rotate_grid(g, r);
        int hits = 0;
        for (int z = 0; z < 4; ++z)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x)
                    if (g.at(x, y, z)) {
                        // doubled coordinates center the cube on the origin
                        std::array<int, 3> d{2 * x - 3, 2 * y - 3, 2 * z - 3};
                        auto m = r.apply(d);
                        CHECK(out.at((m[0] + 3) / 2, (m[1] + 3) / 2, (m[2] + 3) / 2) == 1);
                        ++hits;
                    }
        CHECK(hits == 2);
    }
}

TEST_CASE("iou_best_rotation finds the generating rotation") {
    BinaryGrid3 g(8);
    // an asymmetric L of cells
    for (int x = 0; x < 5; ++x) g.at(x, 1, 1) = 1;
    for (int y = 1; y < 4; ++y) g.at(0, y, 1) = 1;
    g.at(0, 1, 2) = 1;
    const auto& rot = Rotation24::group()[13];
    BinaryGrid3 moved = rotate_grid(g, rot.inverse());
    auto best = iou_best_rotation(g, moved);
    CHECK(best.ratio == 1.0);
    CHECK(rotate_grid(moved, best.rot).v == g.v);
}
