#include <cmath>

#include "doctest.h"
#include "prism/fast_marching.hpp"
#include "prism/grid.hpp"

using namespace prism;

namespace {

SdfGrid3 sphere_field(int n, double r, double distort) {
    SdfGrid3 g(n);
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double dx = (x + 0.5) / n - 0.5, dy = (y + 0.5) / n - 0.5, dz = (z + 0.5) / n - 0.5;
                double d = std::sqrt(dx * dx + dy * dy + dz * dz) - r;
                // distorted but sign-preserving input: reinit must recover d
                g.at(x, y, z) = float(d * (1.0 + distort * std::sin(9 * dx) * std::cos(7 * dy)));
            }
    return g;
}

}  // namespace

TEST_CASE("reinit recovers a sphere distance field") {
    int n = 64;
    double r = 0.3;
    SdfGrid3 g = fast_march_reinit(sphere_field(n, r, 0.6));
    float h = g.spacing();
    double worst_near = 0, worst_far = 0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double dx = (x + 0.5) / n - 0.5, dy = (y + 0.5) / n - 0.5, dz = (z + 0.5) / n - 0.5;
                double d = std::sqrt(dx * dx + dy * dy + dz * dz) - r;
                double err = std::abs(g.at(x, y, z) - d) / h;  // in cells
                if (std::abs(d) < 2 * h)
                    worst_near = std::max(worst_near, err);
                else if (std::abs(d) < 0.18)  // inside the marched band
                    worst_far = std::max(worst_far, err);
            }
    CHECK(worst_near < 0.5);
    CHECK(worst_far < 1.5);
}

TEST_CASE("reinit recovers a circle distance field in 2d") {
    int n = 128;
    double r = 0.3;
    SdfGrid2 g(n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double dx = (x + 0.5) / n - 0.5, dy = (y + 0.5) / n - 0.5;
            double d = std::hypot(dx, dy) - r;
            g.at(x, y) = float(d < 0 ? -1 : 1);  // binary input, worst case
        }
    g = fast_march_reinit(g);
    float h = g.spacing();
    double worst_near = 0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double dx = (x + 0.5) / n - 0.5, dy = (y + 0.5) / n - 0.5;
            double d = std::hypot(dx, dy) - r;
            if (std::abs(d) < 1.5 * h)
                worst_near = std::max(worst_near, std::abs(g.at(x, y) - d) / h);
        }
    CHECK(worst_near < 0.75);  // binary seed: interface is known to half a cell
}

TEST_CASE("uniform sign raises NoInterfaceError") {
    SdfGrid3 g(8, 1.f);
    CHECK_THROWS_AS(fast_march_reinit(g), NoInterfaceError);
}

TEST_CASE("sdf_from_binary puts the zero set between cells") {
    BinaryGrid2 m(16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 8; ++x) m.at(x, y) = 1;
    SdfGrid2 g = sdf_from_binary(m);
    // interface midway between columns 7 and 8
    CHECK(g.at(7, 8) == doctest::Approx(-0.5 * g.spacing()).epsilon(0.05));
    CHECK(g.at(8, 8) == doctest::Approx(0.5 * g.spacing()).epsilon(0.05));
    CHECK(g.at(0, 8) < g.at(5, 8));  // monotone into the shape
}

TEST_CASE("round_offset of a box matches the analytic rounded box") {
    int n = 64;
    SdfGrid3 g(n);
    double hx = 0.30, hy = 0.22, hz = 0.26;  // half extents
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double px = std::abs((x + 0.5) / n - 0.5) - hx;
                double py = std::abs((y + 0.5) / n - 0.5) - hy;
                double pz = std::abs((z + 0.5) / n - 0.5) - hz;
                double outside = std::sqrt(std::pow(std::max(px, 0.0), 2) +
                                           std::pow(std::max(py, 0.0), 2) +
                                           std::pow(std::max(pz, 0.0), 2));
                double inside = std::min(std::max({px, py, pz}), 0.0);
                g.at(x, y, z) = float(outside + inside);
            }
    double radius = 8.0 / n;
    SdfGrid3 rounded = round_offset(g, float(radius));
    BinaryGrid3 got = threshold(rounded);
    BinaryGrid3 want(n);
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double px = std::abs((x + 0.5) / n - 0.5) - (hx - radius);
                double py = std::abs((y + 0.5) / n - 0.5) - (hy - radius);
                double pz = std::abs((z + 0.5) / n - 0.5) - (hz - radius);
                double outside = std::sqrt(std::pow(std::max(px, 0.0), 2) +
                                           std::pow(std::max(py, 0.0), 2) +
                                           std::pow(std::max(pz, 0.0), 2));
                double inside = std::min(std::max({px, py, pz}), 0.0);
                want.at(x, y, z) = outside + inside - radius < 0 ? 1 : 0;
            }
    CHECK(iou(want, got) >= 0.97);
}

TEST_CASE("round_offset throws when the shape is eliminated") {
    int n = 32;
    SdfGrid3 g(n);
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double dx = (x + 0.5) / n - 0.5, dy = (y + 0.5) / n - 0.5, dz = (z + 0.5) / n - 0.5;
                g.at(x, y, z) = float(std::sqrt(dx * dx + dy * dy + dz * dz) - 0.05);
            }
    CHECK_THROWS_AS(round_offset(g, 0.2f), ShapeEliminatedError);
}
