#include <cmath>

#include "prism/sketch.hpp"

namespace prism::sketch {

namespace {

constexpr double kPi = 3.14159265358979323846;

Loop polygon(const std::vector<Vec2>& pts) {
    Loop loop;
    for (size_t i = 0; i < pts.size(); ++i) loop.push_back(Line{pts[i], pts[(i + 1) % pts.size()]});
    return loop;
}

// All generators center the shape on (0.5, 0.5) in the unit square.

InstantiateResult gen_circle(const std::vector<double>&) {
    return {{{Arc{{0.5, 0.5}, 0.25, 0.0, 2 * kPi}}}, InvalidReason::None};
}

InstantiateResult gen_rectangle(const std::vector<double>& p) {
    double w = p[0], h = p[1];
    double x = 0.5 - w / 2, y = 0.5 - h / 2;
    return {{polygon({{x, y}, {x + w, y}, {x + w, y + h}, {x, y + h}})}, InvalidReason::None};
}

InstantiateResult gen_rounded_rect(const std::vector<double>& p) {
    double w = p[0], h = p[1], r = p[2];
    if (2 * r >= std::min(w, h) - 1e-9) return {{}, InvalidReason::ConstraintFailure};
    double x0 = 0.5 - w / 2, y0 = 0.5 - h / 2, x1 = x0 + w, y1 = y0 + h;
    Loop loop;
    loop.push_back(Line{{x0 + r, y0}, {x1 - r, y0}});
    loop.push_back(Arc{{x1 - r, y0 + r}, r, -kPi / 2, 0});
    loop.push_back(Line{{x1, y0 + r}, {x1, y1 - r}});
    loop.push_back(Arc{{x1 - r, y1 - r}, r, 0, kPi / 2});
    loop.push_back(Line{{x1 - r, y1}, {x0 + r, y1}});
    loop.push_back(Arc{{x0 + r, y1 - r}, r, kPi / 2, kPi});
    loop.push_back(Line{{x0, y1 - r}, {x0, y0 + r}});
    loop.push_back(Arc{{x0 + r, y0 + r}, r, kPi, 3 * kPi / 2});
    return {{loop}, InvalidReason::None};
}

// L: outer w x h with a cut_w x cut_h notch removed from the top-right
// corner. Oversized cuts produce a self-intersecting polygon on purpose so
// the validity predicate reports them.
InstantiateResult gen_l_shape(const std::vector<double>& p) {
    double w = p[0], h = p[1], cw = p[2], ch = p[3];
    double x = 0.5 - w / 2, y = 0.5 - h / 2;
    return {{polygon({{x, y},
                      {x + w, y},
                      {x + w, y + h - ch},
                      {x + w - cw, y + h - ch},
                      {x + w - cw, y + h},
                      {x, y + h}})},
            InvalidReason::None};
}

InstantiateResult gen_slot(const std::vector<double>& p) {
    double len = p[0], wid = p[1];
    if (len <= wid + 1e-12) return {{}, InvalidReason::ConstraintFailure};  // arcs overlap
    double r = wid / 2, hl = (len - wid) / 2;
    Loop loop;
    loop.push_back(Line{{0.5 - hl, 0.5 - r}, {0.5 + hl, 0.5 - r}});
    loop.push_back(Arc{{0.5 + hl, 0.5}, r, -kPi / 2, kPi / 2});
    loop.push_back(Line{{0.5 + hl, 0.5 + r}, {0.5 - hl, 0.5 + r}});
    loop.push_back(Arc{{0.5 - hl, 0.5}, r, kPi / 2, 3 * kPi / 2});
    return {{loop}, InvalidReason::None};
}

InstantiateResult gen_hexagon(const std::vector<double>& p) {
    double r = p[0];
    std::vector<Vec2> pts;
    for (int k = 0; k < 6; ++k) {
        double a = k * kPi / 3;
        pts.push_back({0.5 + r * std::cos(a), 0.5 + r * std::sin(a)});
    }
    return {{polygon(pts)}, InvalidReason::None};
}

// U: outer w x h, wall thickness t, opening at the top.
InstantiateResult gen_u_shape(const std::vector<double>& p) {
    double w = p[0], h = p[1], t = p[2];
    if (2 * t >= w - 1e-9 || t >= h - 1e-9) return {{}, InvalidReason::ConstraintFailure};
    double x = 0.5 - w / 2, y = 0.5 - h / 2;
    return {{polygon({{x, y},
                      {x + w, y},
                      {x + w, y + h},
                      {x + w - t, y + h},
                      {x + w - t, y + t},
                      {x + t, y + t},
                      {x + t, y + h},
                      {x, y + h}})},
            InvalidReason::None};
}

// D: straight left side, semicircular right side. The bounding box
// (width w + h/2, height h) is centered.
InstantiateResult gen_d_shape(const std::vector<double>& p) {
    double w = p[0], h = p[1];
    double r = h / 2;
    double x0 = 0.5 - (w + r) / 2, x1 = x0 + w;
    double y0 = 0.5 - r, y1 = 0.5 + r;
    Loop loop;
    loop.push_back(Line{{x0, y1}, {x0, y0}});
    loop.push_back(Line{{x0, y0}, {x1, y0}});
    loop.push_back(Arc{{x1, 0.5}, r, -kPi / 2, kPi / 2});
    loop.push_back(Line{{x1, y1}, {x0, y1}});
    return {{loop}, InvalidReason::None};
}

std::vector<SketchTemplate> make_templates() {
    std::vector<SketchTemplate> ts;
    ts.push_back({"circle", {}, gen_circle});
    ts.push_back({"rectangle",
                  {{"width", 0.1, 0.9, 0.05}, {"height", 0.1, 0.9, 0.05}},
                  gen_rectangle});
    ts.push_back({"rounded_rect",
                  {{"width", 0.2, 0.9, 0.05},
                   {"height", 0.2, 0.9, 0.05},
                   {"corner_radius", 0.02, 0.2, 0.02}},
                  gen_rounded_rect});
    ts.push_back({"l_shape",
                  {{"width", 0.3, 0.9, 0.05},
                   {"height", 0.3, 0.9, 0.05},
                   {"cut_width", 0.05, 0.95, 0.05},
                   {"cut_height", 0.05, 0.95, 0.05}},
                  gen_l_shape});
    ts.push_back({"slot", {{"length", 0.1, 0.9, 0.05}, {"width", 0.05, 0.5, 0.05}}, gen_slot});
    ts.push_back({"hexagon", {{"radius", 0.1, 0.45, 0.025}}, gen_hexagon});
    ts.push_back({"u_shape",
                  {{"width", 0.3, 0.9, 0.05},
                   {"height", 0.3, 0.9, 0.05},
                   {"thickness", 0.05, 0.4, 0.05}},
                  gen_u_shape});
    ts.push_back({"d_shape",
                  {{"straight_length", 0.1, 0.5, 0.05}, {"height", 0.2, 0.7, 0.05}},
                  gen_d_shape});
    return ts;
}

}  // namespace

const std::vector<SketchTemplate>& builtin_templates() {
    static const std::vector<SketchTemplate> ts = make_templates();
    return ts;
}

}  // namespace prism::sketch
