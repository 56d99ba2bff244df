#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "prism/grid.hpp"

namespace prism::sketch {

struct Vec2 {
    double x = 0, y = 0;
};

struct Line {
    Vec2 a, b;
};

// Circular arc from start_angle to end_angle, counter-clockwise, angles in
// radians. The swept angle is end - start normalized into (0, 2*pi].
struct Arc {
    Vec2 center;
    double radius = 0;
    double start_angle = 0;
    double end_angle = 0;
};

using Curve = std::variant<Line, Arc>;

Vec2 curve_start(const Curve& c);
Vec2 curve_end(const Curve& c);

// Ordered closed loop of curves; end of curve k touches start of k+1
// (and last touches first) within 1e-9.
using Loop = std::vector<Curve>;

bool loop_is_closed(const Loop& loop, double tol = 1e-9);

// Even-odd point membership against exact lines/arcs (horizontal ray cast).
bool point_in_loops(const std::vector<Loop>& loops, Vec2 p);

// True iff any two non-adjacent curves intersect, or loops touch/overlap.
bool self_intersects(const std::vector<Loop>& loops);

// Even-odd fill against pixel centers; loops live in the unit square.
BinaryGrid2 rasterize(const std::vector<Loop>& loops, int res = 128);

// Weisfeiler-Lehman hash of the loop adjacency graph. Nodes carry curve
// type and axis-alignment, edges carry tangent continuity; 3 refinement
// iterations, 64-bit digest. Invariant to loop re-indexing, reversal,
// translation and uniform scale.
uint64_t wl_hash(const std::vector<Loop>& loops);

// --- Parametric templates ---

struct ParamSpec {
    std::string name;
    double min_value = 0, max_value = 1;
    double increment = 0.05;  // lattice step used by flooding
};

enum class InvalidReason { None, OutOfRange, SelfIntersection, ConstraintFailure };

struct InstantiateResult {
    std::vector<Loop> loops;
    InvalidReason reason = InvalidReason::None;
    bool ok() const { return reason == InvalidReason::None; }
};

struct SketchTemplate {
    std::string name;
    std::vector<ParamSpec> params;
    std::function<InstantiateResult(const std::vector<double>&)> generator;

    std::vector<double> seed_params() const;  // midpoint of each range
};

// Closed-form generators standing in for a 2D constraint solver.
// Templates: circle, rectangle, rounded_rect, l_shape, slot, hexagon,
// u_shape, d_shape.
const std::vector<SketchTemplate>& builtin_templates();
const SketchTemplate& template_by_name(const std::string& name);

InstantiateResult instantiate(const SketchTemplate& t, const std::vector<double>& params);

struct SketchVariation {
    std::string template_name;
    std::vector<double> params;
    std::vector<Loop> loops;
    uint64_t hash = 0;
};

// Dijkstra-style flood over the integer increment lattice from the seed.
// Priority is L1 step distance, ties break lexicographically; invalid
// parameter nodes do not expand. Stops at max_n or an empty queue.
std::vector<SketchVariation> flood_variations(const SketchTemplate& t,
                                              const std::vector<double>& seed_params, int max_n);

// SVG export (path elements with line and arc segments).
std::string loops_to_svg(const std::vector<Loop>& loops, int canvas = 128);

// Geometry helpers shared with fitting.
Loop transform_loop(const Loop& loop, double scale, double tx, double ty);

}  // namespace prism::sketch
