#include "prism/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace prism::sketch {

namespace {

constexpr double kTouchTol = 1e-9;
constexpr double kAngleTol = 1e-6;
constexpr double kPi = 3.14159265358979323846;

double norm2(Vec2 v) { return std::sqrt(v.x * v.x + v.y * v.y); }
Vec2 sub(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }

// Sweep of an arc, normalized into (0, 2*pi].
double arc_sweep(const Arc& a) {
    double s = std::fmod(a.end_angle - a.start_angle, 2 * kPi);
    if (s <= 0) s += 2 * kPi;
    return s;
}

// Whether absolute angle `ang` lies on the arc (inclusive endpoints).
bool angle_on_arc(const Arc& a, double ang, double tol = 1e-12) {
    double rel = std::fmod(ang - a.start_angle, 2 * kPi);
    if (rel < 0) rel += 2 * kPi;
    return rel <= arc_sweep(a) + tol;
}

Vec2 arc_point(const Arc& a, double ang) {
    return {a.center.x + a.radius * std::cos(ang), a.center.y + a.radius * std::sin(ang)};
}

// Unit tangent at a curve endpoint, oriented along traversal direction.
Vec2 tangent_at(const Curve& c, bool at_start) {
    if (std::holds_alternative<Line>(c)) {
        const Line& l = std::get<Line>(c);
        Vec2 d = sub(l.b, l.a);
        double n = norm2(d);
        return {d.x / n, d.y / n};
    }
    const Arc& a = std::get<Arc>(c);
    double ang = at_start ? a.start_angle : a.start_angle + arc_sweep(a);
    // CCW traversal: tangent is the angle rotated +90 degrees.
    return {-std::sin(ang), std::cos(ang)};
}

// Intersection points of two curves, as points. Tangential contacts may be
// reported once; callers tolerate duplicates.
std::vector<Vec2> curve_intersections(const Curve& c1, const Curve& c2) {
    std::vector<Vec2> out;
    auto line_line = [&](const Line& p, const Line& q) {
        Vec2 r = sub(p.b, p.a), s = sub(q.b, q.a);
        double den = r.x * s.y - r.y * s.x;
        Vec2 qp = sub(q.a, p.a);
        if (std::abs(den) < 1e-15) return;  // parallel (overlap caught by endpoint checks)
        double t = (qp.x * s.y - qp.y * s.x) / den;
        double u = (qp.x * r.y - qp.y * r.x) / den;
        if (t >= -1e-12 && t <= 1 + 1e-12 && u >= -1e-12 && u <= 1 + 1e-12)
            out.push_back({p.a.x + t * r.x, p.a.y + t * r.y});
    };
    auto line_arc = [&](const Line& l, const Arc& a) {
        Vec2 d = sub(l.b, l.a);
        Vec2 f = sub(l.a, a.center);
        double A = d.x * d.x + d.y * d.y;
        double B = 2 * (f.x * d.x + f.y * d.y);
        double C = f.x * f.x + f.y * f.y - a.radius * a.radius;
        double disc = B * B - 4 * A * C;
        if (disc < 0) return;
        double sq = std::sqrt(disc);
        for (double t : {(-B - sq) / (2 * A), (-B + sq) / (2 * A)}) {
            if (t < -1e-12 || t > 1 + 1e-12) continue;
            Vec2 p{l.a.x + t * d.x, l.a.y + t * d.y};
            double ang = std::atan2(p.y - a.center.y, p.x - a.center.x);
            if (angle_on_arc(a, ang, 1e-9)) out.push_back(p);
            if (disc < 1e-15) break;  // tangent: one point
        }
    };
    auto arc_arc = [&](const Arc& a, const Arc& b) {
        Vec2 d = sub(b.center, a.center);
        double dist = norm2(d);
        if (dist < 1e-15) return;  // concentric
        double ra = a.radius, rb = b.radius;
        if (dist > ra + rb + 1e-12 || dist < std::abs(ra - rb) - 1e-12) return;
        double x = (dist * dist + ra * ra - rb * rb) / (2 * dist);
        double h2 = ra * ra - x * x;
        double h = h2 > 0 ? std::sqrt(h2) : 0;
        Vec2 u{d.x / dist, d.y / dist};
        for (double sgn : {1.0, -1.0}) {
            Vec2 p{a.center.x + x * u.x - sgn * h * u.y, a.center.y + x * u.y + sgn * h * u.x};
            double anga = std::atan2(p.y - a.center.y, p.x - a.center.x);
            double angb = std::atan2(p.y - b.center.y, p.x - b.center.x);
            if (angle_on_arc(a, anga, 1e-9) && angle_on_arc(b, angb, 1e-9)) out.push_back(p);
            if (h < 1e-12) break;
        }
    };
    if (std::holds_alternative<Line>(c1) && std::holds_alternative<Line>(c2))
        line_line(std::get<Line>(c1), std::get<Line>(c2));
    else if (std::holds_alternative<Line>(c1) && std::holds_alternative<Arc>(c2))
        line_arc(std::get<Line>(c1), std::get<Arc>(c2));
    else if (std::holds_alternative<Arc>(c1) && std::holds_alternative<Line>(c2))
        line_arc(std::get<Line>(c2), std::get<Arc>(c1));
    else
        arc_arc(std::get<Arc>(c1), std::get<Arc>(c2));
    return out;
}

uint64_t mix64(uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t hash_combine(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }

}  // namespace

Vec2 curve_start(const Curve& c) {
    if (std::holds_alternative<Line>(c)) return std::get<Line>(c).a;
    const Arc& a = std::get<Arc>(c);
    return arc_point(a, a.start_angle);
}

Vec2 curve_end(const Curve& c) {
    if (std::holds_alternative<Line>(c)) return std::get<Line>(c).b;
    const Arc& a = std::get<Arc>(c);
    return arc_point(a, a.start_angle + arc_sweep(a));
}

bool loop_is_closed(const Loop& loop, double tol) {
    if (loop.empty()) return false;
    for (size_t i = 0; i < loop.size(); ++i) {
        Vec2 e = curve_end(loop[i]);
        Vec2 s = curve_start(loop[(i + 1) % loop.size()]);
        if (norm2(sub(e, s)) > tol) return false;
    }
    return true;
}

bool point_in_loops(const std::vector<Loop>& loops, Vec2 p) {
    int crossings = 0;
    for (const Loop& loop : loops) {
        for (const Curve& c : loop) {
            if (std::holds_alternative<Line>(c)) {
                const Line& l = std::get<Line>(c);
                Vec2 a = l.a, b = l.b;
                // Half-open straddle rule handles shared vertices exactly once.
                if ((a.y <= p.y) == (b.y <= p.y)) continue;
                double t = (p.y - a.y) / (b.y - a.y);
                double x = a.x + t * (b.x - a.x);
                if (x > p.x) ++crossings;
            } else {
                const Arc& a = std::get<Arc>(c);
                double dy = p.y - a.center.y;
                double disc = a.radius * a.radius - dy * dy;
                if (disc <= 0) continue;  // misses or tangent
                double sq = std::sqrt(disc);
                for (double sgn : {1.0, -1.0}) {
                    double x = a.center.x + sgn * sq;
                    if (x <= p.x) continue;
                    double ang = std::atan2(dy, sgn * sq);
                    // Half-open in angle: include the start endpoint only, so a
                    // crossing at a shared endpoint of two arcs counts once.
                    double rel = std::fmod(ang - a.start_angle, 2 * kPi);
                    if (rel < 0) rel += 2 * kPi;
                    if (rel < arc_sweep(a)) ++crossings;
                }
            }
        }
    }
    return (crossings & 1) != 0;
}

bool self_intersects(const std::vector<Loop>& loops) {
    // Flatten with loop/position indices so adjacency is known.
    struct Item {
        const Curve* c;
        int loop, pos, nloop;
    };
    std::vector<Item> items;
    for (int li = 0; li < (int)loops.size(); ++li)
        for (int pi = 0; pi < (int)loops[li].size(); ++pi)
            items.push_back({&loops[li][pi], li, pi, (int)loops[li].size()});
    for (size_t i = 0; i < items.size(); ++i) {
        for (size_t j = i + 1; j < items.size(); ++j) {
            const Item& A = items[i];
            const Item& B = items[j];
            bool adjacent = false;
            std::vector<Vec2> allowed;  // touching points permitted
            if (A.loop == B.loop) {
                int d = std::abs(A.pos - B.pos);
                adjacent = (d == 1 || d == A.nloop - 1);
                if (A.nloop == 2) adjacent = true;  // both ends shared
            }
            if (adjacent) {
                allowed = {curve_start(*A.c), curve_end(*A.c)};
            }
            for (Vec2 p : curve_intersections(*A.c, *B.c)) {
                bool ok = false;
                for (Vec2 q : allowed)
                    if (norm2(sub(p, q)) < 1e-7) ok = true;
                if (!ok) return true;
            }
        }
    }
    return false;
}

BinaryGrid2 rasterize(const std::vector<Loop>& loops, int res) {
    // Scanline version of point_in_loops with identical crossing rules:
    // per row, collect ray crossings once and fill by parity.
    BinaryGrid2 g(res);
    std::vector<double> xs;
    for (int y = 0; y < res; ++y) {
        double py = (y + 0.5) / res;
        xs.clear();
        for (const Loop& loop : loops) {
            for (const Curve& c : loop) {
                if (std::holds_alternative<Line>(c)) {
                    const Line& l = std::get<Line>(c);
                    if ((l.a.y <= py) == (l.b.y <= py)) continue;
                    double t = (py - l.a.y) / (l.b.y - l.a.y);
                    xs.push_back(l.a.x + t * (l.b.x - l.a.x));
                } else {
                    const Arc& a = std::get<Arc>(c);
                    double dy = py - a.center.y;
                    double disc = a.radius * a.radius - dy * dy;
                    if (disc <= 0) continue;
                    double sq = std::sqrt(disc);
                    for (double sgn : {1.0, -1.0}) {
                        double ang = std::atan2(dy, sgn * sq);
                        double rel = std::fmod(ang - a.start_angle, 2 * kPi);
                        if (rel < 0) rel += 2 * kPi;
                        if (rel < arc_sweep(a)) xs.push_back(a.center.x + sgn * sq);
                    }
                }
            }
        }
        std::sort(xs.begin(), xs.end());
        size_t idx = 0;
        for (int x = 0; x < res; ++x) {
            double px = (x + 0.5) / res;
            while (idx < xs.size() && xs[idx] <= px) ++idx;
            g.at(x, y) = ((xs.size() - idx) & 1) ? 1 : 0;
        }
    }
    return g;
}

uint64_t wl_hash(const std::vector<Loop>& loops) {
    for (const Loop& loop : loops) {
        bool all_lines = true;
        for (const Curve& c : loop)
            if (!std::holds_alternative<Line>(c)) all_lines = false;
        if (all_lines && loop.size() < 3) throw std::invalid_argument("degenerate loop");
    }
    struct Node {
        uint64_t label;
        std::vector<std::pair<int, uint64_t>> edges;  // (neighbor index, edge attr)
    };
    std::vector<Node> nodes;
    std::vector<std::vector<int>> index(loops.size());
    for (size_t li = 0; li < loops.size(); ++li) {
        for (const Curve& c : loops[li]) {
            uint64_t lab;
            if (std::holds_alternative<Line>(c)) {
                const Line& l = std::get<Line>(c);
                Vec2 d = sub(l.b, l.a);
                double ang = std::atan2(std::abs(d.y), std::abs(d.x));
                bool axis = ang < kAngleTol || std::abs(ang - kPi / 2) < kAngleTol;
                lab = axis ? 0x11 : 0x10;
            } else {
                lab = 0x20;
            }
            index[li].push_back((int)nodes.size());
            nodes.push_back({mix64(lab), {}});
        }
    }
    for (size_t li = 0; li < loops.size(); ++li) {
        int n = (int)loops[li].size();
        for (int k = 0; k < n; ++k) {
            int a = index[li][k], b = index[li][(k + 1) % n];
            if (a == b) continue;  // single-curve loop (circle)
            Vec2 ta = tangent_at(loops[li][k], false);
            Vec2 tb = tangent_at(loops[li][(k + 1) % n], true);
            double cross = std::abs(ta.x * tb.y - ta.y * tb.x);
            double dot = ta.x * tb.x + ta.y * tb.y;
            uint64_t attr = (cross < kAngleTol && dot > 0) ? 1 : 2;  // smooth vs corner
            nodes[a].edges.push_back({b, attr});
            nodes[b].edges.push_back({a, attr});
        }
    }
    for (int iter = 0; iter < 3; ++iter) {
        std::vector<uint64_t> next(nodes.size());
        for (size_t i = 0; i < nodes.size(); ++i) {
            std::vector<uint64_t> sig;
            for (auto [nb, attr] : nodes[i].edges)
                sig.push_back(hash_combine(attr, nodes[nb].label));
            std::sort(sig.begin(), sig.end());
            uint64_t h = nodes[i].label;
            for (uint64_t s : sig) h = hash_combine(h, s);
            next[i] = h;
        }
        for (size_t i = 0; i < nodes.size(); ++i) nodes[i].label = next[i];
    }
    std::vector<uint64_t> labels;
    for (const Node& n : nodes) labels.push_back(n.label);
    std::sort(labels.begin(), labels.end());
    uint64_t digest = mix64(labels.size());
    for (uint64_t l : labels) digest = hash_combine(digest, l);
    return digest;
}

std::vector<double> SketchTemplate::seed_params() const {
    std::vector<double> p;
    for (const ParamSpec& s : params) p.push_back(0.5 * (s.min_value + s.max_value));
    return p;
}

InstantiateResult instantiate(const SketchTemplate& t, const std::vector<double>& params) {
    if (params.size() != t.params.size())
        throw std::invalid_argument("parameter count mismatch for template " + t.name);
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i] < t.params[i].min_value - 1e-12 || params[i] > t.params[i].max_value + 1e-12)
            return {{}, InvalidReason::OutOfRange};
    }
    InstantiateResult r = t.generator(params);
    if (!r.ok()) return r;
    for (const Loop& l : r.loops)
        if (!loop_is_closed(l)) return {{}, InvalidReason::ConstraintFailure};
    if (self_intersects(r.loops)) return {{}, InvalidReason::SelfIntersection};
    return r;
}

std::vector<SketchVariation> flood_variations(const SketchTemplate& t,
                                              const std::vector<double>& seed_params, int max_n) {
    int np = (int)t.params.size();
    auto params_of = [&](const std::vector<int>& off) {
        std::vector<double> p(np);
        for (int i = 0; i < np; ++i) p[i] = seed_params[i] + off[i] * t.params[i].increment;
        return p;
    };
    // Priority: L1 distance from the seed, then lexicographic offset vector.
    std::set<std::pair<int, std::vector<int>>> frontier;
    std::set<std::vector<int>> seen;
    std::vector<int> zero(np, 0);
    frontier.insert({0, zero});
    seen.insert(zero);
    std::vector<SketchVariation> out;
    while (!frontier.empty() && (int)out.size() < max_n) {
        auto [dist, off] = *frontier.begin();
        frontier.erase(frontier.begin());
        InstantiateResult r = instantiate(t, params_of(off));
        if (!r.ok()) continue;  // invalid nodes do not propagate
        out.push_back({t.name, params_of(off), r.loops, wl_hash(r.loops)});
        for (int i = 0; i < np; ++i) {
            for (int d : {-1, 1}) {
                std::vector<int> nxt = off;
                nxt[i] += d;
                if (seen.count(nxt)) continue;
                seen.insert(nxt);
                int nd = 0;
                for (int v : nxt) nd += std::abs(v);
                frontier.insert({nd, nxt});
            }
        }
    }
    return out;
}

std::string loops_to_svg(const std::vector<Loop>& loops, int canvas) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << canvas << "\" height=\""
       << canvas << "\" viewBox=\"0 0 1 1\">\n";
    char buf[256];
    for (const Loop& loop : loops) {
        os << "<path d=\"";
        for (size_t i = 0; i < loop.size(); ++i) {
            Vec2 s = curve_start(loop[i]);
            if (i == 0) {
                std::snprintf(buf, sizeof buf, "M %.6f %.6f ", s.x, 1 - s.y);
                os << buf;
            }
            if (std::holds_alternative<Line>(loop[i])) {
                Vec2 e = curve_end(loop[i]);
                std::snprintf(buf, sizeof buf, "L %.6f %.6f ", e.x, 1 - e.y);
                os << buf;
            } else {
                const Arc& a = std::get<Arc>(loop[i]);
                double sweep = arc_sweep(a);
                // SVG arcs cannot express a full circle in one segment.
                int segs = sweep > kPi ? 2 : 1;
                for (int k = 1; k <= segs; ++k) {
                    Vec2 e = arc_point(a, a.start_angle + sweep * k / segs);
                    // y axis is flipped, so CCW geometry becomes sweep flag 0.
                    std::snprintf(buf, sizeof buf, "A %.6f %.6f 0 0 0 %.6f %.6f ", a.radius,
                                  a.radius, e.x, 1 - e.y);
                    os << buf;
                }
            }
        }
        os << "Z\" fill=\"#888\" stroke=\"#000\" stroke-width=\"0.004\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

Loop transform_loop(const Loop& loop, double scale, double tx, double ty) {
    Loop out;
    for (const Curve& c : loop) {
        if (std::holds_alternative<Line>(c)) {
            const Line& l = std::get<Line>(c);
            out.push_back(Line{{l.a.x * scale + tx, l.a.y * scale + ty},
                               {l.b.x * scale + tx, l.b.y * scale + ty}});
        } else {
            Arc a = std::get<Arc>(c);
            a.center = {a.center.x * scale + tx, a.center.y * scale + ty};
            a.radius *= scale;
            out.push_back(a);
        }
    }
    return out;
}

const SketchTemplate& template_by_name(const std::string& name) {
    for (const SketchTemplate& t : builtin_templates())
        if (t.name == name) return t;
    throw std::invalid_argument("unknown template: " + name);
}

}  // namespace prism::sketch
