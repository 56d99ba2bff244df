// Acceptance gate: each criterion prints exactly one "criterion N: PASS/FAIL"
// line and the process exit code reports the result. Run as `acceptance <N>`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "prism/checkpoint.hpp"
#include "prism/fast_marching.hpp"
#include "prism/nets.hpp"
#include "prism/pipeline.hpp"
#include "prism/recipes.hpp"
#include "prism/retrieval.hpp"
#include "prism/rotation24.hpp"
#include "prism/sketch.hpp"
#include "prism/trainkit.hpp"

using namespace prism;

namespace {

// ---------- shared helpers ----------

std::vector<sketch::SketchVariation> standard_corpus(int per_template) {
    std::vector<sketch::SketchVariation> out;
    for (const auto& t : sketch::builtin_templates())
        for (const auto& v : sketch::flood_variations(t, t.seed_params(), per_template))
            out.push_back(v);
    return out;
}

double unif(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

struct Bbox {
    double min_x = 1e9, min_y = 1e9, max_x = -1e9, max_y = -1e9;
};

Bbox loops_bbox(const std::vector<sketch::Loop>& loops) {
    Bbox b;
    for (const auto& loop : loops)
        for (const auto& c : loop) {
            for (const sketch::Vec2& p : {sketch::curve_start(c), sketch::curve_end(c)}) {
                b.min_x = std::min(b.min_x, p.x);
                b.min_y = std::min(b.min_y, p.y);
                b.max_x = std::max(b.max_x, p.x);
                b.max_y = std::max(b.max_y, p.y);
            }
            if (const sketch::Arc* a = std::get_if<sketch::Arc>(&c)) {
                b.min_x = std::min(b.min_x, a->center.x - a->radius);
                b.min_y = std::min(b.min_y, a->center.y - a->radius);
                b.max_x = std::max(b.max_x, a->center.x + a->radius);
                b.max_y = std::max(b.max_y, a->center.y + a->radius);
            }
        }
    return b;
}

// Random well-formed program for the given recipe: profiles drawn from the
// corpus, similarity transforms keeping loops inside [0.08, 0.92], intervals
// with length >= 0.15. Rejects programs whose steps do not all matter.
pipeline::CadProgram random_program(std::mt19937_64& rng, const recipes::ExtrusionRecipe& rec,
                                    const std::vector<sketch::SketchVariation>& corpus,
                                    int check_res) {
    for (int attempt = 0; attempt < 400; ++attempt) {
        pipeline::CadProgram p;
        p.recipe_id = rec.id;
        bool ok = true;
        for (size_t i = 0; i < rec.steps.size() && ok; ++i) {
            const auto& var = corpus[size_t(unif(rng) * double(corpus.size()))];
            Bbox b = loops_bbox(var.loops);
            double span = std::max(b.max_x - b.min_x, b.max_y - b.min_y);
            double scale = (0.45 + 0.45 * unif(rng));
            scale = std::min(scale, 0.8 / std::max(span, 1e-9));
            double lo_x = 0.08 - scale * b.min_x, hi_x = 0.92 - scale * b.max_x;
            double lo_y = 0.08 - scale * b.min_y, hi_y = 0.92 - scale * b.max_y;
            if (hi_x < lo_x || hi_y < lo_y) {
                ok = false;
                break;
            }
            pipeline::ProgramStep step;
            step.loops.push_back({var.template_name, var.params,
                                  lo_x + (hi_x - lo_x) * unif(rng),
                                  lo_y + (hi_y - lo_y) * unif(rng), scale});
            step.axis = rec.steps[i].axis;
            step.boolean = rec.steps[i].boolean;
            step.start = 0.08 + 0.55 * unif(rng);
            step.end = step.start + 0.15 + (0.92 - step.start - 0.15) * unif(rng);
            p.steps.push_back(step);
        }
        if (!ok) continue;
        // apply shared-plane constraints of the recipe
        for (size_t i = 0; i < rec.steps.size(); ++i) {
            const auto& s = rec.steps[i];
            if (!s.start_ref.own)
                p.steps[i].start = s.start_ref.plane == recipes::Plane::Start
                                       ? p.steps[size_t(s.start_ref.step)].start
                                       : p.steps[size_t(s.start_ref.step)].end;
            if (!s.end_ref.own)
                p.steps[i].end = s.end_ref.plane == recipes::Plane::End
                                     ? p.steps[size_t(s.end_ref.step)].end
                                     : p.steps[size_t(s.end_ref.step)].start;
            if (p.steps[i].end - p.steps[i].start < 0.1) ok = false;
        }
        if (!ok) continue;
        BinaryGrid3 full = pipeline::voxelize_program(p, check_res);
        size_t inside = 0;
        for (auto v : full.v) inside += v;
        if (inside < size_t(check_res) * size_t(check_res) / 2) continue;
        // every step must change the result (otherwise selection is ambiguous)
        bool informative = true;
        for (size_t drop = 1; drop < p.steps.size(); ++drop) {
            pipeline::CadProgram partial = p;
            partial.steps.resize(drop);
            partial.recipe_id = "single";
            BinaryGrid3 v = pipeline::voxelize_program(partial, check_res);
            size_t diff = 0;
            for (size_t k = 0; k < v.count(); ++k) diff += v.v[k] != full.v[k];
            if (diff < size_t(check_res)) informative = false;
        }
        if (informative) return p;
    }
    throw std::runtime_error("random_program: no feasible sample");
}

// Hard-logit compositor at arbitrary resolution: the same min/max formulas
// as the 64^3 value compositor, fed with exact rasterized profiles.
SdfGrid3 compose_hard(const pipeline::CadProgram& p, const recipes::ExtrusionRecipe& rec,
                      int res) {
    std::vector<SdfGrid3> parts;
    for (size_t i = 0; i < p.steps.size(); ++i) {
        std::vector<sketch::Loop> placed;
        for (const auto& pl : p.steps[i].loops)
            for (const auto& l : pl.loops()) placed.push_back(l);
        SdfGrid2 prof = trainkit::hard_profile_logits(sketch::rasterize(placed, res));
        auto [so, eo] = trainkit::envelope_targets(p.steps[i].start, p.steps[i].end, res);
        recipes::Envelope se = trainkit::hard_envelope_logits(so);
        recipes::Envelope ee = trainkit::hard_envelope_logits(eo);
        SdfGrid3 part(res);
        for (int z = 0; z < res; ++z)
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x) {
                    using recipes::Axis;
                    Axis ax = p.steps[i].axis;
                    int w = ax == Axis::Z ? z : ax == Axis::X ? x : y;
                    float pv = ax == Axis::Z   ? prof.at(x, y)
                               : ax == Axis::X ? prof.at(z, y)
                                               : prof.at(x, z);
                    part.at(x, y, z) = std::max(pv, std::max(se[size_t(w)], ee[size_t(w)]));
                }
        parts.push_back(part);
    }
    return recipes::compose_values(rec, parts);
}

const recipes::ExtrusionRecipe& recipe_by_id(const std::vector<recipes::ExtrusionRecipe>& rs,
                                             const std::string& id) {
    for (const auto& r : rs)
        if (r.id == id) return r;
    throw std::runtime_error("unknown recipe " + id);
}

// Ground-truth decode callback: saturated logits for the true candidate,
// zero logits everywhere else.
pipeline::DecodeFn bypass_decoder(const pipeline::CadProgram& truth,
                                  const std::string& true_recipe, int true_orientation) {
    return [=](const recipes::ExtrusionRecipe& r, int oi) {
        pipeline::DecodedArrays out;
        size_t n = r.steps.size();
        if (r.id == true_recipe && oi == true_orientation) {
            for (size_t i = 0; i < n; ++i) {
                std::vector<sketch::Loop> placed;
                for (const auto& pl : truth.steps[i].loops)
                    for (const auto& l : pl.loops()) placed.push_back(l);
                out.profiles.push_back(trainkit::hard_profile_logits(
                    sketch::rasterize(placed, nets::kProfileRes)));
                auto [so, eo] =
                    trainkit::envelope_targets(truth.steps[i].start, truth.steps[i].end);
                out.starts.push_back(trainkit::hard_envelope_logits(so));
                out.ends.push_back(trainkit::hard_envelope_logits(eo));
            }
        } else {
            out.profiles.assign(n, SdfGrid2(nets::kProfileRes, 0.f));
            out.starts.assign(n, recipes::Envelope(size_t(nets::kEnvelopeLen), 0.f));
            out.ends.assign(n, recipes::Envelope(size_t(nets::kEnvelopeLen), 0.f));
        }
        return out;
    };
}

int verdict(int n, bool pass, const std::string& detail) {
    std::printf("criterion %d: %s (%s)\n", n, pass ? "PASS" : "FAIL", detail.c_str());
    return pass ? 0 : 1;
}

// ---------- criteria ----------

int criterion1() {
    std::mt19937_64 rng(2024);
    auto randn = [&](std::vector<int> shape, double s) {
        std::normal_distribution<double> d(0.0, s);
        ad::Tensor t(std::move(shape));
        for (auto& x : t.v) x = d(rng);
        return t;
    };
    double worst_op = 0;
    bool pass = true;

    // every operator, small shapes, double precision
    {
        ad::Graph g;
        int x = g.input({2, 8, 8});
        int c2 = g.conv2d(x, g.param("w2", randn({3, 2, 4, 4}, 0.3)), g.param("b2", randn({3}, 1)),
                          4, 2, 1);
        int ct2 = g.conv_transpose2d(g.leaky_relu(c2, 0.2),
                                     g.param("wt2", randn({3, 2, 4, 4}, 0.3)),
                                     g.param("bt2", randn({2}, 1)), 4, 2, 1);
        int flat = g.reshape(ct2, {128});
        int lin = g.linear(g.split(flat, 2, 0), g.param("wl", randn({5, 64}, 0.2)),
                           g.param("bl", randn({5}, 1)));
        int mixed = g.elementwise_max(g.elementwise_min(lin, g.negate(lin)),
                                      g.add(lin, g.param("pa", randn({5}, 1))));
        int rep = g.replicate_along_axis(g.relu(mixed), 0, 3);
        ad::Tensor targets({5, 3});
        for (auto& v : targets.v) v = rng() % 2;
        int loss = g.bce_with_logits(g.transpose2d(g.reshape(rep, {3, 5})), g.constant(targets));
        auto rep1 = ad::grad_check(g, {{x, randn({2, 8, 8}, 1.0)}}, loss, 1e-4, 4, rng);
        for (const auto& e : rep1.entries) worst_op = std::max(worst_op, e.max_rel_err);
        pass = pass && rep1.pass;
    }
    {
        ad::Graph g;
        int x = g.input({1, 6, 6, 6});
        int c3 = g.conv3d(x, g.param("w3", randn({2, 1, 4, 4, 4}, 0.3)),
                          g.param("b3", randn({2}, 1)), 4, 2, 1);
        int e = g.reshape(c3, {2 * 27});
        int loss1 = g.mean(g.relu(e));
        auto r = ad::grad_check(g, {{x, randn({1, 6, 6, 6}, 1.0)}}, loss1, 1e-4, 6, rng);
        for (const auto& ent : r.entries) worst_op = std::max(worst_op, ent.max_rel_err);
        pass = pass && r.pass;
    }
    {
        ad::Graph g;
        int x = g.input({2, 6});
        int c1 = g.conv_transpose1d(x, g.param("w1", randn({2, 3, 4}, 0.3)),
                                    g.param("b1", randn({3}, 1)), 4, 2, 1);
        int loss = g.mean(c1);
        auto r = ad::grad_check(g, {{x, randn({2, 6}, 1.0)}}, loss, 1e-4, 6, rng);
        for (const auto& ent : r.entries) worst_op = std::max(worst_op, ent.max_rel_err);
        pass = pass && r.pass;
    }

    // full decode graph at reduced width
    double worst_full = 0;
    for (const auto& rec : recipes::builtin_recipes()) {
        if (rec.id != "single" && rec.id != "stacked_boss") continue;  // one shared, one not
        ad::Graph g;
        std::mt19937_64 init(7);
        int z = g.input({nets::kEmbed3d});
        auto out = recipes::decode_model(g, z, rec, 0.25, init);
        int loss = g.mean(out.phi);
        for (size_t i = 0; i < rec.steps.size(); ++i) {
            loss = g.add(loss, g.mean(out.profiles[i]));
            if (out.start_decoded[i]) loss = g.add(loss, g.mean(out.starts[i]));
            if (out.end_decoded[i]) loss = g.add(loss, g.mean(out.ends[i]));
        }
        auto r = ad::grad_check(g, {{z, randn({nets::kEmbed3d}, 1.0)}}, loss, 1e-3, 1, rng);
        for (const auto& ent : r.entries) worst_full = std::max(worst_full, ent.max_rel_err);
        pass = pass && r.pass;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "worst op rel err %.2e < 1e-4, full graph %.2e < 1e-3",
                  worst_op, worst_full);
    return verdict(1, pass && worst_op < 1e-4 && worst_full < 1e-3, buf);
}

int criterion2() {
    auto corpus = standard_corpus(12);
    auto rs = recipes::builtin_recipes();
    std::mt19937_64 rng(77);
    long checked = 0, mismatched = 0;
    auto run_one = [&](int res) {
        const auto& rec = rs[rng() % rs.size()];
        pipeline::CadProgram p = random_program(rng, rec, corpus, 16);
        BinaryGrid3 vox = pipeline::voxelize_program(p, res);
        SdfGrid3 phi = compose_hard(p, rec, res);
        for (int z = 0; z < res; ++z)
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x) {
                    // exclude voxels whose 3x3x3 neighborhood crosses the surface
                    bool near = false;
                    for (int dz = -1; dz <= 1 && !near; ++dz)
                        for (int dy = -1; dy <= 1 && !near; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                int nx = x + dx, ny = y + dy, nz = z + dz;
                                if (nx < 0 || ny < 0 || nz < 0 || nx >= res || ny >= res ||
                                    nz >= res)
                                    continue;
                                if (vox.at(nx, ny, nz) != vox.at(x, y, z)) {
                                    near = true;
                                    break;
                                }
                            }
                    if (near) continue;
                    ++checked;
                    if ((phi.at(x, y, z) < 0) != (vox.at(x, y, z) != 0)) ++mismatched;
                }
    };
    for (int i = 0; i < 100; ++i) run_one(16);
    for (int i = 0; i < 10; ++i) run_one(64);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%ld interior voxels checked, %ld sign mismatches", checked,
                  mismatched);
    return verdict(2, checked > 100000 && mismatched == 0, buf);
}

int criterion3() {
    std::mt19937_64 rng(5);
    int n = nets::kEnvelopeLen;
    double worst = 0;
    bool pass = true;
    for (int trial = 0; trial < 1000; ++trial) {
        double s = 0.05 + 0.85 * unif(rng);
        double e = s + 0.05 + (0.97 - s - 0.05) * unif(rng);
        recipes::Envelope S(size_t(n), 0.f), E(size_t(n), 0.f);
        for (int w = 0; w < n; ++w) {
            double c = (w + 0.5) / n;
            S[size_t(w)] = float(s - c);
            E[size_t(w)] = float(c - e);
        }
        auto [gs, ge] = pipeline::envelope_to_interval(S, E);
        worst = std::max({worst, std::abs(gs - s), std::abs(ge - e)});
    }
    pass = pass && worst <= 1e-6;

    // multi-crossing: the feasible pair of maximum length wins
    {
        recipes::Envelope S(size_t(n), 0.f), E(size_t(n), 0.f);
        // start array with down-crossings at 0.2 and 0.5; the earlier one
        // yields the longer extrusion and must win
        for (int w = 0; w < n; ++w) {
            double c = (w + 0.5) / n;
            double v = c < 0.35 ? 0.2 - c : (c < 0.42 ? c - 0.35 - 0.13 : 0.5 - c);
            S[size_t(w)] = float(v);
            E[size_t(w)] = float(c - 0.9);
        }
        auto [gs, ge] = pipeline::envelope_to_interval(S, E);
        pass = pass && std::abs(gs - 0.2) < 1e-5 && std::abs(ge - 0.9) < 1e-5;
    }

    // shared planes decode to bit-identical coordinates
    bool bit_ok = true;
    {
        auto rs = recipes::builtin_recipes();
        const auto& boss = recipe_by_id(rs, "stacked_boss");
        ad::Graph g;
        std::mt19937_64 init(3);
        int z = g.input({nets::kEmbed3d});
        auto out = recipes::decode_model(g, z, boss, 0.25, init);
        ad::Tensor zt({nets::kEmbed3d});
        for (auto& v : zt.v) v = 2.0 * unif(rng) - 1.0;
        ad::Context ctx;
        ad::evaluate(g, {{z, zt}}, ctx);
        recipes::Envelope e0(size_t(n), 0.f), s1(size_t(n), 0.f), s0(size_t(n), 0.f), e1(size_t(n), 0.f);
        for (int k = 0; k < n; ++k) {
            s0[size_t(k)] = float(ctx.val[size_t(out.starts[0])].v[size_t(k)]);
            e0[size_t(k)] = float(ctx.val[size_t(out.ends[0])].v[size_t(k)]);
            s1[size_t(k)] = float(ctx.val[size_t(out.starts[1])].v[size_t(k)]);
            e1[size_t(k)] = float(ctx.val[size_t(out.ends[1])].v[size_t(k)]);
            if (s1[size_t(k)] != -e0[size_t(k)]) bit_ok = false;
        }
    }
    // interval-level agreement on a shared plane: a step whose start array is
    // the exact negation of the previous end array recovers the same
    // coordinate bit-for-bit from envelope_to_interval
    for (int trial = 0; trial < 200 && bit_ok; ++trial) {
        double s0p = 0.05 + 0.4 * unif(rng);
        double e0p = s0p + 0.1 + 0.3 * unif(rng);
        double e1p = e0p + 0.05 + (0.97 - e0p - 0.05) * unif(rng);
        recipes::Envelope s0(size_t(n), 0.f), e0(size_t(n), 0.f), s1(size_t(n), 0.f),
            e1(size_t(n), 0.f);
        for (int w = 0; w < n; ++w) {
            double c = (w + 0.5) / n;
            s0[size_t(w)] = float(s0p - c);
            e0[size_t(w)] = float(c - e0p);
            s1[size_t(w)] = -e0[size_t(w)];
            e1[size_t(w)] = float(c - e1p);
        }
        auto [bs, be] = pipeline::envelope_to_interval(s0, e0);
        auto [cs, ce] = pipeline::envelope_to_interval(s1, e1);
        bit_ok = bit_ok && cs == be;  // exact, not approximate
        (void)bs; (void)ce;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "worst planted-plane error %.2e, shared plane bit-exact: %s",
                  worst, bit_ok ? "yes" : "no");
    return verdict(3, pass && bit_ok, buf);
}

int criterion4() {
    // sphere
    int n = 64;
    double r = 0.3;
    SdfGrid3 g(n);
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double dx = (x + 0.5) / n - 0.5, dy = (y + 0.5) / n - 0.5, dz = (z + 0.5) / n - 0.5;
                double d = std::sqrt(dx * dx + dy * dy + dz * dz) - r;
                g.at(x, y, z) = float(d * (1.0 + 0.5 * std::sin(8 * dx)));
            }
    SdfGrid3 re = fast_march_reinit(g);
    double h = re.spacing(), near3 = 0, far3 = 0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double dx = (x + 0.5) / n - 0.5, dy = (y + 0.5) / n - 0.5, dz = (z + 0.5) / n - 0.5;
                double d = std::sqrt(dx * dx + dy * dy + dz * dz) - r;
                double err = std::abs(re.at(x, y, z) - d) / h;
                if (std::abs(d) < 2 * h)
                    near3 = std::max(near3, err);
                else if (std::abs(d) < 0.15)
                    far3 = std::max(far3, err);
            }

    // circle
    int m = 128;
    SdfGrid2 c(m);
    for (int y = 0; y < m; ++y)
        for (int x = 0; x < m; ++x) {
            double dx = (x + 0.5) / m - 0.5, dy = (y + 0.5) / m - 0.5;
            double d = std::hypot(dx, dy) - 0.3;
            c.at(x, y) = float(d * (1.0 + 0.5 * std::cos(6 * dy)));
        }
    SdfGrid2 rc = fast_march_reinit(c);
    double h2 = rc.spacing(), near2 = 0, far2 = 0;
    for (int y = 0; y < m; ++y)
        for (int x = 0; x < m; ++x) {
            double dx = (x + 0.5) / m - 0.5, dy = (y + 0.5) / m - 0.5;
            double d = std::hypot(dx, dy) - 0.3;
            double err = std::abs(rc.at(x, y) - d) / h2;
            if (std::abs(d) < 2 * h2)
                near2 = std::max(near2, err);
            else if (std::abs(d) < 0.15)
                far2 = std::max(far2, err);
        }

    // rounded box
    SdfGrid3 box(n);
    double hx = 0.30, hy = 0.22, hz = 0.26;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double px = std::abs((x + 0.5) / n - 0.5) - hx;
                double py = std::abs((y + 0.5) / n - 0.5) - hy;
                double pz = std::abs((z + 0.5) / n - 0.5) - hz;
                double outside =
                    std::sqrt(std::pow(std::max(px, 0.0), 2) + std::pow(std::max(py, 0.0), 2) +
                              std::pow(std::max(pz, 0.0), 2));
                box.at(x, y, z) = float(outside + std::min(std::max({px, py, pz}), 0.0));
            }
    double radius = 8.0 / n;
    BinaryGrid3 got = threshold(round_offset(box, float(radius)));
    BinaryGrid3 want(n);
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double px = std::abs((x + 0.5) / n - 0.5) - (hx - radius);
                double py = std::abs((y + 0.5) / n - 0.5) - (hy - radius);
                double pz = std::abs((z + 0.5) / n - 0.5) - (hz - radius);
                double outside =
                    std::sqrt(std::pow(std::max(px, 0.0), 2) + std::pow(std::max(py, 0.0), 2) +
                              std::pow(std::max(pz, 0.0), 2));
                want.at(x, y, z) =
                    outside + std::min(std::max({px, py, pz}), 0.0) - radius < 0 ? 1 : 0;
            }
    double box_iou = iou(want, got);

    // the four catalogued radii all run
    bool radii_ok = true;
    for (int k = 1; k < 5; ++k) {
        try {
            round_offset(box, float(trainkit::kRoundingRadiiVox[k] / n));
        } catch (const std::exception&) {
            radii_ok = false;
        }
    }
    bool pass = near3 < 0.5 && far3 < 1.5 && near2 < 0.5 && far2 < 1.5 && box_iou >= 0.97 &&
                radii_ok;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "sphere err near %.2f/far %.2f cells, circle %.2f/%.2f, box IoU %.3f, radii %s",
                  near3, far3, near2, far2, box_iou, radii_ok ? "ok" : "failed");
    return verdict(4, pass, buf);
}

int criterion5() {
    namespace fs = std::filesystem;
    fs::create_directories("/tmp/prism_acc5");
    auto corpus = standard_corpus(25);

    trainkit::TrainConfig cfg;
    cfg.out_checkpoint = "/tmp/prism_acc5/enc2d.prck";
    cfg.curves_csv = "/tmp/prism_acc5/curves2d.csv";
    cfg.scale = 0.25;
    cfg.epochs = 40;
    cfg.patience = 6;
    cfg.batch = 8;
    cfg.seed = 1;
    auto summary = trainkit::train_2d(cfg, corpus);

    auto ckpt = ad::load_checkpoint(cfg.out_checkpoint);
    retrieval::ProfileEncoder enc(ckpt, 0.25);
    retrieval::EmbeddingIndex idx;
    for (size_t i = 0; i < corpus.size(); ++i) {
        idx.ids.push_back("v" + std::to_string(i));
        idx.embeddings.push_back(
            retrieval::embed_normalized(enc, sketch::rasterize(corpus[i].loops, nets::kProfileRes)));
    }

    std::mt19937_64 rng(99);
    double sum_sdf = 0, sum_mask = 0;
    int cases = 200;
    for (int t = 0; t < cases; ++t) {
        const auto& var = corpus[size_t(unif(rng) * double(corpus.size()))];
        Bbox b = loops_bbox(var.loops);
        double span = std::max(b.max_x - b.min_x, b.max_y - b.min_y);
        double scale = std::min(0.55 + 0.4 * unif(rng), 0.84 / std::max(span, 1e-9));
        double lo_x = 0.08 - scale * b.min_x, hi_x = 0.92 - scale * b.max_x;
        double lo_y = 0.08 - scale * b.min_y, hi_y = 0.92 - scale * b.max_y;
        std::vector<sketch::Loop> placed;
        double tx = lo_x + (hi_x - lo_x) * unif(rng), ty = lo_y + (hi_y - lo_y) * unif(rng);
        for (const auto& l : var.loops) placed.push_back(sketch::transform_loop(l, scale, tx, ty));
        BinaryGrid2 mask = sketch::rasterize(placed, nets::kProfileRes);
        double radius_px = 1.0 + 3.0 * unif(rng);
        BinaryGrid2 target;
        try {
            target = threshold(round_offset(sdf_from_binary(mask), float(radius_px / 128.0)));
        } catch (const std::exception&) {
            target = mask;
        }
        auto fit_sdf = retrieval::retrieve_and_fit(idx, corpus, enc, target, true);
        auto fit_mask = retrieval::retrieve_and_fit(idx, corpus, enc, target, false);
        sum_sdf += fit_sdf.iou;
        sum_mask += fit_mask.iou;
    }
    double mean_sdf = sum_sdf / cases, mean_mask = sum_mask / cases;
    bool pass = mean_sdf >= 0.90 && mean_mask < mean_sdf;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "mean fit IoU %.3f (sdf query) vs %.3f (mask query); 2d holdout IoU %.3f, "
                  "%d epochs",
                  mean_sdf, mean_mask, summary.holdout_median_iou, summary.epochs_run);
    return verdict(5, pass, buf);
}

int criterion6() {
    auto corpus = standard_corpus(12);
    auto rs = recipes::builtin_recipes();
    const auto& orients = pipeline::candidate_orientations();
    std::mt19937_64 rng(31);
    int correct = 0, cases = 50;
    for (int t = 0; t < cases; ++t) {
        const auto& rec = rs[size_t(t) % rs.size()];
        int oi = (t / int(rs.size())) % int(orients.size());
        pipeline::CadProgram p = random_program(rng, rec, corpus, 32);
        BinaryGrid3 vox = pipeline::voxelize_program(p, nets::kVoxelRes);
        SdfGrid3 input = sdf_from_binary(rotate_grid(vox, orients[size_t(oi)].inverse()));
        auto sel = pipeline::select_recipe_and_orientation(input, rs,
                                                           bypass_decoder(p, rec.id, oi));
        if (sel.recipe.id == rec.id && sel.orientation_index == oi) ++correct;
    }
    char buf[120];
    std::snprintf(buf, sizeof buf, "%d/%d recipe+orientation selections correct", correct, cases);
    return verdict(6, correct == cases, buf);
}

int criterion7() {
    namespace fs = std::filesystem;
    fs::create_directories("/tmp/prism_acc7");
    auto corpus = standard_corpus(25);
    auto rs = recipes::builtin_recipes();

    // dataset: 240 bases -> 1200 samples
    std::string data_dir = "/tmp/prism_acc7/data240";
    if (!fs::exists(data_dir + "/manifest.json")) {
        auto samples = trainkit::gen_samples(2001, 240, rs, corpus);
        trainkit::save_dataset(samples, data_dir);
    }

    trainkit::TrainConfig cfg3;
    cfg3.dataset_dir = data_dir;
    cfg3.out_checkpoint = "/tmp/prism_acc7/model3d.prck";
    cfg3.curves_csv = "/tmp/prism_acc7/curves3d.csv";
    cfg3.scale = 0.25;
    cfg3.epochs = 25;
    cfg3.patience = 12;
    cfg3.batch = 16;
    cfg3.seed = 3;
    cfg3.lr = 1e-3;
    auto sum3 = trainkit::train_3d(cfg3);

    trainkit::TrainConfig cfg2;
    cfg2.out_checkpoint = "/tmp/prism_acc7/enc2d.prck";
    cfg2.scale = 0.25;
    cfg2.epochs = 30;
    cfg2.patience = 5;
    cfg2.batch = 8;
    cfg2.seed = 1;
    trainkit::train_2d(cfg2, corpus);

    auto ckpt3 = ad::load_checkpoint(cfg3.out_checkpoint);
    auto ckpt2 = ad::load_checkpoint(cfg2.out_checkpoint);
    pipeline::NetworkDecoder dec(ckpt3, rs, 0.25);
    retrieval::ProfileEncoder enc(ckpt2, 0.25);
    retrieval::EmbeddingIndex idx;
    for (size_t i = 0; i < corpus.size(); ++i) {
        idx.ids.push_back("v" + std::to_string(i));
        idx.embeddings.push_back(
            retrieval::embed_normalized(enc, sketch::rasterize(corpus[i].loops, nets::kProfileRes)));
    }

    // held-out rounded inputs from a fresh seed
    auto held = trainkit::gen_samples(777, 13, rs, corpus);
    std::vector<double> ious;
    int valid = 0, total = 0;
    for (const auto& s : held) {
        if (s.radius_vox == 0.0) continue;  // evaluate rounded inputs only
        if (total == 50) break;
        ++total;
        dec.set_input(s.input);
        auto rep = pipeline::reconstruct(
            s.input, [&](const recipes::ExtrusionRecipe& r, int oi) { return dec(r, oi); }, rs,
            idx, corpus, enc, &s.inside);
        if (!rep.error.empty()) {
            ious.push_back(0.0);
            continue;
        }
        ious.push_back(rep.iou);
        if (rep.validity.valid()) ++valid;
    }
    std::sort(ious.begin(), ious.end());
    double median = ious.empty() ? 0.0 : ious[ious.size() / 2];
    double valid_ratio = total ? double(valid) / total : 0.0;
    bool trained = sum3.final_val < sum3.first_epoch_loss;
    bool pass = median >= 0.70 && valid_ratio >= 0.80 && trained && total >= 50;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "median IoU %.3f (>=0.70), valid %.2f (>=0.80), %d cases, loss %.3f -> %.3f",
                  median, valid_ratio, total, sum3.first_epoch_loss, sum3.final_val);
    return verdict(7, pass, buf);
}

int criterion8() {
    namespace fs = std::filesystem;
    auto corpus = standard_corpus(12);
    auto rs = recipes::builtin_recipes();

    // (a) data generation: identical checksums across runs, pinned digest
    fs::remove_all("/tmp/prism_acc8/d1");
    fs::remove_all("/tmp/prism_acc8/d2");
    auto s1 = trainkit::gen_samples(12345, 3, rs, corpus);
    auto s2 = trainkit::gen_samples(12345, 3, rs, corpus);
    uint64_t c1 = trainkit::save_dataset(s1, "/tmp/prism_acc8/d1");
    uint64_t c2 = trainkit::save_dataset(s2, "/tmp/prism_acc8/d2");
    const uint64_t kPinnedDataDigest = PRISM_PINNED_DATA_DIGEST;
    bool data_ok = c1 == c2 && (kPinnedDataDigest == 0 || c1 == kPinnedDataDigest);

    // (b) reconstruct twice with the same inputs -> identical programs
    pipeline::CadProgram p;
    {
        std::mt19937_64 rng(4);
        p = random_program(rng, recipe_by_id(rs, "single"), corpus, 32);
    }
    BinaryGrid3 vox = pipeline::voxelize_program(p, nets::kVoxelRes);
    SdfGrid3 input = sdf_from_binary(vox);
    ad::Graph eg;
    std::mt19937_64 erng(8);
    int ex = eg.input({1, nets::kProfileRes, nets::kProfileRes});
    nets::build_encoder2d(eg, ex, 0.125, erng);
    retrieval::ProfileEncoder enc(eg.named_params(), 0.125);
    retrieval::EmbeddingIndex idx;
    for (size_t i = 0; i < corpus.size(); ++i) {
        idx.ids.push_back("v" + std::to_string(i));
        idx.embeddings.push_back(
            retrieval::embed_normalized(enc, sketch::rasterize(corpus[i].loops, nets::kProfileRes)));
    }
    auto decode = bypass_decoder(p, p.recipe_id, 0);
    auto rep1 = pipeline::reconstruct(input, decode, rs, idx, corpus, enc);
    auto rep2 = pipeline::reconstruct(input, decode, rs, idx, corpus, enc);
    bool recon_ok = rep1.error.empty() &&
                    pipeline::program_to_json(rep1.program) ==
                        pipeline::program_to_json(rep2.program);

    // (c) resuming training twice from the same checkpoint is bit-identical
    trainkit::TrainConfig base;
    base.dataset_dir = "/tmp/prism_acc8/d1";
    base.out_checkpoint = "/tmp/prism_acc8/warm.prck";
    base.scale = 0.125;
    base.epochs = 1;
    base.batch = 4;
    base.seed = 9;
    trainkit::train_3d(base);
    auto resume = base;
    resume.resume_from = base.out_checkpoint;
    resume.out_checkpoint = "/tmp/prism_acc8/r1.prck";
    resume.epochs = 2;
    trainkit::train_3d(resume);
    resume.out_checkpoint = "/tmp/prism_acc8/r2.prck";
    trainkit::train_3d(resume);
    auto bytes = [](const std::string& path) {
        FILE* f = std::fopen(path.c_str(), "rb");
        std::vector<unsigned char> out;
        if (!f) return out;
        unsigned char buf[65536];
        size_t k;
        while ((k = std::fread(buf, 1, sizeof buf, f)) > 0) out.insert(out.end(), buf, buf + k);
        std::fclose(f);
        return out;
    };
    bool resume_ok = !bytes("/tmp/prism_acc8/r1.prck").empty() &&
                     bytes("/tmp/prism_acc8/r1.prck") == bytes("/tmp/prism_acc8/r2.prck");

    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "data digest %016llx %s, reconstruct repeat %s, resumed training %s",
                  static_cast<unsigned long long>(c1), data_ok ? "stable" : "UNSTABLE",
                  recon_ok ? "identical" : "DIFFERS", resume_ok ? "bit-identical" : "DIFFERS");
    return verdict(8, data_ok && recon_ok && resume_ok, buf);
}

int criterion9() {
    bool pass = true;
    std::string detail;

    // hash equality within templates, inequality across
    std::vector<uint64_t> digests;
    for (const auto& t : sketch::builtin_templates()) {
        auto vars = sketch::flood_variations(t, t.seed_params(), 50);
        if (vars.empty()) pass = false;
        for (const auto& v : vars)
            if (v.hash != vars[0].hash) pass = false;
        digests.push_back(vars.empty() ? 0 : vars[0].hash);
    }
    for (size_t i = 0; i < digests.size(); ++i)
        for (size_t j = i + 1; j < digests.size(); ++j)
            if (digests[i] == digests[j]) pass = false;

    // the catalogued corpus configuration reproduces exactly
    uint64_t digest = 1469598103934665603ULL;
    size_t total = 0;
    std::vector<std::pair<std::string, size_t>> counts;
    for (const auto& t : sketch::builtin_templates()) {
        int want = t.name == "rectangle" ? 1000 : t.name == "circle" ? 1 : 30;
        auto vars = sketch::flood_variations(t, t.seed_params(), want);
        counts.push_back({t.name, vars.size()});
        total += vars.size();
        for (const auto& v : vars) {
            digest = trainkit::fnv1a64(&v.hash, sizeof v.hash, digest);
            for (double p : v.params) digest = trainkit::fnv1a64(&p, sizeof p, digest);
        }
    }
    const uint64_t kPinnedFloodDigest = PRISM_PINNED_FLOOD_DIGEST;
    const size_t kPinnedTotal = PRISM_PINNED_FLOOD_TOTAL;
    bool golden_ok = (kPinnedFloodDigest == 0 || digest == kPinnedFloodDigest) &&
                     (kPinnedTotal == 0 || total == kPinnedTotal);
    char buf[200];
    std::snprintf(buf, sizeof buf, "per-template hashes stable, corpus %zu variations, digest %016llx",
                  total, static_cast<unsigned long long>(digest));
    return verdict(9, pass && golden_ok, buf);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: acceptance <criterion 1..9>\n");
        return 2;
    }
    int n = std::atoi(argv[1]);
    auto t0 = std::chrono::steady_clock::now();
    int rc = 2;
    switch (n) {
        case 1: rc = criterion1(); break;
        case 2: rc = criterion2(); break;
        case 3: rc = criterion3(); break;
        case 4: rc = criterion4(); break;
        case 5: rc = criterion5(); break;
        case 6: rc = criterion6(); break;
        case 7: rc = criterion7(); break;
        case 8: rc = criterion8(); break;
        case 9: rc = criterion9(); break;
        default: std::fprintf(stderr, "unknown criterion %d\n", n); return 2;
    }
    auto dt = std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - t0);
    std::fprintf(stderr, "[criterion %d ran in %llds]\n", n,
                 static_cast<long long>(dt.count()));
    return rc;
}
