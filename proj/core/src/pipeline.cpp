#include "prism/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "json.hpp"
#include "prism/nets.hpp"

namespace prism::pipeline {

using recipes::Axis;
using recipes::Boolean;
using recipes::Envelope;
using recipes::ExtrusionRecipe;

namespace {

const char* axis_name(Axis a) { return a == Axis::X ? "X" : a == Axis::Y ? "Y" : "Z"; }
Axis axis_from(const std::string& s) {
    if (s == "X") return Axis::X;
    if (s == "Y") return Axis::Y;
    if (s == "Z") return Axis::Z;
    throw std::invalid_argument("bad axis: " + s);
}
const char* bool_name(Boolean b) {
    return b == Boolean::Union ? "UNION" : b == Boolean::Subtract ? "SUBTRACT" : "INTERSECT";
}
Boolean bool_from(const std::string& s) {
    if (s == "UNION") return Boolean::Union;
    if (s == "SUBTRACT") return Boolean::Subtract;
    if (s == "INTERSECT") return Boolean::Intersect;
    throw std::invalid_argument("bad boolean: " + s);
}

std::vector<sketch::Loop> placed_loops(const ProgramStep& step) {
    std::vector<sketch::Loop> all;
    for (const ProgramLoop& pl : step.loops)
        for (const auto& l : pl.loops()) all.push_back(l);
    return all;
}

}  // namespace

std::vector<sketch::Loop> ProgramLoop::loops() const {
    const auto& t = sketch::template_by_name(template_name);
    auto r = t.generator(params);  // raw geometry; validity is reported separately
    std::vector<sketch::Loop> out;
    for (const auto& l : r.loops) out.push_back(sketch::transform_loop(l, scale, tx, ty));
    return out;
}

std::string program_to_json(const CadProgram& p) {
    nlohmann::json j;
    j["version"] = 1;
    j["recipe"] = p.recipe_id;
    j["orientation"] = {{"axis", p.orientation.axis}, {"sign", p.orientation.sign}};
    j["steps"] = nlohmann::json::array();
    for (const auto& s : p.steps) {
        nlohmann::json js;
        js["axis"] = axis_name(s.axis);
        js["boolean"] = bool_name(s.boolean);
        js["start"] = s.start;
        js["end"] = s.end;
        js["loops"] = nlohmann::json::array();
        for (const auto& l : s.loops) {
            js["loops"].push_back({{"template", l.template_name},
                                   {"params", l.params},
                                   {"tx", l.tx},
                                   {"ty", l.ty},
                                   {"scale", l.scale}});
        }
        j["steps"].push_back(js);
    }
    return j.dump(2);
}

CadProgram program_from_json(const std::string& json) {
    nlohmann::json j = nlohmann::json::parse(json);
    if (j.value("version", 0) != 1) throw std::runtime_error("unsupported program version");
    CadProgram p;
    p.recipe_id = j.at("recipe").get<std::string>();
    auto ja = j.at("orientation").at("axis");
    auto js = j.at("orientation").at("sign");
    for (int i = 0; i < 3; ++i) {
        p.orientation.axis[size_t(i)] = ja.at(size_t(i)).get<int>();
        p.orientation.sign[size_t(i)] = js.at(size_t(i)).get<int>();
    }
    for (const auto& stepj : j.at("steps")) {
        ProgramStep s;
        s.axis = axis_from(stepj.at("axis").get<std::string>());
        s.boolean = bool_from(stepj.at("boolean").get<std::string>());
        s.start = stepj.at("start").get<double>();
        s.end = stepj.at("end").get<double>();
        for (const auto& lj : stepj.at("loops")) {
            ProgramLoop l;
            l.template_name = lj.at("template").get<std::string>();
            l.params = lj.at("params").get<std::vector<double>>();
            l.tx = lj.at("tx").get<double>();
            l.ty = lj.at("ty").get<double>();
            l.scale = lj.at("scale").get<double>();
            s.loops.push_back(std::move(l));
        }
        p.steps.push_back(std::move(s));
    }
    return p;
}

bool ValidityReport::valid() const {
    for (const auto& c : checks)
        if (!c.advisory && !c.pass) return false;
    return true;
}

ValidityReport validate_program(const CadProgram& p) {
    ValidityReport rep;
    auto add = [&](std::string name, bool pass, bool advisory, int step, int loop) {
        rep.checks.push_back({std::move(name), pass, advisory, step, loop});
    };
    for (int si = 0; si < int(p.steps.size()); ++si) {
        const ProgramStep& s = p.steps[size_t(si)];
        for (int li = 0; li < int(s.loops.size()); ++li) {
            const ProgramLoop& pl = s.loops[size_t(li)];
            const auto& t = sketch::template_by_name(pl.template_name);
            auto inst = sketch::instantiate(t, pl.params);
            bool closed = inst.reason != sketch::InvalidReason::ConstraintFailure &&
                          inst.reason != sketch::InvalidReason::OutOfRange;
            add("loops closed", closed, false, si, li);
            add("no self-intersection", inst.reason != sketch::InvalidReason::SelfIntersection,
                false, si, li);
        }
        // Cross-loop contact (tangency or crossing) within one sketch plane.
        bool tangency = false;
        if (s.loops.size() > 1) {
            std::vector<sketch::Loop> all = placed_loops(s);
            bool combined = sketch::self_intersects(all);
            bool individual = false;
            for (const ProgramLoop& pl : s.loops)
                if (sketch::self_intersects(pl.loops())) individual = true;
            tangency = combined && !individual;
        }
        add("no loop tangency", !tangency, false, si, -1);
        add("non-degenerate interval", s.end > s.start, false, si, -1);
    }
    // Advisory: a subtract step should remove material from the base.
    bool has_subtract = false;
    for (const auto& s : p.steps)
        if (s.boolean == Boolean::Subtract) has_subtract = true;
    if (has_subtract && rep.valid()) {
        const int res = 32;
        CadProgram partial = p;
        for (int si = 1; si < int(p.steps.size()); ++si) {
            if (p.steps[size_t(si)].boolean != Boolean::Subtract) continue;
            partial.steps.assign(p.steps.begin(), p.steps.begin() + si);
            BinaryGrid3 base = voxelize_program(partial, res);
            CadProgram cut_only = p;
            cut_only.steps = {p.steps[size_t(si)]};
            cut_only.steps[0].boolean = Boolean::Union;
            BinaryGrid3 cut = voxelize_program(cut_only, res);
            bool overlaps = false;
            for (size_t i = 0; i < base.v.size(); ++i)
                if (base.v[i] && cut.v[i]) overlaps = true;
            add("subtract overlaps base", overlaps, true, si, -1);
        }
    }
    return rep;
}

BinaryGrid3 voxelize_program(const CadProgram& p, int res) {
    if (p.steps.empty()) throw std::invalid_argument("empty program");
    // Per-step 2D membership tables at voxel-center resolution.
    struct StepTable {
        std::vector<uint8_t> in;  // [loop_y][loop_x]
    };
    std::vector<StepTable> tables;
    for (const auto& s : p.steps) {
        StepTable t;
        t.in.assign(size_t(res) * res, 0);
        std::vector<sketch::Loop> loops = placed_loops(s);
        for (int b = 0; b < res; ++b)
            for (int a = 0; a < res; ++a)
                t.in[size_t(b) * res + a] =
                    sketch::point_in_loops(loops, {(a + 0.5) / res, (b + 0.5) / res}) ? 1 : 0;
        tables.push_back(std::move(t));
    }
    BinaryGrid3 out(res);
    const int c = res - 1;  // doubled-coordinate center
    for (int z = 0; z < res; ++z) {
        for (int y = 0; y < res; ++y) {
            for (int x = 0; x < res; ++x) {
                std::array<int, 3> d{2 * x - c, 2 * y - c, 2 * z - c};
                auto q = p.orientation.apply(d);
                int rx = (q[0] + c) / 2, ry = (q[1] + c) / 2, rz = (q[2] + c) / 2;
                bool inside = false;
                for (size_t si = 0; si < p.steps.size(); ++si) {
                    const ProgramStep& s = p.steps[si];
                    int wi = s.axis == Axis::X ? rx : s.axis == Axis::Y ? ry : rz;
                    double w = (wi + 0.5) / res;
                    bool in_interval = w > s.start && w < s.end;
                    int la = s.axis == Axis::X ? rz : rx;              // loop x index
                    int lb = s.axis == Axis::Y ? rz : ry;              // loop y index
                    bool member = in_interval && tables[si].in[size_t(lb) * res + la];
                    switch (s.boolean) {
                        case Boolean::Union: inside = inside || member; break;
                        case Boolean::Subtract: inside = inside && !member; break;
                        case Boolean::Intersect: inside = inside && member; break;
                    }
                }
                out.at(x, y, z) = inside ? 1 : 0;
            }
        }
    }
    return out;
}

const std::vector<Rotation24>& candidate_orientations() {
    static const std::vector<Rotation24> o = {Rotation24::identity(), Rotation24::rot90_x(),
                                              Rotation24::rot90_y()};
    return o;
}

double voxel_bce(const SdfGrid3& phi, const SdfGrid3& target) {
    if (phi.n != target.n) throw std::invalid_argument("voxel_bce: dimension mismatch");
    double acc = 0;
    for (size_t i = 0; i < phi.count(); ++i) {
        double x = phi.v[i];
        double t = target.v[i] >= 0 ? 1.0 : 0.0;  // 1 = outside
        acc += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
    }
    return acc / double(phi.count());
}

std::pair<double, double> envelope_to_interval(const Envelope& start_logits,
                                               const Envelope& end_logits) {
    const int n = int(start_logits.size());
    if (int(end_logits.size()) != n || n < 2) throw std::invalid_argument("bad envelope length");
    auto crossings = [&](const Envelope& a, bool down) {
        std::vector<double> out;
        for (int i = 0; i + 1 < n; ++i) {
            double v0 = a[size_t(i)], v1 = a[size_t(i + 1)];
            bool hit = down ? (v0 > 0 && v1 <= 0) : (v0 <= 0 && v1 > 0);
            if (!hit) continue;
            double t = v0 / (v0 - v1);  // sub-cell linear interpolation
            out.push_back((i + 0.5 + t) / n);
        }
        return out;
    };
    std::vector<double> starts = crossings(start_logits, true);
    std::vector<double> ends = crossings(end_logits, false);
    if (starts.empty()) starts.push_back(0.0);  // plane below the grid
    if (ends.empty()) ends.push_back(1.0);      // plane above the grid
    double best_s = 0, best_e = 0, best_len = -1;
    for (double s : starts)
        for (double e : ends)
            if (e > s && e - s > best_len) {
                best_len = e - s;
                best_s = s;
                best_e = e;
            }
    if (best_len < 0) throw std::runtime_error("degenerate interval");
    return {best_s, best_e};
}

namespace {

SdfGrid3 compose_candidate(const ExtrusionRecipe& r, const DecodedArrays& d) {
    std::vector<SdfGrid3> parts;
    for (size_t i = 0; i < r.steps.size(); ++i) {
        SdfGrid2 p64 = nets::downsample_profile_values(d.profiles[i]);
        parts.push_back(recipes::extrude_part_values(p64, d.starts[i], d.ends[i],
                                                     r.steps[i].axis));
    }
    return recipes::compose_values(r, parts);
}

std::vector<Selection> score_all(const SdfGrid3& input,
                                 const std::vector<ExtrusionRecipe>& recipe_list,
                                 const DecodeFn& decode) {
    if (recipe_list.empty()) throw std::invalid_argument("no recipes registered");
    std::vector<SdfGrid3> rotated;
    for (const auto& r : candidate_orientations()) rotated.push_back(rotate_grid(input, r));
    std::vector<Selection> all;
    for (const auto& rec : recipe_list) {
        for (int oi = 0; oi < int(candidate_orientations().size()); ++oi) {
            Selection s;
            s.recipe = rec;
            s.orientation_index = oi;
            s.orientation = candidate_orientations()[size_t(oi)];
            s.decoded = decode(rec, oi);
            s.phi = compose_candidate(rec, s.decoded);
            s.l_vox = voxel_bce(s.phi, rotated[size_t(oi)]);
            all.push_back(std::move(s));
        }
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const Selection& a, const Selection& b) { return a.l_vox < b.l_vox; });
    return all;
}

}  // namespace

Selection select_recipe_and_orientation(const SdfGrid3& input,
                                        const std::vector<ExtrusionRecipe>& recipe_list,
                                        const DecodeFn& decode) {
    return score_all(input, recipe_list, decode).front();
}

struct NetworkDecoder::PerRecipe {
    ad::Graph graph;
    int input = -1;
    recipes::DecodeOutputs out;
    std::string id;
};

NetworkDecoder::NetworkDecoder(const std::map<std::string, ad::Tensor>& weights,
                               const std::vector<ExtrusionRecipe>& recipe_list, double scale) {
    for (const auto& rec : recipe_list) {
        auto pr = std::make_shared<PerRecipe>();
        std::mt19937_64 rng(0);
        pr->id = rec.id;
        pr->input = pr->graph.input({1, nets::kVoxelRes, nets::kVoxelRes, nets::kVoxelRes}, "vox");
        int z = nets::build_voxel_encoder(pr->graph, pr->input, scale, rng);
        pr->out = recipes::decode_model(pr->graph, z, rec, scale, rng);
        pr->graph.load_params(weights);
        per_recipe_.push_back(std::move(pr));
    }
}

void NetworkDecoder::set_input(const SdfGrid3& input) {
    rotated_inputs_.clear();
    for (const auto& r : candidate_orientations()) rotated_inputs_.push_back(rotate_grid(input, r));
}

DecodedArrays NetworkDecoder::operator()(const ExtrusionRecipe& r, int orientation_index) const {
    const PerRecipe* pr = nullptr;
    for (const auto& p : per_recipe_)
        if (p->id == r.id) pr = p.get();
    if (!pr) throw std::invalid_argument("recipe not registered with decoder: " + r.id);
    if (orientation_index < 0 || orientation_index >= int(rotated_inputs_.size()))
        throw std::invalid_argument("set_input not called or bad orientation");
    ad::Context ctx;
    ad::evaluate(pr->graph, {{pr->input, nets::tensor_from_grid(rotated_inputs_[size_t(orientation_index)])}},
                 ctx);
    DecodedArrays d;
    for (size_t i = 0; i < r.steps.size(); ++i) {
        SdfGrid2 prof(nets::kProfileRes);
        const auto& pv = ctx.val[size_t(pr->out.profiles[i])].v;
        for (size_t k = 0; k < prof.count(); ++k) prof.v[k] = float(pv[k]);
        d.profiles.push_back(std::move(prof));
        Envelope s(nets::kEnvelopeLen), e(nets::kEnvelopeLen);
        const auto& sv = ctx.val[size_t(pr->out.starts[i])].v;
        const auto& ev = ctx.val[size_t(pr->out.ends[i])].v;
        for (int k = 0; k < nets::kEnvelopeLen; ++k) {
            s[size_t(k)] = float(sv[size_t(k)]);
            e[size_t(k)] = float(ev[size_t(k)]);
        }
        d.starts.push_back(std::move(s));
        d.ends.push_back(std::move(e));
    }
    return d;
}

CadProgram build_program(const Selection& sel,
                         const std::vector<std::vector<retrieval::FitResult>>& fits,
                         const std::vector<std::pair<double, double>>& intervals) {
    if (fits.size() != sel.recipe.steps.size() || intervals.size() != sel.recipe.steps.size())
        throw std::invalid_argument("per-step fits/intervals required");
    CadProgram p;
    p.recipe_id = sel.recipe.id;
    p.orientation = sel.orientation;
    for (size_t i = 0; i < sel.recipe.steps.size(); ++i) {
        if (fits[i].empty()) throw std::invalid_argument("missing fit for step " + std::to_string(i));
        ProgramStep s;
        s.axis = sel.recipe.steps[i].axis;
        s.boolean = sel.recipe.steps[i].boolean;
        s.start = intervals[i].first;
        s.end = intervals[i].second;
        for (const auto& f : fits[i])
            s.loops.push_back({f.template_name, f.params, f.tx, f.ty, f.scale});
        p.steps.push_back(std::move(s));
    }
    // Shared planes are copied from the source step, never re-extracted.
    for (size_t i = 0; i < sel.recipe.steps.size(); ++i) {
        const recipes::Step& rs = sel.recipe.steps[i];
        auto resolve = [&](const recipes::PlaneRef& ref) {
            return ref.plane == recipes::Plane::Start ? p.steps[size_t(ref.step)].start
                                                      : p.steps[size_t(ref.step)].end;
        };
        if (!rs.start_ref.own) p.steps[i].start = resolve(rs.start_ref);
        if (!rs.end_ref.own) p.steps[i].end = resolve(rs.end_ref);
    }
    return p;
}

CadProgram refine_program(const CadProgram& p, const BinaryGrid3& target, int max_iterations) {
    // Pack the continuous parameters: per step start/end, per loop tx/ty/scale.
    std::vector<double> x0;
    for (const auto& step : p.steps) {
        x0.push_back(step.start);
        x0.push_back(step.end);
        for (const auto& l : step.loops) {
            x0.push_back(l.tx);
            x0.push_back(l.ty);
            x0.push_back(l.scale);
        }
    }
    // Shared planes must stay tied to their source step through refinement.
    const recipes::ExtrusionRecipe* rec = nullptr;
    static const std::vector<recipes::ExtrusionRecipe> builtins = recipes::builtin_recipes();
    for (const auto& r : builtins)
        if (r.id == p.recipe_id && r.steps.size() == p.steps.size()) rec = &r;
    auto unpack = [&](const std::vector<double>& x) {
        CadProgram q = p;
        size_t k = 0;
        for (auto& step : q.steps) {
            step.start = x[k++];
            step.end = x[k++];
            for (auto& l : step.loops) {
                l.tx = x[k++];
                l.ty = x[k++];
                l.scale = x[k++];
            }
        }
        if (rec) {
            for (size_t i = 0; i < q.steps.size(); ++i) {
                auto resolve = [&](const recipes::PlaneRef& ref) {
                    return ref.plane == recipes::Plane::Start ? q.steps[size_t(ref.step)].start
                                                              : q.steps[size_t(ref.step)].end;
                };
                if (!rec->steps[i].start_ref.own) q.steps[i].start = resolve(rec->steps[i].start_ref);
                if (!rec->steps[i].end_ref.own) q.steps[i].end = resolve(rec->steps[i].end_ref);
            }
        }
        return q;
    };
    auto objective = [&](const std::vector<double>& x) {
        try {
            return -iou(voxelize_program(unpack(x), target.n), target);
        } catch (const std::exception&) {
            return 1.0;  // degenerate proposal (e.g. start >= end)
        }
    };
    std::vector<double> step(x0.size(), 2.0 / 64.0);  // about two voxels
    int used = 0;
    auto [x1, f1] = retrieval::nelder_mead(objective, x0, step, max_iterations, used);
    // polish restart with a half-voxel simplex around the best point
    std::vector<double> step2(x0.size(), 0.5 / 64.0);
    auto [x_best, f_best] = retrieval::nelder_mead(objective, x1, step2, max_iterations, used);
    return f_best <= objective(x0) ? unpack(x_best) : p;
}

ReconstructReport reconstruct(const SdfGrid3& input, const DecodeFn& decode,
                              const std::vector<ExtrusionRecipe>& recipe_list,
                              const retrieval::EmbeddingIndex& index,
                              const std::vector<sketch::SketchVariation>& variations,
                              const retrieval::ProfileEncoder& encoder,
                              const BinaryGrid3* ground_truth) {
    ReconstructReport rep;
    auto candidates = score_all(input, recipe_list, decode);
    std::string last_error;
    for (const Selection& sel : candidates) {
        try {
            std::vector<std::vector<retrieval::FitResult>> fits;
            std::vector<std::pair<double, double>> intervals;
            for (size_t i = 0; i < sel.recipe.steps.size(); ++i) {
                BinaryGrid2 mask = threshold(sel.decoded.profiles[i]);
                auto comps = retrieval::extract_loops(mask);
                // Drop speck components: thresholding soft logits leaves
                // isolated noise pixels that are not real profile regions.
                size_t largest = 0;
                for (const auto& comp : comps) {
                    size_t a = 0;
                    for (uint8_t b : comp.outer.v) a += b;
                    largest = std::max(largest, a);
                }
                size_t min_area = std::max<size_t>(9, largest / 50);
                std::vector<retrieval::FitResult> step_fits;
                for (const auto& comp : comps) {
                    size_t a = 0;
                    for (uint8_t b : comp.outer.v) a += b;
                    if (a < min_area) continue;
                    step_fits.push_back(
                        retrieval::retrieve_and_fit(index, variations, encoder, comp.outer));
                    for (const auto& hole : comp.inners) {
                        size_t ha = 0;
                        for (uint8_t b : hole.v) ha += b;
                        if (ha < min_area) continue;
                        step_fits.push_back(
                            retrieval::retrieve_and_fit(index, variations, encoder, hole));
                    }
                }
                if (step_fits.empty()) throw std::runtime_error("empty profile after threshold");
                fits.push_back(std::move(step_fits));
                intervals.push_back(
                    envelope_to_interval(sel.decoded.starts[i], sel.decoded.ends[i]));
            }
            rep.program = build_program(sel, fits, intervals);
            rep.program = refine_program(rep.program, threshold(input));
            rep.validity = validate_program(rep.program);
            rep.l_vox = sel.l_vox;
            BinaryGrid3 vox = voxelize_program(rep.program, input.n);
            if (ground_truth) {
                rep.iou = iou(*ground_truth, vox);
            } else {
                rep.iou = iou(threshold(input), vox);
                rep.iou_vs_rounded_input = true;
            }
            rep.error.clear();
            return rep;
        } catch (const std::exception& e) {
            last_error = e.what();  // fall through to the next-best candidate
        }
    }
    rep.error = "all candidates failed: " + last_error;
    return rep;
}

}  // namespace prism::pipeline
