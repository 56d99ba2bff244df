#include "prism/recipes.hpp"

#include <stdexcept>

#include "prism/nets.hpp"

#include "json.hpp"

namespace prism::recipes {

using nlohmann::json;

void ExtrusionRecipe::validate() const {
    if (steps.empty() || steps.size() > 3)
        throw std::invalid_argument("recipe '" + id + "': 1 to 3 steps required");
    if (steps[0].axis != Axis::Z)
        throw std::invalid_argument("recipe '" + id + "': step 0 must extrude along z");
    if (steps[0].boolean != Boolean::Union)
        throw std::invalid_argument("recipe '" + id + "': step 0 must be a union");
    for (size_t i = 0; i < steps.size(); ++i) {
        for (const PlaneRef* ref : {&steps[i].start_ref, &steps[i].end_ref}) {
            if (ref->own) continue;
            if (ref->step < 0 || ref->step >= int(i))
                throw std::invalid_argument("recipe '" + id + "': shared plane must reference an earlier step");
            if (steps[size_t(ref->step)].axis != steps[i].axis)
                throw std::invalid_argument("recipe '" + id + "': shared plane requires a common axis");
        }
    }
}

std::vector<ExtrusionRecipe> builtin_recipes() {
    std::vector<ExtrusionRecipe> out;

    ExtrusionRecipe a{"single", 56.7, {Step{Axis::Z, Boolean::Union, {}, {}}}};
    out.push_back(a);

    // Boss stacked on the end plane of the base: S1 = -E0.
    ExtrusionRecipe b{"stacked_boss", 5.2,
                      {Step{Axis::Z, Boolean::Union, {}, {}},
                       Step{Axis::Z, Boolean::Union, {false, 0, Plane::End}, {}}}};
    out.push_back(b);

    // Cut sharing the base's end plane: E1 = E0.
    ExtrusionRecipe c{"end_shared_cut", 4.5,
                      {Step{Axis::Z, Boolean::Union, {}, {}},
                       Step{Axis::Z, Boolean::Subtract, {}, {false, 0, Plane::End}}}};
    out.push_back(c);

    // Two joined extrusions sharing the start plane: S1 = S0.
    ExtrusionRecipe d{"start_shared_pair", 2.9,
                      {Step{Axis::Z, Boolean::Union, {}, {}},
                       Step{Axis::Z, Boolean::Union, {false, 0, Plane::Start}, {}}}};
    out.push_back(d);

    // Orthogonal cut along x.
    ExtrusionRecipe e{"orthogonal_cut", 2.6,
                      {Step{Axis::Z, Boolean::Union, {}, {}},
                       Step{Axis::X, Boolean::Subtract, {}, {}}}};
    out.push_back(e);

    for (auto& r : out) r.validate();
    return out;
}

namespace {

const char* axis_name(Axis a) { return a == Axis::X ? "X" : a == Axis::Y ? "Y" : "Z"; }
const char* bool_name(Boolean b) {
    return b == Boolean::Union ? "UNION" : b == Boolean::Subtract ? "SUBTRACT" : "INTERSECT";
}

Axis axis_from(const std::string& s) {
    if (s == "X") return Axis::X;
    if (s == "Y") return Axis::Y;
    if (s == "Z") return Axis::Z;
    throw std::invalid_argument("bad axis: " + s);
}
Boolean bool_from(const std::string& s) {
    if (s == "UNION") return Boolean::Union;
    if (s == "SUBTRACT") return Boolean::Subtract;
    if (s == "INTERSECT") return Boolean::Intersect;
    throw std::invalid_argument("bad boolean: " + s);
}

json ref_to_json(const PlaneRef& r) {
    if (r.own) return "OWN";
    return json{{"step", r.step}, {"plane", r.plane == Plane::Start ? "START" : "END"}};
}

PlaneRef ref_from_json(const json& j) {
    if (j.is_string() && j.get<std::string>() == "OWN") return {};
    PlaneRef r;
    r.own = false;
    r.step = j.at("step").get<int>();
    std::string p = j.at("plane").get<std::string>();
    if (p != "START" && p != "END") throw std::invalid_argument("bad plane ref: " + p);
    r.plane = p == "START" ? Plane::Start : Plane::End;
    return r;
}

}  // namespace

std::string recipe_to_json(const ExtrusionRecipe& r) {
    json steps = json::array();
    for (const auto& s : r.steps)
        steps.push_back({{"axis", axis_name(s.axis)},
                         {"boolean", bool_name(s.boolean)},
                         {"start_ref", ref_to_json(s.start_ref)},
                         {"end_ref", ref_to_json(s.end_ref)}});
    return json{{"id", r.id}, {"prior", r.prior}, {"steps", steps}}.dump();
}

ExtrusionRecipe recipe_from_json(const std::string& text) {
    json j = json::parse(text);
    ExtrusionRecipe r;
    r.id = j.at("id").get<std::string>();
    r.prior = j.at("prior").get<double>();
    for (const auto& s : j.at("steps")) {
        Step step;
        step.axis = axis_from(s.at("axis").get<std::string>());
        step.boolean = bool_from(s.at("boolean").get<std::string>());
        step.start_ref = ref_from_json(s.at("start_ref"));
        step.end_ref = ref_from_json(s.at("end_ref"));
        r.steps.push_back(step);
    }
    r.validate();
    return r;
}

int extrude_part(ad::Graph& g, int profile64, int start_env, int end_env, Axis axis) {
    constexpr int N = nets::kEnvelopeLen;
    int env = g.elementwise_max(start_env, end_env);  // [64], negative on the span
    int prof3d, env3d;
    switch (axis) {
        case Axis::Z:
            // profile rows are y, cols are x; broadcast over z.
            prof3d = g.replicate_along_axis(profile64, 0, N);
            env3d = g.replicate_along_axis(g.replicate_along_axis(env, 1, N), 2, N);
            break;
        case Axis::X:
            // profile rows are y, cols are z; transpose to [z,y], broadcast over x.
            prof3d = g.replicate_along_axis(g.transpose2d(profile64), 2, N);
            env3d = g.replicate_along_axis(g.replicate_along_axis(env, 0, N), 0, N);
            break;
        case Axis::Y:
            // profile rows are z, cols are x; broadcast over y.
            prof3d = g.replicate_along_axis(profile64, 1, N);
            env3d = g.replicate_along_axis(g.replicate_along_axis(env, 1, N), 0, N);
            break;
        default:
            throw std::logic_error("bad axis");
    }
    return g.elementwise_max(prof3d, env3d);
}

int compose(ad::Graph& g, const ExtrusionRecipe& r, const std::vector<int>& parts) {
    if (parts.size() != r.steps.size())
        throw std::invalid_argument("compose: part count does not match recipe steps");
    int phi = parts[0];
    for (size_t i = 1; i < parts.size(); ++i) {
        switch (r.steps[i].boolean) {
            case Boolean::Union: phi = g.elementwise_min(phi, parts[i]); break;
            case Boolean::Intersect: phi = g.elementwise_max(phi, parts[i]); break;
            case Boolean::Subtract: phi = g.elementwise_max(phi, g.negate(parts[i])); break;
        }
    }
    return phi;
}

SdfGrid3 extrude_part_values(const SdfGrid2& profile64, const Envelope& start_env,
                             const Envelope& end_env, Axis axis) {
    constexpr int N = nets::kEnvelopeLen;
    if (profile64.n != N || int(start_env.size()) != N || int(end_env.size()) != N)
        throw std::invalid_argument("extrude_part: bad shapes");
    SdfGrid3 out(N);
    for (int z = 0; z < N; ++z)
        for (int y = 0; y < N; ++y)
            for (int x = 0; x < N; ++x) {
                int w = axis == Axis::Z ? z : axis == Axis::X ? x : y;
                // profile image is indexed (col, row); grid at(x,y) has x = col.
                float pv = axis == Axis::Z   ? profile64.at(x, y)
                           : axis == Axis::X ? profile64.at(z, y)
                                             : profile64.at(x, z);
                float env = std::max(start_env[size_t(w)], end_env[size_t(w)]);
                out.at(x, y, z) = std::max(pv, env);
            }
    return out;
}

SdfGrid3 compose_values(const ExtrusionRecipe& r, const std::vector<SdfGrid3>& parts) {
    if (parts.size() != r.steps.size())
        throw std::invalid_argument("compose: part count does not match recipe steps");
    SdfGrid3 phi = parts[0];
    for (size_t i = 1; i < parts.size(); ++i)
        for (size_t j = 0; j < phi.count(); ++j) {
            float p = parts[i].v[j];
            switch (r.steps[i].boolean) {
                case Boolean::Union: phi.v[j] = std::min(phi.v[j], p); break;
                case Boolean::Intersect: phi.v[j] = std::max(phi.v[j], p); break;
                case Boolean::Subtract: phi.v[j] = std::max(phi.v[j], -p); break;
            }
        }
    return phi;
}

DecodeOutputs decode_model(ad::Graph& g, int z, const ExtrusionRecipe& r, double scale,
                           std::mt19937_64& rng) {
    r.validate();
    const int n = r.extrusion_count();
    DecodeOutputs out;
    auto embeddings = nets::build_split_mlp(g, z, n, scale, rng, "split." + r.id);

    // Decode profiles first, then envelopes in step order so shared planes
    // always reference already-built arrays.
    for (int i = 0; i < n; ++i)
        out.profiles.push_back(
            nets::build_profile_decoder(g, embeddings[size_t(i)], scale, rng, "prof"));

    out.starts.assign(size_t(n), -1);
    out.ends.assign(size_t(n), -1);
    out.start_decoded.assign(size_t(n), false);
    out.end_decoded.assign(size_t(n), false);
    for (int i = 0; i < n; ++i) {
        const Step& s = r.steps[size_t(i)];
        auto resolve = [&](const PlaneRef& ref, Plane my_plane, const char* prefix) -> int {
            if (ref.own) {
                (my_plane == Plane::Start ? out.start_decoded : out.end_decoded)[size_t(i)] = true;
                return nets::build_envelope_decoder(g, embeddings[size_t(i)], scale, rng, prefix);
            }
            int src = ref.plane == Plane::Start ? out.starts[size_t(ref.step)]
                                                : out.ends[size_t(ref.step)];
            // Same plane type copies the array; the opposite type negates it.
            return ref.plane == my_plane ? src : g.negate(src);
        };
        out.starts[size_t(i)] = resolve(s.start_ref, Plane::Start, "envS");
        out.ends[size_t(i)] = resolve(s.end_ref, Plane::End, "envE");
    }

    std::vector<int> parts;
    for (int i = 0; i < n; ++i) {
        int p64 = nets::build_downsample_profile(g, out.profiles[size_t(i)]);
        parts.push_back(
            extrude_part(g, p64, out.starts[size_t(i)], out.ends[size_t(i)], r.steps[size_t(i)].axis));
    }
    out.phi = compose(g, r, parts);
    return out;
}

}  // namespace prism::recipes
