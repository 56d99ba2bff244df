#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prism/autodiff.hpp"
#include "prism/grid.hpp"

namespace prism::recipes {

enum class Axis { X, Y, Z };
enum class Boolean { Union, Subtract, Intersect };
enum class Plane { Start, End };

// A start/end plane is either decoded for this step (own) or derived from
// an earlier step's plane: same plane type copies the array, the opposite
// type negates it (an end array read as a start array flips sign).
struct PlaneRef {
    bool own = true;
    int step = -1;
    Plane plane = Plane::End;
};

struct Step {
    Axis axis = Axis::Z;
    Boolean boolean = Boolean::Union;
    PlaneRef start_ref;
    PlaneRef end_ref;
};

struct ExtrusionRecipe {
    std::string id;
    double prior = 0.0;  // relative frequency, used by data synthesis
    std::vector<Step> steps;

    void validate() const;  // throws std::invalid_argument on a bad recipe
    int extrusion_count() const { return int(steps.size()); }
};

// The five catalogued combinations that ship as built-ins, priors in
// percent: single 56.7, stacked boss 5.2, end-shared cut 4.5, start-shared
// pair 2.9, orthogonal cut 2.6.
std::vector<ExtrusionRecipe> builtin_recipes();

std::string recipe_to_json(const ExtrusionRecipe& r);
ExtrusionRecipe recipe_from_json(const std::string& json);

// --- Differentiable compositor (graph-building) ---
//
// Axis mapping convention, fixed and pinned by tests: part tensors are
// [Z,Y,X] (x fastest, matching SdfGrid3). Profile images are [row,col]:
// axis Z -> (row=y, col=x); axis X -> (row=y, col=z); axis Y -> (row=z, col=x).

// part[z,y,x] = max(profile(u,v), max(S[w], E[w])) with w along `axis`.
int extrude_part(ad::Graph& g, int profile64, int start_env, int end_env, Axis axis);

// phi = part0; then UNION -> min, INTERSECT -> max, SUBTRACT -> max(phi, -part).
int compose(ad::Graph& g, const ExtrusionRecipe& r, const std::vector<int>& parts);

// --- Value-space compositor (same formulas, no graph) ---
using Envelope = std::vector<float>;  // length 64

SdfGrid3 extrude_part_values(const SdfGrid2& profile64, const Envelope& start_env,
                             const Envelope& end_env, Axis axis);
SdfGrid3 compose_values(const ExtrusionRecipe& r, const std::vector<SdfGrid3>& parts);

// --- Full decode graph ---
struct DecodeOutputs {
    int phi = -1;                  // [64,64,64] voxel logits
    std::vector<int> profiles;     // [128,128] logits per step
    std::vector<int> starts;       // [64] per step, after plane sharing
    std::vector<int> ends;
    std::vector<bool> start_decoded;  // false when derived from a shared plane
    std::vector<bool> end_decoded;
};

// Splits z into per-extrusion embeddings, decodes profiles and envelope
// arrays (shared planes decoded once and derived by copy/negation), then
// extrudes and composes. Parameter names: split.<recipe>.*, prof.<i>.*,
// dec2d.*, envS.*, envE.*.
DecodeOutputs decode_model(ad::Graph& g, int z, const ExtrusionRecipe& r, double scale,
                           std::mt19937_64& rng);

}  // namespace prism::recipes
