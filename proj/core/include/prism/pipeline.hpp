#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prism/autodiff.hpp"
#include "prism/grid.hpp"
#include "prism/recipes.hpp"
#include "prism/retrieval.hpp"
#include "prism/rotation24.hpp"
#include "prism/sketch.hpp"

namespace prism::pipeline {

// One placed profile loop set: a template instantiation plus similarity
// transform within the sketch plane's unit square.
struct ProgramLoop {
    std::string template_name;
    std::vector<double> params;
    double tx = 0, ty = 0, scale = 1;

    std::vector<sketch::Loop> loops() const;
};

struct ProgramStep {
    std::vector<ProgramLoop> loops;  // even-odd together: holes included
    recipes::Axis axis = recipes::Axis::Z;
    recipes::Boolean boolean = recipes::Boolean::Union;
    double start = 0, end = 1;  // world units along the axis
};

// The editable artifact: steps are expressed in the orientation-rotated
// frame; `orientation` is the rotation that was applied to the input, so
// voxelization maps original-pose points through it.
struct CadProgram {
    std::string recipe_id;
    Rotation24 orientation;
    std::vector<ProgramStep> steps;
};

std::string program_to_json(const CadProgram& p);
CadProgram program_from_json(const std::string& json);

struct ValidityCheck {
    std::string name;
    bool pass = true;
    bool advisory = false;
    int step = -1, loop = -1;
};

struct ValidityReport {
    std::vector<ValidityCheck> checks;
    bool valid() const;  // all non-advisory checks pass
};

ValidityReport validate_program(const CadProgram& p);

// Exact even-odd membership at voxel centers combined by the Boolean
// sequence; the independent oracle for the differentiable compositor.
BinaryGrid3 voxelize_program(const CadProgram& p, int res);

// --- Selection ---

// Decoded arrays for one (recipe, orientation) candidate: profile logits at
// 128^2, envelope logits at 64 per step (after plane sharing).
struct DecodedArrays {
    std::vector<SdfGrid2> profiles;
    std::vector<recipes::Envelope> starts, ends;
};

// Produces candidate decodes; orientation_index selects identity / +90 x /
// +90 y. Injection of ground-truth arrays (bypass mode) happens here.
using DecodeFn =
    std::function<DecodedArrays(const recipes::ExtrusionRecipe&, int orientation_index)>;

const std::vector<Rotation24>& candidate_orientations();  // identity, rot90_x, rot90_y

struct Selection {
    recipes::ExtrusionRecipe recipe;
    int orientation_index = 0;
    Rotation24 orientation;
    DecodedArrays decoded;
    SdfGrid3 phi;  // composed logits in the rotated frame
    double l_vox = 0;
};

// Scores every (recipe, orientation) pair by voxel BCE against the
// thresholded rotated input; argmin with recipe-then-orientation tie-break.
Selection select_recipe_and_orientation(const SdfGrid3& input,
                                        const std::vector<recipes::ExtrusionRecipe>& recipes,
                                        const DecodeFn& decode);

// Voxel BCE of composed logits against outside-membership of `target`.
double voxel_bce(const SdfGrid3& phi, const SdfGrid3& target);

// Sub-cell zero crossings by linear interpolation; picks the (start, end)
// pair maximizing extrusion length; a side without a crossing falls back to
// the full extent. Throws on no feasible pair.
std::pair<double, double> envelope_to_interval(const recipes::Envelope& start_logits,
                                               const recipes::Envelope& end_logits);

// Network-backed DecodeFn: runs encoder + per-recipe decoders from one
// checkpoint at the given hidden-width scale.
class NetworkDecoder {
public:
    NetworkDecoder(const std::map<std::string, ad::Tensor>& weights,
                   const std::vector<recipes::ExtrusionRecipe>& recipes, double scale);
    DecodedArrays operator()(const recipes::ExtrusionRecipe& r, int orientation_index) const;
    void set_input(const SdfGrid3& input);  // caches the three rotated inputs

private:
    struct PerRecipe;
    std::vector<std::shared_ptr<PerRecipe>> per_recipe_;
    std::vector<SdfGrid3> rotated_inputs_;
};

CadProgram build_program(const Selection& sel,
                         const std::vector<std::vector<retrieval::FitResult>>& fits,
                         const std::vector<std::pair<double, double>>& intervals);

struct ReconstructReport {
    CadProgram program;
    ValidityReport validity;
    double iou = 0;                 // vs ground truth when given, else vs input
    bool iou_vs_rounded_input = false;
    double l_vox = 0;
    std::string error;              // nonempty on structured failure
};

// Local refinement of a program's continuous parameters (per-step start/end
// and per-loop scale/translation) against an occupancy target, maximizing
// voxel IoU. Template identities and lattice params stay fixed. Returns the
// refined program; never returns one scoring worse than the input.
CadProgram refine_program(const CadProgram& p, const BinaryGrid3& target,
                          int max_iterations = 250);

// Full chain: select -> threshold profiles -> extract loops -> retrieve ->
// fit -> intervals -> build -> validate -> refine -> IoU.
ReconstructReport reconstruct(const SdfGrid3& input, const DecodeFn& decode,
                              const std::vector<recipes::ExtrusionRecipe>& recipes,
                              const retrieval::EmbeddingIndex& index,
                              const std::vector<sketch::SketchVariation>& variations,
                              const retrieval::ProfileEncoder& encoder,
                              const BinaryGrid3* ground_truth = nullptr);

}  // namespace prism::pipeline
