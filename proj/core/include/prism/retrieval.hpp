#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "prism/autodiff.hpp"
#include "prism/grid.hpp"
#include "prism/sketch.hpp"

namespace prism::retrieval {

// One 8-connected foreground component with its filled-in holes.
struct LoopComponent {
    BinaryGrid2 outer;                // the component itself
    std::vector<BinaryGrid2> inners;  // hole masks (filled minus original)
};

std::vector<LoopComponent> extract_loops(const BinaryGrid2& mask);

// Maps crop-local unit coordinates back to the source image's unit square:
// world = offset + scale * local.
struct CropTransform {
    double offset_x = 0, offset_y = 0, scale = 1;
};

struct CropResult {
    SdfGrid2 sdf;       // 128x128 SDF of the cropped mask
    BinaryGrid2 mask;   // the resampled binary crop
    CropTransform transform;
};

// Tight bbox -> square with 10% margin (window clamped to >= 8 px),
// resampled to 128x128 and converted to an SDF.
CropResult crop_square(const BinaryGrid2& mask);

// 2D profile encoder wrapper: runs the conv stack from a checkpoint.
class ProfileEncoder {
public:
    ProfileEncoder(const std::map<std::string, ad::Tensor>& weights, double scale = 1.0);
    std::vector<double> embed(const SdfGrid2& img) const;
    std::vector<double> embed_raw(const std::vector<double>& img128) const;

private:
    mutable ad::Graph graph_;
    int input_ = -1, output_ = -1;
    std::map<std::string, ad::Tensor> weights_;
};

struct EmbeddingIndex {
    std::vector<std::string> ids;                 // variation ids, index-aligned
    std::vector<std::vector<double>> embeddings;  // 64-vectors
    std::string checkpoint_checksum;

    size_t size() const { return ids.size(); }
};

// Exact linear scan; ties break toward the lowest index.
std::pair<int, double> nearest(const EmbeddingIndex& index, const std::vector<double>& query);

// Blob: "PIDX" magic, u32 count, 64 f32 per entry. Manifest: JSON with ids
// and the encoder checkpoint checksum.
void save_index(const EmbeddingIndex& index, const std::string& blob_path,
                const std::string& manifest_path);
EmbeddingIndex load_index(const std::string& blob_path, const std::string& manifest_path);

// Generic Nelder-Mead minimizer with best-ever tracking; returns the best
// point seen and its value. `used` reports iterations consumed.
std::pair<std::vector<double>, double> nelder_mead(
    const std::function<double(const std::vector<double>&)>& fn, const std::vector<double>& x0,
    const std::vector<double>& step, int max_iter, int& used);

// Canonical embedding of a profile mask: crop-normalize first, exactly the
// path retrieve_and_fit queries take. Index entries must be embedded through
// this so corpus shapes and extracted components live in the same frame.
std::vector<double> embed_normalized(const ProfileEncoder& encoder, const BinaryGrid2& mask);

struct FitResult {
    std::string variation_id;
    std::vector<double> params;
    double tx = 0, ty = 0, scale = 1;
    double iou = 0;
    int iterations = 0;
    std::vector<sketch::Loop> loops() const;  // fitted loops in target frame
    std::string template_name;
};

// Nelder-Mead over (template params, tx, ty, scale); objective -IoU against
// `target` at its own resolution. Never returns worse than the initialization.
FitResult fit_parameters(const sketch::SketchTemplate& tmpl, const std::vector<double>& init_params,
                         double init_tx, double init_ty, double init_scale,
                         const BinaryGrid2& target, int max_iterations = 200);

// crop -> embed -> nearest -> fit, all in the target's unit frame.
// use_sdf=false queries with the raw binary mask instead (ablation mode).
FitResult retrieve_and_fit(const EmbeddingIndex& index,
                           const std::vector<sketch::SketchVariation>& variations,
                           const ProfileEncoder& encoder, const BinaryGrid2& component,
                           bool use_sdf = true);

// Linear interpolation in embedding space. decode_mask turns an embedding
// into a thresholded 128x128 profile mask; fits warm-start from the previous
// step while the retrieved template is unchanged.
std::vector<FitResult> interpolate(
    const std::vector<double>& z_start, const std::vector<double>& z_end,
    const std::vector<double>& ts, const EmbeddingIndex& index,
    const std::vector<sketch::SketchVariation>& variations,
    const std::function<BinaryGrid2(const std::vector<double>&)>& decode_mask);

}  // namespace prism::retrieval
