#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prism/autodiff.hpp"
#include "prism/grid.hpp"
#include "prism/pipeline.hpp"
#include "prism/recipes.hpp"
#include "prism/sketch.hpp"

namespace prism::trainkit {

// Rounding radii applied to each base shape, in voxels (0 = unrounded).
extern const double kRoundingRadiiVox[5];

// Ground truth for one training input. Masks store 1 = inside; training
// targets use the outside convention (positive logits outside) and are
// derived on the fly.
struct TrainingSample {
    std::string base_id;
    std::string recipe_id;
    pipeline::CadProgram program;              // generating program
    SdfGrid3 input;                            // possibly rounded SDF
    BinaryGrid3 inside;                        // pre-rounding voxelization
    std::vector<BinaryGrid2> profiles_inside;  // per step, 128^2
    // Per step, length-64 binary outside targets for the envelope arrays.
    std::vector<std::vector<uint8_t>> start_outside, end_outside;
    double radius_vox = 0;
};

// Binary envelope targets for planted plane positions (world units):
// the start array is positive (outside) below `s`, the end array above `e`.
std::pair<std::vector<uint8_t>, std::vector<uint8_t>> envelope_targets(double s, double e,
                                                                       int n = 64);

// Saturated logits for bypass/oracle paths.
SdfGrid2 hard_profile_logits(const BinaryGrid2& inside, float magnitude = 10.f);
recipes::Envelope hard_envelope_logits(const std::vector<uint8_t>& outside,
                                       float magnitude = 10.f);

// Recipe priors renormalized to sum to 1 (56.7/5.2/4.5/2.9/2.6 ->
// 79.0/7.2/6.3/4.0/3.6 %).
std::vector<double> renormalized_priors(const std::vector<recipes::ExtrusionRecipe>& rs);

// Samples `n_bases` random programs (recipe by prior, profiles from the
// corpus, intervals uniform with minimum length 8 voxels, first extrusion
// along z) and derives 5 inputs per base: unrounded + the four radii.
// Pure function of (seed, inputs).
std::vector<TrainingSample> gen_samples(uint64_t seed, int n_bases,
                                        const std::vector<recipes::ExtrusionRecipe>& recipes,
                                        const std::vector<sketch::SketchVariation>& corpus);

// Disk layout: <dir>/manifest.json plus per-sample .vsdf grids and raw f32
// envelope blobs. Returns the manifest checksum (FNV-1a over sample bytes).
uint64_t save_dataset(const std::vector<TrainingSample>& samples, const std::string& dir);
std::vector<std::string> dataset_sample_ids(const std::string& dir);
TrainingSample load_sample(const std::string& dir, const std::string& id);

struct LossBundle {
    double l_vox = 0, l_profile = 0, l_start = 0, l_end = 0, l = 0;
};

// Mean BCE terms: voxel grid vs outside-membership; profile/envelope terms
// averaged over the decoded (non-derived) arrays of the recipe.
LossBundle compute_losses(const recipes::ExtrusionRecipe& recipe, const SdfGrid3& phi,
                          const std::vector<SdfGrid2>& profile_logits,
                          const std::vector<recipes::Envelope>& start_logits,
                          const std::vector<recipes::Envelope>& end_logits,
                          const TrainingSample& targets);

// Training graph for one recipe: voxel encoder + decoder + loss nodes.
struct TrainGraph3d {
    ad::Graph g;
    int input = -1;  // [1,64,64,64]
    recipes::DecodeOutputs out;
    int t_vox = -1;                      // [64,64,64] outside targets
    std::vector<int> t_profiles;         // [128,128] per step
    std::vector<int> t_starts, t_ends;   // [64], only for decoded planes (-1 otherwise)
    int l_vox = -1, l_profile = -1, l_start = -1, l_end = -1, l_total = -1;
};

TrainGraph3d build_train_graph_3d(const recipes::ExtrusionRecipe& recipe, double scale,
                                  std::mt19937_64& rng);

void feed_targets(const TrainGraph3d& tg, const TrainingSample& s, std::map<int, ad::Tensor>& feeds);

struct Adam {
    double lr = 2e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long t = 0;
    std::map<std::string, ad::Tensor> m, v;

    void step(std::map<std::string, ad::Tensor>& params,
              const std::map<std::string, ad::Tensor>& grads);
    // Moments stored under "adam.m."/"adam.v." prefixes plus "adam.t".
    void save_into(std::map<std::string, ad::Tensor>& ckpt) const;
    bool load_from(const std::map<std::string, ad::Tensor>& ckpt);
};

// key = value config files, '#' comments.
std::map<std::string, std::string> parse_config(const std::string& path);

struct TrainConfig {
    std::string dataset_dir;     // 3D: gen-data output; 2D: corpus dir unused (corpus passed in)
    std::string out_checkpoint;
    std::string curves_csv;
    std::string resume_from;     // optional
    double scale = 0.25;
    double lr = 2e-4;
    int batch = 16;
    int epochs = 30;
    int patience = 5;
    uint64_t seed = 0;
    double val_fraction = 0.1;

    static TrainConfig from_map(const std::map<std::string, std::string>& kv);
};

struct TrainSummary {
    int epochs_run = 0;
    LossBundle final_train;
    double final_val = 0;
    double first_epoch_loss = 0;
};

TrainSummary train_3d(const TrainConfig& cfg);

// 2D autoencoder on corpus SDF images; reports held-out reconstruction IoU.
struct Train2dSummary {
    int epochs_run = 0;
    double final_loss = 0;
    double holdout_median_iou = 0;
};

Train2dSummary train_2d(const TrainConfig& cfg,
                        const std::vector<sketch::SketchVariation>& corpus);

uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 1469598103934665603ULL);

}  // namespace prism::trainkit
