#pragma once

#include <string>
#include <vector>

#include "prism/autodiff.hpp"
#include "prism/grid.hpp"

namespace prism::nets {

// Embedding sizes are part of the file formats and stay fixed; the scale
// knob multiplies hidden channel widths only (1.0 = full size, 0.25 for
// fast CI runs).
constexpr int kEmbed3d = 128;
constexpr int kEmbed2d = 64;
constexpr int kVoxelRes = 64;
constexpr int kProfileRes = 128;
constexpr int kEnvelopeLen = 64;

int scaled(int channels, double scale);

// Builders append parameters (Kaiming-uniform init from rng, names under
// `prefix`) and return the output node id. Layer size chains are asserted
// at build time.

// 5 strided 3D convolutions (k4 s2 p1), channels 1,16,32,64,128,128,
// leaky ReLU, then a linear layer to the 128-vector embedding.
int build_voxel_encoder(ad::Graph& g, int x, double scale, std::mt19937_64& rng,
                        const std::string& prefix = "enc3d");

// MLP 128 -> 512 -> 512 -> 128n with ReLU after each layer; output split
// into n extrusion embeddings of 128.
std::vector<int> build_split_mlp(ad::Graph& g, int z, int n, double scale, std::mt19937_64& rng,
                                 const std::string& prefix);

// 7 ConvTranspose2d layers (first 1x1, then k4 s2), channels
// 64,512,64,64,32,32,16,1; input is a 64-vector, output 128x128 logits.
int build_decoder2d(ad::Graph& g, int z64, double scale, std::mt19937_64& rng,
                    const std::string& prefix = "dec2d");

// Linear 128 -> 64 feeding the shared 2D decoder.
int build_profile_decoder(ad::Graph& g, int e128, double scale, std::mt19937_64& rng,
                          const std::string& embed_prefix, const std::string& dec_prefix = "dec2d");

// 6 ConvTranspose1d layers, channels 128,512,64,64,32,32,1; first kernel 1,
// first two strides 1, later k4 s2; output 64 logits.
int build_envelope_decoder(ad::Graph& g, int e128, double scale, std::mt19937_64& rng,
                           const std::string& prefix);

// 6 Conv2d layers k4 s2, channels 1,64,64,128,256,512,64, leaky ReLU;
// 128x128 SDF image -> 64-vector.
int build_encoder2d(ad::Graph& g, int x, double scale, std::mt19937_64& rng,
                    const std::string& prefix = "enc2d");

// Fixed 3x3 stride-2 pad-1 convolution with every weight 1/3 (gain 3 on the
// interior); weights are graph constants, never trained. 128x128 -> 64x64.
int build_downsample_profile(ad::Graph& g, int p);

// Value-space twin of build_downsample_profile (3x3 s2 p1, weights 1/3).
SdfGrid2 downsample_profile_values(const SdfGrid2& p);

// Tensor adapters.
ad::Tensor tensor_from_grid(const SdfGrid2& g);   // [1,128,128]
ad::Tensor tensor_from_grid(const SdfGrid3& g);   // [1,64,64,64]

// One-line JSON architecture sidecar for tooling.
std::string architecture_json(double scale);

}  // namespace prism::nets
