#pragma once

#include <map>
#include <string>

#include "prism/autodiff.hpp"

namespace prism::ad {

// Checkpoint format: magic "PRCK", u32 version=1, u32 entry count, then per
// entry: u32 name length, name bytes, u32 rank, u32 dims[rank], f32 data.
// Everything little-endian. Values are stored as f32.
void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& params);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace prism::ad
