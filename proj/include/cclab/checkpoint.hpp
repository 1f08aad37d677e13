#pragma once
// Weight snapshots. A checkpoint is two files sharing a prefix:
//   <prefix>.json  manifest: [{name, shape, dtype, byte_offset}, ...]
//   <prefix>.bin   raw little-endian float32 payload
// Round-trips are bit-exact.

#include <string>
#include <utility>
#include <vector>

#include "cclab/tensor.hpp"

namespace cclab {

using NamedTensorRefs = std::vector<std::pair<std::string, Tensor<float>*>>;
using ConstNamedTensorRefs = std::vector<std::pair<std::string, const Tensor<float>*>>;

void save_checkpoint(const std::string& prefix, const ConstNamedTensorRefs& items);

// Loads by name into the given destinations; every destination must be
// present in the manifest with a matching shape.
void load_checkpoint(const std::string& prefix, const NamedTensorRefs& items);

// Full contents, in manifest order.
std::vector<std::pair<std::string, Tensor<float>>> read_checkpoint(const std::string& prefix);

}  // namespace cclab
