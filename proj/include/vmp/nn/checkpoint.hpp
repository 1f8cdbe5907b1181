#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vmp/nn/tensor.hpp"

namespace vmp::nn {

// Checkpoint container, binary little-endian:
//   magic "TJC1", version u32, entry count u32, then per entry:
//   name length u16, name bytes, rank u8, dims u32 each, payload f64.
// Round-trips are bit-exact.

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const NamedTensors& entries, const std::string& path);
NamedTensors load_checkpoint(const std::string& path);

// Lookup helper; throws SchemaError when the entry is missing.
const Tensor& checkpoint_entry(const NamedTensors& entries, const std::string& name);
bool checkpoint_has(const NamedTensors& entries, const std::string& name);

}  // namespace vmp::nn
