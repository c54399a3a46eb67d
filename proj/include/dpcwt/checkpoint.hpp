#pragma once

#include <filesystem>

#include "dpcwt/nn.hpp"

namespace dpcwt {

// Flat binary checkpoint, little-endian throughout:
//   magic   "DPCWTNET"            8 bytes
//   u32     format version (1)
//   u32     hidden activation (0 = relu, 1 = tanh)
//   u32     layer count L
//   u32[L]  layer sizes
//   u64     parameter count
//   f64[..] parameter values in flatten order (per layer: weights row-major,
//           then biases)
// Written to a temp file and renamed, so a failed write leaves nothing behind.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace dpcwt
