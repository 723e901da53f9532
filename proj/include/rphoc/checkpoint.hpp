#pragma once

#include <filesystem>

#include "rphoc/model.hpp"

namespace rphoc {

// "RPH1", u32 header length, JSON header (architecture, PHOC hash, tensor
// names and shapes, iteration), then every parameter as a little-endian
// float64 in declaration order.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace rphoc
