#pragma once

#include "refir/unet.hpp"

#include <string>

namespace refir {

// Checkpoint container: "RFCK" magic, u16 LE format version (=1), u32 LE
// config JSON length + bytes, u32 LE tensor count, then per tensor
// u16 LE name length + bytes, u8 ndim, ndim u32 LE dims, f32 LE data.
void save_checkpoint(const std::string& path, UNet& model);
UNet load_checkpoint(const std::string& path);

} // namespace refir
