#pragma once

#include "refir/tensor.hpp"

#include <string>
#include <vector>

namespace refir {

// PNG (8-bit gray or RGB) plus binary PGM/PPM. Values map to [0,1].
Tensor load_image(const std::string& path);
void save_png(const std::string& path, const Tensor& img);
void save_pnm(const std::string& path, const Tensor& img);

bool has_image_extension(const std::string& path);
// File name without directory and extension; used as image_id.
std::string file_stem(const std::string& path);
// Image files in a directory, sorted by stem.
std::vector<std::string> list_image_files(const std::string& dir);

} // namespace refir
