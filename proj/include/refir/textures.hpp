#pragma once

#include "refir/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace refir {

// Procedural texture corpus: stripes, checkerboards, value noise and rings
// with randomized parameters. Texture-heavy by construction so that x4
// degradation destroys detail a reference can supply.
Tensor make_texture(std::uint64_t seed, int size = 64);
std::vector<Tensor> make_texture_corpus(std::uint64_t seed, int count, int size = 64);

// Writes corpus images as <dir>/tex<idx>.png, returns the file paths.
std::vector<std::string> write_texture_corpus(const std::string& dir, std::uint64_t seed, int count,
                                              int size = 64);

} // namespace refir
