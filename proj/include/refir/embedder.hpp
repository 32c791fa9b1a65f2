#pragma once

#include "refir/tensor.hpp"

#include <memory>
#include <string>
#include <vector>

namespace refir {

// Feature extractor mapping an image to a unit-norm vector. Deep extractors
// can be plugged in behind this interface; the default is a handcrafted
// descriptor with no model dependency.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::string id() const = 0;
    virtual int dim() const = 0;
    // Requires 1 or 3 channels and H,W >= 16. Returns an L2-normalized
    // vector; an all-zero raw feature raises a normalization error.
    virtual std::vector<float> embed(const Tensor& image) const = 0;
};

// "tiny-gist": grayscale, bicubic 16x16, raw pixels concatenated with an
// 8-bin gradient-orientation histogram per 4x4 cell, L2-normalized.
// dim = 256 + 16*8 = 384.
class TinyGistEmbedder : public Embedder {
public:
    std::string id() const override { return "tiny-gist"; }
    int dim() const override { return 384; }
    std::vector<float> embed(const Tensor& image) const override;
};

// Registry lookup by id; throws on unknown ids.
std::unique_ptr<Embedder> make_embedder(const std::string& id);

} // namespace refir
