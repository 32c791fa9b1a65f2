#include "refir/embedder.hpp"
#include "refir/errors.hpp"
#include "refir/kernels.hpp"
#include "refir/resize.hpp"

#include <cmath>

namespace refir {

std::vector<float> TinyGistEmbedder::embed(const Tensor& image) const {
    if (image.c != 1 && image.c != 3)
        throw Error(ErrorCode::Dimension, "tiny-gist: expected 1 or 3 channels");
    if (image.h < 16 || image.w < 16)
        throw Error(ErrorCode::Dimension, "tiny-gist: image smaller than 16x16");

    Tensor gray = to_gray(image);
    Tensor small = bicubic_resize(gray, 16, 16);

    std::vector<float> feat;
    feat.reserve(384);
    const float* px = small.plane(0);
    feat.insert(feat.end(), px, px + 256);

    // central-difference gradients, clamped at the border
    float gx[256], gy[256];
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            int xm = x > 0 ? x - 1 : 0, xp = x < 15 ? x + 1 : 15;
            int ym = y > 0 ? y - 1 : 0, yp = y < 15 ? y + 1 : 15;
            gx[y * 16 + x] = px[y * 16 + xp] - px[y * 16 + xm];
            gy[y * 16 + x] = px[yp * 16 + x] - px[ym * 16 + x];
        }
    }

    // 8-orientation histogram, magnitude weighted, per 4x4 cell
    for (int cy = 0; cy < 4; ++cy) {
        for (int cx = 0; cx < 4; ++cx) {
            float bins[8] = {};
            for (int y = cy * 4; y < cy * 4 + 4; ++y) {
                for (int x = cx * 4; x < cx * 4 + 4; ++x) {
                    float dx = gx[y * 16 + x], dy = gy[y * 16 + x];
                    float mag = std::sqrt(dx * dx + dy * dy);
                    if (mag == 0.f)
                        continue;
                    float theta = std::atan2(dy, dx); // (-pi, pi]
                    int bin = static_cast<int>(std::floor((theta + static_cast<float>(M_PI)) /
                                                          (2.f * static_cast<float>(M_PI)) * 8.f));
                    bins[bin & 7] += mag;
                }
            }
            feat.insert(feat.end(), bins, bins + 8);
        }
    }

    float norm = std::sqrt(kernels::sumsq(feat.data(), feat.size()));
    if (norm <= 0.f)
        throw Error(ErrorCode::Normalization, "tiny-gist: all-zero raw feature, cannot normalize");
    kernels::scale(feat.data(), feat.size(), 1.f / norm);
    return feat;
}

std::unique_ptr<Embedder> make_embedder(const std::string& id) {
    if (id == "tiny-gist")
        return std::make_unique<TinyGistEmbedder>();
    throw Error(ErrorCode::Usage, "unknown embedder: " + id);
}

} // namespace refir
