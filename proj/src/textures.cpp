#include "refir/textures.hpp"
#include "refir/image_io.hpp"
#include "refir/rng.hpp"

#include <cmath>
#include <filesystem>

namespace refir {

namespace {

struct ColorPair {
    float a[3], b[3];
};

ColorPair random_colors(Rng& rng) {
    ColorPair c;
    for (int i = 0; i < 3; ++i) {
        c.a[i] = static_cast<float>(rng.uniform(0.0, 0.45));
        c.b[i] = static_cast<float>(rng.uniform(0.55, 1.0));
    }
    return c;
}

void paint(Tensor& img, int y, int x, const ColorPair& c, float t) {
    for (int ch = 0; ch < 3; ++ch)
        img.at(ch, y, x) = c.a[ch] + (c.b[ch] - c.a[ch]) * t;
}

Tensor stripes(Rng& rng, int size) {
    Tensor img(3, size, size);
    ColorPair colors = random_colors(rng);
    double angle = rng.uniform(0.0, M_PI);
    double period = rng.uniform(3.0, 10.0);
    double phase = rng.uniform(0.0, period);
    bool hard = rng.uniform() < 0.5;
    double dx = std::cos(angle), dy = std::sin(angle);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double s = (x * dx + y * dy + phase) / period;
            double w = 0.5 + 0.5 * std::sin(2.0 * M_PI * s);
            if (hard)
                w = w > 0.5 ? 1.0 : 0.0;
            paint(img, y, x, colors, static_cast<float>(w));
        }
    return img;
}

Tensor checker(Rng& rng, int size) {
    Tensor img(3, size, size);
    ColorPair colors = random_colors(rng);
    int cell = 3 + static_cast<int>(rng.uniform_index(8));
    int ox = static_cast<int>(rng.uniform_index(cell));
    int oy = static_cast<int>(rng.uniform_index(cell));
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            int parity = (((x + ox) / cell) + ((y + oy) / cell)) & 1;
            paint(img, y, x, colors, static_cast<float>(parity));
        }
    return img;
}

Tensor value_noise(Rng& rng, int size) {
    Tensor img(3, size, size);
    ColorPair colors = random_colors(rng);
    auto octave = [&](int grid) {
        std::vector<float> g(static_cast<std::size_t>(grid + 1) * (grid + 1));
        for (auto& v : g)
            v = static_cast<float>(rng.uniform());
        return g;
    };
    int g1 = 6, g2 = 14;
    auto o1 = octave(g1), o2 = octave(g2);
    auto sample = [size](const std::vector<float>& g, int grid, int y, int x) {
        double fy = static_cast<double>(y) * grid / size;
        double fx = static_cast<double>(x) * grid / size;
        int iy = static_cast<int>(fy), ix = static_cast<int>(fx);
        double ty = fy - iy, tx = fx - ix;
        auto at = [&](int yy, int xx) { return g[static_cast<std::size_t>(yy) * (grid + 1) + xx]; };
        double top = at(iy, ix) * (1 - tx) + at(iy, ix + 1) * tx;
        double bot = at(iy + 1, ix) * (1 - tx) + at(iy + 1, ix + 1) * tx;
        return top * (1 - ty) + bot * ty;
    };
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double v = 0.65 * sample(o1, g1, y, x) + 0.35 * sample(o2, g2, y, x);
            // sharpen the field into patches so downsampling destroys edges
            v = v < 0.5 ? std::pow(v * 2.0, 1.8) / 2.0 : 1.0 - std::pow((1.0 - v) * 2.0, 1.8) / 2.0;
            paint(img, y, x, colors, static_cast<float>(v));
        }
    return img;
}

Tensor rings(Rng& rng, int size) {
    Tensor img(3, size, size);
    ColorPair colors = random_colors(rng);
    double cy = rng.uniform(0.2, 0.8) * size;
    double cx = rng.uniform(0.2, 0.8) * size;
    double period = rng.uniform(3.0, 9.0);
    bool hard = rng.uniform() < 0.5;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double r = std::hypot(y - cy, x - cx);
            double w = 0.5 + 0.5 * std::sin(2.0 * M_PI * r / period);
            if (hard)
                w = w > 0.5 ? 1.0 : 0.0;
            paint(img, y, x, colors, static_cast<float>(w));
        }
    return img;
}

} // namespace

Tensor make_texture(std::uint64_t seed, int size) {
    Rng rng(seed * 0x9e3779b97f4a7c15ull + 0x85ebca6bull);
    switch (rng.uniform_index(4)) {
    case 0:
        return stripes(rng, size);
    case 1:
        return checker(rng, size);
    case 2:
        return value_noise(rng, size);
    default:
        return rings(rng, size);
    }
}

std::vector<Tensor> make_texture_corpus(std::uint64_t seed, int count, int size) {
    std::vector<Tensor> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i)
        out.push_back(make_texture(seed + static_cast<std::uint64_t>(i), size));
    return out;
}

std::vector<std::string> write_texture_corpus(const std::string& dir, std::uint64_t seed, int count,
                                              int size) {
    std::filesystem::create_directories(dir);
    auto corpus = make_texture_corpus(seed, count, size);
    std::vector<std::string> paths;
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "tex%03d.png", i);
        std::string path = dir + "/" + name;
        save_png(path, corpus[i]);
        paths.push_back(path);
    }
    return paths;
}

} // namespace refir
