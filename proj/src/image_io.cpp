#include "refir/image_io.hpp"
#include "refir/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace refir {

namespace {

Tensor from_interleaved(const unsigned char* px, int h, int w, int channels) {
    Tensor out(channels, h, w);
    for (int ci = 0; ci < channels; ++ci) {
        float* plane = out.plane(ci);
        for (int i = 0; i < h * w; ++i)
            plane[i] = px[static_cast<std::size_t>(i) * channels + ci] / 255.f;
    }
    return out;
}

std::vector<unsigned char> to_interleaved(const Tensor& img) {
    std::vector<unsigned char> px(static_cast<std::size_t>(img.h) * img.w * img.c);
    for (int ci = 0; ci < img.c; ++ci) {
        const float* plane = img.plane(ci);
        for (int i = 0; i < img.h * img.w; ++i) {
            float v = std::clamp(plane[i], 0.f, 1.f);
            px[static_cast<std::size_t>(i) * img.c + ci] =
                static_cast<unsigned char>(std::lround(v * 255.f));
        }
    }
    return px;
}

Tensor load_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw Error(ErrorCode::Format, "not a readable PNG: " + path);
    bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    int channels = gray ? 1 : 3;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw Error(ErrorCode::Format, "PNG decode failed: " + path);
    }
    return from_interleaved(buf.data(), static_cast<int>(image.height),
                            static_cast<int>(image.width), channels);
}

Tensor load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P6")
        throw Error(ErrorCode::Format, "unsupported PNM magic in " + path);
    auto next_int = [&in, &path]() {
        int v;
        while (true) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string line;
                std::getline(in, line);
                continue;
            }
            if (!(in >> v))
                throw Error(ErrorCode::Truncated, "truncated PNM header in " + path);
            return v;
        }
    };
    int w = next_int();
    int h = next_int();
    int maxv = next_int();
    if (maxv != 255)
        throw Error(ErrorCode::Format, "only 8-bit PNM supported: " + path);
    in.get();
    int channels = magic == "P6" ? 3 : 1;
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * channels);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size())
        throw Error(ErrorCode::Truncated, "truncated PNM data in " + path);
    return from_interleaved(buf.data(), h, w, channels);
}

} // namespace

Tensor load_image(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::NotFound, "no such file: " + path);
    std::string ext = std::filesystem::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png")
        return load_png(path);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")
        return load_pnm(path);
    throw Error(ErrorCode::Format, "unsupported image extension: " + path);
}

void save_png(const std::string& path, const Tensor& img) {
    if (img.c != 1 && img.c != 3)
        throw Error(ErrorCode::Dimension, "save_png: expected 1 or 3 channels");
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.w);
    image.height = static_cast<png_uint_32>(img.h);
    image.format = img.c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    auto px = to_interleaved(img);
    if (!png_image_write_to_file(&image, path.c_str(), 0, px.data(), 0, nullptr))
        throw Error(ErrorCode::Io, "PNG write failed: " + path);
}

void save_pnm(const std::string& path, const Tensor& img) {
    if (img.c != 1 && img.c != 3)
        throw Error(ErrorCode::Dimension, "save_pnm: expected 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
    out << (img.c == 3 ? "P6" : "P5") << "\n" << img.w << " " << img.h << "\n255\n";
    auto px = to_interleaved(img);
    out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

bool has_image_extension(const std::string& path) {
    std::string ext = std::filesystem::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

std::string file_stem(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

std::vector<std::string> list_image_files(const std::string& dir) {
    if (!std::filesystem::is_directory(dir))
        throw Error(ErrorCode::NotFound, "not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && has_image_extension(entry.path().string()))
            files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end(), [](const std::string& a, const std::string& b) {
        return file_stem(a) < file_stem(b);
    });
    return files;
}

} // namespace refir
