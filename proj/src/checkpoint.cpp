#include "refir/checkpoint.hpp"
#include "refir/errors.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>

namespace refir {

namespace {

constexpr std::uint16_t kCkptVersion = 1;

void put_u16(std::ostream& out, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i)
        b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void need(std::istream& in, char* dst, std::size_t n, const std::string& path) {
    in.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw Error(ErrorCode::Truncated, "truncated checkpoint: " + path);
}

std::uint16_t get_u16(std::istream& in, const std::string& path) {
    unsigned char b[2];
    need(in, reinterpret_cast<char*>(b), 2, path);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    need(in, reinterpret_cast<char*>(b), 4, path);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
        v = (v << 8) | b[i];
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, UNet& model) {
    const UNetConfig& cfg = model.config();
    nlohmann::json j = {
        {"io_channels", cfg.io_channels},
        {"widths", cfg.widths},
        {"heads", cfg.heads},
        {"temb_dim", cfg.temb_dim},
        {"native_size", cfg.native_size},
    };
    std::string cfg_json = j.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
    out.write("RFCK", 4);
    put_u16(out, kCkptVersion);
    put_u32(out, static_cast<std::uint32_t>(cfg_json.size()));
    out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));

    auto params = model.parameters();
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const Param* p : params) {
        put_u16(out, static_cast<std::uint16_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        out.put(static_cast<char>(p->shape.size()));
        for (int d : p->shape)
            put_u32(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(p->v.data()),
                  static_cast<std::streamsize>(p->v.size() * sizeof(float)));
    }
    if (!out)
        throw Error(ErrorCode::Io, "checkpoint write failed: " + path);
}

UNet load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open " + path);
    char magic[4];
    need(in, magic, 4, path);
    if (std::memcmp(magic, "RFCK", 4) != 0)
        throw Error(ErrorCode::BadMagic, "bad checkpoint magic in " + path);
    std::uint16_t version = get_u16(in, path);
    if (version != kCkptVersion)
        throw Error(ErrorCode::VersionMismatch,
                    "unsupported checkpoint version " + std::to_string(version));
    std::uint32_t json_len = get_u32(in, path);
    std::string cfg_json(json_len, '\0');
    need(in, cfg_json.data(), json_len, path);

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(cfg_json);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Format, std::string("bad checkpoint config: ") + e.what());
    }
    UNetConfig cfg;
    cfg.io_channels = j.at("io_channels").get<int>();
    auto widths = j.at("widths").get<std::vector<int>>();
    if (widths.size() != 4)
        throw Error(ErrorCode::Format, "bad widths in checkpoint config");
    std::copy(widths.begin(), widths.end(), cfg.widths.begin());
    cfg.heads = j.at("heads").get<int>();
    cfg.temb_dim = j.at("temb_dim").get<int>();
    cfg.native_size = j.at("native_size").get<int>();

    UNet model(cfg, 0);
    auto params = model.parameters();
    std::uint32_t count = get_u32(in, path);
    if (count != params.size())
        throw Error(ErrorCode::Format, "checkpoint parameter count mismatch");
    for (Param* p : params) {
        std::uint16_t name_len = get_u16(in, path);
        std::string name(name_len, '\0');
        need(in, name.data(), name_len, path);
        if (name != p->name)
            throw Error(ErrorCode::Format, "unexpected parameter " + name + ", wanted " + p->name);
        char ndim;
        need(in, &ndim, 1, path);
        std::size_t numel = 1;
        std::vector<int> shape;
        for (int d = 0; d < ndim; ++d) {
            shape.push_back(static_cast<int>(get_u32(in, path)));
            numel *= static_cast<std::size_t>(shape.back());
        }
        if (numel != p->v.size())
            throw Error(ErrorCode::Format, "shape mismatch for parameter " + name);
        need(in, reinterpret_cast<char*>(p->v.data()), numel * sizeof(float), path);
    }
    return model;
}

} // namespace refir
