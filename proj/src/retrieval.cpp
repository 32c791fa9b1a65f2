#include "refir/retrieval.hpp"
#include "refir/errors.hpp"
#include "refir/image_io.hpp"
#include "refir/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace refir {

namespace {

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

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i)
        b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

void need(std::istream& in, char* dst, std::size_t n, const std::string& path) {
    in.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw Error(ErrorCode::Truncated, "truncated index file: " + path);
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

std::uint64_t get_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    need(in, reinterpret_cast<char*>(b), 8, path);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
        v = (v << 8) | b[i];
    return v;
}

constexpr std::uint16_t kIndexVersion = 1;

} // namespace

EmbeddingIndex EmbeddingIndex::build(const std::string& image_dir, const Embedder& embedder,
                                     IndexBuildReport* report) {
    auto files = list_image_files(image_dir);
    std::vector<EmbeddingRecord> records;
    for (const auto& path : files) {
        std::string id = file_stem(path);
        try {
            Tensor img = load_image(path);
            records.push_back({id, embedder.embed(img)});
        } catch (const Error& e) {
            if (report)
                report->skipped.push_back(path + ": " + e.what());
        }
    }
    if (records.empty())
        throw Error(ErrorCode::NotFound, "no decodable images in " + image_dir);
    std::sort(records.begin(), records.end(),
              [](const EmbeddingRecord& a, const EmbeddingRecord& b) { return a.image_id < b.image_id; });
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].image_id == records[i - 1].image_id)
            throw Error(ErrorCode::Format, "duplicate image id: " + records[i].image_id);
    return from_records(embedder.id(), embedder.dim(), std::move(records));
}

EmbeddingIndex EmbeddingIndex::from_records(std::string embedder_id, int dim,
                                            std::vector<EmbeddingRecord> records) {
    for (const auto& r : records)
        if (static_cast<int>(r.embedding.size()) != dim)
            throw Error(ErrorCode::Dimension, "record dimension mismatch for " + r.image_id);
    EmbeddingIndex idx;
    idx.embedder_id_ = std::move(embedder_id);
    idx.dim_ = dim;
    idx.records_ = std::move(records);
    return idx;
}

std::vector<RetrievalResult> EmbeddingIndex::query(const Tensor& lq_image, int k,
                                                   const Embedder& embedder) const {
    if (embedder.id() != embedder_id_)
        throw Error(ErrorCode::Usage, "embedder mismatch: index built with " + embedder_id_ +
                                          ", queried with " + embedder.id());
    return query_embedding(embedder.embed(lq_image), k);
}

std::vector<RetrievalResult> EmbeddingIndex::query_embedding(const std::vector<float>& v, int k) const {
    if (static_cast<int>(v.size()) != dim_)
        throw Error(ErrorCode::Dimension, "query embedding dimension mismatch");
    if (k < 1 || static_cast<std::size_t>(k) > records_.size())
        throw Error(ErrorCode::Usage, "k out of range for index of size " + std::to_string(records_.size()));

    std::vector<std::pair<float, const EmbeddingRecord*>> scored;
    scored.reserve(records_.size());
    for (const auto& r : records_)
        scored.emplace_back(kernels::dot(v.data(), r.embedding.data(), v.size()), &r);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first)
            return a.first > b.first;
        return a.second->image_id < b.second->image_id;
    });

    std::vector<RetrievalResult> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i)
        out.push_back({scored[i].second->image_id, scored[i].first, i + 1});
    return out;
}

void EmbeddingIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
    out.write("RFIX", 4);
    put_u16(out, kIndexVersion);
    put_u16(out, static_cast<std::uint16_t>(embedder_id_.size()));
    out.write(embedder_id_.data(), static_cast<std::streamsize>(embedder_id_.size()));
    put_u32(out, static_cast<std::uint32_t>(dim_));
    put_u64(out, records_.size());
    for (const auto& r : records_) {
        put_u16(out, static_cast<std::uint16_t>(r.image_id.size()));
        out.write(r.image_id.data(), static_cast<std::streamsize>(r.image_id.size()));
        for (float f : r.embedding)
            put_f32(out, f);
    }
    if (!out)
        throw Error(ErrorCode::Io, "write failed: " + path);
}

EmbeddingIndex EmbeddingIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open " + path);
    char magic[4];
    need(in, magic, 4, path);
    if (std::memcmp(magic, "RFIX", 4) != 0)
        throw Error(ErrorCode::BadMagic, "bad magic in " + path);
    std::uint16_t version = get_u16(in, path);
    if (version != kIndexVersion)
        throw Error(ErrorCode::VersionMismatch,
                    "unsupported index version " + std::to_string(version) + " in " + path);
    std::uint16_t id_len = get_u16(in, path);
    std::string embedder_id(id_len, '\0');
    need(in, embedder_id.data(), id_len, path);
    int dim = static_cast<int>(get_u32(in, path));
    std::uint64_t count = get_u64(in, path);

    std::vector<EmbeddingRecord> records;
    records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint16_t len = get_u16(in, path);
        EmbeddingRecord rec;
        rec.image_id.resize(len);
        need(in, rec.image_id.data(), len, path);
        rec.embedding.resize(dim);
        for (int d = 0; d < dim; ++d) {
            std::uint32_t bits = get_u32(in, path);
            float f;
            std::memcpy(&f, &bits, 4);
            rec.embedding[d] = f;
        }
        records.push_back(std::move(rec));
    }
    return from_records(std::move(embedder_id), dim, std::move(records));
}

std::vector<double> reference_weights(const std::vector<double>& similarities, double global_scale) {
    if (similarities.empty())
        throw Error(ErrorCode::Dimension, "reference_weights: empty similarity list");
    if (global_scale < 0.0 || global_scale > 1.0)
        throw Error(ErrorCode::Usage, "reference_weights: scale outside [0,1]");
    double m = *std::max_element(similarities.begin(), similarities.end());
    std::vector<double> w(similarities.size());
    double z = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(similarities[i] - m);
        z += w[i];
    }
    for (auto& v : w)
        v = global_scale * (v / z);
    return w;
}

} // namespace refir
