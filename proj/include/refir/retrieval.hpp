#pragma once

#include "refir/embedder.hpp"
#include "refir/tensor.hpp"

#include <string>
#include <vector>

namespace refir {

struct EmbeddingRecord {
    std::string image_id;
    std::vector<float> embedding; // unit norm
};

struct RetrievalResult {
    std::string image_id;
    float similarity = 0.f; // cosine, in [-1, 1]
    int rank = 0;           // 1-based
};

struct IndexBuildReport {
    std::vector<std::string> skipped; // undecodable files, with reason
};

// Immutable brute-force cosine index over unit-norm embeddings.
class EmbeddingIndex {
public:
    static EmbeddingIndex build(const std::string& image_dir, const Embedder& embedder,
                                IndexBuildReport* report = nullptr);

    const std::string& embedder_id() const { return embedder_id_; }
    int dim() const { return dim_; }
    std::size_t count() const { return records_.size(); }
    const std::vector<EmbeddingRecord>& records() const { return records_; }

    std::vector<RetrievalResult> query(const Tensor& lq_image, int k, const Embedder& embedder) const;
    std::vector<RetrievalResult> query_embedding(const std::vector<float>& v, int k) const;

    // Bit-exact binary format: "RFIX" magic, u16 LE version (=1),
    // u16 LE embedder-id length + UTF-8 bytes, u32 LE dim, u64 LE count,
    // then per record u16 LE id length + bytes and dim f32 LE values.
    void save(const std::string& path) const;
    static EmbeddingIndex load(const std::string& path);

    static EmbeddingIndex from_records(std::string embedder_id, int dim,
                                       std::vector<EmbeddingRecord> records);

private:
    EmbeddingIndex() = default;
    std::string embedder_id_;
    int dim_ = 0;
    std::vector<EmbeddingRecord> records_; // sorted by image_id
};

// s * softmax(similarities); the returned weights sum to s. With k = 1 the
// single weight is exactly s, so the multi-reference path collapses to the
// single-reference formula.
std::vector<double> reference_weights(const std::vector<double>& similarities, double global_scale);

} // namespace refir
