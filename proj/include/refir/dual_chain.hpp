#pragma once

#include "refir/embedder.hpp"
#include "refir/injection.hpp"
#include "refir/retrieval.hpp"
#include "refir/sampler.hpp"
#include "refir/schedule.hpp"
#include "refir/tensor.hpp"
#include "refir/unet.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace refir {

// Policy supplying reference images for the source chain.
struct ReferenceProvider {
    enum class Kind { Retrieved, SelfRef, HQRef, RandomRef, Generated, None };
    Kind kind = Kind::None;

    // Retrieved
    const EmbeddingIndex* index = nullptr;
    std::string image_dir;
    int k = 1;
    // HQRef: path or in-memory image
    std::string path;
    std::optional<Tensor> image;
    // RandomRef
    std::string pool_dir;
    std::uint64_t seed = 0;
    const std::vector<Tensor>* pool = nullptr; // in-memory alternative
    // Generated: plug-in; no generator ships with the toolkit
    std::function<std::vector<Tensor>(const Tensor& lq)> generator;

    static ReferenceProvider none();
    static ReferenceProvider self_ref();
    static ReferenceProvider hq_ref(std::string path);
    static ReferenceProvider hq_ref(Tensor image);
    static ReferenceProvider random_ref(std::string pool_dir, std::uint64_t seed);
    static ReferenceProvider random_ref(const std::vector<Tensor>* pool, std::uint64_t seed);
    static ReferenceProvider retrieved(const EmbeddingIndex* index, std::string image_dir, int k);

    std::string name() const;
};

struct PreparedReferences {
    std::vector<Tensor> images; // [0,1], target size
    std::vector<std::string> ids;
};

// References resized to the restoration target: oversize dimensions are
// center-cropped, short dimensions reflectively padded. SelfRef returns the
// bicubic upsample of the LQ itself.
PreparedReferences prepare_reference(const Tensor& lq, const ReferenceProvider& provider,
                                     int target_h, int target_w);

struct RestorationResult {
    Tensor restored; // [0,1]
    std::vector<std::string> reference_ids;
    FusionTrace trace;
    std::string strategy;
    std::uint64_t seed = 0;
};

struct PairedRunOptions {
    int upscale = 4;
    bool with_trace = true;
    const Embedder* embedder = nullptr; // needed for k > 1 reference weights
};

// Target chain restores the LQ; one source chain per reference unfolds the
// clean reference by re-noising it to each scheduled step and harvesting
// K_S, V_S, h_S there. Injection is one-directional (source -> target).
RestorationResult run_paired_restoration(UNet& model, const NoiseSchedule& schedule,
                                         const Tensor& lq, const ReferenceProvider& provider,
                                         const InjectionConfig& config, std::uint64_t seed,
                                         const PairedRunOptions& opts = {});

using QualityScorer = std::function<double(const Tensor&)>;

// No-reference proxy: mean gradient magnitude plus half the global
// standard deviation, on the grayscale image.
double sharpness_contrast_score(const Tensor& img);

// Runs every strategy and returns the best-scoring result; candidates whose
// scoring fails are excluded with a warning, ties keep the earlier strategy.
RestorationResult fallback_restore(UNet& model, const NoiseSchedule& schedule, const Tensor& lq,
                                   const std::vector<ReferenceProvider>& strategies,
                                   const QualityScorer& scorer, const InjectionConfig& config,
                                   std::uint64_t seed, const PairedRunOptions& opts = {},
                                   std::vector<std::string>* warnings = nullptr);

} // namespace refir
