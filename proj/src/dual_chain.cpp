#include "refir/dual_chain.hpp"
#include "refir/errors.hpp"
#include "refir/image_io.hpp"
#include "refir/kernels.hpp"
#include "refir/resize.hpp"
#include "refir/rng.hpp"

#include <cmath>
#include <filesystem>

namespace refir {

ReferenceProvider ReferenceProvider::none() {
    return {};
}

ReferenceProvider ReferenceProvider::self_ref() {
    ReferenceProvider p;
    p.kind = Kind::SelfRef;
    return p;
}

ReferenceProvider ReferenceProvider::hq_ref(std::string path) {
    ReferenceProvider p;
    p.kind = Kind::HQRef;
    p.path = std::move(path);
    return p;
}

ReferenceProvider ReferenceProvider::hq_ref(Tensor image) {
    ReferenceProvider p;
    p.kind = Kind::HQRef;
    p.image = std::move(image);
    return p;
}

ReferenceProvider ReferenceProvider::random_ref(std::string pool_dir, std::uint64_t seed) {
    ReferenceProvider p;
    p.kind = Kind::RandomRef;
    p.pool_dir = std::move(pool_dir);
    p.seed = seed;
    return p;
}

ReferenceProvider ReferenceProvider::random_ref(const std::vector<Tensor>* pool, std::uint64_t seed) {
    ReferenceProvider p;
    p.kind = Kind::RandomRef;
    p.pool = pool;
    p.seed = seed;
    return p;
}

ReferenceProvider ReferenceProvider::retrieved(const EmbeddingIndex* index, std::string image_dir,
                                               int k) {
    ReferenceProvider p;
    p.kind = Kind::Retrieved;
    p.index = index;
    p.image_dir = std::move(image_dir);
    p.k = k;
    return p;
}

std::string ReferenceProvider::name() const {
    switch (kind) {
    case Kind::Retrieved:
        return "retrieved";
    case Kind::SelfRef:
        return "self";
    case Kind::HQRef:
        return "hq";
    case Kind::RandomRef:
        return "random";
    case Kind::Generated:
        return "generated";
    default:
        return "none";
    }
}

namespace {

Tensor match_size(Tensor ref, int th, int tw) {
    if (ref.h > th || ref.w > tw)
        ref = center_crop(ref, std::min(ref.h, th), std::min(ref.w, tw));
    if (ref.h < th || ref.w < tw)
        ref = reflect_pad(ref, th, tw);
    return ref;
}

} // namespace

PreparedReferences prepare_reference(const Tensor& lq, const ReferenceProvider& provider,
                                     int target_h, int target_w) {
    PreparedReferences out;
    switch (provider.kind) {
    case ReferenceProvider::Kind::None:
        break;
    case ReferenceProvider::Kind::SelfRef:
        out.images.push_back(bicubic_resize(lq, target_h, target_w));
        out.ids.push_back("self");
        break;
    case ReferenceProvider::Kind::HQRef: {
        Tensor img = provider.image ? *provider.image : load_image(provider.path);
        out.images.push_back(match_size(std::move(img), target_h, target_w));
        out.ids.push_back(provider.path.empty() ? "hq" : file_stem(provider.path));
        break;
    }
    case ReferenceProvider::Kind::RandomRef: {
        Rng rng(provider.seed);
        if (provider.pool) {
            if (provider.pool->empty())
                throw Error(ErrorCode::NotFound, "random reference pool is empty");
            std::size_t pick = rng.uniform_index(provider.pool->size());
            out.images.push_back(match_size((*provider.pool)[pick], target_h, target_w));
            out.ids.push_back("pool:" + std::to_string(pick));
        } else {
            auto files = list_image_files(provider.pool_dir);
            if (files.empty())
                throw Error(ErrorCode::NotFound, "no images in pool " + provider.pool_dir);
            std::size_t pick = rng.uniform_index(files.size());
            out.images.push_back(match_size(load_image(files[pick]), target_h, target_w));
            out.ids.push_back(file_stem(files[pick]));
        }
        break;
    }
    case ReferenceProvider::Kind::Retrieved: {
        if (!provider.index || provider.index->count() == 0)
            throw Error(ErrorCode::NotFound, "retrieval database is empty");
        auto embedder = make_embedder(provider.index->embedder_id());
        auto results = provider.index->query(lq, provider.k, *embedder);
        auto files = list_image_files(provider.image_dir);
        for (const auto& r : results) {
            std::string found;
            for (const auto& f : files)
                if (file_stem(f) == r.image_id) {
                    found = f;
                    break;
                }
            if (found.empty())
                throw Error(ErrorCode::NotFound,
                            "retrieved id " + r.image_id + " not found in " + provider.image_dir);
            out.images.push_back(match_size(load_image(found), target_h, target_w));
            out.ids.push_back(r.image_id);
        }
        break;
    }
    case ReferenceProvider::Kind::Generated:
        if (!provider.generator)
            throw Error(ErrorCode::Usage, "generated provider has no generator plugged in");
        for (auto& img : provider.generator(lq)) {
            out.images.push_back(match_size(std::move(img), target_h, target_w));
            out.ids.push_back("generated:" + std::to_string(out.ids.size()));
        }
        break;
    }
    return out;
}

RestorationResult run_paired_restoration(UNet& model, const NoiseSchedule& schedule,
                                         const Tensor& lq, const ReferenceProvider& provider,
                                         const InjectionConfig& config, std::uint64_t seed,
                                         const PairedRunOptions& opts) {
    int target_h = lq.h * opts.upscale;
    int target_w = lq.w * opts.upscale;

    InjectionConfig cfg = resolve_config(config, model.attention_sites());
    PreparedReferences refs = prepare_reference(lq, provider, target_h, target_w);

    RestorationResult result;
    result.strategy = provider.name();
    result.seed = seed;
    result.reference_ids = refs.ids;

    // Reference weights: s * softmax of LQ-vs-reference embedding
    // similarities. For a single reference softmax is 1, so the weight is
    // exactly the scale and no embedder is needed.
    std::vector<double> weights;
    if (refs.images.size() == 1) {
        weights = {cfg.scale};
    } else if (refs.images.size() > 1) {
        const Embedder* embedder = opts.embedder;
        std::unique_ptr<Embedder> fallback;
        if (!embedder) {
            fallback = make_embedder("tiny-gist");
            embedder = fallback.get();
        }
        auto qv = embedder->embed(lq);
        std::vector<double> sims;
        for (const auto& ref : refs.images) {
            auto rv = embedder->embed(ref);
            sims.push_back(kernels::dot(qv.data(), rv.data(), qv.size()));
        }
        weights = reference_weights(sims, cfg.scale);
    }

    Tensor cond = to_model_range(bicubic_resize(lq, target_h, target_w));

    // The initial latent is drawn exactly as sample() draws it, so the
    // no-reference run reproduces plain sampling bit for bit.
    Rng rng(seed);
    Tensor x(model.config().io_channels, target_h, target_w);
    rng.fill_normal(x.data.data(), x.size());

    std::vector<Tensor> ref_model, ref_noise;
    for (const auto& ref : refs.images) {
        ref_model.push_back(to_model_range(ref));
        Tensor noise(ref.c, ref.h, ref.w);
        rng.fill_normal(noise.data.data(), noise.size());
        ref_noise.push_back(std::move(noise));
    }

    FusionTrace* trace = opts.with_trace ? &result.trace : nullptr;

    for (int t = schedule.total_steps - 1; t >= 0; --t) {
        bool any_scheduled = !refs.images.empty() && t < cfg.window && !cfg.sites.empty();
        if (!any_scheduled) {
            x = denoise_step(model, schedule, x, t, &cond);
            continue;
        }

        // Source chains: re-noise each clean reference to level t and run a
        // single hooked step to harvest internals at the scheduled sites.
        std::vector<StepCapture> captures(refs.images.size());
        for (std::size_t n = 0; n < refs.images.size(); ++n) {
            Tensor z = add_noise(schedule, ref_model[n], ref_noise[n], t);
            model.predict_noise(z, t, &ref_model[n], make_capture_hook(captures[n], cfg.sites));
        }

        AttentionHook hook = [&](const SiteContext& ctx) -> std::optional<std::vector<float>> {
            if (!cfg.scheduled(ctx.site_id, ctx.t))
                return std::nullopt;
            AttentionBundle bundle;
            bundle.site_id = ctx.site_id;
            bundle.t = ctx.t;
            bundle.heads = ctx.attn->heads;
            bundle.tokens = ctx.attn->tokens;
            bundle.head_dim = ctx.attn->head_dim;
            bundle.q_t = ctx.attn->q;
            bundle.k_t = ctx.attn->k;
            bundle.v_t = ctx.attn->v;
            bundle.o_t = ctx.attn->out;
            bundle.hidden_t = *ctx.hidden;
            for (auto& cap : captures) {
                auto it = cap.find(ctx.site_id);
                if (it == cap.end())
                    throw Error(ErrorCode::Internal, "source capture missing site " + ctx.site_id);
                SourceFeatures src;
                src.k = it->second.attn.k;
                src.v = it->second.attn.v;
                src.attn_out = it->second.attn.out;
                src.hidden = it->second.hidden;
                bundle.sources.push_back(std::move(src));
            }
            return apply_injection(bundle, weights, cfg, trace);
        };
        x = denoise_step(model, schedule, x, t, &cond, hook);
    }

    result.restored = clamp(to_file_range(x), 0.f, 1.f);
    return result;
}

double sharpness_contrast_score(const Tensor& img) {
    Tensor gray = to_gray(img);
    const float* p = gray.plane(0);
    int h = gray.h, w = gray.w;
    double grad_sum = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float gx = p[y * w + std::min(x + 1, w - 1)] - p[y * w + std::max(x - 1, 0)];
            float gy = p[std::min(y + 1, h - 1) * w + x] - p[std::max(y - 1, 0) * w + x];
            grad_sum += std::sqrt(static_cast<double>(gx) * gx + static_cast<double>(gy) * gy);
        }
    double n = static_cast<double>(h) * w;
    double mean = kernels::sum(p, gray.size()) / n;
    double var = kernels::sumsq(p, gray.size()) / n - mean * mean;
    return grad_sum / n + 0.5 * std::sqrt(std::max(var, 0.0));
}

RestorationResult fallback_restore(UNet& model, const NoiseSchedule& schedule, const Tensor& lq,
                                   const std::vector<ReferenceProvider>& strategies,
                                   const QualityScorer& scorer, const InjectionConfig& config,
                                   std::uint64_t seed, const PairedRunOptions& opts,
                                   std::vector<std::string>* warnings) {
    if (strategies.empty())
        throw Error(ErrorCode::Usage, "fallback_restore: no strategies");
    if (!scorer)
        throw Error(ErrorCode::Usage, "fallback_restore: no scorer");

    std::optional<RestorationResult> best;
    double best_score = 0.0;
    for (const auto& strategy : strategies) {
        RestorationResult candidate = run_paired_restoration(model, schedule, lq, strategy, config,
                                                             seed, opts);
        double score;
        try {
            score = scorer(candidate.restored);
        } catch (const std::exception& e) {
            if (warnings)
                warnings->push_back("scorer failed for strategy " + strategy.name() + ": " +
                                    e.what());
            continue;
        }
        if (!best || score > best_score) {
            best = std::move(candidate);
            best_score = score;
        }
    }
    if (!best)
        throw Error(ErrorCode::Internal, "fallback_restore: every candidate was excluded");
    return *best;
}

} // namespace refir
