#include "refir/trainer.hpp"
#include "refir/errors.hpp"
#include "refir/kernels.hpp"
#include "refir/resize.hpp"
#include "refir/rng.hpp"
#include "refir/sampler.hpp"

#include <cmath>

namespace refir {

AdamOptimizer::AdamOptimizer(std::vector<Param*> params, double lr, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Param* p : params_) {
        m_.emplace_back(p->count(), 0.f);
        v_.emplace_back(p->count(), 0.f);
    }
}

void AdamOptimizer::step() {
    ++step_count_;
    double bc1 = 1.0 - std::pow(beta1_, step_count_);
    double bc2 = 1.0 - std::pow(beta2_, step_count_);
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Param* p = params_[pi];
        float* m = m_[pi].data();
        float* v = v_[pi].data();
        for (std::size_t i = 0; i < p->count(); ++i) {
            float g = p->g[i];
            m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g);
            v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * g * g);
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p->v[i] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

namespace {

Tensor seeded_crop(const Tensor& img, int crop, Rng& rng) {
    if (crop <= 0 || (crop >= img.h && crop >= img.w))
        return img;
    int y0 = img.h > crop ? static_cast<int>(rng.uniform_index(img.h - crop + 1)) : 0;
    int x0 = img.w > crop ? static_cast<int>(rng.uniform_index(img.w - crop + 1)) : 0;
    Tensor out(img.c, crop, crop);
    for (int c = 0; c < img.c; ++c)
        for (int y = 0; y < crop; ++y)
            for (int x = 0; x < crop; ++x)
                out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    return out;
}

} // namespace

TrainResult train(UNet& model, const NoiseSchedule& schedule, const std::vector<Tensor>& hq_images,
                  const TrainConfig& config) {
    if (hq_images.empty())
        throw Error(ErrorCode::Usage, "train: empty dataset");

    Rng rng(config.seed);
    AdamOptimizer opt(model.parameters(), config.lr);
    TrainResult result;

    std::vector<std::size_t> order(hq_images.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates with the shared stream keeps the data order a pure
        // function of the seed.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = rng.uniform_index(i);
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        for (std::size_t idx : order) {
            Tensor hq = seeded_crop(hq_images[idx], config.crop, rng);
            DegradationConfig deg = config.degradation;
            deg.seed = rng.derive();
            Tensor lq = degrade(hq, deg);
            Tensor cond = to_model_range(bicubic_resize(lq, hq.h, hq.w));
            Tensor x0 = to_model_range(hq);

            int t = static_cast<int>(rng.uniform_index(schedule.total_steps));
            Tensor noise(x0.c, x0.h, x0.w);
            rng.fill_normal(noise.data.data(), noise.size());
            Tensor xt = add_noise(schedule, x0, noise, t);

            Tensor pred = model.predict_noise(xt, t, &cond);
            std::size_t n = pred.size();
            double loss = kernels::sqdiff_sum(pred.data.data(), noise.data.data(), n) /
                          static_cast<double>(n);
            epoch_loss += loss;

            Tensor grad(pred.c, pred.h, pred.w);
            float scale = 2.f / static_cast<float>(n);
            for (std::size_t i = 0; i < n; ++i)
                grad.data[i] = scale * (pred.data[i] - noise.data[i]);

            model.zero_grad();
            model.backward(grad);
            opt.step();
        }
        result.loss_curve.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    return result;
}

} // namespace refir
