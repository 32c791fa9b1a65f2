#include "refir/probe.hpp"
#include "refir/errors.hpp"
#include "refir/image_io.hpp"
#include "refir/injection.hpp"
#include "refir/kernels.hpp"
#include "refir/rng.hpp"
#include "refir/sampler.hpp"

#include <fftw3.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace refir {

SpectrumCurve power_spectrum(const Tensor& latent) {
    if (latent.h != latent.w)
        throw Error(ErrorCode::Dimension, "power_spectrum: input must be square");
    if (latent.h < 8)
        throw Error(ErrorCode::Dimension, "power_spectrum: side must be >= 8");

    int n = latent.h;
    std::vector<fftwf_complex> in(static_cast<std::size_t>(n) * n);
    std::vector<fftwf_complex> out(static_cast<std::size_t>(n) * n);
    float inv_c = 1.f / static_cast<float>(latent.c);
    for (int i = 0; i < n * n; ++i) {
        float acc = 0.f;
        for (int c = 0; c < latent.c; ++c)
            acc += latent.data[static_cast<std::size_t>(c) * n * n + i];
        in[i][0] = acc * inv_c;
        in[i][1] = 0.f;
    }

    fftwf_plan plan = fftwf_plan_dft_2d(n, n, in.data(), out.data(), FFTW_FORWARD, FFTW_ESTIMATE);
    fftwf_execute(plan);
    fftwf_destroy_plan(plan);

    int rmax = static_cast<int>(std::lround(std::sqrt(2.0) * (n / 2)));
    std::vector<double> sums(rmax + 1, 0.0);
    std::vector<int> counts(rmax + 1, 0);
    for (int v = 0; v < n; ++v) {
        int vc = v <= n / 2 ? v : v - n;
        for (int u = 0; u < n; ++u) {
            int uc = u <= n / 2 ? u : u - n;
            int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(uc) * uc +
                                                           static_cast<double>(vc) * vc)));
            if (r > rmax)
                r = rmax;
            const fftwf_complex& z = out[static_cast<std::size_t>(v) * n + u];
            double amp = std::sqrt(static_cast<double>(z[0]) * z[0] +
                                   static_cast<double>(z[1]) * z[1]);
            sums[r] += std::log1p(amp);
            counts[r] += 1;
        }
    }

    SpectrumCurve curve;
    for (int r = 0; r <= rmax; ++r) {
        if (counts[r] == 0)
            continue;
        curve.radius.push_back(r);
        curve.log_amplitude.push_back(sums[r] / counts[r]);
    }
    return curve;
}

double high_frequency_energy(const SpectrumCurve& curve) {
    std::size_t n = curve.radius.size();
    if (n < 4)
        return 0.0;
    std::size_t start = n - n / 4;
    double acc = 0.0;
    for (std::size_t i = start; i < n; ++i)
        acc += curve.log_amplitude[i];
    return acc / static_cast<double>(n - start);
}

namespace {

// Cyclic Jacobi eigensolver for a symmetric matrix (double, column
// eigenvectors). Plenty for the C x C covariances seen here.
void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& eigvals,
                  std::vector<double>& eigvecs) {
    eigvecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        eigvecs[static_cast<std::size_t>(i) * n + i] = 1.0;

    auto A = [&](int r, int c) -> double& { return a[static_cast<std::size_t>(r) * n + c]; };
    auto V = [&](int r, int c) -> double& { return eigvecs[static_cast<std::size_t>(r) * n + c]; };

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q)
                off += A(p, q) * A(p, q);
        if (off < 1e-26)
            break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = A(p, q);
                if (std::fabs(apq) < 1e-300)
                    continue;
                double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = A(i, p), aiq = A(i, q);
                    A(i, p) = c * aip - s * aiq;
                    A(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    double api = A(p, i), aqi = A(q, i);
                    A(p, i) = c * api - s * aqi;
                    A(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    double vip = V(i, p), viq = V(i, q);
                    V(i, p) = c * vip - s * viq;
                    V(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    eigvals.resize(n);
    for (int i = 0; i < n; ++i)
        eigvals[i] = a[static_cast<std::size_t>(i) * n + i];
}

} // namespace

PCAResult pca_top3(const Tensor& latent) {
    int c = latent.c;
    int hw = latent.h * latent.w;
    if (c < 3)
        throw Error(ErrorCode::Dimension, "pca_top3: need at least 3 channels");
    if (hw < 3)
        throw Error(ErrorCode::Dimension, "pca_top3: need at least 3 pixels");

    std::vector<double> mean(c, 0.0);
    for (int ci = 0; ci < c; ++ci)
        mean[ci] = kernels::sum(latent.plane(ci), hw) / static_cast<double>(hw);

    std::vector<double> cov(static_cast<std::size_t>(c) * c, 0.0);
    for (int ci = 0; ci < c; ++ci) {
        const float* pi = latent.plane(ci);
        for (int cj = ci; cj < c; ++cj) {
            const float* pj = latent.plane(cj);
            double acc = 0.0;
            for (int i = 0; i < hw; ++i)
                acc += (pi[i] - mean[ci]) * (pj[i] - mean[cj]);
            acc /= static_cast<double>(hw);
            cov[static_cast<std::size_t>(ci) * c + cj] = acc;
            cov[static_cast<std::size_t>(cj) * c + ci] = acc;
        }
    }

    std::vector<double> eigvals, eigvecs;
    jacobi_eigen(cov, c, eigvals, eigvecs);

    std::vector<int> order(c);
    for (int i = 0; i < c; ++i)
        order[i] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) { return eigvals[x] > eigvals[y]; });

    double total = 0.0;
    for (double v : eigvals)
        total += std::max(v, 0.0);

    PCAResult res;
    res.projection = Tensor(3, latent.h, latent.w);
    for (int k = 0; k < 3; ++k) {
        int e = order[k];
        std::vector<float> comp(c);
        for (int i = 0; i < c; ++i)
            comp[i] = static_cast<float>(eigvecs[static_cast<std::size_t>(i) * c + e]);
        res.explained_ratios.push_back(total > 0.0 ? std::max(eigvals[e], 0.0) / total : 0.0);

        float* plane = res.projection.plane(k);
        for (int i = 0; i < hw; ++i) {
            double acc = 0.0;
            for (int ci = 0; ci < c; ++ci)
                acc += comp[ci] * (latent.plane(ci)[i] - mean[ci]);
            plane[i] = static_cast<float>(acc);
        }
        float lo = *std::min_element(plane, plane + hw);
        float hi = *std::max_element(plane, plane + hw);
        if (hi > lo)
            kernels::affine(plane, plane, hw, 1.f / (hi - lo), -lo / (hi - lo));
        else
            std::fill(plane, plane + hw, 0.f);
        res.components.push_back(std::move(comp));
    }
    return res;
}

ProbeReport probe_report(UNet& model, const NoiseSchedule& schedule, const Tensor& image,
                         const std::string& out_dir, const ProbeOptions& opts) {
    std::filesystem::create_directories(out_dir);
    Tensor cond = to_model_range(image);

    std::optional<Tensor> ref_model;
    Tensor ref_noise;
    if (opts.reference) {
        ref_model = to_model_range(*opts.reference);
        if (ref_model->h != image.h || ref_model->w != image.w)
            throw Error(ErrorCode::Dimension, "probe reference must match the image size");
        Rng nrng(opts.seed + 0x9e3779b97f4a7c15ull);
        ref_noise = Tensor(ref_model->c, ref_model->h, ref_model->w);
        nrng.fill_normal(ref_noise.data.data(), ref_noise.size());
    }

    std::ofstream csv(out_dir + "/spectra.csv");
    if (!csv)
        throw Error(ErrorCode::Io, "cannot write " + out_dir + "/spectra.csv");
    csv << "radius,log_amplitude,site_id,t\n";

    auto sites = model.attention_sites();
    std::map<std::string, std::vector<double>> hf_by_site;
    double mass_t_sum = 0.0, mass_s_sum = 0.0;
    int alloc_count = 0;
    int captured = 0;

    Tensor x(model.config().io_channels, image.h, image.w);
    Rng rng(opts.seed);
    rng.fill_normal(x.data.data(), x.size());

    for (int t = schedule.total_steps - 1; t >= 0; --t) {
        bool grab = (t == schedule.total_steps - 1) || (t % opts.stride == 0);
        if (!grab) {
            x = denoise_step(model, schedule, x, t, &cond);
            continue;
        }

        StepCapture cap;
        x = denoise_step(model, schedule, x, t, &cond, {}, &cap);

        StepCapture ref_cap;
        if (ref_model) {
            Tensor z = add_noise(schedule, *ref_model, ref_noise, t);
            model.predict_noise(z, t, &*ref_model, make_capture_hook(ref_cap));
        }

        for (const auto& [site_id, cs] : cap) {
            SpectrumCurve curve = power_spectrum(cs.hidden);
            for (std::size_t i = 0; i < curve.radius.size(); ++i)
                csv << curve.radius[i] << "," << curve.log_amplitude[i] << "," << site_id << ","
                    << t << "\n";
            hf_by_site[site_id].push_back(high_frequency_energy(curve));
            ++captured;

            if (opts.write_pca_maps && cs.hidden.c >= 3) {
                PCAResult pca = pca_top3(cs.hidden);
                save_png(out_dir + "/pca_" + site_id + "_t" + std::to_string(t) + ".png",
                         pca.projection);
            }

            const AttnTensors& at = cs.attn;
            const float* k_s = at.k.data();
            if (ref_model) {
                auto it = ref_cap.find(site_id);
                if (it != ref_cap.end())
                    k_s = it->second.attn.k.data();
            }
            AllocationMasses am = attention_allocation(at.q.data(), at.k.data(), k_s, at.heads,
                                                       at.tokens, at.tokens, at.tokens,
                                                       at.head_dim);
            mass_t_sum += am.mass_t;
            mass_s_sum += am.mass_s;
            ++alloc_count;
        }
    }

    ProbeReport report;
    report.captured = captured;
    report.mass_t = alloc_count ? mass_t_sum / alloc_count : 0.0;
    report.mass_s = alloc_count ? mass_s_sum / alloc_count : 0.0;

    auto mean_of = [&](const std::string& id) {
        auto it = hf_by_site.find(id);
        if (it == hf_by_site.end() || it->second.empty())
            return 0.0;
        double acc = 0.0;
        for (double v : it->second)
            acc += v;
        return acc / static_cast<double>(it->second.size());
    };
    for (const auto& s : sites)
        report.per_site.push_back({s.site_id, mean_of(s.site_id)});
    // depth order: cond.4 feeds cond.8; dec.8 feeds dec.4
    report.cond_highfreq_decreasing = mean_of("cond.4") > mean_of("cond.8");
    report.dec_highfreq_increasing = mean_of("dec.4") > mean_of("dec.8");

    nlohmann::json j;
    j["mass_t"] = report.mass_t;
    j["mass_s"] = report.mass_s;
    j["paired_with"] = ref_model ? "reference" : "self";
    j["captured"] = captured;
    nlohmann::json per_site = nlohmann::json::object();
    for (const auto& s : report.per_site)
        per_site[s.site_id] = s.high_freq_energy;
    j["high_freq_energy"] = per_site;
    j["cond_highfreq_decreasing"] = report.cond_highfreq_decreasing;
    j["dec_highfreq_increasing"] = report.dec_highfreq_increasing;
    std::ofstream aj(out_dir + "/allocation.json");
    aj << j.dump(2) << "\n";

    return report;
}

} // namespace refir
