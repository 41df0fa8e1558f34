#include "phyc/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace phyc {

DiffusionSchedule make_schedule(int64_t T) {
    if (T < 2) fail(Errc::invalid_argument, "schedule needs T >= 2");
    DiffusionSchedule s;
    s.T = T;
    s.beta.resize(static_cast<size_t>(T));
    s.alpha.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int64_t t = 0; t < T; ++t) {
        double b = 1e-4 + (0.02 - 1e-4) * static_cast<double>(t) / static_cast<double>(T - 1);
        s.beta[static_cast<size_t>(t)] = b;
        s.alpha[static_cast<size_t>(t)] = 1.0 - b;
        prod *= 1.0 - b;
        s.alpha_bar[static_cast<size_t>(t)] = prod;
    }
    return s;
}

TensorData q_sample(const TensorData& z0, int64_t t, const TensorData& eps,
                    const DiffusionSchedule& sched) {
    if (t < 0 || t >= sched.T) fail(Errc::out_of_range, "timestep " + std::to_string(t));
    if (z0.shape != eps.shape)
        fail(Errc::shape_mismatch, "z0 " + shape_str(z0.shape) + " vs eps " + shape_str(eps.shape));
    double ab = sched.alpha_bar[static_cast<size_t>(t)];
    float c0 = static_cast<float>(std::sqrt(ab));
    float c1 = static_cast<float>(std::sqrt(1.0 - ab));
    TensorData out = z0;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = c0 * z0.data[i] + c1 * eps.data[i];
    return out;
}

TensorData cfg_combine(const TensorData& e_un, const TensorData& e_cond, double s) {
    if (e_un.shape != e_cond.shape)
        fail(Errc::shape_mismatch,
             "cfg " + shape_str(e_un.shape) + " vs " + shape_str(e_cond.shape));
    TensorData out = e_un;
    float sf = static_cast<float>(s);
    for (size_t j = 0; j < out.data.size(); ++j)
        out.data[j] = e_un.data[j] + sf * (e_cond.data[j] - e_un.data[j]);
    return out;
}

TensorData sample(const Binder& w, const DenoiserConfig& cfg, const DiffusionSchedule& sched,
                  const TensorData& cond, const PromptTokens& cond_tokens,
                  const TensorData& uncond, const PromptTokens& uncond_tokens,
                  const SampleConfig& sc) {
    if (sc.n_steps < 1 || sc.n_steps > sched.T)
        fail(Errc::out_of_range, "n_steps " + std::to_string(sc.n_steps) + " outside [1," +
                                     std::to_string(sched.T) + "]");
    // Evenly strided subset, iterated from the noisiest member down.
    std::vector<int64_t> ts(static_cast<size_t>(sc.n_steps));
    for (int64_t i = 0; i < sc.n_steps; ++i)
        ts[static_cast<size_t>(i)] = i * sched.T / sc.n_steps;

    Rng rng(sc.seed);
    TensorData z = TensorData::zeros({cfg.height, cfg.width});
    for (auto& v : z.data) v = rng.normal_f();

    for (int64_t i = sc.n_steps - 1; i >= 0; --i) {
        int64_t t = ts[static_cast<size_t>(i)];
        double ab = sched.alpha_bar[static_cast<size_t>(t)];
        double ab_prev = (i > 0) ? sched.alpha_bar[static_cast<size_t>(ts[static_cast<size_t>(i - 1)])] : 1.0;

        TensorData e_cond = predict_noise(z, t, cond, cond_tokens, w, cfg);
        TensorData e_un = predict_noise(z, t, uncond, uncond_tokens, w, cfg);
        TensorData e_hat = cfg_combine(e_un, e_cond, sc.guidance);

        // x0 estimate, then the ancestral posterior for the strided step.
        double sab = std::sqrt(ab), somab = std::sqrt(1.0 - ab);
        TensorData x0 = z;
        for (size_t j = 0; j < x0.data.size(); ++j)
            x0.data[j] = static_cast<float>((static_cast<double>(z.data[j]) -
                                             somab * static_cast<double>(e_hat.data[j])) / sab);

        double alpha_eff = ab / ab_prev;
        double beta_eff = 1.0 - alpha_eff;
        double c_x0 = std::sqrt(ab_prev) * beta_eff / (1.0 - ab);
        double c_zt = std::sqrt(alpha_eff) * (1.0 - ab_prev) / (1.0 - ab);
        double var = (i > 0) ? beta_eff * (1.0 - ab_prev) / (1.0 - ab) : 0.0;
        double sd = std::sqrt(std::max(var, 0.0));

        for (size_t j = 0; j < z.data.size(); ++j) {
            double mean = c_x0 * static_cast<double>(x0.data[j]) + c_zt * static_cast<double>(z.data[j]);
            double noise = (i > 0) ? static_cast<double>(rng.normal_f()) : 0.0;
            z.data[j] = static_cast<float>(mean + sd * noise);
        }
    }
    for (auto& v : z.data) v = std::clamp(v, -1.0f, 1.0f);
    return z;
}

std::vector<NoisySample> make_training_batch(const std::vector<BatchItem>& items,
                                             const TensorData& uncond_embedding,
                                             const DiffusionSchedule& sched, int64_t batch, Rng& rng,
                                             double dropout) {
    if (items.empty()) fail(Errc::degenerate_input, "empty dataset");
    if (batch < 1) fail(Errc::invalid_argument, "batch must be >= 1");
    std::vector<NoisySample> out;
    out.reserve(static_cast<size_t>(batch));
    for (int64_t b = 0; b < batch; ++b) {
        const BatchItem& item = items[static_cast<size_t>(rng.uniform_u64(items.size()))];
        NoisySample ns;
        ns.t = static_cast<int64_t>(rng.uniform_u64(static_cast<uint64_t>(sched.T)));
        ns.eps = TensorData::zeros(item.z0.shape);
        for (auto& v : ns.eps.data) v = rng.normal_f();
        ns.z_t = q_sample(item.z0, ns.t, ns.eps, sched);
        bool drop = rng.uniform() < dropout;
        if (drop) {
            ns.cond = uncond_embedding;
            ns.cond_tokens = PromptTokens(item.cond_tokens.size(), kPadId);
        } else {
            ns.cond = item.cond;
            ns.cond_tokens = item.cond_tokens;
        }
        out.push_back(std::move(ns));
    }
    return out;
}

} // namespace phyc
