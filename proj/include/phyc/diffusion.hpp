#pragma once

#include <cstdint>
#include <vector>

#include "phyc/denoiser.hpp"
#include "phyc/rng.hpp"
#include "phyc/tensor.hpp"
#include "phyc/text_encoder.hpp"

namespace phyc {

struct DiffusionSchedule {
    int64_t T = 0;
    std::vector<double> beta, alpha, alpha_bar;
};

// Linear beta 1e-4 -> 0.02 over T steps.
DiffusionSchedule make_schedule(int64_t T = 200);

struct NoisySample {
    TensorData z_t;
    int64_t t = 0;
    TensorData eps;
    TensorData cond;          // l_max x d_txt text embedding (treated as constant)
    PromptTokens cond_tokens; // for the PAD mask
};

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
TensorData q_sample(const TensorData& z0, int64_t t, const TensorData& eps,
                    const DiffusionSchedule& sched);

struct SampleConfig {
    int64_t n_steps = 50;
    double guidance = 7.5;
    uint64_t seed = 0;
};

// eps_hat = e_un + s * (e_cond - e_un)
TensorData cfg_combine(const TensorData& e_un, const TensorData& e_cond, double s);

// DDPM ancestral sampling over an evenly strided timestep subset with
// classifier-free guidance. `cond`/`cond_tokens` describe the prompt; the
// unconditional branch uses the all-PAD prompt through the same binder.
TensorData sample(const Binder& w, const DenoiserConfig& cfg, const DiffusionSchedule& sched,
                  const TensorData& cond, const PromptTokens& cond_tokens,
                  const TensorData& uncond, const PromptTokens& uncond_tokens,
                  const SampleConfig& sc);

struct BatchItem {
    TensorData z0;
    TensorData cond;
    PromptTokens cond_tokens;
};

// Uniform timestep, fresh standard-normal eps, and guidance dropout
// (prompt replaced by all-PAD) with the given probability.
std::vector<NoisySample> make_training_batch(const std::vector<BatchItem>& items,
                                             const TensorData& uncond_embedding,
                                             const DiffusionSchedule& sched, int64_t batch, Rng& rng,
                                             double dropout = 0.1);

} // namespace phyc
