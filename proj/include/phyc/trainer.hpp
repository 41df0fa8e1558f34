#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "phyc/checkpoint.hpp"
#include "phyc/dataset.hpp"
#include "phyc/denoiser.hpp"
#include "phyc/diffusion.hpp"
#include "phyc/losses.hpp"
#include "phyc/tensor.hpp"

namespace phyc {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct TrainConfig {
    int64_t steps = 500;
    int64_t batch = 4;
    int64_t rank = 8;
    double lr = 1e-4;
    LossWeights weights;  // lambda_iso = lambda_dec = 1, cos_sq
    uint64_t seed = 0;
    double dropout = 0.1;  // guidance dropout
    DenoiserConfig den;
    TextConfig text;
};

// Trainable names: the two adapter branches and the text encoder. Base
// denoiser weights stay frozen for the whole run.
bool is_trainable_name(const std::string& name);

// Fresh state: base denoiser + text encoder initialized from cfg.seed, both
// LoRA branches attached, zeroed AdamW moments, step 0.
TrainerState init_trainer(const TrainConfig& cfg, int64_t vocab_size, std::string config_json);

// One decoupled-AdamW update, t = 1-based step index. Update math runs in
// f64 per element; parameters and moments are stored f32, so a checkpoint
// holds the exact in-memory state.
void adamw_update(ParamStore& params, ParamStore& m_store, ParamStore& v_store,
                  const std::map<std::string, std::vector<float>>& grads, int64_t t,
                  const AdamConfig& adam);

// One training step. Per-step RNG is Rng(mix(seed, state.step)); the object
// batch is drawn before the physics batch. L_o sees only the object branch,
// L_p only the physics branch, L_isometric only the text encoder; the
// decouple term reaches each branch through one HVP. Increments state.step.
LossReport train_step(TrainerState& state, const TrainConfig& cfg, const ConceptDataset& data);

// Runs (cfg.steps - state.step) steps. CSV row per step (header written for
// fresh runs, appended otherwise); checkpoint saved every 100 steps and at
// the end. Non-finite losses abort with the offending term named.
void run_training(TrainerState& state, const TrainConfig& cfg, const ConceptDataset& data,
                  const std::string& csv_path, const std::string& ckpt_path);

// "step,L_total,L_o,L_p,L_iso,L_dec,cos_raw" with shortest-round-trip floats.
std::string csv_header();
std::string csv_row(int64_t step, const LossReport& r);

} // namespace phyc
