#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phyc/rng.hpp"
#include "phyc/tensor.hpp"
#include "phyc/text_encoder.hpp"

namespace phyc {

struct DenoiserConfig {
    int64_t height = 16;
    int64_t width = 16;
    int64_t patch_size = 4;
    int64_t d_model = 64;
    int64_t n_blocks = 2;
    int64_t mlp_hidden = 128;
    int64_t d_txt = 32;
    int64_t l_max = 8;
    int64_t T = 200;  // timestep range accepted by predict_noise

    int64_t tokens() const { return (height / patch_size) * (width / patch_size); }
    int64_t patch_dim() const { return patch_size * patch_size; }
};

// Registers denoiser weights under "den.*". All of them are frozen base
// weights; training happens only through LoRA adapters and the text encoder.
void init_denoiser_params(ParamStore& params, const DenoiserConfig& cfg, Rng& rng);
std::vector<std::string> denoiser_param_names(const DenoiserConfig& cfg);

// The weights LoRA adapters attach to: every cross-attention projection and
// both MLP linears of each block, plus the output head. The head must be
// adaptable — it is zero-initialized and frozen, so without an adapter the
// model output would stay identically zero.
std::vector<std::string> lora_host_names(const DenoiserConfig& cfg);

// Patch transformer forward. `cond` is the l_max x d_txt text embedding;
// `cond_tokens` supplies the PAD mask. When `attn_out` is non-null it
// receives each block's cross-attention rows (tokens x l_max).
Var predict_noise_var(Graph& g, const Binder& w, const DenoiserConfig& cfg, Var z_t, int64_t t,
                      Var cond, const PromptTokens& cond_tokens, std::vector<Var>* attn_out = nullptr);

// Scratch-graph convenience wrapper for inference-style calls.
TensorData predict_noise(const TensorData& z_t, int64_t t, const TensorData& cond,
                         const PromptTokens& cond_tokens, const Binder& w,
                         const DenoiserConfig& cfg);

struct AttentionMaps {
    // one entry per block: tokens x l_max row-stochastic matrix
    std::vector<TensorData> cross;
};

AttentionMaps export_attention_maps(const TensorData& z_t, int64_t t, const TensorData& cond,
                                    const PromptTokens& cond_tokens, const Binder& w,
                                    const DenoiserConfig& cfg);

// Per-block overlap between the attention columns of two text positions:
// each column is normalized to sum 1, the overlap is the sum of elementwise
// minima (1 = identical maps, 0 = disjoint support).
std::vector<double> attention_overlap(const AttentionMaps& maps, int64_t col_a, int64_t col_b);

// Sinusoidal features for an integer timestep, length d_model.
std::vector<float> time_features(int64_t t, int64_t d_model);

} // namespace phyc
