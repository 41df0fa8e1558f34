#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phyc/denoiser.hpp"
#include "phyc/diffusion.hpp"
#include "phyc/tensor.hpp"
#include "phyc/text_encoder.hpp"

namespace phyc {

enum class DecoupleForm : uint8_t { cos, cos_sq, cos_abs };

DecoupleForm decouple_form_from_name(const std::string& name);
const char* decouple_form_name(DecoupleForm f);

struct LossWeights {
    double lambda_iso = 1.0;
    double lambda_dec = 1.0;
    DecoupleForm form = DecoupleForm::cos_sq;
};

struct LossReport {
    double L_o = 0, L_p = 0, L_iso = 0, L_dec = 0, cos_raw = 0, total = 0;
    bool decouple_skipped = false;  // degenerate gradient norms this step
};

// Mean over batch and pixels of ||eps - U(z_t, c)||^2, built on `g` so it can
// be backpropagated. The binder decides which adapters are active/trainable.
Var loss_mse_var(Graph& g, const Binder& w, const DenoiserConfig& cfg,
                 const std::vector<NoisySample>& batch);

// Population variance of the anchor-to-prompt embedding distances, built on
// `g`; gradients flow through anchor and prompts alike.
Var loss_isometric_var(Graph& g, const Binder& w, const TextConfig& cfg, const PromptTokens& anchor,
                       const std::vector<PromptTokens>& prompts);

// Same loss over already-encoded (or hand-built) embedding nodes.
Var loss_isometric_from_embeddings(Graph& g, Var anchor, const std::vector<Var>& prompts);

struct DecoupleValue {
    double value = 0;    // form(cos)
    double cos_raw = 0;  // plain cosine
};

DecoupleValue loss_decouple(const std::vector<float>& g_o, const std::vector<float>& g_p,
                            DecoupleForm form);

double total_objective(double L_o, double L_p, double L_iso, double L_dec, const LossWeights& w);

// d form(cos)/d g for one side of the cosine, in double precision.
// For cos: g_other/(|g||g_other|) - cos * g/|g|^2; cos_sq multiplies by
// 2 cos; cos_abs by sign(cos).
std::vector<float> decouple_cograd(const std::vector<float>& g_own, const std::vector<float>& g_other,
                                   DecoupleForm form);

} // namespace phyc
