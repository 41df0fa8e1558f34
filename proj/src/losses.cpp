#include "phyc/losses.hpp"

#include <cmath>

namespace phyc {

DecoupleForm decouple_form_from_name(const std::string& name) {
    if (name == "cos") return DecoupleForm::cos;
    if (name == "cos_sq") return DecoupleForm::cos_sq;
    if (name == "cos_abs") return DecoupleForm::cos_abs;
    fail(Errc::invalid_argument, "unknown decouple form: " + name);
}

const char* decouple_form_name(DecoupleForm f) {
    switch (f) {
    case DecoupleForm::cos: return "cos";
    case DecoupleForm::cos_sq: return "cos_sq";
    case DecoupleForm::cos_abs: return "cos_abs";
    }
    return "?";
}

Var loss_mse_var(Graph& g, const Binder& w, const DenoiserConfig& cfg,
                 const std::vector<NoisySample>& batch) {
    if (batch.empty()) fail(Errc::degenerate_input, "empty batch");
    Var acc{};
    for (const NoisySample& ns : batch) {
        Var pred = predict_noise_var(g, w, cfg, g.constant(ns.z_t), ns.t, g.constant(ns.cond),
                                     ns.cond_tokens);
        Var item = g.mse(pred, g.constant(ns.eps));
        acc = acc.valid() ? g.add(acc, item) : item;
    }
    return g.scale(acc, 1.0 / static_cast<double>(batch.size()));
}

Var loss_isometric_from_embeddings(Graph& g, Var anchor, const std::vector<Var>& prompts) {
    if (prompts.empty()) fail(Errc::degenerate_input, "isometric loss needs at least one prompt");
    std::vector<Var> dist;
    dist.reserve(prompts.size());
    for (const Var& p : prompts) {
        Var diff = g.sub(anchor, p);
        dist.push_back(g.sqrt(g.sum_all(g.square(diff))));
    }
    double inv_d = 1.0 / static_cast<double>(dist.size());
    Var mean{};
    for (const Var& d : dist) mean = mean.valid() ? g.add(mean, d) : d;
    mean = g.scale(mean, inv_d);
    Var var{};
    for (const Var& d : dist) {
        Var c = g.square(g.sub(d, mean));
        var = var.valid() ? g.add(var, c) : c;
    }
    return g.scale(var, inv_d);
}

Var loss_isometric_var(Graph& g, const Binder& w, const TextConfig& cfg, const PromptTokens& anchor,
                       const std::vector<PromptTokens>& prompts) {
    Var ea = encode_var(g, w, cfg, anchor);
    std::vector<Var> es;
    es.reserve(prompts.size());
    for (const PromptTokens& p : prompts) es.push_back(encode_var(g, w, cfg, p));
    return loss_isometric_from_embeddings(g, ea, es);
}

DecoupleValue loss_decouple(const std::vector<float>& g_o, const std::vector<float>& g_p,
                            DecoupleForm form) {
    DecoupleValue out;
    out.cos_raw = cosine_similarity(g_o, g_p);
    switch (form) {
    case DecoupleForm::cos: out.value = out.cos_raw; break;
    case DecoupleForm::cos_sq: out.value = out.cos_raw * out.cos_raw; break;
    case DecoupleForm::cos_abs: out.value = std::abs(out.cos_raw); break;
    }
    return out;
}

double total_objective(double L_o, double L_p, double L_iso, double L_dec, const LossWeights& w) {
    double total = L_o + L_p + w.lambda_iso * L_iso + w.lambda_dec * L_dec;
    if (!std::isfinite(total))
        fail(Errc::non_finite, "objective is not finite (L_o=" + std::to_string(L_o) +
                                   " L_p=" + std::to_string(L_p) + " L_iso=" + std::to_string(L_iso) +
                                   " L_dec=" + std::to_string(L_dec) + ")");
    return total;
}

std::vector<float> decouple_cograd(const std::vector<float>& g_own, const std::vector<float>& g_other,
                                   DecoupleForm form) {
    double no = norm_f64(g_own), np = norm_f64(g_other);
    if (no < 1e-12 || np < 1e-12) fail(Errc::degenerate_input, "degenerate gradient norm");
    double c = dot_f64(g_own, g_other) / (no * np);
    double chain = 1.0;
    switch (form) {
    case DecoupleForm::cos: chain = 1.0; break;
    case DecoupleForm::cos_sq: chain = 2.0 * c; break;
    case DecoupleForm::cos_abs: chain = (c >= 0.0) ? 1.0 : -1.0; break;
    }
    std::vector<float> out(g_own.size());
    double inv_cross = 1.0 / (no * np), inv_own2 = c / (no * no);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(chain * (static_cast<double>(g_other[i]) * inv_cross -
                                             static_cast<double>(g_own[i]) * inv_own2));
    return out;
}

} // namespace phyc
