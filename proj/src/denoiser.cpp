#include "phyc/denoiser.hpp"

#include <cmath>

namespace phyc {

std::vector<std::string> denoiser_param_names(const DenoiserConfig& cfg) {
    std::vector<std::string> names = {"den.patch_embed.w", "den.pos_embed", "den.time_proj.w"};
    for (int64_t b = 0; b < cfg.n_blocks; ++b) {
        std::string p = "den.b" + std::to_string(b) + ".";
        for (const char* s : {"self.wq", "self.wk", "self.wv", "self.wo", "cross.wq", "cross.wk",
                              "cross.wv", "cross.wo", "mlp.w1", "mlp.w2"})
            names.push_back(p + s);
    }
    names.push_back("den.head.w");
    return names;
}

std::vector<std::string> lora_host_names(const DenoiserConfig& cfg) {
    std::vector<std::string> hosts;
    for (int64_t b = 0; b < cfg.n_blocks; ++b) {
        std::string p = "den.b" + std::to_string(b) + ".";
        for (const char* s : {"cross.wq", "cross.wk", "cross.wv", "cross.wo", "mlp.w1", "mlp.w2"})
            hosts.push_back(p + s);
    }
    hosts.push_back("den.head.w");
    return hosts;
}

void init_denoiser_params(ParamStore& params, const DenoiserConfig& cfg, Rng& rng) {
    auto gaussian = [&](Shape shape, double sigma) {
        TensorData t = TensorData::zeros(shape);
        for (auto& v : t.data) v = static_cast<float>(rng.normal() * sigma);
        return t;
    };
    int64_t d = cfg.d_model, P = cfg.patch_dim(), T = cfg.tokens();
    params.set("den.patch_embed.w", gaussian({P, d}, 1.0 / std::sqrt(static_cast<double>(P))));
    params.set("den.pos_embed", gaussian({T, d}, 0.25));
    params.set("den.time_proj.w", gaussian({d, d}, 1.0 / std::sqrt(static_cast<double>(d))));
    double sd = 1.0 / std::sqrt(static_cast<double>(d));
    double st = 1.0 / std::sqrt(static_cast<double>(cfg.d_txt));
    for (int64_t b = 0; b < cfg.n_blocks; ++b) {
        std::string p = "den.b" + std::to_string(b) + ".";
        params.set(p + "self.wq", gaussian({d, d}, sd));
        params.set(p + "self.wk", gaussian({d, d}, sd));
        params.set(p + "self.wv", gaussian({d, d}, sd));
        params.set(p + "self.wo", gaussian({d, d}, sd));
        params.set(p + "cross.wq", gaussian({d, d}, sd));
        params.set(p + "cross.wk", gaussian({cfg.d_txt, d}, st));
        params.set(p + "cross.wv", gaussian({cfg.d_txt, d}, st));
        params.set(p + "cross.wo", gaussian({d, d}, sd));
        params.set(p + "mlp.w1", gaussian({d, cfg.mlp_hidden}, sd));
        params.set(p + "mlp.w2", gaussian({cfg.mlp_hidden, d}, 1.0 / std::sqrt(static_cast<double>(cfg.mlp_hidden))));
    }
    params.set("den.head.w", TensorData::zeros({d, P}));
}

std::vector<float> time_features(int64_t t, int64_t d_model) {
    std::vector<float> out(static_cast<size_t>(d_model));
    int64_t half = d_model / 2;
    for (int64_t i = 0; i < half; ++i) {
        double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
        double angle = static_cast<double>(t) * freq;
        out[static_cast<size_t>(2 * i)] = static_cast<float>(std::sin(angle));
        out[static_cast<size_t>(2 * i + 1)] = static_cast<float>(std::cos(angle));
    }
    if (d_model % 2) out[static_cast<size_t>(d_model - 1)] = 0.0f;
    return out;
}

namespace {

Var pad_mask(Graph& g, const PromptTokens& tokens, int64_t rows) {
    bool any_real = false;
    for (int64_t id : tokens)
        if (id != kPadId) any_real = true;
    int64_t L = static_cast<int64_t>(tokens.size());
    TensorData m = TensorData::zeros({rows, L});
    if (any_real) {
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < L; ++c)
                if (tokens[static_cast<size_t>(c)] == kPadId) m.at(r * L + c) = -1e9f;
    }
    return g.constant(m);
}

Var attention(Graph& g, Var q, Var k, Var v, Var wo, const Binder&, int64_t d, Var* mask,
              Var* attn_keep) {
    Var scores = g.scale(g.matmul(q, g.transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    if (mask) scores = g.add(scores, *mask);
    Var attn = g.softmax_last(scores);
    if (attn_keep) *attn_keep = attn;
    return g.matmul(g.matmul(attn, v), wo);
}

} // namespace

Var predict_noise_var(Graph& g, const Binder& w, const DenoiserConfig& cfg, Var z_t, int64_t t,
                      Var cond, const PromptTokens& cond_tokens, std::vector<Var>* attn_out) {
    if (t < 0 || t >= cfg.T)
        fail(Errc::out_of_range, "timestep " + std::to_string(t) + " outside [0," + std::to_string(cfg.T) + ")");
    if (z_t.shape() != Shape{cfg.height, cfg.width})
        fail(Errc::shape_mismatch, "latent shape " + shape_str(z_t.shape()));
    if (cond.shape() != Shape{cfg.l_max, cfg.d_txt})
        fail(Errc::shape_mismatch, "conditioning shape " + shape_str(cond.shape()));
    int64_t d = cfg.d_model, T = cfg.tokens();

    Var x = g.matmul(g.patchify(z_t, cfg.patch_size), w(g, "den.patch_embed.w"));
    Var tfeat = g.constant(TensorData({1, d}, time_features(t, d)));
    Var temb = g.matmul(tfeat, w(g, "den.time_proj.w"));
    x = g.add(x, g.broadcast_rows(temb, T));
    x = g.add(x, w(g, "den.pos_embed"));

    Var cmask = pad_mask(g, cond_tokens, T);
    for (int64_t b = 0; b < cfg.n_blocks; ++b) {
        std::string p = "den.b" + std::to_string(b) + ".";
        Var xn = g.layer_norm_last(x);
        x = g.add(x, attention(g, g.matmul(xn, w(g, p + "self.wq")), g.matmul(xn, w(g, p + "self.wk")),
                               g.matmul(xn, w(g, p + "self.wv")), w(g, p + "self.wo"), w, d, nullptr,
                               nullptr));
        xn = g.layer_norm_last(x);
        Var attn{};
        x = g.add(x, attention(g, g.matmul(xn, w(g, p + "cross.wq")), g.matmul(cond, w(g, p + "cross.wk")),
                               g.matmul(cond, w(g, p + "cross.wv")), w(g, p + "cross.wo"), w, d, &cmask,
                               attn_out ? &attn : nullptr));
        if (attn_out) attn_out->push_back(attn);
        xn = g.layer_norm_last(x);
        x = g.add(x, g.matmul(g.silu(g.matmul(xn, w(g, p + "mlp.w1"))), w(g, p + "mlp.w2")));
    }
    Var out = g.matmul(x, w(g, "den.head.w"));
    return g.unpatchify(out, cfg.height, cfg.width, cfg.patch_size);
}

TensorData predict_noise(const TensorData& z_t, int64_t t, const TensorData& cond,
                         const PromptTokens& cond_tokens, const Binder& w,
                         const DenoiserConfig& cfg) {
    Graph g;
    Var out = predict_noise_var(g, w, cfg, g.constant(z_t), t, g.constant(cond), cond_tokens);
    return TensorData(out.shape(), out.value());
}

AttentionMaps export_attention_maps(const TensorData& z_t, int64_t t, const TensorData& cond,
                                    const PromptTokens& cond_tokens, const Binder& w,
                                    const DenoiserConfig& cfg) {
    Graph g;
    std::vector<Var> attn;
    predict_noise_var(g, w, cfg, g.constant(z_t), t, g.constant(cond), cond_tokens, &attn);
    AttentionMaps maps;
    for (const Var& a : attn) maps.cross.emplace_back(a.shape(), a.value());
    return maps;
}

std::vector<double> attention_overlap(const AttentionMaps& maps, int64_t col_a, int64_t col_b) {
    std::vector<double> out;
    for (const TensorData& m : maps.cross) {
        if (m.shape.size() != 2) fail(Errc::shape_mismatch, "attention map must be 2-D");
        int64_t rows = m.shape[0], cols = m.shape[1];
        if (col_a < 0 || col_a >= cols || col_b < 0 || col_b >= cols)
            fail(Errc::out_of_range, "attention column outside [0," + std::to_string(cols) + ")");
        std::vector<double> a(static_cast<size_t>(rows)), b(static_cast<size_t>(rows));
        double sa = 0, sb = 0;
        for (int64_t r = 0; r < rows; ++r) {
            a[static_cast<size_t>(r)] = m.data[static_cast<size_t>(r * cols + col_a)];
            b[static_cast<size_t>(r)] = m.data[static_cast<size_t>(r * cols + col_b)];
            sa += a[static_cast<size_t>(r)];
            sb += b[static_cast<size_t>(r)];
        }
        if (sa < 1e-12 || sb < 1e-12) fail(Errc::degenerate_input, "attention column mass ~ 0");
        double ov = 0;
        for (int64_t r = 0; r < rows; ++r)
            ov += std::min(a[static_cast<size_t>(r)] / sa, b[static_cast<size_t>(r)] / sb);
        out.push_back(ov);
    }
    return out;
}

} // namespace phyc
