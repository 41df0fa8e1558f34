#include "phyc/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>

#include "phyc/lora.hpp"

namespace phyc {

bool is_trainable_name(const std::string& name) {
    return name.rfind("lora.", 0) == 0 || name.rfind("text.", 0) == 0;
}

static void validate_config(const TrainConfig& cfg) {
    if (cfg.steps < 1) fail(Errc::invalid_argument, "steps must be >= 1");
    if (!(cfg.lr > 0)) fail(Errc::invalid_argument, "lr must be > 0");
    if (cfg.batch < 1) fail(Errc::invalid_argument, "batch must be >= 1");
    if (cfg.rank < 1) fail(Errc::invalid_argument, "rank must be >= 1");
    if (!(cfg.dropout >= 0.0 && cfg.dropout <= 1.0))
        fail(Errc::invalid_argument, "dropout must be in [0, 1]");
    if (cfg.den.d_txt != cfg.text.d_txt || cfg.den.l_max != cfg.text.l_max)
        fail(Errc::invalid_argument, "denoiser and text encoder disagree on d_txt or l_max");
}

TrainerState init_trainer(const TrainConfig& cfg, int64_t vocab_size, std::string config_json) {
    validate_config(cfg);
    TrainerState st;
    Rng rng(cfg.seed);
    init_denoiser_params(st.params, cfg.den, rng);
    init_text_params(st.params, cfg.text, vocab_size, rng);
    auto hosts = lora_host_names(cfg.den);
    attach(st.params, hosts, cfg.rank, kObjectBranch, rng);
    attach(st.params, hosts, cfg.rank, kPhysicsBranch, rng);
    for (const auto& [name, value] : st.params) {
        if (!is_trainable_name(name)) continue;
        st.adam_m.set(name, TensorData::zeros(value.shape));
        st.adam_v.set(name, TensorData::zeros(value.shape));
    }
    st.config_json = std::move(config_json);
    return st;
}

void adamw_update(ParamStore& params, ParamStore& m_store, ParamStore& v_store,
                  const std::map<std::string, std::vector<float>>& grads, int64_t t,
                  const AdamConfig& adam) {
    if (t < 1) fail(Errc::invalid_argument, "adamw step index must be >= 1");
    const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(t));
    for (const auto& [name, m_ref] : m_store) {
        auto git = grads.find(name);
        if (git == grads.end()) fail(Errc::unknown_name, "missing gradient for " + name);
        TensorData& p = params.get_mut(name);
        TensorData& m = m_store.get_mut(name);
        TensorData& v = v_store.get_mut(name);
        const std::vector<float>& g = git->second;
        if (g.size() != p.data.size())
            fail(Errc::length_mismatch, "gradient size for " + name);
        for (size_t i = 0; i < g.size(); ++i) {
            const double gi = g[i];
            const double m1 = adam.beta1 * m.data[i] + (1.0 - adam.beta1) * gi;
            const double v1 = adam.beta2 * v.data[i] + (1.0 - adam.beta2) * gi * gi;
            m.data[i] = static_cast<float>(m1);
            v.data[i] = static_cast<float>(v1);
            const double step = (m1 / bc1) / (std::sqrt(v1 / bc2) + adam.eps);
            double pi = p.data[i];
            pi -= adam.lr * (step + adam.weight_decay * pi);
            p.data[i] = static_cast<float>(pi);
        }
    }
}

// <grads, vec> as a scalar on the same graph, then one more backward sweep:
// the Hessian of the loss those grads came from, applied to vec.
static std::vector<float> hvp_on_graph(Graph& g, const std::map<std::string, Var>& grads,
                                       const ParamStore& wrt, const std::vector<float>& vec) {
    Var acc{};
    size_t pos = 0;
    for (const auto& [name, value] : wrt) {
        std::vector<float> chunk(vec.begin() + static_cast<std::ptrdiff_t>(pos),
                                 vec.begin() + static_cast<std::ptrdiff_t>(pos + value.data.size()));
        pos += value.data.size();
        Var vc = g.constant(TensorData(value.shape, std::move(chunk)));
        Var term = g.sum_all(g.mul(grads.at(name), vc));
        acc = acc.valid() ? g.add(acc, term) : term;
    }
    auto grads2 = g.backward(acc, wrt);
    return flatten_grads(grads2, wrt);
}

LossReport train_step(TrainerState& st, const TrainConfig& cfg, const ConceptDataset& data) {
    validate_config(cfg);
    if (data.object_items.empty() || data.physics_items.empty())
        fail(Errc::invalid_argument, "concept dataset has empty item lists");

    const DiffusionSchedule sched = make_schedule(cfg.den.T);
    const auto hosts = lora_host_names(cfg.den);
    Rng rng(Rng::mix(cfg.seed, static_cast<uint64_t>(st.step)));

    // Conditioning comes from the current text encoder but enters the
    // denoiser graphs as constants; only L_isometric trains the encoder.
    std::map<PromptTokens, TensorData> embed_cache;
    auto embed = [&](const PromptTokens& toks) -> const TensorData& {
        auto it = embed_cache.find(toks);
        if (it == embed_cache.end())
            it = embed_cache.emplace(toks, encode(toks, st.params, cfg.text)).first;
        return it->second;
    };
    const PromptTokens pad_tokens(static_cast<size_t>(cfg.text.l_max), kPadId);
    const TensorData& uncond = embed(pad_tokens);

    auto to_batch_items = [&](const std::vector<std::pair<TensorData, std::string>>& items) {
        std::vector<BatchItem> out;
        out.reserve(items.size());
        for (const auto& [img, prompt] : items) {
            PromptTokens toks = tokenize(prompt, data.vocab, cfg.text.l_max);
            out.push_back({img, embed(toks), std::move(toks)});
        }
        return out;
    };
    const auto object_items = to_batch_items(data.object_items);
    const auto physics_items = to_batch_items(data.physics_items);

    // Draw order is pinned: object batch first, physics second, one stream.
    const auto object_batch =
        make_training_batch(object_items, uncond, sched, cfg.batch, rng, cfg.dropout);
    const auto physics_batch =
        make_training_batch(physics_items, uncond, sched, cfg.batch, rng, cfg.dropout);

    const ParamStore branch_o = branch_params(st.params, hosts, kObjectBranch);
    const ParamStore branch_p = branch_params(st.params, hosts, kPhysicsBranch);

    Graph go;
    Var lo = loss_mse_var(go,
                          lora_binder(st.params, hosts, BranchConfig::only(kObjectBranch),
                                      BranchConfig::only(kObjectBranch)),
                          cfg.den, object_batch);
    const auto grads_o = go.backward(lo, branch_o);
    const std::vector<float> g_o = flatten_grads(grads_o, branch_o);

    Graph gp;
    Var lp = loss_mse_var(gp,
                          lora_binder(st.params, hosts, BranchConfig::only(kPhysicsBranch),
                                      BranchConfig::only(kPhysicsBranch)),
                          cfg.den, physics_batch);
    const auto grads_p = gp.backward(lp, branch_p);
    const std::vector<float> g_p = flatten_grads(grads_p, branch_p);

    LossReport rep;
    rep.L_o = lo.value()[0];
    rep.L_p = lp.value()[0];

    // L_isometric over the anchor and the cross-object prompts, text leaves.
    const PromptTokens anchor = tokenize(data.anchor_prompt, data.vocab, cfg.text.l_max);
    std::vector<PromptTokens> iso_prompts;
    iso_prompts.reserve(data.physics_items.size());
    for (const auto& [img, prompt] : data.physics_items)
        iso_prompts.push_back(tokenize(prompt, data.vocab, cfg.text.l_max));

    ParamStore text_store;
    for (const auto& [name, value] : st.params)
        if (name.rfind("text.", 0) == 0) text_store.set(name, value);

    Graph gi;
    Var li = loss_isometric_var(
        gi, leaf_binder(st.params, [](const std::string& n) { return n.rfind("text.", 0) == 0; }),
        cfg.text, anchor, iso_prompts);
    rep.L_iso = li.value()[0];

    std::map<std::string, std::vector<float>> grad_map;
    if (cfg.weights.lambda_iso != 0.0) {
        const auto text_grads = gi.backward(li, text_store);
        for (const auto& [name, value] : text_store) {
            const auto& raw = text_grads.at(name).value();
            std::vector<float> g(raw.size());
            for (size_t i = 0; i < raw.size(); ++i)
                g[i] = static_cast<float>(cfg.weights.lambda_iso * static_cast<double>(raw[i]));
            grad_map.emplace(name, std::move(g));
        }
    } else {
        for (const auto& [name, value] : text_store)
            grad_map.emplace(name, std::vector<float>(value.data.size(), 0.0f));
    }

    // Decouple term: value always reported; the HVP contribution only when
    // it is weighted in. Degenerate gradient norms skip the term entirely.
    const double norm_o = norm_f64(g_o), norm_p = norm_f64(g_p);
    std::vector<float> delta_o, delta_p;
    if (norm_o < 1e-12 || norm_p < 1e-12) {
        rep.decouple_skipped = true;
        std::cerr << "step " << (st.step + 1) << ": decouple skipped, gradient norms " << norm_o
                  << " / " << norm_p << "\n";
    } else {
        const DecoupleValue dv = loss_decouple(g_o, g_p, cfg.weights.form);
        rep.L_dec = dv.value;
        rep.cos_raw = dv.cos_raw;
        if (cfg.weights.lambda_dec != 0.0) {
            const auto u_o = decouple_cograd(g_o, g_p, cfg.weights.form);
            const auto u_p = decouple_cograd(g_p, g_o, cfg.weights.form);
            delta_o = hvp_on_graph(go, grads_o, branch_o, u_o);
            delta_p = hvp_on_graph(gp, grads_p, branch_p, u_p);
        }
    }

    auto add_branch = [&](const ParamStore& store, const std::vector<float>& g1,
                          const std::vector<float>& g2) {
        size_t pos = 0;
        for (const auto& [name, value] : store) {
            const size_t n = value.data.size();
            std::vector<float> g(n);
            for (size_t i = 0; i < n; ++i) {
                double acc = g1[pos + i];
                if (!g2.empty()) acc += cfg.weights.lambda_dec * static_cast<double>(g2[pos + i]);
                g[i] = static_cast<float>(acc);
            }
            grad_map.emplace(name, std::move(g));
            pos += n;
        }
    };
    add_branch(branch_o, g_o, delta_o);
    add_branch(branch_p, g_p, delta_p);

    rep.total = total_objective(rep.L_o, rep.L_p, rep.L_iso, rep.L_dec, cfg.weights);

    AdamConfig adam;
    adam.lr = cfg.lr;
    adamw_update(st.params, st.adam_m, st.adam_v, grad_map, st.step + 1, adam);
    st.step += 1;
    return rep;
}

static void append_double(std::string& s, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    s.append(buf, res.ptr);
}

std::string csv_header() { return "step,L_total,L_o,L_p,L_iso,L_dec,cos_raw"; }

std::string csv_row(int64_t step, const LossReport& r) {
    std::string s = std::to_string(step);
    for (double v : {r.total, r.L_o, r.L_p, r.L_iso, r.L_dec, r.cos_raw}) {
        s += ',';
        append_double(s, v);
    }
    return s;
}

void run_training(TrainerState& st, const TrainConfig& cfg, const ConceptDataset& data,
                  const std::string& csv_path, const std::string& ckpt_path) {
    validate_config(cfg);
    if (st.step > cfg.steps)
        fail(Errc::state_error, "state is at step " + std::to_string(st.step) +
                                    ", past the configured " + std::to_string(cfg.steps));

    std::ofstream csv(csv_path,
                      st.step == 0 ? std::ios::binary | std::ios::trunc
                                   : std::ios::binary | std::ios::app);
    if (!csv) fail(Errc::io_error, "cannot open " + csv_path);
    if (st.step == 0) csv << csv_header() << '\n';

    while (st.step < cfg.steps) {
        const LossReport rep = train_step(st, cfg, data);
        csv << csv_row(st.step, rep) << '\n';
        csv.flush();
        if (!csv) fail(Errc::io_error, "write failed for " + csv_path);
        if (st.step % 100 == 0 && st.step < cfg.steps) save_checkpoint(st, ckpt_path);
    }
    save_checkpoint(st, ckpt_path);
}

} // namespace phyc
