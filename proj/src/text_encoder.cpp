#include "phyc/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <sstream>

namespace phyc {

int64_t Vocabulary::id(const std::string& tok) const {
    auto it = ids.find(tok);
    if (it == ids.end()) fail(Errc::unknown_name, "word not in vocabulary: " + tok);
    return it->second;
}

Vocabulary make_vocabulary(const std::vector<std::string>& tokens) {
    Vocabulary v;
    v.tokens = tokens;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (v.ids.count(tokens[i])) fail(Errc::invalid_argument, "duplicate token " + tokens[i]);
        v.ids[tokens[i]] = static_cast<int64_t>(i);
    }
    if (v.tokens.empty() || v.tokens[0] != "[PAD]")
        fail(Errc::invalid_argument, "vocabulary must start with [PAD]");
    if (!v.ids.count("[V]") || !v.ids.count("[O]"))
        fail(Errc::invalid_argument, "vocabulary must contain [V] and [O]");
    return v;
}

Vocabulary default_vocabulary() {
    return make_vocabulary({"[PAD]", "[V]", "[O]", "a", "photo", "of", "object", "circle",
                            "square", "triangle", "star", "bar", "cross", "diamond", "crescent"});
}

PromptTokens tokenize(const std::string& prompt, const Vocabulary& vocab, int64_t l_max) {
    std::string lowered;
    lowered.reserve(prompt.size());
    for (char c : prompt) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    std::istringstream ss(lowered);
    PromptTokens out;
    std::string word;
    while (ss >> word) {
        if (static_cast<int64_t>(out.size()) == l_max)
            fail(Errc::out_of_range, "prompt longer than " + std::to_string(l_max) + " words");
        // Specials keep their bracket case from the vocabulary.
        if (word == "[v]") word = "[V]";
        if (word == "[o]") word = "[O]";
        if (word == "[pad]") word = "[PAD]";
        out.push_back(vocab.id(word));
    }
    out.resize(static_cast<size_t>(l_max), kPadId);
    return out;
}

std::vector<std::string> text_param_names(const TextConfig&) {
    return {"text.tok_embed", "text.pos_embed", "text.attn.wq", "text.attn.wk",
            "text.attn.wv",   "text.attn.wo",   "text.mlp.w1",  "text.mlp.w2"};
}

void init_text_params(ParamStore& params, const TextConfig& cfg, int64_t vocab_size, Rng& rng) {
    auto gaussian = [&](Shape shape, double sigma) {
        TensorData t = TensorData::zeros(shape);
        for (auto& v : t.data) v = static_cast<float>(rng.normal() * sigma);
        return t;
    };
    int64_t d = cfg.d_txt;
    params.set("text.tok_embed", gaussian({vocab_size, d}, 0.5));
    params.set("text.pos_embed", gaussian({cfg.l_max, d}, 0.5));
    double sa = 1.0 / std::sqrt(static_cast<double>(d));
    params.set("text.attn.wq", gaussian({d, d}, sa));
    params.set("text.attn.wk", gaussian({d, d}, sa));
    params.set("text.attn.wv", gaussian({d, d}, sa));
    params.set("text.attn.wo", gaussian({d, d}, sa));
    params.set("text.mlp.w1", gaussian({d, cfg.mlp_hidden}, sa));
    params.set("text.mlp.w2", gaussian({cfg.mlp_hidden, d}, 1.0 / std::sqrt(static_cast<double>(cfg.mlp_hidden))));
}

Binder const_binder(const ParamStore& params) {
    return leaf_binder(params, [](const std::string&) { return false; });
}

Binder leaf_binder(const ParamStore& params, std::function<bool(const std::string&)> trainable) {
    // Safe as long as the store outlives the graphs using the binder. The
    // cache keeps repeated forwards on one graph from duplicating weights.
    const ParamStore* p = &params;
    auto cache = std::make_shared<std::map<std::pair<uint64_t, std::string>, Var>>();
    return [p, trainable = std::move(trainable), cache](Graph& g, const std::string& name) -> Var {
        auto key = std::make_pair(g.serial(), name);
        auto hit = cache->find(key);
        if (hit != cache->end()) return hit->second;
        Var v = trainable(name) ? (g.has_leaf(name) ? g.leaf_var(name) : g.leaf(name, p->get(name)))
                                : g.constant(p->get(name));
        cache->emplace(key, v);
        return v;
    };
}

namespace {

// Additive mask: -1e9 on PAD columns. All-PAD prompts get no mask so the
// unconditional branch still averages over its (identical) rows.
Var attention_mask(Graph& g, const PromptTokens& tokens, int64_t rows) {
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

} // namespace

Var encode_var(Graph& g, const Binder& w, const TextConfig& cfg, const PromptTokens& tokens) {
    if (static_cast<int64_t>(tokens.size()) != cfg.l_max)
        fail(Errc::length_mismatch, "prompt tokens must have length " + std::to_string(cfg.l_max));
    int64_t L = cfg.l_max, d = cfg.d_txt;
    Var x = g.add(g.embedding(w(g, "text.tok_embed"), tokens), w(g, "text.pos_embed"));

    Var q = g.matmul(x, w(g, "text.attn.wq"));
    Var k = g.matmul(x, w(g, "text.attn.wk"));
    Var v = g.matmul(x, w(g, "text.attn.wv"));
    Var scores = g.scale(g.matmul(q, g.transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    scores = g.add(scores, attention_mask(g, tokens, L));
    Var attn = g.softmax_last(scores);
    x = g.add(x, g.matmul(g.matmul(attn, v), w(g, "text.attn.wo")));

    Var h = g.tanh(g.matmul(x, w(g, "text.mlp.w1")));
    return g.add(x, g.matmul(h, w(g, "text.mlp.w2")));
}

TensorData encode(const PromptTokens& tokens, const ParamStore& params, const TextConfig& cfg) {
    Graph g;
    Var e = encode_var(g, const_binder(params), cfg, tokens);
    return TensorData(e.shape(), e.value());
}

double embedding_distance(const TensorData& a, const TensorData& b) {
    if (a.shape != b.shape)
        fail(Errc::shape_mismatch, "distance between " + shape_str(a.shape) + " and " + shape_str(b.shape));
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

} // namespace phyc
