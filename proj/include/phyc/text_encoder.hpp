#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "phyc/rng.hpp"
#include "phyc/tensor.hpp"

namespace phyc {

struct Vocabulary {
    std::vector<std::string> tokens;  // index = id; tokens[0] must be [PAD]
    std::map<std::string, int64_t> ids;

    int64_t id(const std::string& tok) const;  // unknown -> error
    size_t size() const { return tokens.size(); }
};

// [PAD], [V], [O], prompt words, and the eight object names.
Vocabulary default_vocabulary();
Vocabulary make_vocabulary(const std::vector<std::string>& tokens);

inline constexpr int64_t kPadId = 0;

struct TextConfig {
    int64_t l_max = 8;
    int64_t d_txt = 32;
    int64_t mlp_hidden = 64;
};

using PromptTokens = std::vector<int64_t>;  // length == l_max, PAD-filled

PromptTokens tokenize(const std::string& prompt, const Vocabulary& vocab, int64_t l_max = 8);

// Weight binder: maps a parameter name to the Var to use for it on a given
// graph. Lets the same forward code run with leaves (training), constants
// (frozen eval), or LoRA-merged weights.
using Binder = std::function<Var(Graph&, const std::string&)>;

// Every name resolves to a cached constant.
Binder const_binder(const ParamStore& params);
// Names matching `trainable` become leaves, everything else constants.
Binder leaf_binder(const ParamStore& params, std::function<bool(const std::string&)> trainable);

// Registers text-encoder weights under "text.*". Draw order is fixed, so one
// seed gives one initialization.
void init_text_params(ParamStore& params, const TextConfig& cfg, int64_t vocab_size, Rng& rng);
std::vector<std::string> text_param_names(const TextConfig& cfg);

// Token + position embedding -> one self-attention block -> two-layer tanh
// MLP, residuals on both. PAD columns are masked out of the attention so
// padding content cannot leak into real-token embeddings.
Var encode_var(Graph& g, const Binder& w, const TextConfig& cfg, const PromptTokens& tokens);

TensorData encode(const PromptTokens& tokens, const ParamStore& params, const TextConfig& cfg);

// Euclidean distance over the flattened l_max x d_txt values, accumulated in
// double.
double embedding_distance(const TensorData& a, const TensorData& b);

} // namespace phyc
