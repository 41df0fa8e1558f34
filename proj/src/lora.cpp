#include "phyc/lora.hpp"

#include <algorithm>
#include <map>
#include <memory>

namespace phyc {

std::string lora_a_name(const std::string& branch, const std::string& host) {
    return "lora." + branch + "." + host + ".A";
}

std::string lora_b_name(const std::string& branch, const std::string& host) {
    return "lora." + branch + "." + host + ".B";
}

LoraSet attach(ParamStore& params, const std::vector<std::string>& hosts, int64_t rank,
               const std::string& branch, Rng& rng) {
    if (branch != kObjectBranch && branch != kPhysicsBranch)
        fail(Errc::unknown_name, "unknown LoRA branch: " + branch);
    if (rank < 1) fail(Errc::invalid_argument, "rank must be >= 1");
    LoraSet set;
    set.branch = branch;
    for (const std::string& host : hosts) {
        const TensorData& w = params.get(host);
        if (w.shape.size() != 2)
            fail(Errc::shape_mismatch, "LoRA host " + host + " is not a matrix: " + shape_str(w.shape));
        int64_t n = w.shape[0], m = w.shape[1];
        int64_t r = std::min(rank, std::min(n, m));
        TensorData A = TensorData::zeros({r, m});
        for (auto& v : A.data) v = static_cast<float>(rng.normal() * 0.02);
        params.set(lora_b_name(branch, host), TensorData::zeros({n, r}));
        params.set(lora_a_name(branch, host), std::move(A));
        set.hosts.push_back(host);
        set.ranks.push_back(r);
    }
    return set;
}

TensorData merged_weight(const TensorData& base, const std::vector<const TensorData*>& Bs,
                         const std::vector<const TensorData*>& As, const std::vector<float>& weights) {
    if (Bs.size() != As.size() || Bs.size() != weights.size())
        fail(Errc::length_mismatch, "merged_weight adapter lists disagree");
    if (base.shape.size() != 2) fail(Errc::shape_mismatch, "base weight is not a matrix");
    int64_t n = base.shape[0], m = base.shape[1];
    TensorData out = base;
    for (size_t i = 0; i < Bs.size(); ++i) {
        const TensorData &B = *Bs[i], &A = *As[i];
        if (B.shape.size() != 2 || A.shape.size() != 2 || B.shape[0] != n || A.shape[1] != m ||
            B.shape[1] != A.shape[0])
            fail(Errc::shape_mismatch, "adapter shapes " + shape_str(B.shape) + " x " + shape_str(A.shape) +
                                           " against base " + shape_str(base.shape));
        int64_t r = B.shape[1];
        float wgt = weights[i];
        if (wgt == 0.0f) continue;
        for (int64_t row = 0; row < n; ++row)
            for (int64_t k = 0; k < r; ++k) {
                float b = B.data[static_cast<size_t>(row * r + k)];
                if (b == 0.0f) continue;
                for (int64_t col = 0; col < m; ++col)
                    out.data[static_cast<size_t>(row * m + col)] +=
                        wgt * b * A.data[static_cast<size_t>(k * m + col)];
            }
    }
    return out;
}

BranchConfig BranchConfig::only(const std::string& branch) {
    if (branch == kObjectBranch) return {true, false};
    if (branch == kPhysicsBranch) return {false, true};
    fail(Errc::unknown_name, "unknown LoRA branch: " + branch);
}

Binder lora_binder(const ParamStore& params, const std::vector<std::string>& hosts,
                   BranchConfig active, BranchConfig trainable) {
    const ParamStore* p = &params;
    std::set<std::string> host_set(hosts.begin(), hosts.end());
    // One cache per graph: merged weights and leaves are created once even
    // when predict_noise runs several times on the same graph.
    auto cache = std::make_shared<std::map<std::pair<uint64_t, std::string>, Var>>();
    return [p, host_set, active, trainable, cache](Graph& g, const std::string& name) -> Var {
        auto key = std::make_pair(g.serial(), name);
        auto hit = cache->find(key);
        if (hit != cache->end()) return hit->second;

        Var out{};
        if (!host_set.count(name)) {
            out = g.constant(p->get(name));
        } else {
            Var acc = g.constant(p->get(name));
            auto add_branch = [&](const char* branch, bool on, bool train) {
                if (!on) return;
                std::string an = lora_a_name(branch, name), bn = lora_b_name(branch, name);
                Var A = train ? (g.has_leaf(an) ? g.leaf_var(an) : g.leaf(an, p->get(an)))
                              : g.constant(p->get(an));
                Var B = train ? (g.has_leaf(bn) ? g.leaf_var(bn) : g.leaf(bn, p->get(bn)))
                              : g.constant(p->get(bn));
                acc = g.add(acc, g.matmul(B, A));
            };
            add_branch(kObjectBranch, active.object, trainable.object);
            add_branch(kPhysicsBranch, active.physics, trainable.physics);
            out = acc;
        }
        cache->emplace(key, out);
        return out;
    };
}

ParamStore branch_params(const ParamStore& params, const std::vector<std::string>& hosts,
                         const std::string& branch) {
    ParamStore out;
    for (const std::string& host : hosts) {
        out.set(lora_a_name(branch, host), params.get(lora_a_name(branch, host)));
        out.set(lora_b_name(branch, host), params.get(lora_b_name(branch, host)));
    }
    if (out.count() == 0) fail(Errc::degenerate_input, "branch " + branch + " has no adapters");
    return out;
}

std::vector<float> branch_grads(Graph& g, Var loss, const ParamStore& branch_store) {
    auto grads = g.backward(loss, branch_store);
    return flatten_grads(grads, branch_store);
}

} // namespace phyc
