#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "phyc/rng.hpp"
#include "phyc/tensor.hpp"
#include "phyc/text_encoder.hpp"

namespace phyc {

// Two fixed branch names. Both branches always cover the identical host set,
// so their flattened gradients are directly comparable.
inline const char* kObjectBranch = "object";
inline const char* kPhysicsBranch = "physics";

struct LoraSet {
    std::string branch;
    std::vector<std::string> hosts;
    std::vector<int64_t> ranks;  // parallel to hosts (requested rank clamped per host)
};

std::string lora_a_name(const std::string& branch, const std::string& host);
std::string lora_b_name(const std::string& branch, const std::string& host);

// Creates "lora.<branch>.<host>.B" (zeros, n x r) and ".A" (Gaussian
// sigma=0.02, r x m) for every host; rank clamps to min(n, m). Host weights
// must already exist in `params` and be 2-D.
LoraSet attach(ParamStore& params, const std::vector<std::string>& hosts, int64_t rank,
               const std::string& branch, Rng& rng);

// W + sum_i w_i * B_i * A_i, evaluated eagerly in f32 (same arithmetic the
// graph ops use).
TensorData merged_weight(const TensorData& base, const std::vector<const TensorData*>& Bs,
                         const std::vector<const TensorData*>& As, const std::vector<float>& weights);

struct BranchConfig {
    bool object = false;
    bool physics = false;

    static BranchConfig none() { return {}; }
    static BranchConfig only(const std::string& branch);
    static BranchConfig both() { return {true, true}; }
};

// Binder for denoiser/text forwards. Host weights resolve to
// base + active adapters; the active branches listed in `trainable` become
// graph leaves (named by their lora parameter names), everything else is a
// constant. Per-graph caching keeps each merged weight computed once.
Binder lora_binder(const ParamStore& params, const std::vector<std::string>& hosts,
                   BranchConfig active, BranchConfig trainable);

// Subset store holding one branch's adapter tensors (canonical name order).
ParamStore branch_params(const ParamStore& params, const std::vector<std::string>& hosts,
                         const std::string& branch);

// Gradient of a scalar loss w.r.t. one branch, flattened canonically. The
// graph must have the branch tensors registered as leaves (use lora_binder
// with trainable = that branch).
std::vector<float> branch_grads(Graph& g, Var loss, const ParamStore& branch_store);

} // namespace phyc
