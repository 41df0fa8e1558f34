#pragma once

#include <cstdint>
#include <string>

#include "phyc/tensor.hpp"

namespace phyc {

// Everything a training run needs to continue bit-exactly: model parameters
// (frozen base included), both adapter branches, text encoder, AdamW moments,
// the completed-step counter, and the resolved config as an opaque string.
struct TrainerState {
    ParamStore params;
    ParamStore adam_m, adam_v;  // same key set as the trainable parameters
    int64_t step = 0;           // completed steps
    std::string config_json;
};

// Binary container: magic "PHYC", version u32, tensor count u32, then per
// tensor (name length u32, name, ndim u32, dims u64 LE, f32 LE row-major
// data), trailing CRC32 over all preceding bytes.
void save_checkpoint(const TrainerState& state, const std::string& path);
TrainerState load_checkpoint(const std::string& path);

} // namespace phyc
