#pragma once

// Model checkpoints: magic "PXFU", a u32 format version, a length-prefixed
// JSON block (model config, step counters, RNG digest), then one record per
// tensor — length-prefixed name, dtype byte, u32 rank, u64 dims, raw
// little-endian data. Save/load round-trips bit-exactly.

#include <cstdint>
#include <string>

#include "autodiff.hpp"
#include "model.hpp"

namespace pxf {

struct Checkpoint {
    ModelConfig config;
    NamedTensors<float> params;
    bool has_optimizer = false;
    NamedTensors<float> opt_m;  // first Adam moment, parallel to params
    NamedTensors<float> opt_v;  // second Adam moment
    int64_t step = 0;           // completed optimizer steps
    uint64_t rng_digest = 0;    // informational stream fingerprint
};

// Fresh checkpoint at step 0 with newly initialized parameters.
Checkpoint fresh_checkpoint(const ModelConfig& cfg, uint64_t seed);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Validates magic, version, config/tensor consistency, and finiteness;
// throws std::runtime_error with a reason on any malformation.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pxf
