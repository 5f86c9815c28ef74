#pragma once

// Inference: Euler integration of the learned velocity field from noise to
// image, with optional classifier-free guidance, plus image editing,
// reconstruction, and greedy VQA answering.

#include <functional>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "flow.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace pxf {

struct SampleRunConfig {
    int euler_steps = 50;
    uint64_t seed = 0;
    double guidance = 1.0;  // 1 queries the conditional model only

    void validate() const;
};

// Velocity field query: current state (image space) and the clamped model
// timestep. Lets tests drive the integrator with closed-form oracles.
using VelocityFn = std::function<Tensor<float>(const Tensor<float>&, double)>;

// x(0) ~ N(0,1); for each grid interval, queries the field at
// min(t, 1 - eps_t) and applies one Euler step. Clips to [-1,1] at the end
// only (when clip_output), never mid-trajectory.
Tensor<float> integrate_flow(const VelocityFn& field, const std::vector<int>& shape, const TimeGrid& grid,
                             RandomStream& noise, bool clip_output = true, double eps_t = kEpsT);

// One model query: encodes [prefix segments..., image_noisy(x_t)] and
// converts the clean-image prediction to a velocity at the clamped t.
// Prefix text/image segments are given in layout order without the noisy
// segment, which this function appends.
struct SamplePrefix {
    std::vector<Segment> segments;  // roles/lengths excluding the noisy segment
    std::vector<std::vector<int>> text_segments;
    std::vector<Tensor<float>> image_segments;
};

Tensor<float> model_velocity(const ModelConfig& cfg, const NamedTensors<float>& params, const SamplePrefix& prefix,
                             Task task, const Tensor<float>& xt, double t);

// Text-to-image: condition on the tokenized prompt; empty prompt text is the
// unconditional condition [BOS, EOS]. Guidance g blends
// v_uncond + g * (v_cond - v_uncond) per query when g != 1.
Tensor<float> generate(const Checkpoint& ckpt, const std::string& prompt, const SampleRunConfig& run);

// Instruction edit: condition on [source image, instruction], then integrate.
Tensor<float> edit(const Checkpoint& ckpt, const Tensor<float>& source, const std::string& instruction,
                   const SampleRunConfig& run);

// Reconstruction: condition on the source image alone.
Tensor<float> reconstruct(const Checkpoint& ckpt, const Tensor<float>& source, const SampleRunConfig& run);

// Greedy answer decoding for [image, question]: returns the detokenized
// answer text (special tokens stripped).
std::string answer(const Checkpoint& ckpt, const Tensor<float>& image, const std::string& question,
                   int max_tokens = 8);

}  // namespace pxf
