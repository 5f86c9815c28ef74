#pragma once

// Masked feature learning: pick a subset of image patches, swap their content
// embeddings for a learnable mask token, and decide per step/example whether
// masking is on. Replacement happens inside the model graph; this module owns
// selection, scheduling, and the loss-position policy.

#include <optional>
#include <vector>

#include "layout.hpp"
#include "rng.hpp"

namespace pxf {

struct MaskPlan {
    std::vector<int> indices;  // sorted, unique, in [0, token_count)
    double ratio = 0.0;
};

struct MaskSchedule {
    double activation_fraction = 0.4;  // active only in this final fraction of pretraining
    double apply_probability = 0.5;    // per-example coin once active
    double ratio = 0.5;                // fraction of patches replaced
};

// Uniform sample of round(ratio * token_count) patch indices, sorted.
MaskPlan select_mask(RandomStream& stream, int token_count, double ratio);

// First step index (0-based) at which masking can activate.
int masking_threshold_step(int total_pretrain_steps, double activation_fraction);

// False before the threshold step; afterwards a per-example Bernoulli draw.
bool masking_active(int step, int total_pretrain_steps, RandomStream& stream, const MaskSchedule& schedule);

// Which segment role gets masked for a task, if any: the noisy image for
// generation, the conditioning image for understanding, nothing otherwise
// (editing and reconstruction are post-pretraining stages; masking is a
// pretraining mechanism).
std::optional<Role> masked_role(Task task);

// Where losses attach. Independent of the mask plan on purpose: generation
// regresses velocity on every patch whether masked or not, and understanding
// keeps its text loss while seeing masked visual input.
struct LossPositionSpec {
    bool flow_over_all_patches = false;
    bool ce_over_text_targets = false;
};

LossPositionSpec masked_targets(Task task, const MaskPlan& plan);

}  // namespace pxf
