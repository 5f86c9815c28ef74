#include "masking.hpp"

#include <cmath>
#include <stdexcept>

namespace pxf {

MaskPlan select_mask(RandomStream& stream, int token_count, double ratio) {
    if (token_count < 0) throw std::invalid_argument("select_mask: negative token count");
    if (ratio < 0.0 || ratio > 1.0) throw std::invalid_argument("select_mask: ratio must lie in [0,1]");
    MaskPlan plan;
    plan.ratio = ratio;
    const int k = static_cast<int>(std::llround(ratio * token_count));
    if (k > 0) plan.indices = stream.sample_without_replacement(token_count, k);
    return plan;
}

int masking_threshold_step(int total_pretrain_steps, double activation_fraction) {
    if (activation_fraction < 0.0 || activation_fraction > 1.0) {
        throw std::invalid_argument("masking schedule: activation fraction must lie in [0,1]");
    }
    const auto active_steps = static_cast<int>(std::llround(activation_fraction * total_pretrain_steps));
    return total_pretrain_steps - active_steps;
}

bool masking_active(int step, int total_pretrain_steps, RandomStream& stream, const MaskSchedule& schedule) {
    if (step < 0 || step > total_pretrain_steps) {
        throw std::invalid_argument("masking schedule: step " + std::to_string(step) + " outside [0," +
                                    std::to_string(total_pretrain_steps) + "]");
    }
    if (step < masking_threshold_step(total_pretrain_steps, schedule.activation_fraction)) return false;
    return stream.bernoulli(schedule.apply_probability);
}

std::optional<Role> masked_role(Task task) {
    switch (task) {
        case Task::generation: return Role::image_noisy;
        case Task::understanding: return Role::image_condition;
        default: return std::nullopt;
    }
}

LossPositionSpec masked_targets(Task task, const MaskPlan& plan) {
    (void)plan;  // loss positions never depend on which patches were masked
    LossPositionSpec spec;
    switch (task) {
        case Task::generation:
        case Task::editing:
        case Task::reconstruction:
            spec.flow_over_all_patches = true;
            break;
        case Task::understanding:
        case Task::text_only:
            spec.ce_over_text_targets = true;
            break;
    }
    return spec;
}

}  // namespace pxf
