#pragma once

// Joint multimodal sequences are described as an ordered list of segments,
// each tagged with a role. The attention policy is derived purely from the
// segment structure:
//   - text tokens attend causally to every earlier position,
//   - tokens inside an image segment attend bidirectionally to that whole
//     segment and causally to all earlier segments,
//   - nothing attends to later segments.

#include <string>
#include <vector>

#include "tensor.hpp"

namespace pxf {

enum class Role { text_condition, text_target, image_condition, image_noisy };

enum class Task { understanding, generation, editing, text_only, reconstruction };

const char* role_name(Role r);
const char* task_name(Task t);
Task parse_task(const std::string& name);

struct Segment {
    Role role;
    int length = 0;
};

struct SequenceLayout {
    Task task = Task::text_only;
    std::vector<Segment> segments;

    int total_length() const;
    // index of the single image_noisy segment, or -1
    int noisy_segment() const;
    bool has_role(Role r) const;
    // token index range [begin, end) of segment s
    std::pair<int, int> span(int s) const;
    // role of the segment covering token position i
    Role role_at(int i) const;
};

// Checks segment lengths, the one-noisy-segment rule per task, and the
// length budget; throws std::invalid_argument with a reason on violation.
void validate_layout(const SequenceLayout& layout, int max_seq_len);

// allow[q * L + k] == 1 iff query position q may attend key position k.
Tensor<uint8_t> build_attention_mask(const SequenceLayout& layout);

}  // namespace pxf
