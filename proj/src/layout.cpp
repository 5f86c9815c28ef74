#include "layout.hpp"

#include <stdexcept>

namespace pxf {

const char* role_name(Role r) {
    switch (r) {
        case Role::text_condition: return "text_condition";
        case Role::text_target: return "text_target";
        case Role::image_condition: return "image_condition";
        case Role::image_noisy: return "image_noisy";
    }
    return "?";
}

const char* task_name(Task t) {
    switch (t) {
        case Task::understanding: return "understanding";
        case Task::generation: return "generation";
        case Task::editing: return "editing";
        case Task::text_only: return "text_only";
        case Task::reconstruction: return "reconstruction";
    }
    return "?";
}

Task parse_task(const std::string& name) {
    for (Task t : {Task::understanding, Task::generation, Task::editing, Task::text_only, Task::reconstruction}) {
        if (name == task_name(t)) return t;
    }
    throw std::invalid_argument("unknown task '" + name + "'");
}

int SequenceLayout::total_length() const {
    int n = 0;
    for (const Segment& s : segments) n += s.length;
    return n;
}

int SequenceLayout::noisy_segment() const {
    for (size_t i = 0; i < segments.size(); ++i) {
        if (segments[i].role == Role::image_noisy) return static_cast<int>(i);
    }
    return -1;
}

bool SequenceLayout::has_role(Role r) const {
    for (const Segment& s : segments) {
        if (s.role == r) return true;
    }
    return false;
}

std::pair<int, int> SequenceLayout::span(int s) const {
    if (s < 0 || static_cast<size_t>(s) >= segments.size()) {
        throw std::out_of_range("layout: segment index " + std::to_string(s) + " out of range");
    }
    int begin = 0;
    for (int i = 0; i < s; ++i) begin += segments[static_cast<size_t>(i)].length;
    return {begin, begin + segments[static_cast<size_t>(s)].length};
}

Role SequenceLayout::role_at(int i) const {
    int pos = 0;
    for (const Segment& s : segments) {
        pos += s.length;
        if (i < pos) return s.role;
    }
    throw std::out_of_range("layout: position " + std::to_string(i) + " beyond sequence end");
}

void validate_layout(const SequenceLayout& layout, int max_seq_len) {
    if (layout.segments.empty()) throw std::invalid_argument("layout: no segments");
    int noisy = 0;
    for (const Segment& s : layout.segments) {
        if (s.length <= 0) throw std::invalid_argument("layout: segment length must be positive");
        if (s.role == Role::image_noisy) ++noisy;
    }
    const bool needs_noisy =
        layout.task == Task::generation || layout.task == Task::editing || layout.task == Task::reconstruction;
    if (needs_noisy && noisy != 1) {
        throw std::invalid_argument(std::string("layout: task ") + task_name(layout.task) +
                                    " requires exactly one noisy image segment, found " + std::to_string(noisy));
    }
    if (!needs_noisy && noisy != 0) {
        throw std::invalid_argument(std::string("layout: task ") + task_name(layout.task) +
                                    " must not contain a noisy image segment");
    }
    const int total = layout.total_length();
    if (total > max_seq_len) {
        throw std::invalid_argument("layout: total length " + std::to_string(total) + " exceeds limit " +
                                    std::to_string(max_seq_len));
    }
}

Tensor<uint8_t> build_attention_mask(const SequenceLayout& layout) {
    const int n = layout.total_length();
    Tensor<uint8_t> allow({n, n});
    // per-position segment index and whether the position is an image token
    std::vector<int> seg_of(static_cast<size_t>(n));
    std::vector<uint8_t> is_image(static_cast<size_t>(n));
    int pos = 0;
    for (size_t s = 0; s < layout.segments.size(); ++s) {
        const Segment& seg = layout.segments[s];
        const bool img = seg.role == Role::image_condition || seg.role == Role::image_noisy;
        for (int i = 0; i < seg.length; ++i, ++pos) {
            seg_of[static_cast<size_t>(pos)] = static_cast<int>(s);
            is_image[static_cast<size_t>(pos)] = img ? 1 : 0;
        }
    }
    for (int q = 0; q < n; ++q) {
        for (int k = 0; k < n; ++k) {
            bool ok;
            if (seg_of[static_cast<size_t>(k)] < seg_of[static_cast<size_t>(q)]) {
                ok = true;  // earlier segment: always visible
            } else if (seg_of[static_cast<size_t>(k)] > seg_of[static_cast<size_t>(q)]) {
                ok = false;  // later segment: never visible
            } else {
                // same segment: bidirectional for image tokens, causal for text
                ok = is_image[static_cast<size_t>(q)] ? true : (k <= q);
            }
            allow.data[static_cast<size_t>(q) * n + k] = ok ? 1 : 0;
        }
    }
    return allow;
}

}  // namespace pxf
