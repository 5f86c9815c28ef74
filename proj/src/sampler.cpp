#include "sampler.hpp"

#include <algorithm>
#include <stdexcept>

#include "grammar.hpp"
#include "patches.hpp"

namespace pxf {

void SampleRunConfig::validate() const {
    if (euler_steps < 1) throw std::invalid_argument("sampler: euler_steps must be at least 1");
    if (guidance < 0.0) throw std::invalid_argument("sampler: guidance must be non-negative");
}

Tensor<float> integrate_flow(const VelocityFn& field, const std::vector<int>& shape, const TimeGrid& grid,
                             RandomStream& noise, bool clip_output, double eps_t) {
    if (grid.segments() < 1) throw std::invalid_argument("sampler: time grid needs at least one interval");
    Tensor<float> x(shape);
    for (auto& v : x.data) v = static_cast<float>(noise.normal());
    for (int i = 0; i < grid.segments(); ++i) {
        const double t = grid.steps[static_cast<size_t>(i)];
        const double t_next = grid.steps[static_cast<size_t>(i) + 1];
        const double t_query = std::min(t, 1.0 - eps_t);
        const Tensor<float> v = field(x, t_query);
        x = euler_step(x, v, static_cast<float>(t), static_cast<float>(t_next));
    }
    if (clip_output) {
        for (auto& v : x.data) v = std::clamp(v, -1.0f, 1.0f);
    }
    return x;
}

Tensor<float> model_velocity(const ModelConfig& cfg, const NamedTensors<float>& params, const SamplePrefix& prefix,
                             Task task, const Tensor<float>& xt, double t) {
    const PatchGrid grid = cfg.grid();
    EncodeInputs<float> in;
    in.layout.task = task;
    in.layout.segments = prefix.segments;
    in.layout.segments.push_back({Role::image_noisy, grid.token_count()});
    in.text_segments = prefix.text_segments;
    in.image_segments = prefix.image_segments;
    in.image_segments.push_back(patchify(xt, grid));
    in.t = t;

    Tape<float> tape;
    ModelGraphBuilder<float> mb(tape, cfg, params);
    EncodeResult<float> enc = mb.encode(in);
    const int ns = in.layout.noisy_segment();
    auto x_pred = mb.predict_clean_image(enc.hidden, in.layout.span(ns));
    return x_to_velocity(tape.value(x_pred), xt, static_cast<float>(t), static_cast<float>(cfg.eps_t));
}

namespace {

Tensor<float> run_guided(const Checkpoint& ckpt, const SamplePrefix& cond, const SamplePrefix& uncond, Task task,
                         const SampleRunConfig& run) {
    run.validate();
    const ModelConfig& cfg = ckpt.config;
    const TimeGrid grid = uniform_grid(run.euler_steps, cfg.eps_t);
    RandomStream noise(run.seed);
    VelocityFn field = [&](const Tensor<float>& xt, double t) {
        Tensor<float> v_c = model_velocity(cfg, ckpt.params, cond, task, xt, t);
        if (run.guidance == 1.0) return v_c;
        const Tensor<float> v_u = model_velocity(cfg, ckpt.params, uncond, task, xt, t);
        Tensor<float> v(v_c.shape);
        for (int64_t i = 0; i < v.numel(); ++i) {
            v.data[i] = v_u.data[i] + static_cast<float>(run.guidance) * (v_c.data[i] - v_u.data[i]);
        }
        return v;
    };
    return integrate_flow(field, cfg.grid().image_shape(), grid, noise, true, cfg.eps_t);
}

void require_image_shape(const ModelConfig& cfg, const Tensor<float>& image, const char* op) {
    const std::vector<int> want = cfg.grid().image_shape();
    if (image.shape != want) {
        throw std::invalid_argument(std::string(op) + ": image shape " + shape_str(image.shape) +
                                    " does not match the configured " + shape_str(want));
    }
}

}  // namespace

Tensor<float> generate(const Checkpoint& ckpt, const std::string& prompt, const SampleRunConfig& run) {
    const Vocab& v = vocab();
    SamplePrefix cond;
    cond.segments = {{Role::text_condition, 0}};
    cond.text_segments = {prompt.empty() ? std::vector<int>{v.bos(), v.eos()} : tokenize(prompt)};
    cond.segments[0].length = static_cast<int>(cond.text_segments[0].size());
    SamplePrefix uncond;
    uncond.segments = {{Role::text_condition, 2}};
    uncond.text_segments = {{v.bos(), v.eos()}};
    return run_guided(ckpt, cond, uncond, Task::generation, run);
}

Tensor<float> edit(const Checkpoint& ckpt, const Tensor<float>& source, const std::string& instruction,
                   const SampleRunConfig& run) {
    require_image_shape(ckpt.config, source, "edit");
    const PatchGrid grid = ckpt.config.grid();
    const Vocab& v = vocab();
    SamplePrefix cond;
    cond.image_segments = {patchify(source, grid)};
    cond.text_segments = {tokenize(instruction)};
    cond.segments = {{Role::image_condition, grid.token_count()},
                     {Role::text_condition, static_cast<int>(cond.text_segments[0].size())}};
    SamplePrefix uncond = cond;
    uncond.text_segments[0] = {v.bos(), v.eos()};
    uncond.segments[1].length = 2;
    return run_guided(ckpt, cond, uncond, Task::editing, run);
}

Tensor<float> reconstruct(const Checkpoint& ckpt, const Tensor<float>& source, const SampleRunConfig& run) {
    require_image_shape(ckpt.config, source, "reconstruct");
    const PatchGrid grid = ckpt.config.grid();
    SamplePrefix cond;
    cond.image_segments = {patchify(source, grid)};
    cond.segments = {{Role::image_condition, grid.token_count()}};
    return run_guided(ckpt, cond, cond, Task::reconstruction, run);
}

std::string answer(const Checkpoint& ckpt, const Tensor<float>& image, const std::string& question,
                   int max_tokens) {
    require_image_shape(ckpt.config, image, "answer");
    const PatchGrid grid = ckpt.config.grid();
    const Vocab& v = vocab();
    EncodeInputs<float> prefix;
    prefix.layout.task = Task::understanding;
    std::vector<int> q{v.bos()};
    for (int id : tokenize_words(question)) q.push_back(id);
    prefix.layout.segments = {{Role::image_condition, grid.token_count()},
                              {Role::text_condition, static_cast<int>(q.size())},
                              {Role::text_target, 1}};
    prefix.image_segments = {patchify(image, grid)};
    prefix.text_segments = {std::move(q), {v.sep()}};
    const std::vector<int> generated =
        decode_text(ckpt.config, ckpt.params, prefix, max_tokens, v.eos(), DecodeMode::greedy);
    return detokenize(generated);
}

}  // namespace pxf
