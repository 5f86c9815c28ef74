#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>
#include <vector>

#include "autodiff.hpp"
#include "grammar.hpp"
#include "masking.hpp"
#include "model.hpp"
#include "rng.hpp"

using namespace pxf;

TEST_CASE("mask selection size, range, and order") {
    RandomStream stream(1);
    for (const int tokens : {4, 16, 17, 64}) {
        for (const double ratio : {0.0, 0.25, 0.5, 1.0}) {
            const MaskPlan plan = select_mask(stream, tokens, ratio);
            CHECK(plan.indices.size() == static_cast<size_t>(std::llround(ratio * tokens)));
            CHECK(plan.ratio == ratio);
            std::set<int> seen;
            int prev = -1;
            for (int i : plan.indices) {
                CHECK(i >= 0);
                CHECK(i < tokens);
                CHECK(i > prev);
                prev = i;
                seen.insert(i);
            }
            CHECK(seen.size() == plan.indices.size());
        }
    }
}

TEST_CASE("mask selection is uniform over patches") {
    RandomStream stream(2);
    const int tokens = 16, trials = 20000;
    std::vector<int> counts(static_cast<size_t>(tokens), 0);
    for (int i = 0; i < trials; ++i) {
        const MaskPlan plan = select_mask(stream, tokens, 0.5);
        for (int idx : plan.indices) counts[static_cast<size_t>(idx)]++;
    }
    for (int c : counts) CHECK(c == doctest::Approx(trials / 2).epsilon(0.04));
}

TEST_CASE("activation threshold is the final fraction of training") {
    CHECK(masking_threshold_step(1000, 0.4) == 600);
    CHECK(masking_threshold_step(10, 0.4) == 6);
    CHECK(masking_threshold_step(5, 0.4) == 3);
    CHECK(masking_threshold_step(100, 0.0) == 100);   // never activates
    CHECK(masking_threshold_step(100, 1.0) == 0);     // always active
}

TEST_CASE("masking is off before the threshold, a fair coin after") {
    const MaskSchedule sched;  // 0.4 / 0.5 / 0.5
    RandomStream stream(3);
    const int total = 1000;
    for (const int step : {0, 100, 599}) CHECK_FALSE(masking_active(step, total, stream, sched));

    int on = 0;
    const int trials = 20000;
    for (int i = 0; i < trials; ++i)
        if (masking_active(700, total, stream, sched)) on++;
    CHECK(on == doctest::Approx(trials / 2).epsilon(0.04));

    MaskSchedule always = sched;
    always.apply_probability = 1.0;
    CHECK(masking_active(600, total, stream, always));  // boundary step is active
    CHECK_FALSE(masking_active(599, total, stream, always));
}

TEST_CASE("masked role follows the task") {
    CHECK(masked_role(Task::generation) == Role::image_noisy);
    CHECK(masked_role(Task::understanding) == Role::image_condition);
    CHECK_FALSE(masked_role(Task::text_only).has_value());
    CHECK_FALSE(masked_role(Task::editing).has_value());
    CHECK_FALSE(masked_role(Task::reconstruction).has_value());
}

TEST_CASE("loss positions ignore the mask plan") {
    MaskPlan plan;
    plan.indices = {0, 3, 5};
    plan.ratio = 0.5;
    const LossPositionSpec gen = masked_targets(Task::generation, plan);
    CHECK(gen.flow_over_all_patches);
    CHECK_FALSE(gen.ce_over_text_targets);
    const LossPositionSpec und = masked_targets(Task::understanding, plan);
    CHECK(und.ce_over_text_targets);
    CHECK_FALSE(und.flow_over_all_patches);
    const LossPositionSpec und_empty = masked_targets(Task::understanding, MaskPlan{});
    CHECK(und_empty.ce_over_text_targets);
}

TEST_CASE("masked patches swap to the mask embedding and gradients reach it") {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.ffn_mult = 2;
    cfg.vocab_size = vocab().size();
    cfg.max_seq_len = 16;
    cfg.image_size = 8;
    cfg.channels = 3;
    cfg.patch_size = 4;
    RandomStream stream(4);
    const NamedTensors<float> params = init_params<float>(cfg, stream);
    const PatchGrid grid = cfg.grid();

    Tensor<float> tokens(grid.token_shape());
    for (auto& v : tokens.data) v = static_cast<float>(stream.uniform() * 2.0 - 1.0);

    MaskPlan plan;
    plan.indices = {1, 2};
    plan.ratio = 0.5;

    EncodeInputs<float> masked;
    masked.layout.task = Task::understanding;
    masked.layout.segments = {{Role::image_condition, grid.token_count()}, {Role::text_target, 3}};
    masked.image_segments = {tokens};
    masked.text_segments = {{1, 5, 2}};
    masked.mask = &plan;
    masked.mask_role = Role::image_condition;

    // changing pixel content under a masked patch must not change anything
    EncodeInputs<float> masked_other = masked;
    Tensor<float> tokens2 = tokens;
    for (int c = 0; c < grid.token_dim(); ++c) tokens2.data[static_cast<size_t>(grid.token_dim() + c)] = 0.9f;
    masked_other.image_segments = {tokens2};

    Tape<float> ta, tb;
    ModelGraphBuilder<float> ma(ta, cfg, params), mb(tb, cfg, params);
    CHECK(ta.value(ma.encode(masked).hidden).data == tb.value(mb.encode(masked_other).hidden).data);

    // but changing an unmasked patch does
    EncodeInputs<float> unmasked_change = masked;
    Tensor<float> tokens3 = tokens;
    tokens3.data[0] += 0.7f;
    unmasked_change.image_segments = {tokens3};
    Tape<float> tc;
    ModelGraphBuilder<float> mc(tc, cfg, params);
    CHECK(ta.value(ma.encode(masked).hidden).data != tc.value(mc.encode(unmasked_change).hidden).data);

    // gradient flows into mask_embed exactly when the plan is applied
    for (const bool use_mask : {true, false}) {
        auto [loss, grads] = forward_backward<float>(
            [&](Tape<float>& t, const std::vector<Tape<float>::Var>& vars) {
                ModelGraphBuilder<float> m(t, cfg, params, vars);
                EncodeInputs<float> in = masked;
                if (!use_mask) {
                    in.mask = nullptr;
                    in.mask_role.reset();
                }
                const EncodeResult<float> enc = m.encode(in);
                return m.ce_over_segment(enc.hidden, in.layout.span(1), in.text_segments[0]);
            },
            params);
        (void)loss;
        double norm = 0.0;
        const Tensor<float>& g = grads.values[static_cast<size_t>(grads.index_of("mask_embed"))];
        for (float v : g.data) norm += static_cast<double>(v) * v;
        if (use_mask) CHECK(norm > 0.0);
        else CHECK(norm == 0.0);
    }
}
