#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "analysis.hpp"
#include "grammar.hpp"
#include "quality.hpp"
#include "sampler.hpp"
#include "scene.hpp"

using namespace pxf;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.ffn_mult = 2;
    cfg.vocab_size = vocab().size();
    cfg.max_seq_len = 64;
    cfg.image_size = 16;
    cfg.channels = 3;
    cfg.patch_size = 4;
    return cfg;
}

}  // namespace

TEST_CASE("euler integration of the oracle field recovers the target on any grid") {
    // an oracle that always predicts the clean image gives the velocity
    // (x1 - x) / (1 - t), whose Euler trajectory is the exact straight line
    RandomStream scene_stream(1);
    const Scene scene = gen_scene(scene_stream, 2);
    const Tensor<float> x1 = rasterize<float>(scene, 16, 16);
    const VelocityFn oracle = [&](const Tensor<float>& x, double t) {
        Tensor<float> v(x.shape);
        for (size_t i = 0; i < v.data.size(); ++i)
            v.data[i] = static_cast<float>((x1.data[i] - x.data[i]) / (1.0 - t));
        return v;
    };
    for (const int k : {1, 2, 7, 50, 128}) {
        RandomStream noise(99);
        const Tensor<float> out = integrate_flow(oracle, x1.shape, uniform_grid(k), noise);
        double max_err = 0.0;
        for (size_t i = 0; i < out.data.size(); ++i)
            max_err = std::max(max_err, std::abs(static_cast<double>(out.data[i]) - x1.data[i]));
        INFO("k = " << k);
        CHECK(max_err <= 1e-6);
    }
}

TEST_CASE("a constant velocity field integrates to noise plus the displacement") {
    const Tensor<float> v_const = Tensor<float>::full({4, 4, 3}, 0.25f);
    const VelocityFn field = [&](const Tensor<float>&, double) { return v_const; };
    RandomStream noise_a(7), noise_b(7);
    const Tensor<float> out = integrate_flow(field, {4, 4, 3}, uniform_grid(10), noise_a, false);
    Tensor<float> x0({4, 4, 3});
    for (auto& v : x0.data) v = static_cast<float>(noise_b.normal());
    for (size_t i = 0; i < out.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(x0.data[i] + 0.25f).epsilon(1e-6));
}

TEST_CASE("integration output is clipped to the pixel range only when asked") {
    const VelocityFn big = [](const Tensor<float>& x, double) { return Tensor<float>::full(x.shape, 10.0f); };
    RandomStream n1(3), n2(3);
    const Tensor<float> clipped = integrate_flow(big, {2, 2, 3}, uniform_grid(4), n1, true);
    for (float v : clipped.data) CHECK(v <= 1.0f);
    const Tensor<float> raw = integrate_flow(big, {2, 2, 3}, uniform_grid(4), n2, false);
    bool any_above = false;
    for (float v : raw.data) any_above |= v > 1.0f;
    CHECK(any_above);
}

TEST_CASE("generation, editing, and reconstruction run the model deterministically") {
    const ModelConfig cfg = tiny_config();
    const Checkpoint ckpt = fresh_checkpoint(cfg, 21);
    SampleRunConfig run;
    run.euler_steps = 4;
    run.seed = 5;

    const Tensor<float> a = generate(ckpt, "a large red circle in the top left on black", run);
    const Tensor<float> b = generate(ckpt, "a large red circle in the top left on black", run);
    CHECK(a.shape == std::vector<int>{16, 16, 3});
    CHECK(a.data == b.data);
    for (float v : a.data) {
        CHECK(v >= -1.0f);
        CHECK(v <= 1.0f);
    }

    SampleRunConfig run2 = run;
    run2.seed = 6;
    const Tensor<float> c = generate(ckpt, "a large red circle in the top left on black", run2);
    CHECK(a.data != c.data);  // different noise, different sample

    RandomStream sstream(2);
    const Scene scene = gen_scene(sstream, 1);
    const Tensor<float> src = rasterize<float>(scene, 16, 16);
    const std::string instruction = edit_pair(scene, sstream).instruction;
    const Tensor<float> e1 = edit(ckpt, src, instruction, run);
    const Tensor<float> e2 = edit(ckpt, src, instruction, run);
    CHECK(e1.data == e2.data);

    const Tensor<float> r1 = reconstruct(ckpt, src, run);
    CHECK(r1.shape == src.shape);

    // guidance away from 1 changes the sample but stays deterministic
    SampleRunConfig guided = run;
    guided.guidance = 2.0;
    const Tensor<float> g1 = generate(ckpt, "a large red circle in the top left on black", guided);
    const Tensor<float> g2 = generate(ckpt, "a large red circle in the top left on black", guided);
    CHECK(g1.data == g2.data);
    CHECK(g1.data != a.data);

    SampleRunConfig bad = run;
    bad.euler_steps = 0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("answering produces vocabulary words and respects the token budget") {
    const ModelConfig cfg = tiny_config();
    const Checkpoint ckpt = fresh_checkpoint(cfg, 22);
    RandomStream sstream(3);
    const Scene scene = gen_scene(sstream, 1);
    const Tensor<float> img = rasterize<float>(scene, 16, 16);
    const std::string a1 = answer(ckpt, img, "what color is the circle", 4);
    const std::string a2 = answer(ckpt, img, "what color is the circle", 4);
    CHECK(a1 == a2);
    for (const std::string& w : split_words(a1)) CHECK(vocab().contains(w));
    CHECK(split_words(a1).size() <= 4);
}

TEST_CASE("psnr meets its closed-form anchors") {
    RandomStream stream(4);
    Tensor<float> x({6, 6, 3});
    for (auto& v : x.data) v = static_cast<float>(stream.uniform() * 1.4 - 1.0);  // within [-1, 0.4]
    CHECK(psnr(x, x) == 99.0);

    // +0.1 everywhere on the [0,1] scale is +0.2 in the signed range: 20 dB
    Tensor<float> y = x;
    for (auto& v : y.data) v += 0.2f;
    CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-5));
    CHECK(psnr(y, x) == doctest::Approx(psnr(x, y)).epsilon(1e-12));
}

TEST_CASE("ssim is 1 on identical images, below 1 on corrupted ones, symmetric") {
    RandomStream stream(5);
    const Scene scene = gen_scene(stream, 2);
    const Tensor<float> x = rasterize<float>(scene, 16, 16);
    CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-9));

    Tensor<float> noisy = x;
    RandomStream nstream(6);
    for (auto& v : noisy.data)
        v = std::clamp(v + static_cast<float>(nstream.normal() * 0.3), -1.0f, 1.0f);
    const double s = ssim(x, noisy);
    CHECK(s < 0.95);
    CHECK(s >= -1.0);
    CHECK(ssim(noisy, x) == doctest::Approx(s).epsilon(1e-12));
    CHECK(psnr(x, noisy) < 99.0);
}

TEST_CASE("the image classifier reads back every one-object rasterization exactly") {
    for (int sh = 0; sh < kShapeCount; ++sh)
        for (int co = 0; co < kColorCount; ++co)
            for (int sz = 0; sz < kSizeCount; ++sz)
                for (int cell = 0; cell < kCellCount; ++cell)
                    for (int bg = 0; bg < kBackgroundCount; ++bg) {
                        Scene s;
                        s.background = static_cast<BackgroundColor>(bg);
                        s.objects = {SceneObject{static_cast<ShapeKind>(sh), static_cast<ColorName>(co), cell,
                                                 static_cast<SizeTag>(sz)}};
                        const Scene seen = classify_image(rasterize<float>(s, 16, 16));
                        CHECK(seen == s);
                    }
}

TEST_CASE("the compositional check accepts oracle renders and localizes failures") {
    RandomStream stream(8);
    for (int i = 0; i < 100; ++i) {
        const Scene s = gen_scene(stream, 1 + static_cast<int>(stream.below(2)));
        const CheckResult ok = compositional_check(rasterize<float>(s, 16, 16), s);
        CHECK(ok.all());
        CHECK(ok.passed() == 4);
    }

    // wrong color, right everything else
    Scene truth;
    truth.objects = {SceneObject{ShapeKind::circle, ColorName::red, 0, SizeTag::large}};
    Scene painted = truth;
    painted.objects[0].color = ColorName::blue;
    const CheckResult wrong_color = compositional_check(rasterize<float>(painted, 16, 16), truth);
    CHECK(wrong_color.shape_ok);
    CHECK_FALSE(wrong_color.color_ok);
    CHECK(wrong_color.position_ok);
    CHECK(wrong_color.count_ok);

    // wrong position
    Scene moved = truth;
    moved.objects[0].cell = 3;
    const CheckResult wrong_pos = compositional_check(rasterize<float>(moved, 16, 16), truth);
    CHECK_FALSE(wrong_pos.position_ok);
    CHECK(wrong_pos.shape_ok);
    CHECK(wrong_pos.count_ok);

    // missing second object
    Scene two;
    two.objects = {SceneObject{ShapeKind::circle, ColorName::red, 0, SizeTag::large},
                   SceneObject{ShapeKind::square, ColorName::green, 3, SizeTag::small}};
    Scene one = two;
    one.objects.pop_back();
    const CheckResult missing = compositional_check(rasterize<float>(one, 16, 16), two);
    CHECK_FALSE(missing.count_ok);
    CHECK_FALSE(missing.shape_ok);
}

TEST_CASE("attention maps on a uniform-attention model are flat after renormalization") {
    // zeroing q/k projections makes scores identically zero, so every row of
    // the probability matrix is uniform over its allowed keys; renormalizing
    // over image keys must then give exactly 1/n_patches everywhere
    ModelConfig cfg = tiny_config();
    Checkpoint ckpt = fresh_checkpoint(cfg, 30);
    for (size_t i = 0; i < ckpt.params.size(); ++i) {
        const std::string& name = ckpt.params.names[i];
        if (name.find("attn_wq") != std::string::npos || name.find("attn_wk") != std::string::npos ||
            name.find("attn_bq") != std::string::npos || name.find("attn_bk") != std::string::npos)
            for (auto& v : ckpt.params.values[i].data) v = 0.0f;
    }
    RandomStream stream(9);
    const Scene scene = gen_scene(stream, 1);
    const Tensor<float> img = rasterize<float>(scene, 16, 16);
    const std::string prompt = caption(scene);
    const std::string keyword = split_words(prompt)[2];  // the color word
    const std::vector<AttnMap> maps = attention_maps(ckpt, img, prompt, keyword);
    REQUIRE_FALSE(maps.empty());
    const PatchGrid grid = cfg.grid();
    for (const AttnMap& m : maps) {
        CHECK(m.weights.shape == std::vector<int>{grid.rows(), grid.cols()});
        for (float w : m.weights.data)
            CHECK(w == doctest::Approx(1.0 / grid.token_count()).epsilon(1e-5));
    }
    CHECK_THROWS(attention_maps(ckpt, img, prompt, "purple-not-here"));
}
