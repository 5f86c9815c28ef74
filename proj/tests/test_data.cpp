#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <tuple>
#include <vector>

#include "dataset.hpp"
#include "grammar.hpp"
#include "image_io.hpp"
#include "rng.hpp"
#include "scene.hpp"

using namespace pxf;

namespace {

std::vector<Scene> all_one_object_scenes() {
    std::vector<Scene> scenes;
    for (int sh = 0; sh < kShapeCount; ++sh)
        for (int co = 0; co < kColorCount; ++co)
            for (int sz = 0; sz < kSizeCount; ++sz)
                for (int cell = 0; cell < kCellCount; ++cell)
                    for (int bg = 0; bg < kBackgroundCount; ++bg) {
                        Scene s;
                        s.background = static_cast<BackgroundColor>(bg);
                        s.objects = {SceneObject{static_cast<ShapeKind>(sh), static_cast<ColorName>(co), cell,
                                                 static_cast<SizeTag>(sz)}};
                        scenes.push_back(s);
                    }
    return scenes;
}

std::string temp_dir(const char* tag) {
    const std::string dir = std::string("/tmp/pxf_test_") + tag;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("caption round-trips exactly over every one-object scene") {
    for (const Scene& s : all_one_object_scenes()) {
        const std::string text = caption(s);
        CHECK(parse_caption(text) == s);
        // every caption word is in vocabulary
        for (const std::string& w : split_words(text)) CHECK(vocab().contains(w));
    }
}

TEST_CASE("caption round-trips over sampled two-object scenes") {
    RandomStream stream(1);
    for (int i = 0; i < 300; ++i) {
        const Scene s = gen_scene(stream, 2);
        CHECK(parse_caption(caption(s)) == s);
    }
    CHECK_THROWS(parse_caption("a large red circle"));            // truncated
    CHECK_THROWS(parse_caption("the cat sat on the mat"));        // out of language
}

TEST_CASE("tokenize round-trips through detokenize") {
    const std::string text = "a large red circle in the top left on black";
    const std::vector<int> ids = tokenize(text);
    CHECK(ids.front() == vocab().bos());
    CHECK(ids.back() == vocab().eos());
    CHECK(detokenize(ids) == text);
    CHECK(tokenize("") == std::vector<int>{vocab().bos(), vocab().eos()});
}

TEST_CASE("qa oracle answers its own questions everywhere") {
    RandomStream stream(2);
    for (const Scene& s : all_one_object_scenes()) {
        for (int k = 0; k < 3; ++k) {
            const QaPair qa = qa_pair(s, stream);
            CHECK(answer_question(s, qa.question) == qa.answer);
            for (const std::string& w : split_words(qa.question)) CHECK(vocab().contains(w));
            CHECK(vocab().contains(qa.answer));
        }
    }
    for (int i = 0; i < 200; ++i) {
        const Scene s = gen_scene(stream, 2);
        const QaPair qa = qa_pair(s, stream);
        CHECK(answer_question(s, qa.question) == qa.answer);
    }
}

TEST_CASE("edits change only the touched cells and match the oracle") {
    RandomStream stream(3);
    const int h = 16, w = 16;
    for (int i = 0; i < 200; ++i) {
        const Scene s = gen_scene(stream, 1 + static_cast<int>(stream.below(2)));
        const EditSpec spec = edit_pair(s, stream);
        CHECK(spec.source == s);
        CHECK_FALSE(spec.target == s);
        CHECK(apply_instruction(s, spec.instruction) == spec.target);

        const Tensor<float> src = rasterize<float>(spec.source, h, w);
        const Tensor<float> dst = rasterize<float>(spec.target, h, w);
        std::set<int> touched(spec.touched_cells.begin(), spec.touched_cells.end());
        for (int cell = 0; cell < kCellCount; ++cell) {
            if (touched.count(cell)) continue;
            const CellRect r = cell_rect(h, w, cell);
            for (int y = r.y0; y < r.y0 + r.h; ++y)
                for (int x = r.x0; x < r.x0 + r.w; ++x)
                    for (int c = 0; c < 3; ++c) {
                        const size_t idx = (static_cast<size_t>(y) * w + x) * 3 + c;
                        CHECK(src.data[idx] == dst.data[idx]);
                    }
        }
    }
}

TEST_CASE("mixture ratio notation round-trips and validates") {
    const MixtureConfig m = MixtureConfig::parse("7g3u");
    CHECK(m.gen_ratio == 7);
    CHECK(m.und_ratio == 3);
    CHECK(m.name() == "7g3u");
    CHECK(MixtureConfig::parse("10g0u").name() == "10g0u");
    CHECK_THROWS(MixtureConfig::parse("7g4u"));   // does not sum to 10
    CHECK_THROWS(MixtureConfig::parse("7x3u"));
    MixtureConfig bad;
    bad.text_only_fraction = 1.5;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("pretraining mixture frequencies land within two points") {
    const SceneStore store = SceneStore::unbounded(0.5);
    MixtureConfig mix = MixtureConfig::parse("7g3u");
    mix.text_only_fraction = 0.2;
    RandomStream stream(4);
    const int n = 20000;
    int gen = 0, und = 0, text = 0;
    const auto records = sample_batch(store, mix, TrainStage::pretrain, n, stream, 16, 16);
    for (const SampleRecord& r : records) {
        if (r.task == Task::generation) gen++;
        else if (r.task == Task::understanding) und++;
        else if (r.task == Task::text_only) text++;
        else FAIL("unexpected task in pretraining mixture");
    }
    CHECK(std::abs(static_cast<double>(text) / n - 0.2) < 0.02);
    CHECK(std::abs(static_cast<double>(gen) / n - 0.8 * 0.7) < 0.02);
    CHECK(std::abs(static_cast<double>(und) / n - 0.8 * 0.3) < 0.02);
}

TEST_CASE("sft mixture swaps in editing and qa") {
    const SceneStore store = SceneStore::unbounded(0.5);
    MixtureConfig mix = MixtureConfig::parse("5g5u");
    mix.text_only_fraction = 0.1;
    RandomStream stream(5);
    const int n = 20000;
    int gen = 0, ed = 0, qa = 0, text = 0;
    const auto records = sample_batch(store, mix, TrainStage::sft, n, stream, 16, 16);
    for (const SampleRecord& r : records) {
        switch (r.task) {
            case Task::generation: gen++; break;
            case Task::editing: ed++; break;
            case Task::understanding: qa++; CHECK_FALSE(r.question.empty()); break;
            case Task::text_only: text++; break;
            default: FAIL("unexpected task in sft mixture");
        }
    }
    CHECK(std::abs(static_cast<double>(text) / n - 0.1) < 0.02);
    CHECK(std::abs(static_cast<double>(gen) / n - 0.9 * 0.5 * 0.5) < 0.02);
    CHECK(std::abs(static_cast<double>(ed) / n - 0.9 * 0.5 * 0.5) < 0.02);
    CHECK(std::abs(static_cast<double>(qa) / n - 0.9 * 0.5) < 0.02);
}

TEST_CASE("record builders keep text, images, and scenes consistent") {
    RandomStream stream(6);
    const Scene s = gen_scene(stream, 1);
    const SampleRecord gen = make_generation_record(s, 16, 16);
    CHECK(gen.task == Task::generation);
    CHECK(gen.text == caption(s));
    CHECK(gen.image.data == rasterize<float>(s, 16, 16).data);

    const SampleRecord und = make_understanding_record(s, 16, 16);
    CHECK(und.task == Task::understanding);
    CHECK(und.text == caption(s));

    const SampleRecord qa = make_qa_record(s, stream, 16, 16);
    CHECK(qa.task == Task::understanding);
    CHECK(answer_question(s, qa.question) == qa.answer);

    const SampleRecord ed = make_edit_record(s, stream, 16, 16);
    CHECK(ed.task == Task::editing);
    CHECK(ed.target_scene.has_value());
    CHECK(apply_instruction(s, ed.instruction) == *ed.target_scene);
    CHECK(ed.target_image.data == rasterize<float>(*ed.target_scene, 16, 16).data);

    const SampleRecord rec = make_reconstruction_record(s, 16, 16);
    CHECK(rec.task == Task::reconstruction);
    CHECK(rec.image.data == rec.target_image.data);
}

TEST_CASE("holdouts are excluded from every store kind") {
    RandomStream hstream(7);
    const std::vector<Holdout> holdouts = draw_holdouts(hstream, 12);
    CHECK(holdouts.size() == 12);
    std::set<std::tuple<int, int, int>> distinct;
    for (const Holdout& h : holdouts)
        distinct.insert({static_cast<int>(h.color), static_cast<int>(h.shape), h.cell});
    CHECK(distinct.size() == 12);

    for (const SceneStore& store :
         {SceneStore::unbounded(0.5, holdouts), SceneStore::random_corpus(128, 9, 0.5, holdouts),
          SceneStore::exhaustive_one_object(holdouts)}) {
        RandomStream stream(8);
        for (int i = 0; i < 500; ++i) {
            const Scene s = store.draw(stream);
            for (const Holdout& h : holdouts) CHECK_FALSE(h.matches(s));
        }
        for (const Scene& s : store.corpus())
            for (const Holdout& h : holdouts) CHECK_FALSE(h.matches(s));
    }
    // the exhaustive store drops exactly sizes x backgrounds scenes per holdout
    const size_t full = SceneStore::exhaustive_one_object().corpus().size();
    const size_t held = SceneStore::exhaustive_one_object(holdouts).corpus().size();
    CHECK(full == static_cast<size_t>(kShapeCount * kColorCount * kSizeCount * kCellCount * kBackgroundCount));
    CHECK(full - held == static_cast<size_t>(12 * kSizeCount * kBackgroundCount));
}

TEST_CASE("fixed corpora are deterministic and bounded") {
    const SceneStore a = SceneStore::random_corpus(16, 11, 0.5);
    const SceneStore b = SceneStore::random_corpus(16, 11, 0.5);
    CHECK(a.corpus().size() == 16);
    CHECK(a.corpus() == b.corpus());
    RandomStream stream(9);
    for (int i = 0; i < 200; ++i) {
        const Scene s = a.draw(stream);
        bool found = false;
        for (const Scene& c : a.corpus()) found |= c == s;
        CHECK(found);
    }
}

TEST_CASE("ppm files round-trip on rasterizer output") {
    RandomStream stream(10);
    const std::string dir = temp_dir("ppm");
    const auto slurp = [](const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };

    // every object color and black have +-1 components, which sit exactly on
    // the byte lattice, so a black-background render is value-exact
    Scene s = gen_scene(stream, 2);
    s.background = BackgroundColor::black;
    const Tensor<float> img = rasterize<float>(s, 16, 16);
    write_ppm(dir + "/a.ppm", img);
    const Tensor<float> back = read_ppm<float>(dir + "/a.ppm");
    CHECK(back.shape == img.shape);
    CHECK(back.data == img.data);

    write_ppm(dir + "/b.ppm", img);
    CHECK(slurp(dir + "/a.ppm") == slurp(dir + "/b.ppm"));

    // gray (0.0) falls between bytes; the codec must still be a byte-level
    // fixed point after the first quantization
    s.background = BackgroundColor::gray;
    write_ppm(dir + "/c.ppm", rasterize<float>(s, 16, 16));
    write_ppm(dir + "/d.ppm", read_ppm<float>(dir + "/c.ppm"));
    CHECK(slurp(dir + "/c.ppm") == slurp(dir + "/d.ppm"));
}

TEST_CASE("byte conversions invert each other on the byte lattice") {
    for (int b = 0; b < 256; ++b)
        CHECK(signed_to_byte(byte_to_signed(static_cast<uint8_t>(b))) == static_cast<uint8_t>(b));
    CHECK(unit_to_byte(0.0) == 0);
    CHECK(unit_to_byte(1.0) == 255);
    CHECK(signed_to_byte(-1.0) == 0);
    CHECK(signed_to_byte(1.0) == 255);
}

TEST_CASE("dataset manifests round-trip through export and import") {
    RandomStream stream(12);
    const SceneStore store = SceneStore::unbounded(0.5);
    MixtureConfig mix;
    const std::string dir = temp_dir("manifest");
    const auto records = sample_batch(store, mix, TrainStage::sft, 24, stream, 16, 16);
    const std::string manifest = export_dataset(dir, records);
    CHECK(std::filesystem::exists(manifest));

    const auto back = import_dataset(manifest);
    REQUIRE(back.size() == records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        CHECK(back[i].task == records[i].task);
        CHECK(back[i].scene == records[i].scene);
        CHECK(back[i].text == records[i].text);
        CHECK(back[i].question == records[i].question);
        CHECK(back[i].answer == records[i].answer);
        CHECK(back[i].instruction == records[i].instruction);
        CHECK(back[i].target_scene == records[i].target_scene);
        CHECK(back[i].image.data == records[i].image.data);
        CHECK(back[i].target_image.data == records[i].target_image.data);
    }

    // tampering with an image file is detected on import
    bool has_image = false;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".ppm") {
            std::fstream f(entry.path(), std::ios::in | std::ios::out | std::ios::binary);
            f.seekp(-1, std::ios::end);
            char c;
            f.seekg(-1, std::ios::end);
            f.get(c);
            f.seekp(-1, std::ios::end);
            f.put(static_cast<char>(c ^ 0x01));
            has_image = true;
            break;
        }
    }
    REQUIRE(has_image);
    CHECK_THROWS(import_dataset(manifest));
}

TEST_CASE("scene validation and rasterizer determinism") {
    Scene bad;
    bad.objects = {SceneObject{ShapeKind::circle, ColorName::red, 1, SizeTag::large},
                   SceneObject{ShapeKind::square, ColorName::blue, 1, SizeTag::small}};
    CHECK_THROWS(validate_scene(bad));  // same cell twice
    Scene none;
    CHECK_THROWS(validate_scene(none));  // no objects

    RandomStream stream(13);
    const Scene s = gen_scene(stream, 2);
    CHECK(rasterize<float>(s, 16, 16).data == rasterize<float>(s, 16, 16).data);
    const Tensor<float> big = rasterize<float>(s, 32, 32);
    CHECK(big.shape == std::vector<int>{32, 32, 3});
}
