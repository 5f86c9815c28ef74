#include "dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "image_io.hpp"
#include "json.hpp"

namespace pxf {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// mixture config
// ---------------------------------------------------------------------------

void MixtureConfig::validate() const {
    if (gen_ratio < 0 || und_ratio < 0 || gen_ratio + und_ratio != 10) {
        throw std::invalid_argument("mixture: generation and understanding ratios must be non-negative and sum to 10");
    }
    if (text_only_fraction < 0.0 || text_only_fraction >= 1.0) {
        throw std::invalid_argument("mixture: text_only_fraction must lie in [0,1)");
    }
}

std::string MixtureConfig::name() const { return std::to_string(gen_ratio) + "g" + std::to_string(und_ratio) + "u"; }

MixtureConfig MixtureConfig::parse(const std::string& s) {
    const size_t g = s.find('g');
    if (g == std::string::npos || s.empty() || s.back() != 'u') {
        throw std::invalid_argument("mixture: expected a ratio like '7g3u', got '" + s + "'");
    }
    MixtureConfig mix;
    try {
        mix.gen_ratio = std::stoi(s.substr(0, g));
        mix.und_ratio = std::stoi(s.substr(g + 1, s.size() - g - 2));
    } catch (const std::exception&) {
        throw std::invalid_argument("mixture: expected a ratio like '7g3u', got '" + s + "'");
    }
    MixtureConfig check = mix;
    check.text_only_fraction = 0.0;
    check.validate();
    return mix;
}

const char* stage_name(TrainStage s) {
    switch (s) {
        case TrainStage::pretrain: return "pretrain";
        case TrainStage::sft: return "sft";
        case TrainStage::recon_finetune: return "recon_finetune";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// holdouts and scene sources
// ---------------------------------------------------------------------------

bool Holdout::matches(const Scene& scene) const {
    for (const SceneObject& o : scene.objects) {
        if (o.color == color && o.shape == shape && o.cell == cell) return true;
    }
    return false;
}

std::vector<Holdout> draw_holdouts(RandomStream& stream, int n) {
    const int space = kColorCount * kShapeCount * kCellCount;
    if (n < 0 || n > space) throw std::invalid_argument("holdouts: count out of range");
    std::vector<Holdout> out;
    for (int idx : stream.sample_without_replacement(space, n)) {
        out.push_back({static_cast<ColorName>(idx / (kShapeCount * kCellCount)),
                       static_cast<ShapeKind>((idx / kCellCount) % kShapeCount), idx % kCellCount});
    }
    return out;
}

bool SceneStore::excluded(const Scene& scene) const {
    for (const Holdout& h : holdouts_) {
        if (h.matches(scene)) return true;
    }
    return false;
}

SceneStore SceneStore::unbounded(double two_object_fraction, std::vector<Holdout> holdouts) {
    SceneStore s;
    s.two_object_fraction_ = two_object_fraction;
    s.holdouts_ = std::move(holdouts);
    return s;
}

SceneStore SceneStore::random_corpus(int size, uint64_t seed, double two_object_fraction,
                                     std::vector<Holdout> holdouts) {
    if (size < 1) throw std::invalid_argument("corpus: size must be positive");
    SceneStore s = unbounded(two_object_fraction, std::move(holdouts));
    s.bounded_ = true;
    RandomStream stream(seed);
    int attempts = 0;
    while (static_cast<int>(s.corpus_.size()) < size) {
        if (++attempts > size * 1000) throw std::runtime_error("corpus: scene space too small for requested size");
        const Scene scene = s.draw_procedural(stream);
        bool dup = false;
        for (const Scene& prev : s.corpus_) dup = dup || prev == scene;
        if (!dup) s.corpus_.push_back(scene);
    }
    return s;
}

SceneStore SceneStore::exhaustive_one_object(std::vector<Holdout> holdouts) {
    SceneStore s;
    s.bounded_ = true;
    s.holdouts_ = std::move(holdouts);
    for (int sh = 0; sh < kShapeCount; ++sh) {
        for (int co = 0; co < kColorCount; ++co) {
            for (int ce = 0; ce < kCellCount; ++ce) {
                for (int sz = 0; sz < kSizeCount; ++sz) {
                    for (int bg = 0; bg < kBackgroundCount; ++bg) {
                        Scene scene;
                        scene.objects.push_back({static_cast<ShapeKind>(sh), static_cast<ColorName>(co), ce,
                                                 static_cast<SizeTag>(sz)});
                        scene.background = static_cast<BackgroundColor>(bg);
                        if (!s.excluded(scene)) s.corpus_.push_back(scene);
                    }
                }
            }
        }
    }
    return s;
}

Scene SceneStore::draw_procedural(RandomStream& stream) const {
    for (int tries = 0; tries < 10000; ++tries) {
        const int n = 1 + (stream.uniform() < two_object_fraction_ ? 1 : 0);
        const Scene scene = gen_scene(stream, n);
        if (!excluded(scene)) return scene;
    }
    throw std::runtime_error("scene draw: rejection sampling failed (holdouts too restrictive)");
}

Scene SceneStore::draw(RandomStream& stream) const {
    if (!bounded_) return draw_procedural(stream);
    return corpus_[static_cast<size_t>(stream.below(corpus_.size()))];
}

// ---------------------------------------------------------------------------
// records
// ---------------------------------------------------------------------------

SampleRecord make_generation_record(const Scene& scene, int height, int width) {
    SampleRecord r;
    r.task = Task::generation;
    r.scene = scene;
    r.text = caption(scene);
    r.image = rasterize<float>(scene, height, width);
    return r;
}

SampleRecord make_understanding_record(const Scene& scene, int height, int width) {
    SampleRecord r = make_generation_record(scene, height, width);
    r.task = Task::understanding;
    return r;
}

SampleRecord make_text_only_record(const Scene& scene) {
    SampleRecord r;
    r.task = Task::text_only;
    r.scene = scene;
    r.text = caption(scene);
    return r;
}

SampleRecord make_qa_record(const Scene& scene, RandomStream& stream, int height, int width) {
    SampleRecord r;
    r.task = Task::understanding;
    r.scene = scene;
    const QaPair qa = qa_pair(scene, stream);
    r.question = qa.question;
    r.answer = qa.answer;
    r.image = rasterize<float>(scene, height, width);
    return r;
}

SampleRecord make_edit_record(const Scene& scene, RandomStream& stream, int height, int width) {
    SampleRecord r;
    r.task = Task::editing;
    const EditSpec spec = edit_pair(scene, stream);
    r.scene = spec.source;
    r.target_scene = spec.target;
    r.instruction = spec.instruction;
    r.image = rasterize<float>(spec.source, height, width);
    r.target_image = rasterize<float>(spec.target, height, width);
    return r;
}

SampleRecord make_reconstruction_record(const Scene& scene, int height, int width) {
    SampleRecord r;
    r.task = Task::reconstruction;
    r.scene = scene;
    r.image = rasterize<float>(scene, height, width);
    r.target_image = r.image;
    return r;
}

std::vector<SampleRecord> sample_batch(const SceneStore& store, const MixtureConfig& mix, TrainStage stage,
                                       int batch_size, RandomStream& stream, int height, int width) {
    mix.validate();
    if (batch_size < 1) throw std::invalid_argument("sample_batch: batch size must be positive");
    std::vector<SampleRecord> batch;
    batch.reserve(static_cast<size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        if (stage == TrainStage::recon_finetune) {
            batch.push_back(make_reconstruction_record(store.draw(stream), height, width));
            continue;
        }
        if (stream.uniform() < mix.text_only_fraction) {
            batch.push_back(make_text_only_record(store.draw(stream)));
            continue;
        }
        const bool generation_slot = stream.below(10) < static_cast<uint64_t>(mix.gen_ratio);
        const Scene scene = store.draw(stream);
        if (stage == TrainStage::pretrain) {
            batch.push_back(generation_slot ? make_generation_record(scene, height, width)
                                            : make_understanding_record(scene, height, width));
        } else {
            if (generation_slot) {
                batch.push_back(stream.below(2) == 0 ? make_generation_record(scene, height, width)
                                                     : make_edit_record(scene, stream, height, width));
            } else {
                batch.push_back(make_qa_record(scene, stream, height, width));
            }
        }
    }
    return batch;
}

// ---------------------------------------------------------------------------
// manifest export / import
// ---------------------------------------------------------------------------

namespace {

json scene_to_json(const Scene& scene) {
    json objs = json::array();
    for (const SceneObject& o : scene.objects) {
        objs.push_back({{"shape", shape_word(o.shape)},
                        {"color", color_word(o.color)},
                        {"cell", o.cell},
                        {"size", size_word(o.size)}});
    }
    return {{"background", background_word(scene.background)}, {"objects", std::move(objs)}};
}

Scene scene_from_json(const json& j) {
    Scene scene;
    scene.background = parse_background(j.at("background").get<std::string>());
    for (const json& jo : j.at("objects")) {
        scene.objects.push_back({parse_shape(jo.at("shape").get<std::string>()),
                                 parse_color(jo.at("color").get<std::string>()), jo.at("cell").get<int>(),
                                 parse_size(jo.at("size").get<std::string>())});
    }
    validate_scene(scene);
    return scene;
}

// in-memory serialization matching write_ppm byte-for-byte
std::string ppm_bytes(const Tensor<float>& image) {
    std::ostringstream out;
    out << "P6\n" << image.shape[1] << " " << image.shape[0] << "\n255\n";
    for (int64_t i = 0; i < image.numel(); ++i) {
        out.put(static_cast<char>(signed_to_byte(static_cast<double>(image.data[static_cast<size_t>(i)]))));
    }
    return out.str();
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string record_image_name(size_t index, bool target) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "rec%05zu%s.ppm", index, target ? "_target" : "");
    return buf;
}

}  // namespace

std::string export_dataset(const std::string& dir, const std::vector<SampleRecord>& records) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string manifest_path = (fs::path(dir) / "manifest.jsonl").string();
    std::ofstream manifest(manifest_path, std::ios::binary);
    if (!manifest) throw std::runtime_error(manifest_path + ": cannot open for writing");
    for (size_t i = 0; i < records.size(); ++i) {
        const SampleRecord& r = records[i];
        json j;
        j["task"] = task_name(r.task);
        j["scene"] = scene_to_json(r.scene);
        j["target_scene"] = r.target_scene ? scene_to_json(*r.target_scene) : json(nullptr);
        j["text"] = r.text;
        j["question"] = r.question;
        j["answer"] = r.answer;
        j["instruction"] = r.instruction;
        if (r.image.numel() > 0) {
            j["height"] = r.image.shape[0];
            j["width"] = r.image.shape[1];
            const std::string name = record_image_name(i, false);
            write_ppm((fs::path(dir) / name).string(), r.image);
            j["image"] = name;
        } else {
            j["image"] = nullptr;
        }
        if (r.target_image.numel() > 0) {
            const std::string name = record_image_name(i, true);
            write_ppm((fs::path(dir) / name).string(), r.target_image);
            j["target_image"] = name;
        } else {
            j["target_image"] = nullptr;
        }
        manifest << j.dump() << "\n";
    }
    if (!manifest) throw std::runtime_error(manifest_path + ": write failed");
    return manifest_path;
}

std::vector<SampleRecord> import_dataset(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(manifest_path).parent_path();
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw std::runtime_error(manifest_path + ": cannot open");
    std::vector<SampleRecord> records;
    std::string line;
    size_t line_no = 0;
    auto load_image = [&](const json& j, const char* key, const Scene& scene) -> Tensor<float> {
        if (j.at(key).is_null()) return {};
        const int h = j.at("height").get<int>(), w = j.at("width").get<int>();
        Tensor<float> img = rasterize<float>(scene, h, w);
        const std::string path = (dir / j.at(key).get<std::string>()).string();
        if (read_file_bytes(path) != ppm_bytes(img)) {
            throw std::runtime_error(path + ": image file does not match its scene descriptor");
        }
        return img;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(manifest_path + ":" + std::to_string(line_no) + ": bad JSON: " + e.what());
        }
        SampleRecord r;
        r.task = parse_task(j.at("task").get<std::string>());
        r.scene = scene_from_json(j.at("scene"));
        if (!j.at("target_scene").is_null()) r.target_scene = scene_from_json(j.at("target_scene"));
        r.text = j.at("text").get<std::string>();
        r.question = j.at("question").get<std::string>();
        r.answer = j.at("answer").get<std::string>();
        r.instruction = j.at("instruction").get<std::string>();
        r.image = load_image(j, "image", r.scene);
        r.target_image = load_image(j, "target_image", r.target_scene ? *r.target_scene : r.scene);
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace pxf
