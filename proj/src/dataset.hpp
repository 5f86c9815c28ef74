#pragma once

// Data pipeline: scene sources (procedural stream, fixed random corpus, or
// the exhaustive one-object space), the generation/understanding/text-only
// mixture sampler, per-task training records, and a JSON-Lines + PPM
// manifest that round-trips exactly.

#include <optional>
#include <string>
#include <vector>

#include "grammar.hpp"
#include "layout.hpp"
#include "rng.hpp"
#include "scene.hpp"
#include "tensor.hpp"

namespace pxf {

// Generation:understanding ratio in x:y-out-of-10 notation ("7g3u"), plus
// the fraction of slots that carry no image at all.
struct MixtureConfig {
    int gen_ratio = 7;
    int und_ratio = 3;
    double text_only_fraction = 0.2;

    void validate() const;
    std::string name() const;                       // "7g3u"
    static MixtureConfig parse(const std::string&);  // from "7g3u"
};

enum class TrainStage { pretrain, sft, recon_finetune };
const char* stage_name(TrainStage s);

// A held-out (color, shape, cell) attribute combination; scenes containing a
// matching object are excluded from training draws.
struct Holdout {
    ColorName color;
    ShapeKind shape;
    int cell = 0;

    bool matches(const Scene& scene) const;
    bool operator==(const Holdout&) const = default;
};

// Deterministic draw of n distinct combinations.
std::vector<Holdout> draw_holdouts(RandomStream& stream, int n);

// Where scenes come from: a fixed corpus (memorization / compositional runs)
// or the unbounded procedural space. Holdouts are excluded either way.
class SceneStore {
public:
    static SceneStore unbounded(double two_object_fraction, std::vector<Holdout> holdouts = {});
    static SceneStore random_corpus(int size, uint64_t seed, double two_object_fraction,
                                    std::vector<Holdout> holdouts = {});
    static SceneStore exhaustive_one_object(std::vector<Holdout> holdouts = {});

    Scene draw(RandomStream& stream) const;
    const std::vector<Scene>& corpus() const { return corpus_; }  // empty when unbounded
    const std::vector<Holdout>& holdouts() const { return holdouts_; }
    bool excluded(const Scene& scene) const;

private:
    Scene draw_procedural(RandomStream& stream) const;

    std::vector<Scene> corpus_;
    std::vector<Holdout> holdouts_;
    double two_object_fraction_ = 0.5;
    bool bounded_ = false;
};

struct SampleRecord {
    Task task = Task::text_only;
    Scene scene;                        // source scene (all tasks except pure text keep images consistent with it)
    std::optional<Scene> target_scene;  // editing only
    std::string text;                   // caption / text-only sentence
    std::string question, answer;       // understanding (QA form)
    std::string instruction;            // editing
    Tensor<float> image;                // condition / clean image
    Tensor<float> target_image;         // editing target; reconstruction copy
};

// Draws batch_size records. Pretraining mixes caption->image generation,
// image->caption understanding, and text-only sentences; SFT replaces them
// with generation/editing (split evenly), QA, and text-only.
std::vector<SampleRecord> sample_batch(const SceneStore& store, const MixtureConfig& mix, TrainStage stage,
                                       int batch_size, RandomStream& stream, int height, int width);

// Single-record builders used by sample_batch and the evaluation harnesses.
SampleRecord make_generation_record(const Scene& scene, int height, int width);
SampleRecord make_understanding_record(const Scene& scene, int height, int width);
SampleRecord make_text_only_record(const Scene& scene);
SampleRecord make_qa_record(const Scene& scene, RandomStream& stream, int height, int width);
SampleRecord make_edit_record(const Scene& scene, RandomStream& stream, int height, int width);
SampleRecord make_reconstruction_record(const Scene& scene, int height, int width);

// Manifest export/import. Writes manifest.jsonl plus one PPM per image under
// dir; import reads the manifest, re-rasterizes the stored scenes, and
// verifies the image files byte-for-byte.
std::string export_dataset(const std::string& dir, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> import_dataset(const std::string& manifest_path);

}  // namespace pxf
