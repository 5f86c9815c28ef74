#pragma once

// Evaluation harnesses over trained checkpoints: VQA accuracy, prompt-to-
// image compositional accuracy, reconstruction quality, the masking ablation
// (shared trunk, two branches), the data-ratio sweep with rank-correlation
// summary, and attention-map extraction.

#include <string>
#include <vector>

#include "dataset.hpp"
#include "quality.hpp"
#include "sampler.hpp"
#include "train.hpp"

namespace pxf {

struct VqaResult {
    int correct = 0;
    int total = 0;

    double accuracy() const { return total > 0 ? static_cast<double>(correct) / total : 0.0; }
};

// Greedy-decodes answers for `per_scene` template questions on each scene
// and scores exact-match against the grammar oracle.
VqaResult vqa_eval(const Checkpoint& ckpt, const std::vector<Scene>& scenes, int per_scene, uint64_t seed);

struct CompositionalResult {
    int n = 0;
    int shape_pass = 0;
    int color_pass = 0;
    int position_pass = 0;
    int count_pass = 0;
    int all_pass = 0;

    // Mean per-attribute pass rate over shape/color/position/count.
    double accuracy() const {
        return n > 0 ? static_cast<double>(shape_pass + color_pass + position_pass + count_pass) / (4.0 * n) : 0.0;
    }
    double strict_accuracy() const { return n > 0 ? static_cast<double>(all_pass) / n : 0.0; }
};

// Generates one image per scene from its caption (a fresh derived seed each)
// and runs the template checker against the scene.
CompositionalResult compositional_eval(const Checkpoint& ckpt, const std::vector<Scene>& scenes,
                                       const SampleRunConfig& run);

struct ReconResult {
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    int n = 0;
};

ReconResult reconstruction_eval(const Checkpoint& ckpt, const std::vector<Scene>& scenes,
                                const SampleRunConfig& run);

// Masking ablation: train a shared trunk to half the budget, branch into a
// with-masking and a without-masking continuation to the full budget, then
// evaluate both on VQA and compositional accuracy.
struct AblationRow {
    std::string name;
    double vqa_accuracy = 0.0;
    double comp_accuracy = 0.0;
};

struct AblationReport {
    AblationRow masked;
    AblationRow unmasked;

    std::string table() const;  // plain-text side-by-side table
};

AblationReport ablation_report(const TrainConfig& cfg, const ModelConfig& mcfg, const SceneStore& store,
                               int eval_scenes, const SampleRunConfig& run, const std::string& out_dir = "",
                               const ProgressFn& progress = {});

// Data-ratio sweep: same model/seed/budget per mixture preset; reports final
// smoothed losses and their rank correlation with the mixture shares. The
// image side is ranked on the clean-image pixel MSE: it measures the same
// objective as the velocity loss but without the 1/(1-t)^2 weight, whose
// heavy tail swamps any affordable smoothing window at this scale.
struct SweepRow {
    MixtureConfig mix;
    double final_ce = 0.0;
    double final_flow_mse = 0.0;   // velocity loss, kept for reference
    double final_pixel_mse = 0.0;  // ranking quantity for the image side
};

struct SweepReport {
    std::vector<SweepRow> rows;
    double spearman_mse_vs_gen = 0.0;  // -1 when more generation data always lowers image MSE
    double spearman_ce_vs_und = 0.0;   // -1 when more understanding data always lowers CE
};

SweepReport ratio_sweep(const TrainConfig& base, const ModelConfig& mcfg,
                        const std::vector<MixtureConfig>& presets, const SceneStore& store,
                        const std::string& out_dir = "", const ProgressFn& progress = {});

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// End-to-end gradient verification: a small double-precision model, a mixed
// batch (text loss + velocity loss, patch masking forced on), reverse-mode
// gradients of the joint loss against central finite differences.
GradReport joint_loss_gradcheck(uint64_t seed, double eps = 1e-5, double tol = 1e-4);

// Attention weights of one prompt keyword over the conditioning image's
// patch grid, per layer and head; head -1 is the mean over heads. Rows are
// renormalized over image keys, so each map sums to 1.
struct AttnMap {
    int layer = 0;
    int head = 0;  // -1 = head mean
    Tensor<float> weights;  // (grid_rows, grid_cols)
};

std::vector<AttnMap> attention_maps(const Checkpoint& ckpt, const Tensor<float>& image, const std::string& prompt,
                                    const std::string& keyword);

// Writes per-map PGM heatmaps (nearest-neighbor upsampled to pixel size,
// scaled so the peak is white) and PPM overlays blending them onto the
// image. Returns the file names written.
std::vector<std::string> write_attention_heatmaps(const std::string& dir, const std::vector<AttnMap>& maps,
                                                  const Tensor<float>& image, int patch_size);

}  // namespace pxf
