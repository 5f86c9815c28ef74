#pragma once

// Two-stage training pipeline: batch preparation (token framings, flow
// samples, mask plans), the joint CE + velocity loss, the optimizer step,
// and the stage driver with metric logging and checkpoint emission.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "dataset.hpp"
#include "flow.hpp"
#include "masking.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "optim.hpp"

namespace pxf {

struct TrainConfig {
    TrainStage stage = TrainStage::pretrain;
    int steps = 2000;      // target step index for this stage (absolute within the stage)
    int batch_size = 8;
    OptimConfig optim{1e-4, 0.9, 0.999, 1e-8, 0.0, 1.0};
    double warmup_fraction = 0.02;  // linear warmup over this fraction of steps, then constant
    MixtureConfig mixture;
    MaskSchedule mask;
    bool mask_enabled = true;       // pretraining only; other stages never mask
    double flow_loss_weight = 1.0;  // lambda in ce + lambda * velocity mse
    double caption_dropout = 0.1;   // generation captions blanked with this probability (pretrain)
    TimeSchedule t_schedule = TimeSchedule::uniform;
    double t_logit_m = 0.0;  // logit-normal location/scale when that schedule is chosen
    double t_logit_s = 1.0;
    uint64_t seed = 0;
    int log_every = 25;
    int checkpoint_every = 0;  // periodic snapshots when > 0; the final one is always written
    // Base for the masking activation threshold when a run is resumed from a
    // mid-stage checkpoint; 0 means "this run's steps".
    int total_pretrain_steps = 0;

    void validate() const;
};

// Stage presets: pretraining lr 1e-4 with masking, fine-tuning lr 2e-5
// without, reconstruction finetuning lr 1e-4 without.
TrainConfig default_train_config(TrainStage stage);

// Linear warmup over warmup_fraction * steps, then constant.
double lr_at(const TrainConfig& cfg, int step);

// One record turned into model inputs: layout, token ids per text segment,
// patch matrices per image segment, plus the flow sample and mask plan that
// were drawn for it.
template <typename T>
struct PreparedExample {
    Task task = Task::text_only;
    SequenceLayout layout;
    std::vector<std::vector<int>> text_segments;
    std::vector<Tensor<T>> image_segments;
    std::optional<FlowSample<T>> flow;  // image-space tensors; present for flow-loss tasks
    std::optional<MaskPlan> mask;
    std::optional<Role> mask_role;
    int ce_segment = -1;  // layout segment carrying the text loss, -1 for none
    std::vector<int> ce_ids;
    bool caption_dropped = false;
};

struct PrepareOptions {
    TimeSchedule t_schedule = TimeSchedule::uniform;
    double t_logit_m = 0.0;
    double t_logit_s = 1.0;
    bool mask_enabled = false;
    MaskSchedule mask;
    int step = 0;                 // current step, for the masking phase test
    int total_pretrain_steps = 1;
    double caption_dropout = 0.0;
};

template <typename T>
PreparedExample<T> prepare_example(const ModelConfig& cfg, const SampleRecord& rec, const PrepareOptions& opt,
                                   RandomStream& noise_stream, RandomStream& mask_stream,
                                   RandomStream& dropout_stream);

template <typename T>
std::vector<PreparedExample<T>> prepare_batch(const ModelConfig& cfg, const std::vector<SampleRecord>& records,
                                              const PrepareOptions& opt, RandomStream& noise_stream,
                                              RandomStream& mask_stream, RandomStream& dropout_stream);

// Joint loss over a prepared batch, built on the builder's tape:
//   mean over text-loss records of CE + lambda * mean over flow records of
//   mean squared velocity error.
template <typename T>
struct JointLoss {
    typename Tape<T>::Var total;
    typename Tape<T>::Var ce;    // invalid when no text-loss records
    typename Tape<T>::Var flow;  // invalid when no flow records
    int n_ce = 0;
    int n_flow = 0;
    // Mean over flow records of mean((x_pred - x1)^2): the clean-image error
    // without the 1/(1-t)^2 weight of the velocity loss. Logged, not trained
    // on; its per-draw variance is bounded, so smoothed curves of it are
    // readable where the velocity loss is dominated by rare high-t draws.
    double pixel_mse = 0.0;
};

template <typename T>
JointLoss<T> joint_step_loss(ModelGraphBuilder<T>& mb, const std::vector<PreparedExample<T>>& batch,
                             double flow_loss_weight);

struct StepResult {
    double total = 0.0;
    double ce = 0.0;         // mean over this step's text-loss records (0 when none)
    double flow_mse = 0.0;   // mean over this step's flow records (0 when none)
    double pixel_mse = 0.0;  // mean over this step's flow records of clean-image MSE (0 when none)
    int n_ce = 0;
    int n_flow = 0;
    double grad_norm = 0.0;  // pre-clip global norm
};

// Forward, backward, clip, AdamW update in place. `step` is the 0-based
// index of this update, used for the warmup schedule.
StepResult train_step(NamedTensors<float>& params, AdamState<float>& opt_state, const ModelConfig& mcfg,
                      const TrainConfig& cfg, const std::vector<PreparedExample<float>>& batch, int step);

using ProgressFn = std::function<void(const MetricRow&)>;

struct RunResult {
    Checkpoint ckpt;
    std::vector<MetricRow> metrics;
};

// Runs from init.step up to cfg.steps. Per-step RNG streams are derived from
// (seed, absolute step), so resuming from a mid-run checkpoint replays the
// exact batches a straight run would have seen. With a non-empty out_dir,
// writes metrics.csv, periodic checkpoints, and ckpt_final.pxfu there.
RunResult run_stage(const TrainConfig& cfg, const SceneStore& store, const Checkpoint& init,
                    const std::string& out_dir = "", const ProgressFn& progress = {});

// Flow-only finetuning on reconstruction pairs; forces the stage and leaves
// masking off.
RunResult recon_finetune(TrainConfig cfg, const SceneStore& store, const Checkpoint& init,
                         const std::string& out_dir = "", const ProgressFn& progress = {});

extern template struct PreparedExample<float>;
extern template struct PreparedExample<double>;
extern template PreparedExample<float> prepare_example(const ModelConfig&, const SampleRecord&,
                                                       const PrepareOptions&, RandomStream&, RandomStream&,
                                                       RandomStream&);
extern template PreparedExample<double> prepare_example(const ModelConfig&, const SampleRecord&,
                                                        const PrepareOptions&, RandomStream&, RandomStream&,
                                                        RandomStream&);
extern template std::vector<PreparedExample<float>> prepare_batch(const ModelConfig&,
                                                                  const std::vector<SampleRecord>&,
                                                                  const PrepareOptions&, RandomStream&,
                                                                  RandomStream&, RandomStream&);
extern template std::vector<PreparedExample<double>> prepare_batch(const ModelConfig&,
                                                                   const std::vector<SampleRecord>&,
                                                                   const PrepareOptions&, RandomStream&,
                                                                   RandomStream&, RandomStream&);
extern template JointLoss<float> joint_step_loss(ModelGraphBuilder<float>&, const std::vector<PreparedExample<float>>&,
                                                 double);
extern template JointLoss<double> joint_step_loss(ModelGraphBuilder<double>&,
                                                  const std::vector<PreparedExample<double>>&, double);

}  // namespace pxf
