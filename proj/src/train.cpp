#include "train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "grammar.hpp"
#include "patches.hpp"

namespace pxf {

void TrainConfig::validate() const {
    if (steps < 0) throw std::invalid_argument("train: steps must be non-negative");
    if (batch_size < 1) throw std::invalid_argument("train: batch size must be positive");
    if (optim.lr <= 0.0) throw std::invalid_argument("train: learning rate must be positive");
    if (flow_loss_weight < 0.0) throw std::invalid_argument("train: flow loss weight must be non-negative");
    if (warmup_fraction < 0.0 || warmup_fraction > 1.0)
        throw std::invalid_argument("train: warmup fraction must lie in [0, 1]");
    if (caption_dropout < 0.0 || caption_dropout >= 1.0)
        throw std::invalid_argument("train: caption dropout must lie in [0, 1)");
    if (mask.ratio < 0.0 || mask.ratio > 1.0) throw std::invalid_argument("train: mask ratio must lie in [0, 1]");
    if (mask.apply_probability < 0.0 || mask.apply_probability > 1.0)
        throw std::invalid_argument("train: mask apply probability must lie in [0, 1]");
    if (mask.activation_fraction < 0.0 || mask.activation_fraction > 1.0)
        throw std::invalid_argument("train: mask activation fraction must lie in [0, 1]");
    if (log_every < 1) throw std::invalid_argument("train: log_every must be positive");
    if (checkpoint_every < 0) throw std::invalid_argument("train: checkpoint_every must be non-negative");
    if (total_pretrain_steps < 0) throw std::invalid_argument("train: total_pretrain_steps must be non-negative");
    mixture.validate();
}

TrainConfig default_train_config(TrainStage stage) {
    TrainConfig cfg;
    cfg.stage = stage;
    switch (stage) {
        case TrainStage::pretrain:
            break;  // struct defaults are the pretraining preset
        case TrainStage::sft:
            cfg.optim.lr = 2e-5;
            cfg.mask_enabled = false;
            cfg.caption_dropout = 0.0;
            break;
        case TrainStage::recon_finetune:
            cfg.mask_enabled = false;
            cfg.caption_dropout = 0.0;
            break;
    }
    return cfg;
}

double lr_at(const TrainConfig& cfg, int step) {
    const int base = cfg.total_pretrain_steps > 0 ? cfg.total_pretrain_steps : cfg.steps;
    const int warmup = static_cast<int>(std::llround(cfg.warmup_fraction * base));
    if (warmup <= 0 || step + 1 >= warmup) return cfg.optim.lr;
    return cfg.optim.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

namespace {

// x0 ~ N(0,1) elementwise, then the timestep draw — the fixed order every
// flow record uses, so replays are reproducible.
template <typename T>
FlowSample<T> draw_flow_sample(RandomStream& stream, Tensor<T> x1, const PrepareOptions& opt, double eps_t) {
    FlowSample<T> fs;
    fs.x0 = Tensor<T>(x1.shape);
    for (auto& v : fs.x0.data) v = static_cast<T>(stream.normal());
    fs.t = static_cast<T>(sample_t(stream, opt.t_schedule, eps_t, opt.t_logit_m, opt.t_logit_s));
    fs.xt = interpolate(x1, fs.x0, fs.t);
    fs.v = true_velocity(x1, fs.x0);
    fs.x1 = std::move(x1);
    return fs;
}

}  // namespace

template <typename T>
PreparedExample<T> prepare_example(const ModelConfig& cfg, const SampleRecord& rec, const PrepareOptions& opt,
                                   RandomStream& noise_stream, RandomStream& mask_stream,
                                   RandomStream& dropout_stream) {
    const PatchGrid grid = cfg.grid();
    const int n_patches = grid.token_count();
    const Vocab& v = vocab();

    PreparedExample<T> ex;
    ex.task = rec.task;
    ex.layout.task = rec.task;

    auto add_text = [&](Role role, std::vector<int> ids) {
        ex.layout.segments.push_back({role, static_cast<int>(ids.size())});
        ex.text_segments.push_back(std::move(ids));
    };
    auto add_image = [&](Role role, const Tensor<float>& img) {
        ex.layout.segments.push_back({role, n_patches});
        ex.image_segments.push_back(patchify(tensor_cast<T>(img), grid));
    };
    auto add_noisy = [&](const Tensor<float>& clean) {
        ex.flow = draw_flow_sample(noise_stream, tensor_cast<T>(clean), opt, cfg.eps_t);
        ex.layout.segments.push_back({Role::image_noisy, n_patches});
        ex.image_segments.push_back(patchify(ex.flow->xt, grid));
    };

    switch (rec.task) {
        case Task::text_only:
            add_text(Role::text_target, tokenize(rec.text));
            ex.ce_segment = 0;
            break;
        case Task::understanding:
            add_image(Role::image_condition, rec.image);
            if (rec.question.empty()) {
                add_text(Role::text_target, tokenize(rec.text));
                ex.ce_segment = 1;
            } else {
                std::vector<int> q{v.bos()};
                for (int id : tokenize_words(rec.question)) q.push_back(id);
                add_text(Role::text_condition, std::move(q));
                std::vector<int> a{v.sep()};
                for (int id : tokenize_words(rec.answer)) a.push_back(id);
                a.push_back(v.eos());
                add_text(Role::text_target, std::move(a));
                ex.ce_segment = 2;
            }
            break;
        case Task::generation: {
            ex.caption_dropped = opt.caption_dropout > 0.0 && dropout_stream.bernoulli(opt.caption_dropout);
            add_text(Role::text_condition,
                     ex.caption_dropped ? std::vector<int>{v.bos(), v.eos()} : tokenize(rec.text));
            add_noisy(rec.image);
            break;
        }
        case Task::editing:
            add_image(Role::image_condition, rec.image);
            add_text(Role::text_condition, tokenize(rec.instruction));
            add_noisy(rec.target_image);
            break;
        case Task::reconstruction:
            add_image(Role::image_condition, rec.image);
            add_noisy(rec.target_image);
            break;
    }
    if (ex.ce_segment >= 0) {
        int text_index = 0;
        for (int s = 0; s < ex.ce_segment; ++s) {
            const Role r = ex.layout.segments[static_cast<size_t>(s)].role;
            if (r == Role::text_condition || r == Role::text_target) ++text_index;
        }
        ex.ce_ids = ex.text_segments[static_cast<size_t>(text_index)];
    }
    validate_layout(ex.layout, cfg.max_seq_len);

    if (opt.mask_enabled) {
        const std::optional<Role> role = masked_role(rec.task);
        if (role && masking_active(opt.step, opt.total_pretrain_steps, mask_stream, opt.mask)) {
            ex.mask = select_mask(mask_stream, n_patches, opt.mask.ratio);
            ex.mask_role = role;
        }
    }
    return ex;
}

template <typename T>
std::vector<PreparedExample<T>> prepare_batch(const ModelConfig& cfg, const std::vector<SampleRecord>& records,
                                              const PrepareOptions& opt, RandomStream& noise_stream,
                                              RandomStream& mask_stream, RandomStream& dropout_stream) {
    std::vector<PreparedExample<T>> out;
    out.reserve(records.size());
    for (const SampleRecord& rec : records) {
        out.push_back(prepare_example<T>(cfg, rec, opt, noise_stream, mask_stream, dropout_stream));
    }
    return out;
}

template <typename T>
JointLoss<T> joint_step_loss(ModelGraphBuilder<T>& mb, const std::vector<PreparedExample<T>>& batch,
                             double flow_loss_weight) {
    if (batch.empty()) throw std::invalid_argument("joint_step_loss: empty batch");
    Tape<T>& tape = mb.tape();
    using Var = typename Tape<T>::Var;
    std::vector<Var> ce_terms, flow_terms;
    double pixel_sum = 0.0;
    for (const PreparedExample<T>& ex : batch) {
        EncodeInputs<T> in;
        in.layout = ex.layout;
        in.text_segments = ex.text_segments;
        in.image_segments = ex.image_segments;
        if (ex.flow) in.t = static_cast<double>(ex.flow->t);
        if (ex.mask) {
            in.mask = &*ex.mask;
            in.mask_role = ex.mask_role;
        }
        EncodeResult<T> enc = mb.encode(in);
        if (ex.ce_segment >= 0) {
            ce_terms.push_back(mb.ce_over_segment(enc.hidden, ex.layout.span(ex.ce_segment), ex.ce_ids));
        }
        if (ex.flow) {
            const int ns = ex.layout.noisy_segment();
            Var x_pred = mb.predict_clean_image(enc.hidden, ex.layout.span(ns));
            Var v_pred = mb.velocity_from_prediction(x_pred, ex.flow->xt, static_cast<double>(ex.flow->t));
            flow_terms.push_back(tape.mse_const(v_pred, ex.flow->v));
            pixel_sum += static_cast<double>(tape.value(tape.mse_const(x_pred, ex.flow->x1)).data[0]);
        }
    }

    auto mean_of = [&](const std::vector<Var>& terms) {
        Var acc = terms[0];
        for (size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
        return tape.scale(acc, static_cast<T>(1.0 / static_cast<double>(terms.size())));
    };

    JointLoss<T> loss;
    loss.n_ce = static_cast<int>(ce_terms.size());
    loss.n_flow = static_cast<int>(flow_terms.size());
    if (!flow_terms.empty()) loss.pixel_mse = pixel_sum / static_cast<double>(flow_terms.size());
    if (!ce_terms.empty()) loss.ce = mean_of(ce_terms);
    if (!flow_terms.empty()) loss.flow = mean_of(flow_terms);
    if (loss.ce.valid() && loss.flow.valid()) {
        loss.total = tape.add(loss.ce, tape.scale(loss.flow, static_cast<T>(flow_loss_weight)));
    } else if (loss.ce.valid()) {
        loss.total = loss.ce;
    } else if (loss.flow.valid()) {
        loss.total = tape.scale(loss.flow, static_cast<T>(flow_loss_weight));
    } else {
        throw std::invalid_argument("joint_step_loss: batch carries no loss terms");
    }
    return loss;
}

StepResult train_step(NamedTensors<float>& params, AdamState<float>& opt_state, const ModelConfig& mcfg,
                      const TrainConfig& cfg, const std::vector<PreparedExample<float>>& batch, int step) {
    Tape<float> tape;
    ModelGraphBuilder<float> mb(tape, mcfg, params);
    JointLoss<float> loss = joint_step_loss(mb, batch, cfg.flow_loss_weight);

    StepResult res;
    res.total = static_cast<double>(tape.value(loss.total).data[0]);
    if (loss.ce.valid()) res.ce = static_cast<double>(tape.value(loss.ce).data[0]);
    if (loss.flow.valid()) res.flow_mse = static_cast<double>(tape.value(loss.flow).data[0]);
    res.pixel_mse = loss.pixel_mse;
    res.n_ce = loss.n_ce;
    res.n_flow = loss.n_flow;

    tape.backward(loss.total);
    NamedTensors<float> grads;
    for (size_t i = 0; i < params.size(); ++i) {
        grads.add(params.names[i], tape.grad(mb.param(params.names[i])));
    }
    res.grad_norm = global_grad_norm(grads);
    clip_gradients(grads, cfg.optim.clip_norm);

    OptimConfig oc = cfg.optim;
    oc.lr = lr_at(cfg, step);
    adamw_step(params, grads, opt_state, oc);
    return res;
}

namespace {

std::string checkpoint_path(const std::string& dir, int step) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "ckpt_%06d.pxfu", step);
    return dir + "/" + buf;
}

}  // namespace

RunResult run_stage(const TrainConfig& cfg, const SceneStore& store, const Checkpoint& init,
                    const std::string& out_dir, const ProgressFn& progress) {
    cfg.validate();
    init.config.validate();
    if (init.step > cfg.steps) {
        throw std::invalid_argument("train: checkpoint is already past the requested step count");
    }
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    RunResult run;
    run.ckpt = init;
    Checkpoint& ck = run.ckpt;
    const ModelConfig& mcfg = ck.config;

    AdamState<float> state = AdamState<float>::zeros_like(ck.params);
    if (ck.has_optimizer) {
        state.m = ck.opt_m;
        state.v = ck.opt_v;
        state.steps = ck.step;
    }

    RandomStream root(cfg.seed);
    const RandomStream data_root = root.split(1);
    const RandomStream noise_root = root.split(2);
    const RandomStream mask_root = root.split(3);
    const RandomStream dropout_root = root.split(4);

    PrepareOptions opt;
    opt.t_schedule = cfg.t_schedule;
    opt.t_logit_m = cfg.t_logit_m;
    opt.t_logit_s = cfg.t_logit_s;
    opt.mask_enabled = cfg.mask_enabled && cfg.stage == TrainStage::pretrain;
    opt.mask = cfg.mask;
    opt.total_pretrain_steps = cfg.total_pretrain_steps > 0 ? cfg.total_pretrain_steps : cfg.steps;
    opt.caption_dropout = cfg.stage == TrainStage::pretrain ? cfg.caption_dropout : 0.0;

    // Window accumulators between logged rows.
    double win_total = 0.0, win_ce = 0.0, win_flow = 0.0, win_pixel = 0.0;
    int win_steps = 0, win_ce_records = 0, win_flow_records = 0, win_examples = 0, win_masked = 0;
    MetricRow row;

    for (int step = static_cast<int>(ck.step); step < cfg.steps; ++step) {
        RandomStream data_stream = data_root.split(static_cast<uint64_t>(step));
        RandomStream noise_stream = noise_root.split(static_cast<uint64_t>(step));
        RandomStream mask_stream = mask_root.split(static_cast<uint64_t>(step));
        RandomStream dropout_stream = dropout_root.split(static_cast<uint64_t>(step));

        const std::vector<SampleRecord> records =
            sample_batch(store, cfg.mixture, cfg.stage, cfg.batch_size, data_stream, mcfg.image_size, mcfg.image_size);
        opt.step = step;
        const std::vector<PreparedExample<float>> batch =
            prepare_batch<float>(mcfg, records, opt, noise_stream, mask_stream, dropout_stream);

        const StepResult res = train_step(ck.params, state, mcfg, cfg, batch, step);
        ck.step = step + 1;

        win_total += res.total;
        win_ce += res.ce * res.n_ce;
        win_flow += res.flow_mse * res.n_flow;
        win_pixel += res.pixel_mse * res.n_flow;
        win_ce_records += res.n_ce;
        win_flow_records += res.n_flow;
        win_steps += 1;
        for (const PreparedExample<float>& ex : batch) {
            win_examples += 1;
            if (ex.mask) win_masked += 1;
            switch (ex.task) {
                case Task::generation: row.n_generation++; break;
                case Task::understanding: row.n_understanding++; break;
                case Task::text_only: row.n_text_only++; break;
                case Task::editing: row.n_editing++; break;
                case Task::reconstruction: row.n_reconstruction++; break;
            }
        }

        const bool last = step + 1 == cfg.steps;
        if ((step + 1) % cfg.log_every == 0 || last) {
            row.step = step + 1;
            row.total_loss = win_total / win_steps;
            row.ce_loss = win_ce_records > 0 ? win_ce / win_ce_records : 0.0;
            row.flow_mse_loss = win_flow_records > 0 ? win_flow / win_flow_records : 0.0;
            row.pixel_mse_loss = win_flow_records > 0 ? win_pixel / win_flow_records : 0.0;
            row.mask_fraction = win_examples > 0 ? static_cast<double>(win_masked) / win_examples : 0.0;
            run.metrics.push_back(row);
            if (progress) progress(row);
            row = MetricRow{};
            win_total = win_ce = win_flow = win_pixel = 0.0;
            win_steps = win_ce_records = win_flow_records = win_examples = win_masked = 0;
        }

        if (!out_dir.empty() && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && !last) {
            Checkpoint snap = ck;
            snap.has_optimizer = true;
            snap.opt_m = state.m;
            snap.opt_v = state.v;
            snap.rng_digest = data_root.split(static_cast<uint64_t>(step + 1)).state_digest();
            save_checkpoint(checkpoint_path(out_dir, step + 1), snap);
        }
    }

    ck.has_optimizer = true;
    ck.opt_m = std::move(state.m);
    ck.opt_v = std::move(state.v);
    ck.rng_digest = data_root.split(static_cast<uint64_t>(ck.step)).state_digest();
    if (!out_dir.empty()) {
        write_metrics_csv(out_dir + "/metrics.csv", run.metrics);
        save_checkpoint(out_dir + "/ckpt_final.pxfu", ck);
    }
    return run;
}

RunResult recon_finetune(TrainConfig cfg, const SceneStore& store, const Checkpoint& init,
                         const std::string& out_dir, const ProgressFn& progress) {
    cfg.stage = TrainStage::recon_finetune;
    cfg.mask_enabled = false;
    cfg.caption_dropout = 0.0;
    return run_stage(cfg, store, init, out_dir, progress);
}

#define PXF_TRAIN_INSTANTIATE(T)                                                                              \
    template struct PreparedExample<T>;                                                                       \
    template PreparedExample<T> prepare_example(const ModelConfig&, const SampleRecord&, const PrepareOptions&, \
                                                RandomStream&, RandomStream&, RandomStream&);                 \
    template std::vector<PreparedExample<T>> prepare_batch(const ModelConfig&, const std::vector<SampleRecord>&, \
                                                           const PrepareOptions&, RandomStream&, RandomStream&, \
                                                           RandomStream&);                                    \
    template JointLoss<T> joint_step_loss(ModelGraphBuilder<T>&, const std::vector<PreparedExample<T>>&, double);

PXF_TRAIN_INSTANTIATE(float)
PXF_TRAIN_INSTANTIATE(double)

#undef PXF_TRAIN_INSTANTIATE

}  // namespace pxf
