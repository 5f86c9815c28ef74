// pixelfuse: train, sample, and analyze the patch-level multimodal model
// from the command line. Every subcommand reads the same sectioned config
// format, accepts dotted --set overrides, and writes a resolved-config
// snapshot beside its outputs so runs can be reproduced exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "analysis.hpp"
#include "conf.hpp"
#include "grammar.hpp"
#include "image_io.hpp"
#include "kernels.hpp"
#include "metrics.hpp"
#include "svgplot.hpp"

namespace {

using nlohmann::ordered_json;
using namespace pxf;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    uint64_t seed = 0;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool need_out) {
    cmd->add_option("--config", o.config_path, "config file (sectioned key = value)")->check(CLI::ExistingFile);
    cmd->add_option("--set", o.sets, "override a config key, e.g. --set train.steps=500");
    cmd->add_option("--seed", o.seed, "root random seed (default 0)");
    CLI::Option* out = cmd->add_option("--out", o.out, "output directory");
    if (need_out) out->required();
}

Config build_config(const CommonOpts& o, const std::vector<std::pair<std::string, std::string>>& presets = {}) {
    Config conf = default_config();
    for (const auto& [key, value] : presets) conf.set_default(key, value);
    if (!o.config_path.empty()) conf.load_file(o.config_path);
    for (const std::string& kv : o.sets) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        }
        conf.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return conf;
}

void write_snapshot(const std::string& dir, const Config& conf, const std::string& subcommand, uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir + "/config_resolved.toml", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write config snapshot in " + dir);
    out << "# pixelfuse " << subcommand << " (seed " << seed << ")\n" << conf.render();
}

void write_json(const std::string& path, const ordered_json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

ProgressFn printing_progress() {
    return [](const MetricRow& row) {
        std::printf("step %6lld  total %.4f  ce %.4f  mse %.4f  mask %.2f\n", static_cast<long long>(row.step),
                    row.total_loss, row.ce_loss, row.flow_mse_loss, row.mask_fraction);
        std::fflush(stdout);
    };
}

TrainStage parse_stage(const std::string& name) {
    if (name == "pretrain") return TrainStage::pretrain;
    if (name == "sft") return TrainStage::sft;
    if (name == "recon_finetune" || name == "recon-finetune") return TrainStage::recon_finetune;
    throw std::invalid_argument("unknown stage '" + name + "'");
}

Checkpoint load_for_config(const std::string& path, const Config& conf) {
    Checkpoint ckpt = load_checkpoint(path);
    const ModelConfig configured = model_from(conf);
    if (!(ckpt.config == configured)) {
        throw std::runtime_error("checkpoint model configuration differs from the configured model; "
                                 "adjust the [model] section to match");
    }
    return ckpt;
}

ordered_json run_sidecar(const SampleRunConfig& run) {
    return ordered_json{{"euler_steps", run.euler_steps}, {"seed", run.seed}, {"guidance", run.guidance}};
}

// Scenes for evaluation: either draws from the store or enumerates the
// held-out attribute combinations across sizes and backgrounds.
std::vector<Scene> eval_scenes(const Config& conf, const SceneStore& store, uint64_t seed, bool holdouts_only) {
    std::vector<Scene> scenes;
    if (holdouts_only) {
        if (store.holdouts().empty()) {
            throw std::invalid_argument("no holdouts configured; set data.holdout_count");
        }
        for (const Holdout& h : store.holdouts()) {
            for (int size = 0; size < kSizeCount; ++size) {
                for (int bg = 0; bg < kBackgroundCount; ++bg) {
                    Scene s;
                    s.background = static_cast<BackgroundColor>(bg);
                    s.objects = {SceneObject{h.shape, h.color, h.cell, static_cast<SizeTag>(size)}};
                    scenes.push_back(s);
                }
            }
        }
        return scenes;
    }
    const int n = static_cast<int>(conf.get_int("eval.scenes"));
    RandomStream stream = RandomStream(seed).split(100);
    scenes.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) scenes.push_back(store.draw(stream));
    return scenes;
}

}  // namespace

int main(int argc, char** argv) {
    kernels::set_max_threads(kernels::threads_from_env());

    CLI::App app{"pixelfuse: a patch-level text+image model with flow-matching image "
                 "generation and autoregressive text through one shared transformer"};
    app.require_subcommand(1);
    app.footer("configuration keys (settable in --config files or via --set):\n" + default_config().help());

    // gen-data ---------------------------------------------------------------
    CommonOpts gd_opts;
    int gd_count = 64;
    std::string gd_stage = "pretrain";
    CLI::App* gen_data = app.add_subcommand("gen-data", "export a dataset manifest with images");
    add_common(gen_data, gd_opts, true);
    gen_data->add_option("--count", gd_count, "records to generate (default 64)");
    gen_data->add_option("--stage", gd_stage, "mixture stage: pretrain or sft (default pretrain)");
    gen_data->callback([&] {
        const Config conf = build_config(gd_opts);
        const ModelConfig mcfg = model_from(conf);
        const SceneStore store = store_from(conf);
        MixtureConfig mix = MixtureConfig::parse(conf.get_text("mix.ratio"));
        mix.text_only_fraction = conf.get_real("mix.text_only_fraction");
        RandomStream stream(gd_opts.seed);
        const std::vector<SampleRecord> records =
            sample_batch(store, mix, parse_stage(gd_stage), gd_count, stream, mcfg.image_size, mcfg.image_size);
        write_snapshot(gd_opts.out, conf, "gen-data", gd_opts.seed);
        const std::string manifest = export_dataset(gd_opts.out, records);
        std::printf("wrote %d records to %s\n", gd_count, manifest.c_str());
    });

    // pretrain / sft / recon-finetune ---------------------------------------
    CommonOpts pt_opts;
    std::string pt_init;
    CLI::App* pretrain = app.add_subcommand("pretrain", "stage-1 joint training from scratch");
    add_common(pretrain, pt_opts, true);
    pretrain->add_option("--init", pt_init, "resume from a checkpoint instead of fresh parameters")
        ->check(CLI::ExistingFile);
    pretrain->callback([&] {
        const Config conf = build_config(pt_opts);
        const ModelConfig mcfg = model_from(conf);
        const TrainConfig cfg = train_from(conf, TrainStage::pretrain, pt_opts.seed);
        const SceneStore store = store_from(conf);
        const Checkpoint init = pt_init.empty() ? fresh_checkpoint(mcfg, pt_opts.seed)
                                                : load_for_config(pt_init, conf);
        write_snapshot(pt_opts.out, conf, "pretrain", pt_opts.seed);
        run_stage(cfg, store, init, pt_opts.out, printing_progress());
        std::printf("finished at step %d; checkpoint in %s\n", cfg.steps, pt_opts.out.c_str());
    });

    CommonOpts sft_opts;
    std::string sft_ckpt;
    CLI::App* sft = app.add_subcommand("sft", "stage-2 supervised finetuning of a pretrained checkpoint");
    add_common(sft, sft_opts, true);
    sft->add_option("--ckpt", sft_ckpt, "pretrained checkpoint")->required()->check(CLI::ExistingFile);
    sft->callback([&] {
        const Config conf = build_config(sft_opts, {{"train.lr", "2e-05"}});
        const TrainConfig cfg = train_from(conf, TrainStage::sft, sft_opts.seed);
        const SceneStore store = store_from(conf);
        Checkpoint init = load_for_config(sft_ckpt, conf);
        init.step = 0;  // the new stage counts its own steps
        init.has_optimizer = false;
        write_snapshot(sft_opts.out, conf, "sft", sft_opts.seed);
        run_stage(cfg, store, init, sft_opts.out, printing_progress());
        std::printf("finished at step %d; checkpoint in %s\n", cfg.steps, sft_opts.out.c_str());
    });

    CommonOpts rf_opts;
    std::string rf_ckpt;
    CLI::App* recon = app.add_subcommand("recon-finetune", "flow-only reconstruction finetuning");
    add_common(recon, rf_opts, true);
    recon->add_option("--ckpt", rf_ckpt, "pretrained checkpoint")->required()->check(CLI::ExistingFile);
    recon->callback([&] {
        const Config conf = build_config(rf_opts);
        const TrainConfig cfg = train_from(conf, TrainStage::recon_finetune, rf_opts.seed);
        const SceneStore store = store_from(conf);
        Checkpoint init = load_for_config(rf_ckpt, conf);
        init.step = 0;
        init.has_optimizer = false;
        write_snapshot(rf_opts.out, conf, "recon-finetune", rf_opts.seed);
        recon_finetune(cfg, store, init, rf_opts.out, printing_progress());
        std::printf("finished at step %d; checkpoint in %s\n", cfg.steps, rf_opts.out.c_str());
    });

    // sample / edit / answer -------------------------------------------------
    CommonOpts sm_opts;
    std::string sm_ckpt, sm_prompt;
    CLI::App* sample = app.add_subcommand("sample", "text-to-image generation");
    add_common(sample, sm_opts, true);
    sample->add_option("--ckpt", sm_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
    sample->add_option("--prompt", sm_prompt, "caption-language prompt")->required();
    sample->callback([&] {
        const Config conf = build_config(sm_opts);
        const Checkpoint ckpt = load_for_config(sm_ckpt, conf);
        const SampleRunConfig run = sample_from(conf, sm_opts.seed);
        const Tensor<float> image = generate(ckpt, sm_prompt, run);
        write_snapshot(sm_opts.out, conf, "sample", sm_opts.seed);
        write_ppm(sm_opts.out + "/sample.ppm", image);
        ordered_json j = run_sidecar(run);
        j["prompt"] = sm_prompt;
        j["output"] = "sample.ppm";
        write_json(sm_opts.out + "/sample.json", j);
        std::printf("wrote %s/sample.ppm\n", sm_opts.out.c_str());
    });

    CommonOpts ed_opts;
    std::string ed_ckpt, ed_image, ed_instruction;
    CLI::App* edit_cmd = app.add_subcommand("edit", "instruction-driven image editing");
    add_common(edit_cmd, ed_opts, true);
    edit_cmd->add_option("--ckpt", ed_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
    edit_cmd->add_option("--image", ed_image, "source image (PPM)")->required()->check(CLI::ExistingFile);
    edit_cmd->add_option("--instruction", ed_instruction, "edit instruction")->required();
    edit_cmd->callback([&] {
        const Config conf = build_config(ed_opts);
        const Checkpoint ckpt = load_for_config(ed_ckpt, conf);
        const SampleRunConfig run = sample_from(conf, ed_opts.seed);
        const Tensor<float> source = read_ppm<float>(ed_image);
        const Tensor<float> image = edit(ckpt, source, ed_instruction, run);
        write_snapshot(ed_opts.out, conf, "edit", ed_opts.seed);
        write_ppm(ed_opts.out + "/edit.ppm", image);
        ordered_json j = run_sidecar(run);
        j["instruction"] = ed_instruction;
        j["source"] = ed_image;
        j["output"] = "edit.ppm";
        write_json(ed_opts.out + "/edit.json", j);
        std::printf("wrote %s/edit.ppm\n", ed_opts.out.c_str());
    });

    CommonOpts an_opts;
    std::string an_ckpt, an_image, an_question;
    CLI::App* answer_cmd = app.add_subcommand("answer", "greedy question answering about an image");
    add_common(answer_cmd, an_opts, false);
    answer_cmd->add_option("--ckpt", an_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
    answer_cmd->add_option("--image", an_image, "image (PPM)")->required()->check(CLI::ExistingFile);
    answer_cmd->add_option("--question", an_question, "question text")->required();
    answer_cmd->callback([&] {
        const Config conf = build_config(an_opts);
        const Checkpoint ckpt = load_for_config(an_ckpt, conf);
        const Tensor<float> image = read_ppm<float>(an_image);
        const std::string text =
            answer(ckpt, image, an_question, static_cast<int>(conf.get_int("sample.max_answer_tokens")));
        std::printf("%s\n", text.c_str());
        if (!an_opts.out.empty()) {
            write_snapshot(an_opts.out, conf, "answer", an_opts.seed);
            std::ofstream out(an_opts.out + "/answer.txt", std::ios::binary);
            out << text << "\n";
        }
    });

    // eval -------------------------------------------------------------------
    CommonOpts ev_opts;
    std::string ev_ckpt;
    bool ev_holdouts = false;
    CLI::App* eval_cmd = app.add_subcommand("eval", "VQA, compositional, and reconstruction evaluation");
    add_common(eval_cmd, ev_opts, true);
    eval_cmd->add_option("--ckpt", ev_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
    eval_cmd->add_flag("--holdouts", ev_holdouts, "evaluate on the held-out attribute combinations");
    eval_cmd->callback([&] {
        const Config conf = build_config(ev_opts);
        const Checkpoint ckpt = load_for_config(ev_ckpt, conf);
        const SceneStore store = store_from(conf);
        const SampleRunConfig run = sample_from(conf, ev_opts.seed);
        const std::vector<Scene> scenes = eval_scenes(conf, store, ev_opts.seed, ev_holdouts);
        const VqaResult vqa =
            vqa_eval(ckpt, scenes, static_cast<int>(conf.get_int("eval.qa_per_scene")), ev_opts.seed);
        const CompositionalResult comp = compositional_eval(ckpt, scenes, run);
        const ReconResult rec = reconstruction_eval(ckpt, scenes, run);
        write_snapshot(ev_opts.out, conf, "eval", ev_opts.seed);
        std::ofstream csv(ev_opts.out + "/eval.csv", std::ios::binary);
        char buf[96];
        csv << "metric,value\n";
        const std::pair<const char*, double> rows[] = {
            {"vqa_accuracy", vqa.accuracy()},        {"comp_accuracy", comp.accuracy()},
            {"comp_strict_accuracy", comp.strict_accuracy()}, {"recon_psnr", rec.mean_psnr},
            {"recon_ssim", rec.mean_ssim},
        };
        for (const auto& [name, value] : rows) {
            std::snprintf(buf, sizeof(buf), "%s,%.6f\n", name, value);
            csv << buf;
            std::printf("%s %.6f\n", name, value);
        }
    });

    // ablate-masking ---------------------------------------------------------
    CommonOpts ab_opts;
    CLI::App* ablate = app.add_subcommand("ablate-masking", "shared-trunk masking ablation");
    add_common(ablate, ab_opts, true);
    ablate->callback([&] {
        const Config conf = build_config(ab_opts);
        const ModelConfig mcfg = model_from(conf);
        const TrainConfig cfg = train_from(conf, TrainStage::pretrain, ab_opts.seed);
        const SceneStore store = store_from(conf);
        write_snapshot(ab_opts.out, conf, "ablate-masking", ab_opts.seed);
        const AblationReport report =
            ablation_report(cfg, mcfg, store, static_cast<int>(conf.get_int("eval.scenes")),
                            sample_from(conf, ab_opts.seed), ab_opts.out, printing_progress());
        std::printf("%s", report.table().c_str());
    });

    // ratio-sweep ------------------------------------------------------------
    CommonOpts rs_opts;
    std::string rs_ratios = "8g2u,7g3u,5g5u,3g7u";
    CLI::App* sweep = app.add_subcommand("ratio-sweep", "train the mixture presets and compare loss trends");
    add_common(sweep, rs_opts, true);
    sweep->add_option("--ratios", rs_ratios, "comma-separated mixture presets (default 8g2u,7g3u,5g5u,3g7u)");
    sweep->callback([&] {
        const Config conf = build_config(rs_opts);
        const ModelConfig mcfg = model_from(conf);
        const TrainConfig base = train_from(conf, TrainStage::pretrain, rs_opts.seed);
        const SceneStore store = store_from(conf);
        std::vector<MixtureConfig> presets;
        std::stringstream ss(rs_ratios);
        std::string item;
        while (std::getline(ss, item, ',')) {
            MixtureConfig mix = MixtureConfig::parse(item);
            mix.text_only_fraction = base.mixture.text_only_fraction;
            presets.push_back(mix);
        }
        write_snapshot(rs_opts.out, conf, "ratio-sweep", rs_opts.seed);
        const SweepReport report = ratio_sweep(base, mcfg, presets, store, rs_opts.out, printing_progress());
        for (const SweepRow& row : report.rows) {
            std::printf("%s  final_ce %.6f  final_mse %.6f\n", row.mix.name().c_str(), row.final_ce,
                        row.final_flow_mse);
        }
        std::printf("spearman mse~gen %.3f  ce~und %.3f\n", report.spearman_mse_vs_gen, report.spearman_ce_vs_und);
    });

    // attn-dump --------------------------------------------------------------
    CommonOpts at_opts;
    std::string at_ckpt, at_image, at_caption, at_prompt, at_keyword;
    CLI::App* attn = app.add_subcommand("attn-dump", "attention maps of a prompt keyword over the image grid");
    add_common(attn, at_opts, true);
    attn->add_option("--ckpt", at_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
    attn->add_option("--image", at_image, "conditioning image (PPM)")->check(CLI::ExistingFile);
    attn->add_option("--caption", at_caption, "rasterize this caption as the conditioning image");
    attn->add_option("--prompt", at_prompt, "prompt text")->required();
    attn->add_option("--keyword", at_keyword, "keyword to trace (must occur in the prompt)")->required();
    attn->callback([&] {
        const Config conf = build_config(at_opts);
        const Checkpoint ckpt = load_for_config(at_ckpt, conf);
        Tensor<float> image;
        if (!at_image.empty()) {
            image = read_ppm<float>(at_image);
        } else if (!at_caption.empty()) {
            image = rasterize<float>(parse_caption(at_caption), ckpt.config.image_size, ckpt.config.image_size);
        } else {
            throw std::invalid_argument("attn-dump needs --image or --caption");
        }
        const std::vector<AttnMap> maps = attention_maps(ckpt, image, at_prompt, at_keyword);
        write_snapshot(at_opts.out, conf, "attn-dump", at_opts.seed);
        const std::vector<std::string> names =
            write_attention_heatmaps(at_opts.out, maps, image, ckpt.config.patch_size);
        std::printf("wrote %zu heatmap files to %s\n", names.size(), at_opts.out.c_str());
    });

    // gradcheck --------------------------------------------------------------
    CommonOpts gc_opts;
    double gc_eps = 1e-5, gc_tol = 1e-4;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "joint-loss gradients vs finite differences");
    add_common(gradcheck, gc_opts, false);
    gradcheck->add_option("--eps", gc_eps, "finite-difference step (default 1e-5)");
    gradcheck->add_option("--tol", gc_tol, "max relative error tolerance (default 1e-4)");
    gradcheck->callback([&] {
        const GradReport report = joint_loss_gradcheck(gc_opts.seed, gc_eps, gc_tol);
        std::printf("gradcheck max_rel_err %.3e (eps %.1e, tol %.1e) worst %s[%lld] -> %s\n", report.max_rel_err,
                    report.eps, report.tol, report.worst_param.c_str(), static_cast<long long>(report.worst_index),
                    report.pass ? "pass" : "FAIL");
        if (!gc_opts.out.empty()) {
            const Config conf = build_config(gc_opts);
            write_snapshot(gc_opts.out, conf, "gradcheck", gc_opts.seed);
        }
        if (!report.pass) throw std::runtime_error("gradient check failed");
    });

    // plot -------------------------------------------------------------------
    CommonOpts pl_opts;
    std::vector<std::string> pl_inputs;
    std::string pl_metric = "total_loss", pl_svg, pl_title = "training metrics";
    CLI::App* plot = app.add_subcommand("plot", "render metrics CSVs as an SVG line plot");
    add_common(plot, pl_opts, false);
    plot->add_option("--input", pl_inputs, "metrics CSV (repeatable)")->required()->check(CLI::ExistingFile);
    plot->add_option("--metric", pl_metric, "column: ce_loss, flow_mse_loss, total_loss, or mask_fraction");
    plot->add_option("--svg", pl_svg, "output SVG path")->required();
    plot->add_option("--title", pl_title, "plot title");
    plot->callback([&] {
        std::vector<PlotSeries> series;
        for (const std::string& path : pl_inputs) {
            const std::vector<MetricRow> rows = read_metrics_csv(path);
            PlotSeries s;
            s.label = std::filesystem::path(path).stem().string();
            for (const MetricRow& row : rows) {
                double value = 0.0;
                if (pl_metric == "ce_loss") value = row.ce_loss;
                else if (pl_metric == "flow_mse_loss") value = row.flow_mse_loss;
                else if (pl_metric == "total_loss") value = row.total_loss;
                else if (pl_metric == "mask_fraction") value = row.mask_fraction;
                else throw std::invalid_argument("unknown metric '" + pl_metric + "'");
                s.x.push_back(static_cast<double>(row.step));
                s.y.push_back(value);
            }
            series.push_back(std::move(s));
        }
        const std::filesystem::path svg_path(pl_svg);
        if (svg_path.has_parent_path()) std::filesystem::create_directories(svg_path.parent_path());
        write_svg_lines(pl_svg, series, pl_title, "step", pl_metric);
        const Config conf = build_config(pl_opts);
        const std::string snap_dir =
            svg_path.has_parent_path() ? svg_path.parent_path().string() : std::string(".");
        write_snapshot(snap_dir, conf, "plot", pl_opts.seed);
        std::printf("wrote %s\n", pl_svg.c_str());
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
