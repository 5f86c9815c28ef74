#include "analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "grammar.hpp"
#include "image_io.hpp"
#include "metrics.hpp"
#include "patches.hpp"
#include "svgplot.hpp"

namespace pxf {

VqaResult vqa_eval(const Checkpoint& ckpt, const std::vector<Scene>& scenes, int per_scene, uint64_t seed) {
    if (per_scene < 1) throw std::invalid_argument("vqa_eval: per_scene must be positive");
    RandomStream stream(seed);
    VqaResult res;
    const int size = ckpt.config.image_size;
    for (const Scene& scene : scenes) {
        const Tensor<float> image = rasterize<float>(scene, size, size);
        for (int j = 0; j < per_scene; ++j) {
            const QaPair qa = qa_pair(scene, stream);
            const std::string pred = answer(ckpt, image, qa.question);
            res.total += 1;
            if (pred == qa.answer) res.correct += 1;
        }
    }
    return res;
}

CompositionalResult compositional_eval(const Checkpoint& ckpt, const std::vector<Scene>& scenes,
                                       const SampleRunConfig& run) {
    RandomStream seeds(run.seed);
    CompositionalResult res;
    for (size_t i = 0; i < scenes.size(); ++i) {
        SampleRunConfig r = run;
        r.seed = seeds.split(i).next_u64();
        const Tensor<float> image = generate(ckpt, caption(scenes[i]), r);
        const CheckResult check = compositional_check(image, scenes[i]);
        res.n += 1;
        res.shape_pass += check.shape_ok;
        res.color_pass += check.color_ok;
        res.position_pass += check.position_ok;
        res.count_pass += check.count_ok;
        res.all_pass += check.all();
    }
    return res;
}

ReconResult reconstruction_eval(const Checkpoint& ckpt, const std::vector<Scene>& scenes,
                                const SampleRunConfig& run) {
    RandomStream seeds(run.seed);
    ReconResult res;
    const int size = ckpt.config.image_size;
    for (size_t i = 0; i < scenes.size(); ++i) {
        SampleRunConfig r = run;
        r.seed = seeds.split(i).next_u64();
        const Tensor<float> source = rasterize<float>(scenes[i], size, size);
        const Tensor<float> out = reconstruct(ckpt, source, r);
        res.mean_psnr += psnr(out, source);
        res.mean_ssim += ssim(out, source);
        res.n += 1;
    }
    if (res.n > 0) {
        res.mean_psnr /= res.n;
        res.mean_ssim /= res.n;
    }
    return res;
}

std::string AblationReport::table() const {
    char buf[256];
    std::ostringstream out;
    out << "variant      vqa_accuracy  comp_accuracy\n";
    for (const AblationRow* row : {&masked, &unmasked}) {
        std::snprintf(buf, sizeof(buf), "%-12s %12.4f %14.4f\n", row->name.c_str(), row->vqa_accuracy,
                      row->comp_accuracy);
        out << buf;
    }
    return out.str();
}

AblationReport ablation_report(const TrainConfig& cfg, const ModelConfig& mcfg, const SceneStore& store,
                               int eval_scenes, const SampleRunConfig& run, const std::string& out_dir,
                               const ProgressFn& progress) {
    if (eval_scenes < 1) throw std::invalid_argument("ablation: eval_scenes must be positive");
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    const int total = cfg.steps;
    const int half = total / 2;

    // Shared trunk: the first half of the masked schedule. With the default
    // activation fraction the masking phase has not started by then, so the
    // trunk is identical for both arms.
    TrainConfig shared_cfg = cfg;
    shared_cfg.steps = half;
    shared_cfg.total_pretrain_steps = total;
    const Checkpoint init = fresh_checkpoint(mcfg, cfg.seed);
    RunResult shared = run_stage(shared_cfg, store, init, out_dir.empty() ? "" : out_dir + "/shared", progress);

    TrainConfig masked_cfg = cfg;
    masked_cfg.steps = total;
    masked_cfg.total_pretrain_steps = total;
    masked_cfg.mask_enabled = true;
    RunResult masked =
        run_stage(masked_cfg, store, shared.ckpt, out_dir.empty() ? "" : out_dir + "/masked", progress);

    TrainConfig unmasked_cfg = masked_cfg;
    unmasked_cfg.mask_enabled = false;
    RunResult unmasked =
        run_stage(unmasked_cfg, store, shared.ckpt, out_dir.empty() ? "" : out_dir + "/unmasked", progress);

    RandomStream eval_stream = RandomStream(cfg.seed).split(100);
    std::vector<Scene> scenes;
    scenes.reserve(static_cast<size_t>(eval_scenes));
    for (int i = 0; i < eval_scenes; ++i) scenes.push_back(store.draw(eval_stream));

    AblationReport report;
    for (auto [row, ckpt, name] : {std::tuple<AblationRow*, const Checkpoint*, const char*>{
                                       &report.masked, &masked.ckpt, "masked"},
                                   {&report.unmasked, &unmasked.ckpt, "unmasked"}}) {
        row->name = name;
        row->vqa_accuracy = vqa_eval(*ckpt, scenes, 2, cfg.seed).accuracy();
        row->comp_accuracy = compositional_eval(*ckpt, scenes, run).accuracy();
    }

    if (!out_dir.empty()) {
        std::ofstream txt(out_dir + "/ablation.txt", std::ios::binary);
        txt << report.table();
        std::ofstream csv(out_dir + "/ablation.csv", std::ios::binary);
        csv << "variant,vqa_accuracy,comp_accuracy\n";
        char buf[128];
        for (const AblationRow* row : {&report.masked, &report.unmasked}) {
            std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", row->name.c_str(), row->vqa_accuracy,
                          row->comp_accuracy);
            csv << buf;
        }
    }
    return report;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
    auto ranks = [](const std::vector<double>& v) {
        const size_t n = v.size();
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), size_t{0});
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const std::vector<double> rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0 || syy == 0) throw std::invalid_argument("spearman: a series is constant");
    return sxy / std::sqrt(sxx * syy);
}

SweepReport ratio_sweep(const TrainConfig& base, const ModelConfig& mcfg,
                        const std::vector<MixtureConfig>& presets, const SceneStore& store,
                        const std::string& out_dir, const ProgressFn& progress) {
    if (presets.empty()) throw std::invalid_argument("ratio_sweep: no presets");
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    SweepReport report;
    std::vector<PlotSeries> series;
    for (const MixtureConfig& mix : presets) {
        TrainConfig cfg = base;
        cfg.mixture = mix;
        const Checkpoint init = fresh_checkpoint(mcfg, base.seed);
        RunResult run = run_stage(cfg, store, init, "", progress);
        const int window = std::max<int>(1, static_cast<int>(run.metrics.size()) / 10);
        SweepRow row;
        row.mix = mix;
        row.final_ce = smoothed_ce(run.metrics, window);
        row.final_flow_mse = smoothed_flow_mse(run.metrics, window);
        report.rows.push_back(row);

        PlotSeries ce{mix.name() + " ce", {}, {}};
        PlotSeries mse{mix.name() + " mse", {}, {}};
        for (const MetricRow& m : run.metrics) {
            ce.x.push_back(static_cast<double>(m.step));
            ce.y.push_back(m.ce_loss);
            mse.x.push_back(static_cast<double>(m.step));
            mse.y.push_back(m.flow_mse_loss);
        }
        series.push_back(std::move(ce));
        series.push_back(std::move(mse));
        if (!out_dir.empty()) {
            write_metrics_csv(out_dir + "/metrics_" + mix.name() + ".csv", run.metrics);
        }
    }

    std::vector<double> gen, und, ces, mses;
    for (const SweepRow& row : report.rows) {
        gen.push_back(static_cast<double>(row.mix.gen_ratio));
        und.push_back(static_cast<double>(row.mix.und_ratio));
        ces.push_back(row.final_ce);
        mses.push_back(row.final_flow_mse);
    }
    if (report.rows.size() >= 2) {
        report.spearman_mse_vs_gen = spearman(gen, mses);
        report.spearman_ce_vs_und = spearman(und, ces);
    }

    if (!out_dir.empty()) {
        write_svg_lines(out_dir + "/sweep_losses.svg", series, "training loss by data mixture", "step", "loss");
        std::ofstream csv(out_dir + "/sweep_summary.csv", std::ios::binary);
        csv << "mixture,gen_ratio,und_ratio,final_ce,final_flow_mse\n";
        char buf[160];
        for (const SweepRow& row : report.rows) {
            std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.8g,%.8g\n", row.mix.name().c_str(), row.mix.gen_ratio,
                          row.mix.und_ratio, row.final_ce, row.final_flow_mse);
            csv << buf;
        }
    }
    return report;
}

GradReport joint_loss_gradcheck(uint64_t seed, double eps, double tol) {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.ffn_mult = 2;
    cfg.image_size = 16;
    cfg.patch_size = 4;
    cfg.max_seq_len = 48;
    cfg.vocab_size = vocab().size();
    cfg.validate();

    RandomStream init(seed);
    NamedTensors<double> params = init_params<double>(cfg, init);

    const Scene s1{{SceneObject{ShapeKind::circle, ColorName::red, 0, SizeTag::large}}, BackgroundColor::black};
    const Scene s2{{SceneObject{ShapeKind::square, ColorName::blue, 3, SizeTag::small}}, BackgroundColor::gray};
    RandomStream qa_stream = RandomStream(seed).split(9);
    const std::vector<SampleRecord> records = {
        make_generation_record(s1, cfg.image_size, cfg.image_size),
        make_qa_record(s2, qa_stream, cfg.image_size, cfg.image_size),
        make_text_only_record(s1),
    };

    PrepareOptions opt;
    opt.mask_enabled = true;
    opt.mask.apply_probability = 1.0;  // deterministic application for the check
    opt.step = 9;
    opt.total_pretrain_steps = 10;  // past the activation threshold
    RandomStream noise = RandomStream(seed).split(2);
    RandomStream masks = RandomStream(seed).split(3);
    RandomStream drops = RandomStream(seed).split(4);
    const std::vector<PreparedExample<double>> batch =
        prepare_batch<double>(cfg, records, opt, noise, masks, drops);

    ScalarFn<double> fn = [cfg, params, batch](Tape<double>& tape,
                                              const std::vector<Tape<double>::Var>& vars) {
        ModelGraphBuilder<double> mb(tape, cfg, params, vars);
        return joint_step_loss<double>(mb, batch, 1.0).total;
    };
    return check_gradients(fn, params, eps, tol);
}

std::vector<AttnMap> attention_maps(const Checkpoint& ckpt, const Tensor<float>& image, const std::string& prompt,
                                    const std::string& keyword) {
    const ModelConfig& cfg = ckpt.config;
    const PatchGrid grid = cfg.grid();
    if (image.shape != grid.image_shape()) {
        throw std::invalid_argument("attention: image shape does not match the model configuration");
    }
    const int kw = vocab().id(keyword);
    const std::vector<int> ids = tokenize(prompt);
    std::vector<int> positions;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == kw) positions.push_back(static_cast<int>(i));
    }
    if (positions.empty()) throw std::invalid_argument("attention: keyword '" + keyword + "' not in prompt");

    const int n_patches = grid.token_count();
    EncodeInputs<float> in;
    in.layout.task = Task::understanding;
    in.layout.segments = {{Role::image_condition, n_patches}, {Role::text_condition, static_cast<int>(ids.size())}};
    in.image_segments = {patchify(image, grid)};
    in.text_segments = {ids};

    Tape<float> tape;
    ModelGraphBuilder<float> mb(tape, cfg, ckpt.params);
    std::vector<AttnProbe<float>> probes;
    mb.encode(in, &probes);

    // Renormalized keyword row over image keys for one probe.
    auto keyword_map = [&](const AttnProbe<float>& probe) {
        Tensor<float> map({grid.rows(), grid.cols()});
        for (int pos : positions) {
            const int q = n_patches + pos;
            double sum = 0.0;
            for (int k = 0; k < n_patches; ++k) {
                sum += probe.probs.at(q, k);
            }
            for (int k = 0; k < n_patches; ++k) {
                const double w = sum > 0.0 ? probe.probs.at(q, k) / sum : 1.0 / n_patches;
                map.data[static_cast<size_t>(k)] += static_cast<float>(w / positions.size());
            }
        }
        return map;
    };

    std::vector<AttnMap> maps;
    for (int layer = 0; layer < cfg.n_layers; ++layer) {
        Tensor<float> mean({grid.rows(), grid.cols()});
        int heads = 0;
        for (const AttnProbe<float>& probe : probes) {
            if (probe.layer != layer) continue;
            Tensor<float> m = keyword_map(probe);
            for (int64_t i = 0; i < mean.numel(); ++i) mean.data[i] += m.data[i];
            maps.push_back({layer, probe.head, std::move(m)});
            ++heads;
        }
        if (heads > 0) {
            for (auto& v : mean.data) v /= static_cast<float>(heads);
            maps.push_back({layer, -1, std::move(mean)});
        }
    }
    return maps;
}

std::vector<std::string> write_attention_heatmaps(const std::string& dir, const std::vector<AttnMap>& maps,
                                                  const Tensor<float>& image, int patch_size) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> names;
    char buf[96];
    for (const AttnMap& map : maps) {
        const int gr = map.weights.shape[0], gc = map.weights.shape[1];
        float peak = 0.0f;
        for (float v : map.weights.data) peak = std::max(peak, v);
        Tensor<float> gray({gr * patch_size, gc * patch_size});
        for (int y = 0; y < gr * patch_size; ++y) {
            for (int x = 0; x < gc * patch_size; ++x) {
                const float w = map.weights.at(y / patch_size, x / patch_size);
                gray.at(y, x) = peak > 0.0f ? w / peak : 0.0f;
            }
        }
        const std::string head = map.head < 0 ? "mean" : "h" + std::to_string(map.head);
        std::snprintf(buf, sizeof(buf), "attn_l%d_%s.pgm", map.layer, head.c_str());
        write_pgm(dir + "/" + buf, gray);
        names.emplace_back(buf);

        Tensor<float> overlay(image.shape);
        for (int y = 0; y < image.shape[0]; ++y) {
            for (int x = 0; x < image.shape[1]; ++x) {
                const float a = 0.6f * gray.at(std::min(y, gr * patch_size - 1), std::min(x, gc * patch_size - 1));
                for (int c = 0; c < 3; ++c) {
                    const float hot = c == 0 ? 1.0f : -1.0f;  // red highlight
                    overlay.data[(static_cast<size_t>(y) * image.shape[1] + x) * 3 + c] =
                        (1.0f - a) * image.data[(static_cast<size_t>(y) * image.shape[1] + x) * 3 + c] + a * hot;
                }
            }
        }
        std::snprintf(buf, sizeof(buf), "attn_l%d_%s_overlay.ppm", map.layer, head.c_str());
        write_ppm(dir + "/" + buf, overlay);
        names.emplace_back(buf);
    }
    return names;
}

}  // namespace pxf
