#include "conf.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "grammar.hpp"

namespace pxf {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

void check_kind(const ConfKeySpec& spec, const std::string& value) {
    const std::string dotted = spec.section + "." + spec.key;
    try {
        size_t used = 0;
        switch (spec.kind) {
            case ConfKind::integer:
                std::stoll(value, &used);
                if (used != value.size()) throw std::invalid_argument("trailing");
                break;
            case ConfKind::real:
                std::stod(value, &used);
                if (used != value.size()) throw std::invalid_argument("trailing");
                break;
            case ConfKind::boolean:
                if (value != "true" && value != "false") throw std::invalid_argument("bool");
                break;
            case ConfKind::text:
                break;
        }
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad value '" + value + "' for " + dotted);
    }
}

}  // namespace

Config::Config(std::vector<ConfKeySpec> schema) : schema_(std::move(schema)) {
    values_.reserve(schema_.size());
    for (const ConfKeySpec& spec : schema_) {
        check_kind(spec, spec.default_value);
        values_.push_back(spec.default_value);
    }
    user_set_.assign(schema_.size(), false);
}

int Config::find(const std::string& dotted) const {
    for (size_t i = 0; i < schema_.size(); ++i) {
        if (schema_[i].section + "." + schema_[i].key == dotted) return static_cast<int>(i);
    }
    return -1;
}

int Config::require(const std::string& dotted) const {
    const int i = find(dotted);
    if (i < 0) throw std::invalid_argument("config: unknown key '" + dotted + "'");
    return i;
}

void Config::set(const std::string& dotted, const std::string& value) {
    const int i = require(dotted);
    check_kind(schema_[static_cast<size_t>(i)], value);
    values_[static_cast<size_t>(i)] = value;
    user_set_[static_cast<size_t>(i)] = true;
}

void Config::set_default(const std::string& dotted, const std::string& value) {
    const int i = require(dotted);
    if (user_set_[static_cast<size_t>(i)]) return;
    check_kind(schema_[static_cast<size_t>(i)], value);
    values_[static_cast<size_t>(i)] = value;
}

void Config::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("config: cannot open: " + path);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::runtime_error("config: malformed section at " + path + ":" + std::to_string(lineno));
            }
            section = trim(line.substr(1, line.size() - 2));
            bool known = false;
            for (const ConfKeySpec& spec : schema_) known |= spec.section == section;
            if (!known) {
                throw std::runtime_error("config: unknown section '[" + section + "]' at " + path + ":" +
                                         std::to_string(lineno));
            }
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config: expected key = value at " + path + ":" + std::to_string(lineno));
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) {
            throw std::runtime_error("config: key '" + key + "' before any [section] at " + path + ":" +
                                     std::to_string(lineno));
        }
        set(section + "." + key, value);
    }
}

int64_t Config::get_int(const std::string& dotted) const {
    const int i = require(dotted);
    if (schema_[static_cast<size_t>(i)].kind != ConfKind::integer) {
        throw std::invalid_argument("config: " + dotted + " is not an integer key");
    }
    return std::stoll(values_[static_cast<size_t>(i)]);
}

double Config::get_real(const std::string& dotted) const {
    const int i = require(dotted);
    const ConfKind kind = schema_[static_cast<size_t>(i)].kind;
    if (kind != ConfKind::real && kind != ConfKind::integer) {
        throw std::invalid_argument("config: " + dotted + " is not a numeric key");
    }
    return std::stod(values_[static_cast<size_t>(i)]);
}

bool Config::get_bool(const std::string& dotted) const {
    const int i = require(dotted);
    if (schema_[static_cast<size_t>(i)].kind != ConfKind::boolean) {
        throw std::invalid_argument("config: " + dotted + " is not a boolean key");
    }
    return values_[static_cast<size_t>(i)] == "true";
}

const std::string& Config::get_text(const std::string& dotted) const {
    return values_[static_cast<size_t>(require(dotted))];
}

bool Config::explicitly_set(const std::string& dotted) const {
    return user_set_[static_cast<size_t>(require(dotted))];
}

std::string Config::render() const {
    std::ostringstream out;
    std::string section;
    for (size_t i = 0; i < schema_.size(); ++i) {
        if (schema_[i].section != section) {
            if (!section.empty()) out << "\n";
            section = schema_[i].section;
            out << "[" << section << "]\n";
        }
        out << schema_[i].key << " = " << values_[i] << "\n";
    }
    return out.str();
}

std::string Config::help() const {
    std::ostringstream out;
    char buf[64];
    for (const ConfKeySpec& spec : schema_) {
        std::snprintf(buf, sizeof(buf), "  %-28s", (spec.section + "." + spec.key).c_str());
        out << buf << " default " << spec.default_value << " — " << spec.description << "\n";
    }
    return out.str();
}

Config default_config() {
    return Config({
        {"model", "d_model", ConfKind::integer, "128", "transformer width"},
        {"model", "n_layers", ConfKind::integer, "4", "transformer depth"},
        {"model", "n_heads", ConfKind::integer, "4", "attention heads"},
        {"model", "ffn_mult", ConfKind::integer, "4", "feed-forward width multiplier"},
        {"model", "max_seq_len", ConfKind::integer, "64", "maximum joint sequence length in tokens"},
        {"model", "image_size", ConfKind::integer, "16", "square image side in pixels"},
        {"model", "channels", ConfKind::integer, "3", "image channels"},
        {"model", "patch_size", ConfKind::integer, "4", "patch side in pixels"},
        {"model", "eps_t", ConfKind::real, "0.001", "guard band below t=1 for the velocity transform"},

        {"train", "steps", ConfKind::integer, "2000", "optimizer step index to reach in this stage"},
        {"train", "batch_size", ConfKind::integer, "8", "examples per optimizer step"},
        {"train", "lr", ConfKind::real, "0.0001", "learning rate (stage presets: pretrain/recon 1e-4, sft 2e-5)"},
        {"train", "weight_decay", ConfKind::real, "0", "decoupled weight decay"},
        {"train", "beta1", ConfKind::real, "0.9", "Adam first-moment decay"},
        {"train", "beta2", ConfKind::real, "0.999", "Adam second-moment decay"},
        {"train", "adam_eps", ConfKind::real, "1e-08", "Adam denominator epsilon"},
        {"train", "clip_norm", ConfKind::real, "1", "global gradient-norm clip; values <= 0 disable clipping"},
        {"train", "warmup_fraction", ConfKind::real, "0.02", "linear warmup over this fraction of steps"},
        {"train", "flow_loss_weight", ConfKind::real, "1", "weight of the velocity loss in the joint objective"},
        {"train", "caption_dropout", ConfKind::real, "0.1",
         "probability of blanking a generation caption during pretraining"},
        {"train", "t_schedule", ConfKind::text, "uniform", "timestep distribution: uniform or logit_normal"},
        {"train", "t_logit_m", ConfKind::real, "0", "logit-normal location"},
        {"train", "t_logit_s", ConfKind::real, "1", "logit-normal scale"},
        {"train", "log_every", ConfKind::integer, "25", "steps per metrics row"},
        {"train", "checkpoint_every", ConfKind::integer, "0",
         "periodic checkpoint cadence; 0 writes only the final checkpoint"},
        {"train", "total_pretrain_steps", ConfKind::integer, "0",
         "masking threshold base when resuming mid-stage; 0 uses steps"},

        {"mask", "enabled", ConfKind::boolean, "true", "masked feature learning during pretraining"},
        {"mask", "activation_fraction", ConfKind::real, "0.4",
         "final fraction of pretraining with masking active"},
        {"mask", "apply_probability", ConfKind::real, "0.5", "per-example masking coin once active"},
        {"mask", "ratio", ConfKind::real, "0.5", "fraction of patches replaced by the mask embedding"},

        {"mix", "ratio", ConfKind::text, "7g3u", "generation:understanding ratio out of 10, e.g. 7g3u"},
        {"mix", "text_only_fraction", ConfKind::real, "0.2", "fraction of slots carrying no image"},

        {"data", "corpus", ConfKind::text, "unbounded", "scene source: unbounded, corpus, or exhaustive"},
        {"data", "corpus_size", ConfKind::integer, "64", "scene count when corpus = corpus"},
        {"data", "corpus_seed", ConfKind::integer, "17", "seed of the fixed corpus draw"},
        {"data", "two_object_fraction", ConfKind::real, "0.5", "fraction of drawn scenes with two objects"},
        {"data", "holdout_count", ConfKind::integer, "0", "held-out (color, shape, cell) combinations"},
        {"data", "holdout_seed", ConfKind::integer, "7", "seed of the holdout draw"},

        {"sample", "euler_steps", ConfKind::integer, "50", "Euler integration steps"},
        {"sample", "guidance", ConfKind::real, "1", "classifier-free guidance scale; 1 disables"},
        {"sample", "max_answer_tokens", ConfKind::integer, "8", "decode budget for answers"},

        {"eval", "scenes", ConfKind::integer, "32", "evaluation scene count"},
        {"eval", "qa_per_scene", ConfKind::integer, "2", "questions per scene for VQA accuracy"},
    });
}

ModelConfig model_from(const Config& conf) {
    ModelConfig cfg;
    cfg.d_model = static_cast<int>(conf.get_int("model.d_model"));
    cfg.n_layers = static_cast<int>(conf.get_int("model.n_layers"));
    cfg.n_heads = static_cast<int>(conf.get_int("model.n_heads"));
    cfg.ffn_mult = static_cast<int>(conf.get_int("model.ffn_mult"));
    cfg.max_seq_len = static_cast<int>(conf.get_int("model.max_seq_len"));
    cfg.image_size = static_cast<int>(conf.get_int("model.image_size"));
    cfg.channels = static_cast<int>(conf.get_int("model.channels"));
    cfg.patch_size = static_cast<int>(conf.get_int("model.patch_size"));
    cfg.eps_t = conf.get_real("model.eps_t");
    cfg.vocab_size = vocab().size();
    cfg.validate();
    return cfg;
}

TrainConfig train_from(const Config& conf, TrainStage stage, uint64_t seed) {
    TrainConfig cfg = default_train_config(stage);
    cfg.steps = static_cast<int>(conf.get_int("train.steps"));
    cfg.batch_size = static_cast<int>(conf.get_int("train.batch_size"));
    if (conf.explicitly_set("train.lr")) cfg.optim.lr = conf.get_real("train.lr");
    cfg.optim.weight_decay = conf.get_real("train.weight_decay");
    cfg.optim.beta1 = conf.get_real("train.beta1");
    cfg.optim.beta2 = conf.get_real("train.beta2");
    cfg.optim.eps = conf.get_real("train.adam_eps");
    cfg.optim.clip_norm = conf.get_real("train.clip_norm");
    cfg.warmup_fraction = conf.get_real("train.warmup_fraction");
    cfg.flow_loss_weight = conf.get_real("train.flow_loss_weight");
    if (conf.explicitly_set("train.caption_dropout")) cfg.caption_dropout = conf.get_real("train.caption_dropout");
    cfg.t_schedule = parse_time_schedule(conf.get_text("train.t_schedule"));
    cfg.t_logit_m = conf.get_real("train.t_logit_m");
    cfg.t_logit_s = conf.get_real("train.t_logit_s");
    cfg.log_every = static_cast<int>(conf.get_int("train.log_every"));
    cfg.checkpoint_every = static_cast<int>(conf.get_int("train.checkpoint_every"));
    cfg.total_pretrain_steps = static_cast<int>(conf.get_int("train.total_pretrain_steps"));
    if (conf.explicitly_set("mask.enabled")) {
        cfg.mask_enabled = conf.get_bool("mask.enabled");
    }
    cfg.mask.activation_fraction = conf.get_real("mask.activation_fraction");
    cfg.mask.apply_probability = conf.get_real("mask.apply_probability");
    cfg.mask.ratio = conf.get_real("mask.ratio");
    cfg.mixture = MixtureConfig::parse(conf.get_text("mix.ratio"));
    cfg.mixture.text_only_fraction = conf.get_real("mix.text_only_fraction");
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

SampleRunConfig sample_from(const Config& conf, uint64_t seed) {
    SampleRunConfig run;
    run.euler_steps = static_cast<int>(conf.get_int("sample.euler_steps"));
    run.guidance = conf.get_real("sample.guidance");
    run.seed = seed;
    run.validate();
    return run;
}

SceneStore store_from(const Config& conf) {
    std::vector<Holdout> holdouts;
    const int n_holdouts = static_cast<int>(conf.get_int("data.holdout_count"));
    if (n_holdouts > 0) {
        RandomStream stream(static_cast<uint64_t>(conf.get_int("data.holdout_seed")));
        holdouts = draw_holdouts(stream, n_holdouts);
    }
    const std::string kind = conf.get_text("data.corpus");
    const double two_obj = conf.get_real("data.two_object_fraction");
    if (kind == "unbounded") return SceneStore::unbounded(two_obj, std::move(holdouts));
    if (kind == "corpus") {
        return SceneStore::random_corpus(static_cast<int>(conf.get_int("data.corpus_size")),
                                         static_cast<uint64_t>(conf.get_int("data.corpus_seed")), two_obj,
                                         std::move(holdouts));
    }
    if (kind == "exhaustive") return SceneStore::exhaustive_one_object(std::move(holdouts));
    throw std::invalid_argument("config: data.corpus must be unbounded, corpus, or exhaustive (got '" + kind +
                                "')");
}

}  // namespace pxf
