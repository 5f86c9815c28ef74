#include "model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pxf {

void ModelConfig::validate() const {
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || ffn_mult <= 0) {
        throw std::invalid_argument("model config: dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("model config: d_model " + std::to_string(d_model) +
                                    " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (d_model % 2 != 0) throw std::invalid_argument("model config: d_model must be even");
    if (vocab_size <= 0) throw std::invalid_argument("model config: vocab_size must be set");
    if (max_seq_len <= 0) throw std::invalid_argument("model config: max_seq_len must be positive");
    if (eps_t <= 0 || eps_t >= 1) throw std::invalid_argument("model config: eps_t must lie in (0,1)");
    (void)grid();  // validates image/patch divisibility
}

namespace {

enum class Init { normal, zeros, ones };

struct ParamSpec {
    std::string name;
    std::vector<int> shape;
    Init init;
};

std::vector<ParamSpec> full_schema(const ModelConfig& cfg) {
    const int d = cfg.d_model;
    const PatchGrid grid = cfg.grid();
    std::vector<ParamSpec> s;
    s.push_back({"tok_embed", {cfg.vocab_size, d}, Init::normal});
    s.push_back({"text_pos", {cfg.max_seq_len, d}, Init::normal});
    s.push_back({"patch_pos", {grid.token_count(), d}, Init::normal});
    s.push_back({"patch_proj_w", {grid.token_dim(), d}, Init::normal});
    s.push_back({"patch_proj_b", {1, d}, Init::zeros});
    s.push_back({"mask_embed", {1, d}, Init::normal});
    s.push_back({"t_mlp_w1", {d, d}, Init::normal});
    s.push_back({"t_mlp_b1", {1, d}, Init::zeros});
    s.push_back({"t_mlp_w2", {d, d}, Init::normal});
    s.push_back({"t_mlp_b2", {1, d}, Init::zeros});
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + "_";
        s.push_back({p + "ln1_g", {1, d}, Init::ones});
        s.push_back({p + "ln1_b", {1, d}, Init::zeros});
        for (const char* nm : {"wq", "wk", "wv", "wo"}) {
            s.push_back({p + "attn_" + nm, {d, d}, Init::normal});
            s.push_back({p + "attn_b" + std::string(nm).substr(1), {1, d}, Init::zeros});
        }
        s.push_back({p + "ln2_g", {1, d}, Init::ones});
        s.push_back({p + "ln2_b", {1, d}, Init::zeros});
        s.push_back({p + "ffn_w1", {d, cfg.ffn_mult * d}, Init::normal});
        s.push_back({p + "ffn_b1", {1, cfg.ffn_mult * d}, Init::zeros});
        s.push_back({p + "ffn_w2", {cfg.ffn_mult * d, d}, Init::normal});
        s.push_back({p + "ffn_b2", {1, d}, Init::zeros});
    }
    s.push_back({"final_ln_g", {1, d}, Init::ones});
    s.push_back({"final_ln_b", {1, d}, Init::zeros});
    s.push_back({"lm_head_w", {d, cfg.vocab_size}, Init::normal});
    s.push_back({"lm_head_b", {1, cfg.vocab_size}, Init::zeros});
    s.push_back({"flow_head_w", {d, grid.token_dim()}, Init::normal});
    s.push_back({"flow_head_b", {1, grid.token_dim()}, Init::zeros});
    return s;
}

}  // namespace

std::vector<std::pair<std::string, std::vector<int>>> param_schema(const ModelConfig& cfg) {
    std::vector<std::pair<std::string, std::vector<int>>> out;
    for (auto& spec : full_schema(cfg)) out.emplace_back(spec.name, spec.shape);
    return out;
}

template <typename T>
NamedTensors<T> init_params(const ModelConfig& cfg, RandomStream& stream) {
    cfg.validate();
    NamedTensors<T> params;
    for (const ParamSpec& spec : full_schema(cfg)) {
        Tensor<T> t(spec.shape);
        switch (spec.init) {
            case Init::normal:
                for (auto& v : t.data) v = static_cast<T>(0.02 * stream.normal());
                break;
            case Init::ones:
                for (auto& v : t.data) v = T(1);
                break;
            case Init::zeros:
                break;
        }
        params.add(spec.name, std::move(t));
    }
    return params;
}

template <typename T>
int64_t param_count(const NamedTensors<T>& params) {
    int64_t n = 0;
    for (const auto& t : params.values) n += t.numel();
    return n;
}

template <typename T>
Tensor<T> timestep_features(double t, int dim) {
    if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("timestep_features: dim must be positive and even");
    const int half = dim / 2;
    Tensor<T> out({1, dim});
    const double scaled = t * 1000.0;  // spread [0,1] over the usual diffusion-step range
    for (int i = 0; i < half; ++i) {
        const double w = std::pow(10000.0, -static_cast<double>(i) / half);
        out.data[static_cast<size_t>(i)] = static_cast<T>(std::sin(scaled * w));
        out.data[static_cast<size_t>(half + i)] = static_cast<T>(std::cos(scaled * w));
    }
    return out;
}

// ---------------------------------------------------------------------------
// graph builder
// ---------------------------------------------------------------------------

template <typename T>
ModelGraphBuilder<T>::ModelGraphBuilder(Tape<T>& tape, const ModelConfig& cfg, const NamedTensors<T>& params)
    : tape_(tape), cfg_(cfg), params_(&params) {
    cfg_.validate();
    for (const auto& [name, shape] : param_schema(cfg_)) {
        const int idx = params.index_of(name);
        if (idx < 0) throw std::invalid_argument("model: missing parameter '" + name + "'");
        if (params.values[static_cast<size_t>(idx)].shape != shape) {
            throw std::invalid_argument("model: parameter '" + name + "' has shape " +
                                        shape_str(params.values[static_cast<size_t>(idx)].shape) + ", expected " +
                                        shape_str(shape));
        }
    }
    pvars_.reserve(params.size());
    for (const auto& v : params.values) pvars_.push_back(tape_.param(&v));
}

template <typename T>
ModelGraphBuilder<T>::ModelGraphBuilder(Tape<T>& tape, const ModelConfig& cfg, const NamedTensors<T>& params,
                                        std::vector<Var> pvars)
    : tape_(tape), cfg_(cfg), params_(&params), pvars_(std::move(pvars)) {
    cfg_.validate();
    if (pvars_.size() != params.size()) {
        throw std::invalid_argument("model: parameter var count does not match the named set");
    }
    for (const auto& [name, shape] : param_schema(cfg_)) {
        const int idx = params.index_of(name);
        if (idx < 0) throw std::invalid_argument("model: missing parameter '" + name + "'");
        if (tape_.value(pvars_[static_cast<size_t>(idx)]).shape != shape) {
            throw std::invalid_argument("model: var for parameter '" + name + "' has the wrong shape");
        }
    }
}

template <typename T>
typename Tape<T>::Var ModelGraphBuilder<T>::param(const std::string& name) const {
    const int idx = params_->index_of(name);
    if (idx < 0) throw std::invalid_argument("model: unknown parameter '" + name + "'");
    return pvars_[static_cast<size_t>(idx)];
}

template <typename T>
typename Tape<T>::Var ModelGraphBuilder<T>::embed_sequence(const EncodeInputs<T>& in) {
    const PatchGrid grid = cfg_.grid();
    // timestep conditioning vector, shared by every noisy token
    Var temb;
    if (in.t.has_value()) {
        Var feats = tape_.input(timestep_features<T>(*in.t, cfg_.d_model));
        Var h = tape_.gelu(tape_.add_rowvec(tape_.matmul(feats, param("t_mlp_w1")), param("t_mlp_b1")));
        temb = tape_.add_rowvec(tape_.matmul(h, param("t_mlp_w2")), param("t_mlp_b2"));
    }

    std::vector<Var> parts;
    size_t text_i = 0, image_i = 0;
    for (size_t s = 0; s < in.layout.segments.size(); ++s) {
        const Segment& seg = in.layout.segments[s];
        const bool is_text = seg.role == Role::text_condition || seg.role == Role::text_target;
        if (is_text) {
            if (text_i >= in.text_segments.size()) throw std::invalid_argument("encode: missing text segment data");
            const std::vector<int>& ids = in.text_segments[text_i++];
            if (static_cast<int>(ids.size()) != seg.length) {
                throw std::invalid_argument("encode: text segment length " + std::to_string(ids.size()) +
                                            " does not match layout length " + std::to_string(seg.length));
            }
            Var emb = tape_.embedding(param("tok_embed"), ids);
            std::vector<int> pos(ids.size());
            std::iota(pos.begin(), pos.end(), 0);
            parts.push_back(tape_.add(emb, tape_.embedding(param("text_pos"), pos)));
        } else {
            if (image_i >= in.image_segments.size()) throw std::invalid_argument("encode: missing image segment data");
            const Tensor<T>& patches = in.image_segments[image_i];
            if (patches.shape != grid.token_shape()) {
                throw std::invalid_argument("encode: image segment shape " + shape_str(patches.shape) +
                                            " does not match grid " + shape_str(grid.token_shape()));
            }
            if (seg.length != grid.token_count()) {
                throw std::invalid_argument("encode: image segment layout length " + std::to_string(seg.length) +
                                            " does not match token count " + std::to_string(grid.token_count()));
            }
            Var content = tape_.add_rowvec(tape_.matmul(tape_.input(patches), param("patch_proj_w")),
                                           param("patch_proj_b"));
            if (in.mask && in.mask_role == seg.role && !in.mask->indices.empty()) {
                content = tape_.replace_rows(content, in.mask->indices, param("mask_embed"));
            }
            std::vector<int> pos;
            if (image_i < in.image_pos_ids.size() && !in.image_pos_ids[image_i].empty()) {
                pos = in.image_pos_ids[image_i];
            } else {
                pos.resize(static_cast<size_t>(grid.token_count()));
                std::iota(pos.begin(), pos.end(), 0);
            }
            Var x = tape_.add(content, tape_.embedding(param("patch_pos"), pos));
            if (seg.role == Role::image_noisy) {
                if (!temb.valid()) throw std::invalid_argument("encode: noisy image segment requires a timestep");
                x = tape_.add_rowvec(x, temb);
            }
            parts.push_back(x);
            ++image_i;
        }
    }
    if (text_i != in.text_segments.size() || image_i != in.image_segments.size()) {
        throw std::invalid_argument("encode: unused segment data (layout lists fewer segments than provided)");
    }
    return parts.size() == 1 ? parts[0] : tape_.concat_rows(parts);
}

template <typename T>
typename Tape<T>::Var ModelGraphBuilder<T>::transformer(Var x, const Tensor<uint8_t>& allow,
                                                        std::vector<AttnProbe<T>>* capture) {
    const int dh = cfg_.head_dim();
    const T att_scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + "_";
        Var y = tape_.layernorm(x, param(p + "ln1_g"), param(p + "ln1_b"), T(1e-5));
        Var q = tape_.add_rowvec(tape_.matmul(y, param(p + "attn_wq")), param(p + "attn_bq"));
        Var k = tape_.add_rowvec(tape_.matmul(y, param(p + "attn_wk")), param(p + "attn_bk"));
        Var v = tape_.add_rowvec(tape_.matmul(y, param(p + "attn_wv")), param(p + "attn_bv"));
        std::vector<Var> heads;
        heads.reserve(static_cast<size_t>(cfg_.n_heads));
        for (int h = 0; h < cfg_.n_heads; ++h) {
            Var qh = tape_.slice_cols(q, h * dh, (h + 1) * dh);
            Var kh = tape_.slice_cols(k, h * dh, (h + 1) * dh);
            Var vh = tape_.slice_cols(v, h * dh, (h + 1) * dh);
            Var probs = tape_.masked_softmax(tape_.scale(tape_.matmul_nt(qh, kh), att_scale), allow);
            if (capture) capture->push_back({l, h, tape_.value(probs)});
            heads.push_back(tape_.matmul(probs, vh));
        }
        Var ctx = heads.size() == 1 ? heads[0] : tape_.concat_cols(heads);
        x = tape_.add(x, tape_.add_rowvec(tape_.matmul(ctx, param(p + "attn_wo")), param(p + "attn_bo")));
        Var y2 = tape_.layernorm(x, param(p + "ln2_g"), param(p + "ln2_b"), T(1e-5));
        Var f = tape_.gelu(tape_.add_rowvec(tape_.matmul(y2, param(p + "ffn_w1")), param(p + "ffn_b1")));
        x = tape_.add(x, tape_.add_rowvec(tape_.matmul(f, param(p + "ffn_w2")), param(p + "ffn_b2")));
    }
    return tape_.layernorm(x, param("final_ln_g"), param("final_ln_b"), T(1e-5));
}

template <typename T>
EncodeResult<T> ModelGraphBuilder<T>::encode(const EncodeInputs<T>& in, std::vector<AttnProbe<T>>* capture) {
    validate_layout(in.layout, cfg_.max_seq_len);
    const bool has_noisy = in.layout.noisy_segment() >= 0;
    if (has_noisy != in.t.has_value()) {
        throw std::invalid_argument(has_noisy ? "encode: noisy image segment requires a timestep"
                                              : "encode: timestep given but no noisy image segment");
    }
    Var x = embed_sequence(in);
    Tensor<uint8_t> allow = build_attention_mask(in.layout);
    EncodeResult<T> out;
    out.hidden = transformer(x, allow, capture);
    out.layout = in.layout;
    return out;
}

template <typename T>
typename Tape<T>::Var ModelGraphBuilder<T>::lm_logits(Var hidden, int r0, int r1) {
    return tape_.add_rowvec(tape_.matmul(tape_.slice_rows(hidden, r0, r1), param("lm_head_w")), param("lm_head_b"));
}

template <typename T>
typename Tape<T>::Var ModelGraphBuilder<T>::ce_over_segment(Var hidden, std::pair<int, int> span,
                                                            const std::vector<int>& ids) {
    const int len = span.second - span.first;
    if (static_cast<int>(ids.size()) != len) {
        throw std::invalid_argument("text loss: got " + std::to_string(ids.size()) + " ids for a segment of length " +
                                    std::to_string(len));
    }
    if (len < 2) throw std::invalid_argument("text loss: segment needs at least two tokens for next-token prediction");
    Var logits = lm_logits(hidden, span.first, span.second - 1);
    return tape_.cross_entropy(logits, std::vector<int>(ids.begin() + 1, ids.end()));
}

template <typename T>
typename Tape<T>::Var ModelGraphBuilder<T>::predict_clean_image(Var hidden, std::pair<int, int> span) {
    const PatchGrid grid = cfg_.grid();
    if (span.second - span.first != grid.token_count()) {
        throw std::invalid_argument("image head: span covers " + std::to_string(span.second - span.first) +
                                    " tokens, grid expects " + std::to_string(grid.token_count()));
    }
    Var tok = tape_.add_rowvec(tape_.matmul(tape_.slice_rows(hidden, span.first, span.second), param("flow_head_w")),
                               param("flow_head_b"));
    return tape_.permute_elements(tok, unpatchify_permutation(grid), grid.image_shape());
}

template <typename T>
typename Tape<T>::Var ModelGraphBuilder<T>::velocity_from_prediction(Var x_pred, const Tensor<T>& xt, double t) {
    if (t > 1.0 - cfg_.eps_t) {
        throw std::invalid_argument("velocity: t=" + std::to_string(t) + " inside the singularity guard");
    }
    const T s = T(1.0 / (1.0 - t));
    Tensor<T> c(xt.shape);
    for (int64_t i = 0; i < c.numel(); ++i) c.data[i] = -s * xt.data[i];
    return tape_.affine_const(x_pred, s, std::move(c));
}

template class ModelGraphBuilder<float>;
template class ModelGraphBuilder<double>;

// ---------------------------------------------------------------------------
// decoding
// ---------------------------------------------------------------------------

template <typename T>
std::vector<int> decode_text(const ModelConfig& cfg, const NamedTensors<T>& params, const EncodeInputs<T>& prefix,
                             int max_new, int eos_id, DecodeMode mode, double tau, RandomStream* stream) {
    if (prefix.layout.segments.empty()) throw std::invalid_argument("decode: empty layout");
    const Role last = prefix.layout.segments.back().role;
    if (last != Role::text_target && last != Role::text_condition) {
        throw std::invalid_argument("decode: layout must end on a text segment");
    }
    if (mode == DecodeMode::temperature && (!stream || tau <= 0)) {
        throw std::invalid_argument("decode: temperature mode needs a stream and tau > 0");
    }
    std::vector<int> generated;
    EncodeInputs<T> in = prefix;
    while (static_cast<int>(generated.size()) < max_new) {
        if (in.layout.total_length() >= cfg.max_seq_len) break;  // out of room
        Tape<T> tape;
        ModelGraphBuilder<T> builder(tape, cfg, params);
        auto enc = builder.encode(in);
        const int n = in.layout.total_length();
        auto logits_var = builder.lm_logits(enc.hidden, n - 1, n);
        const Tensor<T>& logits = tape.value(logits_var);
        int pick = 0;
        if (mode == DecodeMode::greedy) {
            for (int j = 1; j < cfg.vocab_size; ++j) {
                if (logits.data[static_cast<size_t>(j)] > logits.data[static_cast<size_t>(pick)]) pick = j;
            }
        } else {
            // softmax at temperature tau, then an inverse-CDF draw
            std::vector<double> p(static_cast<size_t>(cfg.vocab_size));
            double mx = -1e300;
            for (int j = 0; j < cfg.vocab_size; ++j) {
                mx = std::max(mx, static_cast<double>(logits.data[static_cast<size_t>(j)]) / tau);
            }
            double sum = 0;
            for (int j = 0; j < cfg.vocab_size; ++j) {
                p[static_cast<size_t>(j)] = std::exp(static_cast<double>(logits.data[static_cast<size_t>(j)]) / tau - mx);
                sum += p[static_cast<size_t>(j)];
            }
            double u = stream->uniform() * sum, acc = 0;
            for (int j = 0; j < cfg.vocab_size; ++j) {
                acc += p[static_cast<size_t>(j)];
                if (u < acc) {
                    pick = j;
                    break;
                }
                pick = j;
            }
        }
        generated.push_back(pick);
        in.text_segments.back().push_back(pick);
        in.layout.segments.back().length += 1;
        if (pick == eos_id) break;
    }
    return generated;
}

template std::vector<int> decode_text(const ModelConfig&, const NamedTensors<float>&, const EncodeInputs<float>&, int,
                                      int, DecodeMode, double, RandomStream*);
template std::vector<int> decode_text(const ModelConfig&, const NamedTensors<double>&, const EncodeInputs<double>&,
                                      int, int, DecodeMode, double, RandomStream*);

template NamedTensors<float> init_params(const ModelConfig&, RandomStream&);
template NamedTensors<double> init_params(const ModelConfig&, RandomStream&);
template int64_t param_count(const NamedTensors<float>&);
template int64_t param_count(const NamedTensors<double>&);
template Tensor<float> timestep_features(double, int);
template Tensor<double> timestep_features(double, int);

}  // namespace pxf
