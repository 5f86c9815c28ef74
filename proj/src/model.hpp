#pragma once

// The single shared transformer: token/patch embedding, segment-structured
// attention, timestep conditioning, and the two output heads (next-token
// logits for text, clean-image prediction for flow matching). Graphs are
// built on a Tape so training and inference share one code path.

#include <optional>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "layout.hpp"
#include "masking.hpp"
#include "patches.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace pxf {

struct ModelConfig {
    int d_model = 128;
    int n_layers = 4;
    int n_heads = 4;
    int ffn_mult = 4;
    int vocab_size = 0;  // filled in from the tokenizer
    int max_seq_len = 64;
    int image_size = 16;  // square images
    int channels = 3;
    int patch_size = 4;
    double eps_t = 1e-3;

    PatchGrid grid() const { return PatchGrid(image_size, image_size, channels, patch_size); }
    int head_dim() const { return d_model / n_heads; }
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

// Parameter names and shapes implied by a config, in canonical order.
std::vector<std::pair<std::string, std::vector<int>>> param_schema(const ModelConfig& cfg);

// Fresh parameters: weights ~ N(0, 0.02), biases zero, layernorm gains one.
template <typename T>
NamedTensors<T> init_params(const ModelConfig& cfg, RandomStream& stream);

// Total scalar count across a parameter set.
template <typename T>
int64_t param_count(const NamedTensors<T>& params);

// sin/cos features of the scaled timestep, shape (1, dim); dim must be even.
template <typename T>
Tensor<T> timestep_features(double t, int dim);

// Captured attention probabilities for one (layer, head) pair.
template <typename T>
struct AttnProbe {
    int layer = 0;
    int head = 0;
    Tensor<T> probs;  // (L, L), rows sum to 1 over allowed keys
};

// Inputs for one sequence: per-segment text ids / patch tokens in layout
// order, the timestep for the noisy segment, and an optional mask plan.
template <typename T>
struct EncodeInputs {
    SequenceLayout layout;
    std::vector<std::vector<int>> text_segments;  // one entry per text segment
    std::vector<Tensor<T>> image_segments;        // patch matrices, one per image segment
    std::vector<std::vector<int>> image_pos_ids;  // optional per image segment; empty = natural order
    std::optional<double> t;                      // required iff a noisy segment exists
    const MaskPlan* mask = nullptr;               // optional patch masking
    std::optional<Role> mask_role;                // which image role the plan applies to
};

template <typename T>
struct EncodeResult {
    typename Tape<T>::Var hidden;  // (L, d_model) after the final layernorm
    SequenceLayout layout;
};

// Builds model graphs on a tape. Parameters are registered once per builder;
// encode() may be called repeatedly (e.g. per example in a batch).
template <typename T>
class ModelGraphBuilder {
public:
    using Var = typename Tape<T>::Var;

    ModelGraphBuilder(Tape<T>& tape, const ModelConfig& cfg, const NamedTensors<T>& params);

    // Variant for gradient-checking drivers that register parameter Vars
    // themselves: `pvars` must parallel `params` name-for-name.
    ModelGraphBuilder(Tape<T>& tape, const ModelConfig& cfg, const NamedTensors<T>& params,
                      std::vector<Var> pvars);

    Var param(const std::string& name) const;

    // Embedding + transformer stack under the segment attention policy.
    // When capture is non-null, per-layer/head attention probabilities are
    // appended to it.
    EncodeResult<T> encode(const EncodeInputs<T>& in, std::vector<AttnProbe<T>>* capture = nullptr);

    // Next-token logits over a hidden-state row range [r0, r1).
    Var lm_logits(Var hidden, int r0, int r1);

    // Mean cross-entropy of next-token prediction within a text segment:
    // rows span.first .. span.second-2 predict ids[1..]. Throws when the
    // segment has fewer than two tokens (nothing to predict).
    Var ce_over_segment(Var hidden, std::pair<int, int> span, const std::vector<int>& ids);

    // Clean-image prediction from the noisy segment's hidden states:
    // linear head then reassembly into an (H, W, C) tensor.
    Var predict_clean_image(Var hidden, std::pair<int, int> span);

    // (x_pred - xt) / (1 - t) inside the graph; throws inside the guard band.
    Var velocity_from_prediction(Var x_pred, const Tensor<T>& xt, double t);

    Tape<T>& tape() { return tape_; }
    const ModelConfig& config() const { return cfg_; }

private:
    Tape<T>& tape_;
    ModelConfig cfg_;
    const NamedTensors<T>* params_;
    std::vector<Var> pvars_;

    Var embed_sequence(const EncodeInputs<T>& in);
    Var transformer(Var x, const Tensor<uint8_t>& allow, std::vector<AttnProbe<T>>* capture);
};

enum class DecodeMode { greedy, temperature };

// Autoregressive text decoding: extends the final (text) segment of the
// layout one token at a time until eos_id or max_new tokens. Greedy mode is
// deterministic; temperature mode draws from the softmax at temperature tau.
template <typename T>
std::vector<int> decode_text(const ModelConfig& cfg, const NamedTensors<T>& params, const EncodeInputs<T>& prefix,
                             int max_new, int eos_id, DecodeMode mode = DecodeMode::greedy, double tau = 1.0,
                             RandomStream* stream = nullptr);

extern template class ModelGraphBuilder<float>;
extern template class ModelGraphBuilder<double>;

}  // namespace pxf
