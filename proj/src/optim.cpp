#include "optim.hpp"

#include <cmath>
#include <stdexcept>

namespace pxf {

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const NamedTensors<T>& params) {
    AdamState<T> state;
    for (size_t i = 0; i < params.size(); ++i) {
        state.m.add(params.names[i], Tensor<T>(params.values[i].shape));
        state.v.add(params.names[i], Tensor<T>(params.values[i].shape));
    }
    return state;
}

template <typename T>
double global_grad_norm(const NamedTensors<T>& grads) {
    double acc = 0.0;
    for (size_t i = 0; i < grads.size(); ++i) {
        for (T g : grads.values[i].data) {
            const double gd = static_cast<double>(g);
            if (!std::isfinite(gd)) {
                throw std::runtime_error("optimizer: non-finite gradient in '" + grads.names[i] + "'");
            }
            acc += gd * gd;
        }
    }
    return std::sqrt(acc);
}

template <typename T>
void clip_gradients(NamedTensors<T>& grads, double max_norm) {
    const double norm = global_grad_norm(grads);  // also screens for non-finite values
    if (max_norm <= 0.0 || norm <= max_norm) return;
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& t : grads.values) {
        for (auto& g : t.data) g *= scale;
    }
}

template <typename T>
void adamw_step(NamedTensors<T>& params, const NamedTensors<T>& grads, AdamState<T>& state, const OptimConfig& cfg) {
    if (cfg.lr <= 0.0) throw std::invalid_argument("optimizer: learning rate must be positive");
    if (grads.size() != params.size()) throw std::invalid_argument("optimizer: gradient/parameter count mismatch");
    state.steps += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.steps));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.steps));
    for (size_t i = 0; i < params.size(); ++i) {
        if (grads.names[i] != params.names[i]) {
            throw std::invalid_argument("optimizer: gradient '" + grads.names[i] + "' does not match parameter '" +
                                        params.names[i] + "'");
        }
        Tensor<T>& p = params.values[i];
        const Tensor<T>& g = grads.values[i];
        require_same_shape(p.shape, g.shape, "optimizer");
        Tensor<T>& m = state.m.values[i];
        Tensor<T>& v = state.v.values[i];
        for (int64_t k = 0; k < p.numel(); ++k) {
            const double gd = static_cast<double>(g.data[k]);
            const double md = cfg.beta1 * static_cast<double>(m.data[k]) + (1.0 - cfg.beta1) * gd;
            const double vd = cfg.beta2 * static_cast<double>(v.data[k]) + (1.0 - cfg.beta2) * gd * gd;
            m.data[k] = static_cast<T>(md);
            v.data[k] = static_cast<T>(vd);
            const double update = (md / bc1) / (std::sqrt(vd / bc2) + cfg.eps) +
                                  cfg.weight_decay * static_cast<double>(p.data[k]);
            p.data[k] = static_cast<T>(static_cast<double>(p.data[k]) - cfg.lr * update);
        }
    }
}

#define PXF_OPTIM_INSTANTIATE(T)                                                                             \
    template struct AdamState<T>;                                                                            \
    template double global_grad_norm(const NamedTensors<T>&);                                                \
    template void clip_gradients(NamedTensors<T>&, double);                                                  \
    template void adamw_step(NamedTensors<T>&, const NamedTensors<T>&, AdamState<T>&, const OptimConfig&);

PXF_OPTIM_INSTANTIATE(float)
PXF_OPTIM_INSTANTIATE(double)

#undef PXF_OPTIM_INSTANTIATE

}  // namespace pxf
