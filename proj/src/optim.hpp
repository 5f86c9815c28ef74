#pragma once

// AdamW with decoupled weight decay and global-norm gradient clipping:
//   m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
//   p <- p - lr * ( m_hat / (sqrt(v_hat) + eps) + wd * p )
// with bias-corrected m_hat, v_hat. Clipping rescales the whole gradient set
// to clip_norm when its global L2 norm exceeds it (clip_norm <= 0 disables).

#include <cstdint>

#include "autodiff.hpp"

namespace pxf {

struct OptimConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 0.0;
};

template <typename T>
struct AdamState {
    NamedTensors<T> m;
    NamedTensors<T> v;
    int64_t steps = 0;

    static AdamState zeros_like(const NamedTensors<T>& params);
};

// L2 norm over every gradient element; throws naming the first parameter
// carrying a non-finite gradient.
template <typename T>
double global_grad_norm(const NamedTensors<T>& grads);

// Scales gradients in place so the global norm is at most max_norm.
template <typename T>
void clip_gradients(NamedTensors<T>& grads, double max_norm);

// One update in place. Gradients must align with params name-for-name.
template <typename T>
void adamw_step(NamedTensors<T>& params, const NamedTensors<T>& grads, AdamState<T>& state, const OptimConfig& cfg);

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace pxf
