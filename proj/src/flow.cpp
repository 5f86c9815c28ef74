#include "flow.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pxf {

const char* time_schedule_name(TimeSchedule s) {
    return s == TimeSchedule::uniform ? "uniform" : "logit_normal";
}

TimeSchedule parse_time_schedule(const std::string& name) {
    if (name == "uniform") return TimeSchedule::uniform;
    if (name == "logit_normal") return TimeSchedule::logit_normal;
    throw std::invalid_argument("unknown time schedule '" + name + "' (expected uniform or logit_normal)");
}

template <typename T>
Tensor<T> interpolate(const Tensor<T>& x1, const Tensor<T>& x0, T t) {
    require_same_shape(x1.shape, x0.shape, "interpolate");
    if (t < T(0) || t > T(1)) throw std::invalid_argument("interpolate: t must lie in [0,1]");
    Tensor<T> xt(x1.shape);
    const T u = T(1) - t;
    for (int64_t i = 0; i < xt.numel(); ++i) xt.data[i] = t * x1.data[i] + u * x0.data[i];
    return xt;
}

template <typename T>
Tensor<T> true_velocity(const Tensor<T>& x1, const Tensor<T>& x0) {
    require_same_shape(x1.shape, x0.shape, "true_velocity");
    Tensor<T> v(x1.shape);
    for (int64_t i = 0; i < v.numel(); ++i) v.data[i] = x1.data[i] - x0.data[i];
    return v;
}

template <typename T>
Tensor<T> x_to_velocity(const Tensor<T>& x_pred, const Tensor<T>& xt, T t, T eps_t) {
    require_same_shape(x_pred.shape, xt.shape, "x_to_velocity");
    if (t > T(1) - eps_t) {
        throw std::invalid_argument("x_to_velocity: t=" + std::to_string(static_cast<double>(t)) +
                                    " is inside the singularity guard (must be <= 1-eps_t)");
    }
    Tensor<T> v(x_pred.shape);
    const T inv = T(1) / (T(1) - t);
    for (int64_t i = 0; i < v.numel(); ++i) v.data[i] = (x_pred.data[i] - xt.data[i]) * inv;
    return v;
}

template <typename T>
T v_loss(const Tensor<T>& v_pred, const Tensor<T>& v) {
    require_same_shape(v_pred.shape, v.shape, "v_loss");
    T acc = T(0);
    for (int64_t i = 0; i < v.numel(); ++i) {
        const T d = v_pred.data[i] - v.data[i];
        acc += d * d;
    }
    return acc / T(v.numel());
}

template <typename T>
Tensor<T> euler_step(const Tensor<T>& xt, const Tensor<T>& v_pred, T t, T t_next) {
    require_same_shape(xt.shape, v_pred.shape, "euler_step");
    if (!(t_next > t)) throw std::invalid_argument("euler_step: step must increase t");
    Tensor<T> out(xt.shape);
    const T dt = t_next - t;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = xt.data[i] + dt * v_pred.data[i];
    return out;
}

double sample_t(RandomStream& stream, TimeSchedule dist, double eps_t, double m, double s) {
    const double hi = 1.0 - eps_t;
    if (dist == TimeSchedule::uniform) return stream.uniform() * hi;
    const double z = m + s * stream.normal();
    const double t = 1.0 / (1.0 + std::exp(-z));
    return std::min(t, hi);
}

TimeGrid uniform_grid(int k, double eps_t) {
    if (k < 1) throw std::invalid_argument("uniform_grid: need at least one step");
    (void)eps_t;  // clamping is applied by callers at query time
    TimeGrid grid;
    grid.steps.resize(static_cast<size_t>(k) + 1);
    for (int i = 0; i <= k; ++i) grid.steps[static_cast<size_t>(i)] = static_cast<double>(i) / k;
    grid.steps.front() = 0.0;
    grid.steps.back() = 1.0;
    return grid;
}

template <typename T>
FlowSample<T> make_flow_sample(RandomStream& stream, Tensor<T> x1, TimeSchedule dist, double eps_t) {
    FlowSample<T> fs;
    fs.x0 = Tensor<T>(x1.shape);
    for (auto& v : fs.x0.data) v = static_cast<T>(stream.normal());
    fs.t = static_cast<T>(sample_t(stream, dist, eps_t));
    fs.x1 = std::move(x1);
    fs.xt = interpolate(fs.x1, fs.x0, fs.t);
    fs.v = true_velocity(fs.x1, fs.x0);
    return fs;
}

#define PXF_FLOW_INSTANTIATE(T)                                                              \
    template Tensor<T> interpolate(const Tensor<T>&, const Tensor<T>&, T);                   \
    template Tensor<T> true_velocity(const Tensor<T>&, const Tensor<T>&);                    \
    template Tensor<T> x_to_velocity(const Tensor<T>&, const Tensor<T>&, T, T);              \
    template T v_loss(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> euler_step(const Tensor<T>&, const Tensor<T>&, T, T);                 \
    template FlowSample<T> make_flow_sample(RandomStream&, Tensor<T>, TimeSchedule, double); \
    template struct FlowSample<T>;

PXF_FLOW_INSTANTIATE(float)
PXF_FLOW_INSTANTIATE(double)

#undef PXF_FLOW_INSTANTIATE

}  // namespace pxf
