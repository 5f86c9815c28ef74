#pragma once

// Rectified-flow algebra: straight-line interpolant between noise and data,
// the clean-image <-> velocity change of variables, the velocity regression
// loss, timestep sampling, and the Euler integration rule used at inference.

#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace pxf {

// Pole guard for the velocity conversion, which divides by (1 - t).
inline constexpr double kEpsT = 1e-3;

enum class TimeSchedule { uniform, logit_normal };

const char* time_schedule_name(TimeSchedule s);
TimeSchedule parse_time_schedule(const std::string& name);

// One training draw: clean image x1, noise x0, timestep t, interpolant xt,
// and ground-truth velocity v. All tensors share a shape.
template <typename T>
struct FlowSample {
    Tensor<T> x1;
    Tensor<T> x0;
    T t = T(0);
    Tensor<T> xt;
    Tensor<T> v;
};

// xt = t*x1 + (1-t)*x0
template <typename T>
Tensor<T> interpolate(const Tensor<T>& x1, const Tensor<T>& x0, T t);

// v = x1 - x0
template <typename T>
Tensor<T> true_velocity(const Tensor<T>& x1, const Tensor<T>& x0);

// v_pred = (x_pred - xt) / (1 - t); throws when t is inside the guard band
// t > 1 - eps_t where the division blows up.
template <typename T>
Tensor<T> x_to_velocity(const Tensor<T>& x_pred, const Tensor<T>& xt, T t, T eps_t = T(kEpsT));

// mean over elements of (v_pred - v)^2
template <typename T>
T v_loss(const Tensor<T>& v_pred, const Tensor<T>& v);

// x_{t_next} = xt + (t_next - t) * v_pred; requires t_next > t.
template <typename T>
Tensor<T> euler_step(const Tensor<T>& xt, const Tensor<T>& v_pred, T t, T t_next);

// Draw a training timestep in [0, 1 - eps_t]. Uniform covers the interval
// directly; logit-normal draws sigmoid(Normal(m, s)) and clamps.
double sample_t(RandomStream& stream, TimeSchedule dist, double eps_t = kEpsT, double m = 0.0, double s = 1.0);

// K+1 integration points 0 = t_0 < t_1 < ... < t_K = 1. Model queries at a
// point should clamp to 1 - eps_t before converting x-prediction to velocity;
// the step itself still lands on the exact grid point.
struct TimeGrid {
    std::vector<double> steps;

    int segments() const { return static_cast<int>(steps.size()) - 1; }
};

TimeGrid uniform_grid(int k, double eps_t = kEpsT);

// Assemble a FlowSample from a clean image: draws x0 ~ N(0,1) and t from the
// schedule, then fills in the interpolant and true velocity.
template <typename T>
FlowSample<T> make_flow_sample(RandomStream& stream, Tensor<T> x1, TimeSchedule dist = TimeSchedule::uniform,
                               double eps_t = kEpsT);

extern template struct FlowSample<float>;
extern template struct FlowSample<double>;

}  // namespace pxf
