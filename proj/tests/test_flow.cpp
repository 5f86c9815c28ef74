#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "flow.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace pxf;

namespace {

Tensor<double> randn(std::vector<int> shape, uint64_t seed) {
    RandomStream s(seed);
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = s.normal();
    return t;
}

}  // namespace

TEST_CASE("interpolant endpoints and a hand-computed midpoint") {
    const Tensor<double> x1({2, 2}, {1.0, 2.0, 3.0, 4.0});
    const Tensor<double> x0({2, 2}, {0.0, -2.0, 1.0, 2.0});
    CHECK(interpolate(x1, x0, 0.0).data == x0.data);
    CHECK(interpolate(x1, x0, 1.0).data == x1.data);
    const Tensor<double> mid = interpolate(x1, x0, 0.25);
    const std::vector<double> expect = {0.25, -1.0, 1.5, 2.5};
    for (size_t i = 0; i < 4; ++i) CHECK(mid.data[i] == doctest::Approx(expect[i]).epsilon(1e-15));
}

TEST_CASE("true velocity is the straight-line difference") {
    const Tensor<double> x1({3}, {1.0, 5.0, -2.0});
    const Tensor<double> x0({3}, {0.5, 1.0, 2.0});
    CHECK(true_velocity(x1, x0).data == std::vector<double>{0.5, 4.0, -4.0});
}

TEST_CASE("clean-prediction to velocity inverts the interpolant identity") {
    // if x_pred == x1 exactly then (x_pred - xt)/(1-t) recovers v = x1 - x0
    const Tensor<double> x1 = randn({4, 6}, 1);
    const Tensor<double> x0 = randn({4, 6}, 2);
    for (const double t : {0.0, 0.3, 0.77, 0.999}) {
        const Tensor<double> xt = interpolate(x1, x0, t);
        const Tensor<double> v = x_to_velocity(x1, xt, t);
        const Tensor<double> v_true = true_velocity(x1, x0);
        for (size_t i = 0; i < v.data.size(); ++i) CHECK(v.data[i] == doctest::Approx(v_true.data[i]).epsilon(1e-10));
    }
}

TEST_CASE("velocity conversion rejects timesteps inside the pole guard") {
    const Tensor<double> a({2}, {0.0, 0.0});
    CHECK_THROWS(x_to_velocity(a, a, 0.9995));
    CHECK_THROWS(x_to_velocity(a, a, 1.0));
    CHECK_NOTHROW(x_to_velocity(a, a, 1.0 - kEpsT));
}

TEST_CASE("velocity loss matches its definition and the x-space scaling") {
    const Tensor<double> v_pred({2, 2}, {1.0, 0.0, 2.0, -1.0});
    const Tensor<double> v({2, 2}, {0.0, 0.0, 2.0, 1.0});
    CHECK(v_loss(v_pred, v) == doctest::Approx((1.0 + 0.0 + 0.0 + 4.0) / 4.0).epsilon(1e-15));

    // v-loss of an x-prediction equals the x-space mse inflated by 1/(1-t)^2
    const Tensor<double> x1 = randn({3, 5}, 3);
    const Tensor<double> x0 = randn({3, 5}, 4);
    const Tensor<double> x_pred = randn({3, 5}, 5);
    const double t = 0.6;
    const Tensor<double> xt = interpolate(x1, x0, t);
    const Tensor<double> v_from_x = x_to_velocity(x_pred, xt, t);
    const Tensor<double> v_true = true_velocity(x1, x0);
    double x_mse = 0.0;
    for (size_t i = 0; i < x1.data.size(); ++i) {
        const double d = x_pred.data[i] - x1.data[i];
        x_mse += d * d;
    }
    x_mse /= static_cast<double>(x1.data.size());
    CHECK(v_loss(v_from_x, v_true) == doctest::Approx(x_mse / ((1.0 - t) * (1.0 - t))).epsilon(1e-10));
}

TEST_CASE("euler step with the true velocity lands exactly on the interpolant") {
    const Tensor<double> x1 = randn({2, 8}, 6);
    const Tensor<double> x0 = randn({2, 8}, 7);
    const Tensor<double> v = true_velocity(x1, x0);
    Tensor<double> x = x0;
    double t = 0.0;
    for (const double t_next : {0.31, 0.5, 0.9, 1.0}) {
        x = euler_step(x, v, t, t_next);
        t = t_next;
        const Tensor<double> want = interpolate(x1, x0, t);
        for (size_t i = 0; i < x.data.size(); ++i) CHECK(x.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
    }
    CHECK_THROWS(euler_step(x, v, 0.5, 0.5));
    CHECK_THROWS(euler_step(x, v, 0.5, 0.2));
}

TEST_CASE("timestep samples stay inside the guard band") {
    RandomStream stream(11);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double t = sample_t(stream, TimeSchedule::uniform);
        CHECK(t >= 0.0);
        CHECK(t <= 1.0 - kEpsT);
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    CHECK(lo < 0.01);       // the sampler reaches both ends
    CHECK(hi > 0.98);

    for (int i = 0; i < 20000; ++i) {
        const double t = sample_t(stream, TimeSchedule::logit_normal, kEpsT, 0.5, 1.5);
        CHECK(t >= 0.0);
        CHECK(t <= 1.0 - kEpsT);
    }
}

TEST_CASE("logit-normal samples follow sigmoid of a shifted normal") {
    // with m large and s tiny the mass concentrates near sigmoid(m)
    RandomStream stream(12);
    double mean = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) mean += sample_t(stream, TimeSchedule::logit_normal, kEpsT, 2.0, 0.05);
    mean /= n;
    CHECK(mean == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(0.01));
}

TEST_CASE("uniform grid covers [0,1] with equal segments") {
    const TimeGrid grid = uniform_grid(4);
    CHECK(grid.segments() == 4);
    CHECK(grid.steps.front() == 0.0);
    CHECK(grid.steps.back() == 1.0);
    for (int i = 0; i < 4; ++i)
        CHECK(grid.steps[static_cast<size_t>(i + 1)] - grid.steps[static_cast<size_t>(i)] ==
              doctest::Approx(0.25).epsilon(1e-12));
    CHECK(uniform_grid(1).steps == std::vector<double>{0.0, 1.0});
    CHECK_THROWS(uniform_grid(0));
}

TEST_CASE("flow sample assembly is self-consistent") {
    RandomStream stream(13);
    const Tensor<float> x1 = [&] {
        Tensor<float> t({4, 4, 3});
        for (auto& v : t.data) v = static_cast<float>(stream.uniform() * 2.0 - 1.0);
        return t;
    }();
    const FlowSample<float> s = make_flow_sample(stream, x1);
    CHECK(s.x1.data == x1.data);
    CHECK(s.x0.same_shape(x1));
    CHECK(s.t >= 0.0f);
    CHECK(s.t <= 1.0f - static_cast<float>(kEpsT));
    for (size_t i = 0; i < x1.data.size(); ++i) {
        CHECK(s.xt.data[i] == doctest::Approx(s.t * s.x1.data[i] + (1.0f - s.t) * s.x0.data[i]).epsilon(1e-6));
        CHECK(s.v.data[i] == doctest::Approx(s.x1.data[i] - s.x0.data[i]).epsilon(1e-6));
    }
}

TEST_CASE("schedule names round-trip") {
    CHECK(parse_time_schedule("uniform") == TimeSchedule::uniform);
    CHECK(parse_time_schedule("logit_normal") == TimeSchedule::logit_normal);
    CHECK(time_schedule_name(TimeSchedule::uniform) == std::string("uniform"));
    CHECK(time_schedule_name(TimeSchedule::logit_normal) == std::string("logit_normal"));
    CHECK_THROWS(parse_time_schedule("cosine"));
}
