#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "kernels.hpp"
#include "rng.hpp"

using namespace pxf;

namespace {

std::vector<float> random_vec(int64_t n, uint64_t seed) {
    RandomStream stream(seed);
    std::vector<float> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<float>(stream.normal());
    return v;
}

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("matmul matches a hand-computed 2x2 product") {
    // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
    const std::vector<float> a = {1, 2, 3, 4}, b = {5, 6, 7, 8};
    std::vector<float> c(4);
    kernels::matmul(a.data(), b.data(), c.data(), 2, 2, 2);
    CHECK(c == std::vector<float>{19, 22, 43, 50});
}

TEST_CASE("identity matrix leaves operands unchanged") {
    const int n = 7;
    std::vector<float> eye(n * n, 0.0f);
    for (int i = 0; i < n; ++i) eye[static_cast<size_t>(i * n + i)] = 1.0f;
    const auto a = random_vec(n * n, 3);
    std::vector<float> c(static_cast<size_t>(n) * n);
    kernels::matmul(a.data(), eye.data(), c.data(), n, n, n);
    CHECK(bits_equal(a, c));
    kernels::matmul(eye.data(), a.data(), c.data(), n, n, n);
    CHECK(bits_equal(a, c));
}

TEST_CASE("transposed variants agree with explicit transposition") {
    const int m = 5, k = 7, n = 3;
    const auto a = random_vec(m * k, 11);
    const auto b = random_vec(k * n, 12);
    std::vector<float> bt(static_cast<size_t>(n) * k), at(static_cast<size_t>(k) * m);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) bt[static_cast<size_t>(j * k + i)] = b[static_cast<size_t>(i * n + j)];
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) at[static_cast<size_t>(j * m + i)] = a[static_cast<size_t>(i * k + j)];

    std::vector<float> c_ref(static_cast<size_t>(m) * n), c_nt(c_ref.size()), c_tn(c_ref.size());
    kernels::matmul(a.data(), b.data(), c_ref.data(), m, k, n);
    kernels::matmul_nt(a.data(), bt.data(), c_nt.data(), m, k, n);
    kernels::matmul_tn(at.data(), b.data(), c_tn.data(), m, k, n);
    for (size_t i = 0; i < c_ref.size(); ++i) {
        CHECK(c_nt[i] == doctest::Approx(c_ref[i]).epsilon(1e-6));
        CHECK(c_tn[i] == doctest::Approx(c_ref[i]).epsilon(1e-6));
    }
}

TEST_CASE("parallel and serial paths are bit-identical") {
    const int shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {17, 33, 9}, {64, 64, 64}, {31, 128, 2}};
    for (const auto& [m, k, n] : shapes) {
        const auto a = random_vec(int64_t{m} * k, static_cast<uint64_t>(m * 100 + k));
        const auto b = random_vec(int64_t{k} * n, static_cast<uint64_t>(k * 100 + n));
        std::vector<float> c1(static_cast<size_t>(m) * n), c2(c1.size());
        kernels::matmul(a.data(), b.data(), c1.data(), m, k, n);
        kernels::matmul_serial(a.data(), b.data(), c2.data(), m, k, n);
        CHECK(bits_equal(c1, c2));

        const auto bt = random_vec(int64_t{n} * k, static_cast<uint64_t>(n * 100 + k));
        kernels::matmul_nt(a.data(), bt.data(), c1.data(), m, k, n);
        kernels::matmul_nt_serial(a.data(), bt.data(), c2.data(), m, k, n);
        CHECK(bits_equal(c1, c2));

        const auto at = random_vec(int64_t{k} * m, static_cast<uint64_t>(k * 100 + m));
        kernels::matmul_tn(at.data(), b.data(), c1.data(), m, k, n);
        kernels::matmul_tn_serial(at.data(), b.data(), c2.data(), m, k, n);
        CHECK(bits_equal(c1, c2));
    }
}

TEST_CASE("disabling the parallel switch still matches the serial path") {
    const int m = 13, k = 21, n = 17;
    const auto a = random_vec(int64_t{m} * k, 5);
    const auto b = random_vec(int64_t{k} * n, 6);
    std::vector<float> c1(static_cast<size_t>(m) * n), c2(c1.size());
    kernels::set_parallel(false);
    kernels::matmul(a.data(), b.data(), c1.data(), m, k, n);
    kernels::set_parallel(true);
    kernels::matmul_serial(a.data(), b.data(), c2.data(), m, k, n);
    CHECK(bits_equal(c1, c2));
}

TEST_CASE("softmax rows are normalized and masked positions are exactly zero") {
    const int rows = 9, cols = 13;
    const auto x = random_vec(int64_t{rows} * cols, 21);
    std::vector<uint8_t> allow(static_cast<size_t>(rows) * cols, 1);
    for (size_t i = 0; i < allow.size(); i += 4) allow[i] = 0;
    std::vector<float> y(x.size());
    kernels::softmax_rows(x.data(), allow.data(), y.data(), rows, cols);
    for (int r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            const size_t i = static_cast<size_t>(r * cols + c);
            if (!allow[i]) CHECK(y[i] == 0.0f);
            CHECK(y[i] >= 0.0f);
            sum += y[i];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }

    std::vector<float> y2(x.size());
    kernels::softmax_rows_serial(x.data(), allow.data(), y2.data(), rows, cols);
    CHECK(bits_equal(y, y2));
}

TEST_CASE("softmax without a mask matches a double-precision reference") {
    const int rows = 4, cols = 6;
    const auto x = random_vec(int64_t{rows} * cols, 33);
    std::vector<float> y(x.size());
    kernels::softmax_rows(x.data(), nullptr, y.data(), rows, cols);
    for (int r = 0; r < rows; ++r) {
        double mx = -1e300;
        for (int c = 0; c < cols; ++c) mx = std::max(mx, static_cast<double>(x[static_cast<size_t>(r * cols + c)]));
        double z = 0.0;
        for (int c = 0; c < cols; ++c) z += std::exp(static_cast<double>(x[static_cast<size_t>(r * cols + c)]) - mx);
        for (int c = 0; c < cols; ++c) {
            const double ref = std::exp(static_cast<double>(x[static_cast<size_t>(r * cols + c)]) - mx) / z;
            CHECK(y[static_cast<size_t>(r * cols + c)] == doctest::Approx(ref).epsilon(1e-5));
        }
    }
}

TEST_CASE("fully masked softmax row comes back all zeros") {
    const std::vector<float> x = {1.0f, 2.0f, 3.0f};
    const std::vector<uint8_t> allow = {0, 0, 0};
    std::vector<float> y(3, 7.0f);
    kernels::softmax_rows(x.data(), allow.data(), y.data(), 1, 3);
    CHECK(y == std::vector<float>{0, 0, 0});
}

TEST_CASE("gelu matches the erf formula and its fixed points") {
    const auto x = random_vec(257, 44);
    std::vector<float> y(x.size());
    kernels::gelu(x.data(), y.data(), static_cast<int64_t>(x.size()));
    for (size_t i = 0; i < x.size(); ++i) {
        const double v = static_cast<double>(x[i]);
        const double ref = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
        CHECK(y[i] == doctest::Approx(ref).epsilon(1e-5));
    }
    const std::vector<float> pts = {0.0f, 1.0f, -1.0f};
    std::vector<float> out(3);
    kernels::gelu(pts.data(), out.data(), 3);
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == doctest::Approx(0.8413447461).epsilon(1e-6));
    // gelu(x) - gelu(-x) == x, since the gaussian cdf satisfies F(x) + F(-x) == 1
    CHECK(out[1] - out[2] == doctest::Approx(1.0).epsilon(1e-6));

    std::vector<float> y2(x.size());
    kernels::gelu_serial(x.data(), y2.data(), static_cast<int64_t>(x.size()));
    CHECK(bits_equal(y, y2));
}

TEST_CASE("thread cap is settable and restorable") {
    const int before = kernels::max_threads();
    kernels::set_max_threads(3);
    CHECK(kernels::max_threads() == 3);
    kernels::set_max_threads(before);
    CHECK(kernels::max_threads() == before);
}
