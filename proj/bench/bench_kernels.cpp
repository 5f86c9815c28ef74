// Benchmarks the OpenMP kernel layer against its serial reference paths and
// verifies that both produce bit-identical results on every measured case.
// Run with PIXELFUSE_THREADS=<n> to cap the parallel side.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "kernels.hpp"
#include "rng.hpp"

namespace {

using namespace pxf;
using clock_type = std::chrono::steady_clock;

std::vector<float> random_vec(int64_t n, RandomStream& stream) {
    std::vector<float> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<float>(stream.normal());
    return v;
}

template <typename F>
double time_best_ms(F&& fn, int reps) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = clock_type::now();
        fn();
        const auto t1 = clock_type::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

void report(const std::string& name, double flop, double serial_ms, double parallel_ms, bool identical) {
    std::printf("%-24s %10.3f ms %10.3f ms %8.2fx %8.2f GF/s  %s\n", name.c_str(), serial_ms, parallel_ms,
                serial_ms / parallel_ms, flop / (parallel_ms * 1e6), identical ? "bit-identical" : "MISMATCH");
}

int run() {
    kernels::set_max_threads(kernels::threads_from_env());
    std::printf("threads cap: %d (0 = OpenMP default)\n\n", kernels::max_threads());
    std::printf("%-24s %13s %13s %9s %13s\n", "kernel", "serial", "parallel", "speedup", "throughput");

    RandomStream stream(42);
    bool all_ok = true;
    const int reps = 5;

    const int mm_sizes[][3] = {{64, 128, 128}, {256, 256, 256}, {512, 512, 512}};
    for (const auto& [m, k, n] : mm_sizes) {
        const auto a = random_vec(int64_t{m} * k, stream);
        const auto b = random_vec(int64_t{k} * n, stream);
        std::vector<float> c_serial(static_cast<size_t>(m) * n), c_parallel(c_serial.size());
        const double flop = 2.0 * m * k * n;

        const double s = time_best_ms([&] { kernels::matmul_serial(a.data(), b.data(), c_serial.data(), m, k, n); }, reps);
        const double p = time_best_ms([&] { kernels::matmul(a.data(), b.data(), c_parallel.data(), m, k, n); }, reps);
        const bool ok = bits_equal(c_serial, c_parallel);
        all_ok = all_ok && ok;
        report("matmul " + std::to_string(m) + "x" + std::to_string(k) + "x" + std::to_string(n), flop, s, p, ok);

        const auto bt = random_vec(int64_t{n} * k, stream);
        const double s_nt =
            time_best_ms([&] { kernels::matmul_nt_serial(a.data(), bt.data(), c_serial.data(), m, k, n); }, reps);
        const double p_nt =
            time_best_ms([&] { kernels::matmul_nt(a.data(), bt.data(), c_parallel.data(), m, k, n); }, reps);
        const bool ok_nt = bits_equal(c_serial, c_parallel);
        all_ok = all_ok && ok_nt;
        report("matmul_nt " + std::to_string(m) + "x" + std::to_string(k) + "x" + std::to_string(n), flop, s_nt, p_nt,
               ok_nt);

        const auto at = random_vec(int64_t{k} * m, stream);
        const double s_tn =
            time_best_ms([&] { kernels::matmul_tn_serial(at.data(), b.data(), c_serial.data(), m, k, n); }, reps);
        const double p_tn =
            time_best_ms([&] { kernels::matmul_tn(at.data(), b.data(), c_parallel.data(), m, k, n); }, reps);
        const bool ok_tn = bits_equal(c_serial, c_parallel);
        all_ok = all_ok && ok_tn;
        report("matmul_tn " + std::to_string(m) + "x" + std::to_string(k) + "x" + std::to_string(n), flop, s_tn, p_tn,
               ok_tn);
    }

    const int sm_cases[][2] = {{256, 64}, {1024, 256}};
    for (const auto& [rows, cols] : sm_cases) {
        const auto x = random_vec(int64_t{rows} * cols, stream);
        std::vector<uint8_t> allow(static_cast<size_t>(rows) * cols);
        for (size_t i = 0; i < allow.size(); ++i) allow[i] = (i % 3 != 0) ? 1 : 0;
        std::vector<float> y_serial(x.size()), y_parallel(x.size());
        const double flop = 5.0 * rows * cols;

        const double s = time_best_ms(
            [&] { kernels::softmax_rows_serial(x.data(), allow.data(), y_serial.data(), rows, cols); }, reps);
        const double p =
            time_best_ms([&] { kernels::softmax_rows(x.data(), allow.data(), y_parallel.data(), rows, cols); }, reps);
        const bool ok = bits_equal(y_serial, y_parallel);
        all_ok = all_ok && ok;
        report("softmax " + std::to_string(rows) + "x" + std::to_string(cols), flop, s, p, ok);
    }

    for (const int64_t n : {int64_t{1} << 16, int64_t{1} << 20}) {
        const auto x = random_vec(n, stream);
        std::vector<float> y_serial(x.size()), y_parallel(x.size());
        const double flop = 8.0 * static_cast<double>(n);
        const double s = time_best_ms([&] { kernels::gelu_serial(x.data(), y_serial.data(), n); }, reps);
        const double p = time_best_ms([&] { kernels::gelu(x.data(), y_parallel.data(), n); }, reps);
        const bool ok = bits_equal(y_serial, y_parallel);
        all_ok = all_ok && ok;
        report("gelu " + std::to_string(n), flop, s, p, ok);
    }

    std::printf("\n%s\n", all_ok ? "all kernels bit-identical to serial references" : "MISMATCH DETECTED");
    return all_ok ? 0 : 1;
}

}  // namespace

int main() { return run(); }
