#include "kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pxf::kernels {

namespace {
std::atomic<int> g_max_threads{0};
std::atomic<bool> g_parallel{true};

inline int effective_threads() {
    int cap = g_max_threads.load(std::memory_order_relaxed);
#ifdef _OPENMP
    int hw = omp_get_max_threads();
    if (cap <= 0) return hw;
    return cap < hw ? cap : hw;
#else
    (void)cap;
    return 1;
#endif
}

inline bool use_parallel() {
#ifdef _OPENMP
    if (!g_parallel.load(std::memory_order_relaxed)) return false;
    if (omp_in_parallel()) return false;  // nested regions stay serial
    return effective_threads() > 1;
#else
    return false;
#endif
}
}  // namespace

int max_threads() { return g_max_threads.load(); }
void set_max_threads(int n) { g_max_threads.store(n < 0 ? 0 : n); }

int threads_from_env() {
    const char* env = std::getenv("PIXELFUSE_THREADS");
    if (!env || !*env) return 0;
    long v = std::strtol(env, nullptr, 10);
    return v > 0 ? static_cast<int>(v) : 0;
}

bool parallel_enabled() { return g_parallel.load(); }
void set_parallel(bool on) { g_parallel.store(on); }

// ---------------------------------------------------------------------------
// matmul
//
// ikj order: the inner j loop has no reduction dependence, so it vectorizes
// without reassociating the k accumulation. Per output element the additions
// happen in ascending k order in both the serial and parallel variants.
// ---------------------------------------------------------------------------

template <typename T>
static inline void matmul_row(const T* a, const T* b, T* c, int k, int n, int i) {
    T* ci = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = T(0);
    const T* ai = a + static_cast<int64_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
        const T av = ai[kk];
        const T* bk = b + static_cast<int64_t>(kk) * n;
        for (int j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
}

template <typename T>
void matmul_serial(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) matmul_row(a, b, c, k, n, i);
}

template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n) {
    if (!use_parallel() || m < 2) {
        matmul_serial(a, b, c, m, k, n);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
    for (int i = 0; i < m; ++i) matmul_row(a, b, c, k, n, i);
#endif
}

template <typename T>
static inline void matmul_nt_row(const T* a, const T* b, T* c, int k, int n, int i) {
    const T* ai = a + static_cast<int64_t>(i) * k;
    T* ci = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
        const T* bj = b + static_cast<int64_t>(j) * k;
        T acc = T(0);
        for (int kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
        ci[j] = acc;
    }
}

template <typename T>
void matmul_nt_serial(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) matmul_nt_row(a, b, c, k, n, i);
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int m, int k, int n) {
    if (!use_parallel() || m < 2) {
        matmul_nt_serial(a, b, c, m, k, n);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
    for (int i = 0; i < m; ++i) matmul_nt_row(a, b, c, k, n, i);
#endif
}

template <typename T>
static inline void matmul_tn_row(const T* a, const T* b, T* c, int k, int m, int n, int i) {
    T* ci = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = T(0);
    for (int kk = 0; kk < k; ++kk) {
        const T av = a[static_cast<int64_t>(kk) * m + i];
        const T* bk = b + static_cast<int64_t>(kk) * n;
        for (int j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
}

template <typename T>
void matmul_tn_serial(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) matmul_tn_row(a, b, c, k, m, n, i);
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int m, int k, int n) {
    if (!use_parallel() || m < 2) {
        matmul_tn_serial(a, b, c, m, k, n);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
    for (int i = 0; i < m; ++i) matmul_tn_row(a, b, c, k, m, n, i);
#endif
}

// ---------------------------------------------------------------------------
// softmax / gelu
// ---------------------------------------------------------------------------

template <typename T>
static inline void softmax_row(const T* x, const uint8_t* allow, T* y, int cols, int r) {
    const T* xr = x + static_cast<int64_t>(r) * cols;
    const uint8_t* ar = allow ? allow + static_cast<int64_t>(r) * cols : nullptr;
    T* yr = y + static_cast<int64_t>(r) * cols;
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < cols; ++j) {
        if (ar && !ar[j]) continue;
        if (xr[j] > mx) mx = xr[j];
    }
    T sum = T(0);
    for (int j = 0; j < cols; ++j) {
        if (ar && !ar[j]) {
            yr[j] = T(0);
        } else {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
    }
    if (sum > T(0)) {
        const T inv = T(1) / sum;
        for (int j = 0; j < cols; ++j) yr[j] *= inv;
    }
}

template <typename T>
void softmax_rows_serial(const T* x, const uint8_t* allow, T* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) softmax_row(x, allow, y, cols, r);
}

template <typename T>
void softmax_rows(const T* x, const uint8_t* allow, T* y, int rows, int cols) {
    if (!use_parallel() || rows < 2) {
        softmax_rows_serial(x, allow, y, rows, cols);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
    for (int r = 0; r < rows; ++r) softmax_row(x, allow, y, cols, r);
#endif
}

template <typename T>
static inline T gelu_one(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865475244)));
}

template <typename T>
void gelu_serial(const T* x, T* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

template <typename T>
void gelu(const T* x, T* y, int64_t n) {
    if (!use_parallel() || n < 4096) {
        gelu_serial(x, y, n);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
    for (int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
#endif
}

#define PXF_INSTANTIATE(T)                                                   \
    template void matmul<T>(const T*, const T*, T*, int, int, int);          \
    template void matmul_serial<T>(const T*, const T*, T*, int, int, int);   \
    template void matmul_nt<T>(const T*, const T*, T*, int, int, int);       \
    template void matmul_nt_serial<T>(const T*, const T*, T*, int, int, int);\
    template void matmul_tn<T>(const T*, const T*, T*, int, int, int);       \
    template void matmul_tn_serial<T>(const T*, const T*, T*, int, int, int);\
    template void softmax_rows<T>(const T*, const uint8_t*, T*, int, int);   \
    template void softmax_rows_serial<T>(const T*, const uint8_t*, T*, int, int); \
    template void gelu<T>(const T*, T*, int64_t);                            \
    template void gelu_serial<T>(const T*, T*, int64_t);

PXF_INSTANTIATE(float)
PXF_INSTANTIATE(double)

#undef PXF_INSTANTIATE

}  // namespace pxf::kernels
