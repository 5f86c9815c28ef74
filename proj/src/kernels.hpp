#ifndef PXF_KERNELS_HPP
#define PXF_KERNELS_HPP

#include <cstdint>

namespace pxf::kernels {

// Thread cap for all parallel regions. 0 means "use the OpenMP default".
// PIXELFUSE_THREADS is read once at startup by threads_from_env().
int max_threads();
void set_max_threads(int n);
int threads_from_env();

// When false every kernel below runs its serial reference path. The parallel
// and serial paths accumulate each output element in the same order, so their
// results are bit-identical; tests assert this.
bool parallel_enabled();
void set_parallel(bool on);

// C[m x n] = A[m x k] * B[k x n]. Each output row accumulates over k in
// ascending order regardless of threading.
template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void matmul_serial(const T* a, const T* b, T* c, int m, int k, int n);

// C[m x n] = A[m x k] * B[n x k]^T
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void matmul_nt_serial(const T* a, const T* b, T* c, int m, int k, int n);

// C[m x n] = A[k x m]^T * B[k x n]
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void matmul_tn_serial(const T* a, const T* b, T* c, int m, int k, int n);

// Row-wise softmax over allowed positions; disallowed outputs are 0.
// allow may be null (all positions allowed).
template <typename T>
void softmax_rows(const T* x, const uint8_t* allow, T* y, int rows, int cols);
template <typename T>
void softmax_rows_serial(const T* x, const uint8_t* allow, T* y, int rows, int cols);

// y = 0.5 x (1 + erf(x / sqrt(2)))
template <typename T>
void gelu(const T* x, T* y, int64_t n);
template <typename T>
void gelu_serial(const T* x, T* y, int64_t n);

}  // namespace pxf::kernels

#endif
