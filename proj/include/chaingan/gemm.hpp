#pragma once

#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace chaingan {

namespace detail {

// C[m,n] += A[m,k] * B[k,n], all row-major contiguous. The i-k-j order keeps
// the inner loop contiguous over B and C so it auto-vectorizes; per-element
// summation order is fixed regardless of thread count, so results are
// bit-reproducible.
template <typename T>
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c) {
    const bool parallel = m * n * k > (1 << 20);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
    for (std::int64_t i = 0; i < m; ++i) {
        T* ci = c + i * n;
        const T* ai = a + i * k;
        for (std::int64_t l = 0; l < k; ++l) {
            const T av = ai[l];
            const T* bl = b + l * n;
            for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    }
    (void)parallel;
}

template <typename T>
void transpose_into(std::int64_t rows, std::int64_t cols, const T* src, std::vector<T>& dst) {
    dst.resize(rows * cols);
    for (std::int64_t i = 0; i < rows; ++i)
        for (std::int64_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

} // namespace detail

// C[m,n] = op(A) * op(B), row-major. Transposed operands are packed into a
// scratch copy first; the O(mk + kn) copy is negligible next to the O(mnk)
// multiply and keeps a single fast kernel.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const T* a,
          const T* b, T* c) {
    std::vector<T> at, bt;
    const T* ap = a;
    const T* bp = b;
    if (trans_a) {
        detail::transpose_into<T>(k, m, a, at); // stored [k,m] -> want [m,k]
        ap = at.data();
    }
    if (trans_b) {
        detail::transpose_into<T>(n, k, b, bt); // stored [n,k] -> want [k,n]
        bp = bt.data();
    }
    for (std::int64_t i = 0; i < m * n; ++i) c[i] = T(0);
    detail::gemm_nn<T>(m, n, k, ap, bp, c);
}

} // namespace chaingan
